#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "valign/trajectory.hpp"

namespace valign {

// Synthetic "game": reach a latent target, reward 1 on arrival. Games in a
// family share the goal semantics; appearance_seed fixes a per-game affine
// observation map plus distractor channels, dynamics fields fix the motion.
struct GameSpec {
    std::string game_id;
    std::int64_t state_dim = 1;
    std::int64_t obs_dim = 6;
    std::uint64_t appearance_seed = 0;
    double step_size = 1.0;
    double action_noise = 0.0;  // std of the per-step Gaussian perturbation
    std::int64_t episode_len_max = 64;
    std::pair<double, double> start_distance_range = {3.0, 20.0};
    double distractor_std = 0.05;

    void validate() const;
};

std::vector<Episode> generate_dataset(const GameSpec& spec,
                                      std::int64_t n_episodes,
                                      std::uint64_t seed);

// Same episodes plus the latent goal distance of every frame; the test hook
// behind the label-consistency checks.
std::vector<std::pair<Episode, std::vector<double>>> generate_with_latents(
    const GameSpec& spec, std::int64_t n_episodes, std::uint64_t seed);

// Discounted return of the noiseless scripted policy at latent distance d.
double ground_truth_value(const GameSpec& spec, double distance, double gamma);

}  // namespace valign

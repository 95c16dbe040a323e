#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "valign/rng.hpp"
#include "valign/tensor.hpp"
#include "valign/trajectory.hpp"

namespace valign {

struct TripletIndex {
    std::string game_id;
    std::int64_t trajectory = 0;
    std::int64_t anchor = 0;
    std::int64_t positive = 0;
    std::int64_t negative = 0;
};

struct VepConfig {
    double d_thresh_frac = 0.2;  // fraction of trajectory length
    double v_thresh = 0.01;
    std::int64_t max_retries = 100;
};

struct TcnConfig {
    std::int64_t margin_steps = 4;
};

struct SomConfig {
    double gamma = 0.1;
    // 0 means "remaining trajectory length"
    std::int64_t horizon = 0;
};

struct VipConfig {
    std::int64_t min_len = 10;
    std::int64_t max_len = 50;
};

// Observations gathered for a batch of cross-game pairs. Axis 1 indexes the
// game pair (x, y); fold() interleaves it into the batch axis.
struct PairedTripletBatch {
    Tensor anchors;    // [B, 2, obs_dim]
    Tensor positives;  // [B, 2, obs_dim]
    Tensor negatives;  // [B, 2, obs_dim]

    std::int64_t batch_size() const { return anchors.dim(0); }

    // [B, 2, D] -> [2B, D]; row 2b is game x of pair b, row 2b+1 game y.
    static Tensor fold(const Tensor& t) {
        return t.reshaped({t.dim(0) * 2, t.dim(2)});
    }
};

struct VipSample {
    std::int64_t anchor = 0;
    std::int64_t positive = 0;
    std::vector<std::int64_t> negatives;
};

// Closest-value lookup over a game's value index; optional restriction to an
// inclusive index window of one trajectory. Ties go to the smallest
// (trajectory, frame).
std::pair<std::int64_t, std::int64_t> find_closest_by_value(
    const TrajectoryDataset& dataset, const std::string& game, double target,
    std::optional<std::tuple<std::int64_t, std::int64_t, std::int64_t>>
        restrict = std::nullopt);

std::pair<TripletIndex, TripletIndex> sample_vep_pair(
    const TrajectoryDataset& dataset, const std::string& game_x,
    const std::string& game_y, const VepConfig& cfg, Rng& rng);

TripletIndex sample_tcn(const SubTrajectory& trajectory, const TcnConfig& cfg,
                        Rng& rng);

// Truncated geometric offset: P(dt) = (1-g) g^(dt-1) / (1 - g^H), dt in [1,H].
std::int64_t sample_som_offset(const SomConfig& cfg, Rng& rng);

std::pair<std::int64_t, std::int64_t> sample_som_pair(
    const SubTrajectory& trajectory, const SomConfig& cfg, Rng& rng);

VipSample sample_vip(const SubTrajectory& trajectory, const VipConfig& cfg,
                     Rng& rng, std::int64_t n_negatives);

// Per-pair rngs are derived as Rng(derive_seed(base_seed, pair_index)) so the
// batch is reproducible item by item.
PairedTripletBatch assemble_batch(
    const TrajectoryDataset& dataset,
    const std::vector<std::pair<std::string, std::string>>& game_pairs,
    const VepConfig& cfg, std::uint64_t base_seed);

}  // namespace valign

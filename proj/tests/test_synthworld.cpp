#include <doctest.h>

#include <cmath>

#include "valign/synthworld.hpp"
#include "valign/trajectory.hpp"

using namespace valign;

namespace {

GameSpec base_spec(const std::string& id, std::uint64_t appearance) {
    GameSpec s;
    s.game_id = id;
    s.appearance_seed = appearance;
    return s;
}

std::vector<double> rewards_of(const Episode& ep) {
    std::vector<double> out;
    for (const auto& f : ep.frames) out.push_back(f.reward);
    return out;
}

}  // namespace

TEST_CASE("spec validation") {
    GameSpec s = base_spec("g", 1);
    s.obs_dim = 1;  // too small to embed pos + goal
    CHECK_THROWS_AS(s.validate(), config_error);
    s = base_spec("g", 1);
    s.step_size = 0.0;
    CHECK_THROWS_AS(s.validate(), config_error);
    s = base_spec("g", 1);
    s.start_distance_range = {5.0, 3.0};
    CHECK_THROWS_AS(s.validate(), config_error);
    CHECK_THROWS_AS(generate_dataset(base_spec("g", 1), 0, 1), config_error);
}

TEST_CASE("noiseless three-step episode reaches the goal on schedule") {
    GameSpec s = base_spec("g", 7);
    s.action_noise = 0.0;
    s.distractor_std = 0.0;
    s.start_distance_range = {3.0, 3.0};  // snaps to exactly 3 steps
    const auto eps = generate_with_latents(s, 5, 11);
    for (const auto& [ep, latents] : eps) {
        CHECK(rewards_of(ep) == std::vector<double>{0, 0, 0, 1});
        REQUIRE(latents.size() == 4);
        CHECK(latents[0] == doctest::Approx(3.0).epsilon(1e-9));
        CHECK(latents[3] < s.step_size / 2.0);
        // distance shrinks by one step per frame
        for (std::size_t t = 0; t + 1 < latents.size(); ++t)
            CHECK(latents[t] - latents[t + 1] ==
                  doctest::Approx(s.step_size).epsilon(1e-9));
    }
}

TEST_CASE("every episode either reaches the goal or hits the length cap") {
    GameSpec s = base_spec("g", 3);
    const auto eps = generate_dataset(s, 50, 123);
    REQUIRE(eps.size() == 50);
    for (const auto& ep : eps) {
        CHECK(static_cast<std::int64_t>(ep.frames.size()) <=
              s.episode_len_max);
        const bool reached = ep.frames.back().reward > 0.0;
        if (!reached)
            CHECK(static_cast<std::int64_t>(ep.frames.size()) ==
                  s.episode_len_max);
        // reward is sparse: at most the final frame pays out
        for (std::size_t t = 0; t + 1 < ep.frames.size(); ++t)
            CHECK(ep.frames[t].reward == 0.0);
        for (const auto& f : ep.frames)
            CHECK(static_cast<std::int64_t>(f.observation.size()) ==
                  s.obs_dim);
    }
}

TEST_CASE("generation is deterministic in the seed") {
    GameSpec s = base_spec("g", 9);
    const auto a = generate_dataset(s, 10, 42);
    const auto b = generate_dataset(s, 10, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t e = 0; e < a.size(); ++e) {
        REQUIRE(a[e].frames.size() == b[e].frames.size());
        for (std::size_t t = 0; t < a[e].frames.size(); ++t) {
            CHECK(a[e].frames[t].observation == b[e].frames[t].observation);
            CHECK(a[e].frames[t].reward == b[e].frames[t].reward);
        }
    }
    const auto c = generate_dataset(s, 10, 43);
    bool any_diff = false;
    for (std::size_t e = 0; e < c.size() && !any_diff; ++e)
        any_diff = c[e].frames.size() != a[e].frames.size() ||
                   c[e].frames[0].observation != a[e].frames[0].observation;
    CHECK(any_diff);
}

TEST_CASE("appearance seed changes observations but not dynamics") {
    GameSpec s1 = base_spec("g1", 100);
    GameSpec s2 = base_spec("g2", 200);
    const auto a = generate_with_latents(s1, 10, 42);
    const auto b = generate_with_latents(s2, 10, 42);
    REQUIRE(a.size() == b.size());
    bool obs_differ = false;
    for (std::size_t e = 0; e < a.size(); ++e) {
        // same dynamics stream: identical lengths, rewards, latent distances
        REQUIRE(a[e].first.frames.size() == b[e].first.frames.size());
        CHECK(a[e].second == b[e].second);
        CHECK(rewards_of(a[e].first) == rewards_of(b[e].first));
        for (std::size_t t = 0; t < a[e].first.frames.size(); ++t)
            if (a[e].first.frames[t].observation !=
                b[e].first.frames[t].observation)
                obs_differ = true;
    }
    CHECK(obs_differ);
}

TEST_CASE("ground_truth_value closed form") {
    GameSpec s = base_spec("g", 1);
    CHECK(ground_truth_value(s, 0.0, 0.99) == 1.0);
    CHECK(ground_truth_value(s, 0.4, 0.99) == 1.0);  // within capture radius
    CHECK(ground_truth_value(s, 1.0, 0.5) == 0.5);
    CHECK(ground_truth_value(s, 3.0, 0.5) == 0.5 * 0.5 * 0.5);
    s.step_size = 2.0;
    CHECK(ground_truth_value(s, 4.0, 0.5) == 0.25);
    CHECK_THROWS_AS(ground_truth_value(s, -1.0, 0.99), config_error);
}

TEST_CASE("dataset values match the latent ground truth bitwise") {
    GameSpec s = base_spec("g", 5);
    s.action_noise = 0.0;
    s.distractor_std = 0.0;
    ValueConfig vcfg;
    const auto eps = generate_with_latents(s, 30, 77);
    for (const auto& [ep, latents] : eps) {
        if (ep.frames.back().reward == 0.0) continue;  // capped episode
        const auto segs = segment_episode(ep, vcfg);
        REQUIRE(segs.size() == 1);
        for (std::int64_t t = 0; t < segs[0].length(); ++t) {
            const double want = ground_truth_value(
                s, latents[static_cast<std::size_t>(t)], vcfg.gamma);
            CHECK(segs[0].values[static_cast<std::size_t>(t)] == want);
        }
    }
}

TEST_CASE("two-dimensional latent games work too") {
    GameSpec s = base_spec("g", 8);
    s.state_dim = 2;
    s.obs_dim = 8;
    const auto eps = generate_dataset(s, 20, 9);
    int reached = 0;
    for (const auto& ep : eps)
        if (ep.frames.back().reward > 0.0) ++reached;
    CHECK(reached > 0);
    ValueConfig vcfg;
    const auto ds = build_dataset(eps, vcfg);
    CHECK(ds.obs_dim == 8);
}

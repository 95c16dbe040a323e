#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "valign/rng.hpp"
#include "valign/trajectory.hpp"

using namespace valign;

namespace {

Episode make_episode(const std::string& game,
                     const std::vector<double>& rewards,
                     std::int64_t obs_dim = 2) {
    Episode ep;
    ep.game_id = game;
    for (std::size_t t = 0; t < rewards.size(); ++t) {
        Frame f;
        f.observation.assign(static_cast<std::size_t>(obs_dim),
                             static_cast<double>(t));
        f.reward = rewards[t];
        f.timestep = static_cast<std::int64_t>(t);
        ep.frames.push_back(std::move(f));
    }
    return ep;
}

// independent oracle: double-loop discounted summation
std::vector<double> brute_force_values(const std::vector<double>& rewards,
                                       double gamma) {
    std::vector<double> out(rewards.size());
    for (std::size_t t = 0; t < rewards.size(); ++t) {
        double v = 0.0;
        for (std::size_t k = t; k < rewards.size(); ++k)
            v += std::pow(gamma, static_cast<double>(k - t)) * rewards[k];
        out[t] = v;
    }
    return out;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("compute_values expands the recursion") {
    const auto v = compute_values({0, 0, 1}, 0.5);
    CHECK(v == std::vector<double>{0.25, 0.5, 1.0});
    const auto u = compute_values({0, 1}, 1.0);
    CHECK(u == std::vector<double>{1.0, 1.0});
}

TEST_CASE("compute_values rejects bad gamma") {
    CHECK_THROWS_AS(compute_values({1.0}, 0.0), config_error);
    CHECK_THROWS_AS(compute_values({1.0}, 1.5), config_error);
}

TEST_CASE("compute_values matches the brute-force oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto len = 1 + rng.uniform_index(120);
        std::vector<double> rewards(len);
        for (auto& r : rewards) r = rng.uniform(-1.0, 1.0);
        const auto fast = compute_values(rewards, 0.99);
        const auto slow = brute_force_values(rewards, 0.99);
        for (std::size_t t = 0; t < len; ++t)
            CHECK(std::abs(fast[t] - slow[t]) < 1e-12);
    }
}

TEST_CASE("segmentation splits at goal events") {
    ValueConfig cfg;
    const auto segs = segment_episode(make_episode("g", {0, 0, 1, 0, 1}), cfg);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].source_span.start == 0);
    CHECK(segs[0].source_span.end == 2);
    CHECK(segs[1].source_span.start == 3);
    CHECK(segs[1].source_span.end == 4);
    CHECK(segs[0].frames.back().reward == 1.0);
    CHECK(segs[0].values.size() == 3);

    CHECK(segment_episode(make_episode("g", {0, 0, 0}), cfg).empty());

    const auto all = segment_episode(make_episode("g", {1, 1}), cfg);
    REQUIRE(all.size() == 2);
    CHECK(all[0].length() == 1);
    CHECK(all[1].length() == 1);
}

TEST_CASE("segmentation drops the tail after the last goal") {
    ValueConfig cfg;
    const auto segs =
        segment_episode(make_episode("g", {0, 1, 0, 0}), cfg);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].source_span.end == 1);
}

TEST_CASE("segmentation partition covers the prefix disjointly") {
    Rng rng(5);
    ValueConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> rewards(1 + rng.uniform_index(40));
        for (auto& r : rewards) r = rng.uniform() < 0.25 ? 1.0 : 0.0;
        const auto segs = segment_episode(make_episode("g", rewards), cfg);
        std::int64_t expect_start = 0;
        for (const auto& s : segs) {
            CHECK(s.source_span.start == expect_start);
            CHECK(s.frames.back().reward > cfg.reward_threshold);
            // value recursion holds exactly
            for (std::int64_t t = 0; t + 1 < s.length(); ++t)
                CHECK(s.values[static_cast<std::size_t>(t)] ==
                      s.frames[static_cast<std::size_t>(t)].reward +
                          cfg.gamma *
                              s.values[static_cast<std::size_t>(t) + 1]);
            expect_start = s.source_span.end + 1;
        }
        if (!segs.empty()) {
            // nothing beyond the last goal is kept
            for (std::size_t t =
                     static_cast<std::size_t>(segs.back().source_span.end) + 1;
                 t < rewards.size(); ++t)
                CHECK(rewards[t] <= cfg.reward_threshold);
        }
    }
}

TEST_CASE("sparse-reward values increase toward the goal") {
    ValueConfig cfg;
    cfg.gamma = 0.9;
    const auto segs =
        segment_episode(make_episode("g", {0, 0, 0, 0, 1}), cfg);
    REQUIRE(segs.size() == 1);
    for (std::size_t t = 0; t + 1 < segs[0].values.size(); ++t)
        CHECK(segs[0].values[t] < segs[0].values[t + 1]);
}

TEST_CASE("build_dataset counts and value index") {
    ValueConfig cfg;
    const auto ds = build_dataset({make_episode("a", {0, 1, 0, 1})}, cfg);
    REQUIRE(ds.games.count("a") == 1);
    CHECK(ds.trajectories("a").size() == 2);
    CHECK(ds.index("a").size() == 4);

    const auto two = build_dataset(
        {make_episode("a", {0, 1}), make_episode("b", {1, 1})}, cfg);
    CHECK(two.games.size() == 2);
    CHECK(two.index("a").size() == 2);
    CHECK(two.index("b").size() == 2);
}

TEST_CASE("value index is sorted and complete on random input") {
    Rng rng(17);
    ValueConfig cfg;
    std::vector<Episode> episodes;
    for (int e = 0; e < 20; ++e) {
        std::vector<double> rewards(2 + rng.uniform_index(30));
        for (auto& r : rewards) r = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
        episodes.push_back(
            make_episode(e % 2 ? "odd" : "even", rewards));
    }
    TrajectoryDataset ds;
    try {
        ds = build_dataset(episodes, cfg);
    } catch (const empty_dataset_error&) {
        return;  // all-zero rewards draw; nothing to check
    }
    for (const auto& [game, idx] : ds.value_index) {
        auto sorted = idx;
        std::sort(sorted.begin(), sorted.end(),
                  [](const ValueIndexEntry& a, const ValueIndexEntry& b) {
                      return a.value < b.value;
                  });
        for (std::size_t i = 0; i + 1 < idx.size(); ++i)
            CHECK(idx[i].value <= idx[i + 1].value);
        CHECK(sorted.size() == idx.size());
        std::size_t total = 0;
        for (const auto& t : ds.trajectories(game))
            total += static_cast<std::size_t>(t.length());
        CHECK(idx.size() == total);
    }
}

TEST_CASE("build_dataset with nothing to segment fails") {
    ValueConfig cfg;
    CHECK_THROWS_AS(build_dataset({make_episode("a", {0, 0})}, cfg),
                    empty_dataset_error);
}

TEST_CASE("episode file round trip") {
    const auto path = temp_file("valign_episodes_rt.jsonl");
    std::vector<Episode> eps{make_episode("a", {0, 0, 1}),
                             make_episode("a", {0, 1, 0, 0, 1})};
    write_episodes(path.string(), eps);
    const auto back = load_episodes(path.string());
    REQUIRE(back.size() == 2);
    CHECK(back[0].frames.size() == 3);
    CHECK(back[1].frames.size() == 5);
    CHECK(back[0].game_id == "a");
    CHECK(back[1].frames[1].reward == 1.0);
    CHECK(back[0].frames[2].observation ==
          eps[0].frames[2].observation);
    std::filesystem::remove(path);
}

TEST_CASE("loading an empty file yields no episodes") {
    const auto path = temp_file("valign_episodes_empty.jsonl");
    { std::ofstream out(path); }
    CHECK(load_episodes(path.string()).empty());
    std::filesystem::remove(path);
}

TEST_CASE("malformed record reports its line") {
    const auto path = temp_file("valign_episodes_bad.jsonl");
    {
        std::ofstream out(path);
        out << R"({"game_id":"a","observations":[[1,2]],"rewards":[0]})"
            << "\n";
        out << "{not json\n";
    }
    try {
        load_episodes(path.string());
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("obs_dim mismatch names the offending episode") {
    const auto path = temp_file("valign_episodes_dim.jsonl");
    {
        std::ofstream out(path);
        out << R"({"game_id":"a","observations":[[1,2,3,4,5]],"rewards":[1]})"
            << "\n";
        out << R"({"game_id":"a","observations":[[1,2,3,4]],"rewards":[1]})"
            << "\n";
    }
    try {
        load_episodes(path.string());
        FAIL("expected dimension_error");
    } catch (const dimension_error& e) {
        CHECK(std::string(e.what()).find("episode 1") != std::string::npos);
    }
    std::filesystem::remove(path);
}

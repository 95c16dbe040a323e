#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "valign/errors.hpp"

namespace valign {

struct Frame {
    std::vector<double> observation;
    double reward = 0.0;
    std::int64_t timestep = 0;
};

struct Episode {
    std::string game_id;
    std::vector<Frame> frames;
};

struct SourceSpan {
    std::int64_t episode_index = 0;
    std::int64_t start = 0;  // inclusive
    std::int64_t end = 0;    // inclusive
};

// Goal-based segment: last frame is the reward (goal) event, values[t] is the
// discounted return from frame t to the goal.
struct SubTrajectory {
    std::string game_id;
    std::vector<Frame> frames;
    std::vector<double> values;
    SourceSpan source_span;

    std::int64_t length() const {
        return static_cast<std::int64_t>(frames.size());
    }
};

struct ValueConfig {
    double gamma = 0.99;
    double reward_threshold = 0.0;  // exclusive: reward > threshold is a goal
};

// One entry per frame, sorted ascending by (value, trajectory, frame).
struct ValueIndexEntry {
    double value = 0.0;
    std::int64_t trajectory = 0;
    std::int64_t frame = 0;

    bool operator<(const ValueIndexEntry& o) const {
        if (value != o.value) return value < o.value;
        if (trajectory != o.trajectory) return trajectory < o.trajectory;
        return frame < o.frame;
    }
};

struct TrajectoryDataset {
    std::map<std::string, std::vector<SubTrajectory>> games;
    std::int64_t obs_dim = 0;
    std::map<std::string, std::vector<ValueIndexEntry>> value_index;

    const std::vector<SubTrajectory>& trajectories(const std::string& game) const;
    const std::vector<ValueIndexEntry>& index(const std::string& game) const;
    std::int64_t total_frames() const;
    std::vector<std::string> game_ids() const;
};

// Backward Bellman pass: out[t] = rewards[t] + gamma * out[t+1].
std::vector<double> compute_values(const std::vector<double>& rewards,
                                   double gamma);

std::vector<SubTrajectory> segment_episode(const Episode& episode,
                                           const ValueConfig& cfg,
                                           std::int64_t episode_index = 0);

TrajectoryDataset build_dataset(const std::vector<Episode>& episodes,
                                const ValueConfig& cfg);

// Line-delimited records, one JSON object per line:
// {"game_id": ..., "observations": [[...], ...], "rewards": [...]}
std::vector<Episode> load_episodes(
    const std::string& path,
    std::optional<std::int64_t> expected_obs_dim = std::nullopt);

void write_episodes(const std::string& path,
                    const std::vector<Episode>& episodes);

}  // namespace valign

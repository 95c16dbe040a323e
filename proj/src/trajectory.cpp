#include "valign/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace valign {

using nlohmann::json;

const std::vector<SubTrajectory>& TrajectoryDataset::trajectories(
    const std::string& game) const {
    auto it = games.find(game);
    if (it == games.end()) throw lookup_error("unknown game: " + game);
    return it->second;
}

const std::vector<ValueIndexEntry>& TrajectoryDataset::index(
    const std::string& game) const {
    auto it = value_index.find(game);
    if (it == value_index.end()) throw lookup_error("unknown game: " + game);
    return it->second;
}

std::int64_t TrajectoryDataset::total_frames() const {
    std::int64_t n = 0;
    for (const auto& [id, trajs] : games)
        for (const auto& t : trajs) n += t.length();
    return n;
}

std::vector<std::string> TrajectoryDataset::game_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, trajs] : games) ids.push_back(id);
    return ids;
}

std::vector<double> compute_values(const std::vector<double>& rewards,
                                   double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw config_error("gamma must lie in (0, 1]");
    if (rewards.empty()) throw usage_error("compute_values: empty rewards");
    std::vector<double> values(rewards.size());
    const std::size_t n = rewards.size();
    values[n - 1] = rewards[n - 1];
    for (std::size_t t = n - 1; t-- > 0;)
        values[t] = rewards[t] + gamma * values[t + 1];
    return values;
}

std::vector<SubTrajectory> segment_episode(const Episode& episode,
                                           const ValueConfig& cfg,
                                           std::int64_t episode_index) {
    if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0))
        throw config_error("gamma must lie in (0, 1]");
    std::vector<SubTrajectory> out;
    std::int64_t start = 0;
    const std::int64_t n = static_cast<std::int64_t>(episode.frames.size());
    for (std::int64_t i = 0; i < n; ++i) {
        if (episode.frames[i].reward > cfg.reward_threshold) {
            SubTrajectory st;
            st.game_id = episode.game_id;
            st.frames.assign(episode.frames.begin() + start,
                             episode.frames.begin() + i + 1);
            std::vector<double> rewards;
            rewards.reserve(st.frames.size());
            for (const auto& f : st.frames) rewards.push_back(f.reward);
            st.values = compute_values(rewards, cfg.gamma);
            st.source_span = {episode_index, start, i};
            out.push_back(std::move(st));
            start = i + 1;
        }
    }
    // frames after the last goal event are dropped
    return out;
}

TrajectoryDataset build_dataset(const std::vector<Episode>& episodes,
                                const ValueConfig& cfg) {
    TrajectoryDataset ds;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const auto& ep = episodes[e];
        if (ep.frames.empty()) continue;
        const auto dim =
            static_cast<std::int64_t>(ep.frames.front().observation.size());
        if (ds.obs_dim == 0)
            ds.obs_dim = dim;
        else if (dim != ds.obs_dim)
            throw dimension_error("episode " + std::to_string(e) +
                                  " obs_dim mismatch");
        auto segs = segment_episode(ep, cfg, static_cast<std::int64_t>(e));
        auto& bucket = ds.games[ep.game_id];
        for (auto& s : segs) bucket.push_back(std::move(s));
    }
    std::int64_t total = 0;
    for (auto& [id, trajs] : ds.games) {
        auto& idx = ds.value_index[id];
        for (std::size_t t = 0; t < trajs.size(); ++t)
            for (std::int64_t f = 0; f < trajs[t].length(); ++f)
                idx.push_back({trajs[t].values[static_cast<std::size_t>(f)],
                               static_cast<std::int64_t>(t), f});
        std::sort(idx.begin(), idx.end());
        total += static_cast<std::int64_t>(idx.size());
    }
    // drop games that segmented to nothing
    for (auto it = ds.games.begin(); it != ds.games.end();) {
        if (it->second.empty()) {
            ds.value_index.erase(it->first);
            it = ds.games.erase(it);
        } else {
            ++it;
        }
    }
    if (total == 0)
        throw empty_dataset_error("no sub-trajectories after segmentation");
    return ds;
}

std::vector<Episode> load_episodes(const std::string& path,
                                   std::optional<std::int64_t> expected_obs_dim) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::vector<Episode> episodes;
    std::string line;
    std::int64_t line_no = 0;
    std::int64_t obs_dim = expected_obs_dim.value_or(0);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw parse_error("line " + std::to_string(line_no) + ": " +
                              e.what());
        }
        if (!rec.is_object() || !rec.contains("game_id") ||
            !rec.contains("observations") || !rec.contains("rewards"))
            throw parse_error("line " + std::to_string(line_no) +
                              ": missing game_id/observations/rewards");
        Episode ep;
        ep.game_id = rec["game_id"].get<std::string>();
        const auto& obs = rec["observations"];
        const auto& rewards = rec["rewards"];
        if (!obs.is_array() || !rewards.is_array() ||
            obs.size() != rewards.size() || obs.empty())
            throw parse_error("line " + std::to_string(line_no) +
                              ": observations/rewards must be equal-length "
                              "non-empty arrays");
        const std::int64_t ep_index =
            static_cast<std::int64_t>(episodes.size());
        for (std::size_t t = 0; t < obs.size(); ++t) {
            Frame f;
            if (!obs[t].is_array())
                throw parse_error("line " + std::to_string(line_no) +
                                  ": observation is not an array");
            f.observation = obs[t].get<std::vector<double>>();
            f.reward = rewards[t].get<double>();
            f.timestep = static_cast<std::int64_t>(t);
            const auto dim = static_cast<std::int64_t>(f.observation.size());
            if (obs_dim == 0)
                obs_dim = dim;
            else if (dim != obs_dim)
                throw dimension_error(
                    "episode " + std::to_string(ep_index) +
                    ": observation dim " + std::to_string(dim) +
                    " != expected " + std::to_string(obs_dim));
            ep.frames.push_back(std::move(f));
        }
        episodes.push_back(std::move(ep));
    }
    return episodes;
}

void write_episodes(const std::string& path,
                    const std::vector<Episode>& episodes) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    for (const auto& ep : episodes) {
        json rec;
        rec["game_id"] = ep.game_id;
        json obs = json::array();
        json rewards = json::array();
        for (const auto& f : ep.frames) {
            obs.push_back(f.observation);
            rewards.push_back(f.reward);
        }
        rec["observations"] = std::move(obs);
        rec["rewards"] = std::move(rewards);
        out << rec.dump() << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace valign

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "valign/encoder.hpp"
#include "valign/synthworld.hpp"
#include "valign/trajectory.hpp"

namespace valign {

// Fully resolved run configuration. Parsing applies documented defaults for
// every omitted field; echo() serializes the resolved state so a rerun from
// the echoed config is bit-identical.
struct RunConfig {
    // data
    std::vector<std::string> data_paths;
    std::vector<GameSpec> synth_specs;
    std::int64_t episodes_per_game = 100;

    ValueConfig value;

    SamplerKind sampler_kind = SamplerKind::vep;
    SamplerParams sampler;

    EncoderConfig encoder;
    LossConfig loss;
    OptimConfig optim;
    Schedule schedule;

    // eval
    std::vector<std::pair<std::string, std::string>> eval_game_pairs;
    std::vector<std::int64_t> eval_k = {1, 5};
    double eval_v_tol = 0.01;
    std::int64_t eval_n_pairs = 10000;
    std::int64_t eval_n_queries = 1000;
    double eval_probe_lambda = 1e-6;

    nlohmann::json echo() const;

    static RunConfig parse(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
};

// Materializes the configured dataset: loads data_paths when given,
// otherwise generates the synthworld games in memory.
TrajectoryDataset build_run_dataset(const RunConfig& cfg);

}  // namespace valign

#include "valign/run_config.hpp"

#include <fstream>

namespace valign {

using nlohmann::json;

namespace {

// field-path-aware accessors so config errors name the offending field
template <typename T>
T get_or(const json& j, const std::string& section, const std::string& key,
         T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error("invalid value at " + section + "." + key);
    }
}

GameSpec parse_spec(const json& j, std::size_t idx) {
    const std::string where = "data.synthworld[" + std::to_string(idx) + "]";
    GameSpec s;
    if (!j.contains("game_id"))
        throw config_error(where + ".game_id is required");
    s.game_id = j.at("game_id").get<std::string>();
    s.state_dim = get_or<std::int64_t>(j, where, "state_dim", s.state_dim);
    s.obs_dim = get_or<std::int64_t>(j, where, "obs_dim", s.obs_dim);
    s.appearance_seed =
        get_or<std::uint64_t>(j, where, "appearance_seed", s.appearance_seed);
    s.step_size = get_or<double>(j, where, "step_size", s.step_size);
    s.action_noise = get_or<double>(j, where, "action_noise", s.action_noise);
    s.episode_len_max =
        get_or<std::int64_t>(j, where, "episode_len_max", s.episode_len_max);
    if (j.contains("start_distance_range")) {
        const auto r = j.at("start_distance_range").get<std::vector<double>>();
        if (r.size() != 2)
            throw config_error(where + ".start_distance_range needs 2 values");
        s.start_distance_range = {r[0], r[1]};
    }
    s.distractor_std =
        get_or<double>(j, where, "distractor_std", s.distractor_std);
    try {
        s.validate();
    } catch (const config_error& e) {
        throw config_error(where + ": " + e.what());
    }
    return s;
}

json spec_json(const GameSpec& s) {
    return {{"game_id", s.game_id},
            {"state_dim", s.state_dim},
            {"obs_dim", s.obs_dim},
            {"appearance_seed", s.appearance_seed},
            {"step_size", s.step_size},
            {"action_noise", s.action_noise},
            {"episode_len_max", s.episode_len_max},
            {"start_distance_range",
             {s.start_distance_range.first, s.start_distance_range.second}},
            {"distractor_std", s.distractor_std}};
}

}  // namespace

RunConfig RunConfig::parse(const json& j) {
    RunConfig cfg;
    const json data = j.value("data", json::object());
    cfg.data_paths = get_or<std::vector<std::string>>(data, "data", "paths", {});
    if (data.contains("synthworld")) {
        const auto& specs = data.at("synthworld");
        if (!specs.is_array())
            throw config_error("data.synthworld must be an array");
        for (std::size_t i = 0; i < specs.size(); ++i)
            cfg.synth_specs.push_back(parse_spec(specs[i], i));
    }
    cfg.episodes_per_game = get_or<std::int64_t>(data, "data",
                                                 "episodes_per_game",
                                                 cfg.episodes_per_game);

    const json value = j.value("value", json::object());
    cfg.value.gamma = get_or<double>(value, "value", "gamma", cfg.value.gamma);
    cfg.value.reward_threshold = get_or<double>(
        value, "value", "reward_threshold", cfg.value.reward_threshold);
    if (!(cfg.value.gamma > 0.0 && cfg.value.gamma <= 1.0))
        throw config_error("invalid value at value.gamma");

    const json sampler = j.value("sampler", json::object());
    cfg.sampler_kind = sampler_kind_from_string(
        get_or<std::string>(sampler, "sampler", "kind", "vep"));
    cfg.sampler.vep.d_thresh_frac = get_or<double>(
        sampler, "sampler", "d_thresh_frac", cfg.sampler.vep.d_thresh_frac);
    cfg.sampler.vep.v_thresh = get_or<double>(sampler, "sampler", "v_thresh",
                                              cfg.sampler.vep.v_thresh);
    cfg.sampler.vep.max_retries = get_or<std::int64_t>(
        sampler, "sampler", "max_retries", cfg.sampler.vep.max_retries);
    cfg.sampler.tcn.margin_steps = get_or<std::int64_t>(
        sampler, "sampler", "margin_steps", cfg.sampler.tcn.margin_steps);
    cfg.sampler.som.gamma =
        get_or<double>(sampler, "sampler", "som_gamma", cfg.sampler.som.gamma);
    cfg.sampler.som.horizon = get_or<std::int64_t>(
        sampler, "sampler", "som_horizon", cfg.sampler.som.horizon);
    cfg.sampler.vip.min_len = get_or<std::int64_t>(sampler, "sampler",
                                                   "min_len",
                                                   cfg.sampler.vip.min_len);
    cfg.sampler.vip.max_len = get_or<std::int64_t>(sampler, "sampler",
                                                   "max_len",
                                                   cfg.sampler.vip.max_len);
    cfg.sampler.vip_negatives = get_or<std::int64_t>(
        sampler, "sampler", "n_negatives", cfg.sampler.vip_negatives);
    if (!(cfg.sampler.vep.d_thresh_frac > 0.0 &&
          cfg.sampler.vep.d_thresh_frac <= 1.0))
        throw config_error("invalid value at sampler.d_thresh_frac");
    if (!(cfg.sampler.vep.v_thresh > 0.0))
        throw config_error("invalid value at sampler.v_thresh");

    const json schedule = j.value("schedule", json::object());
    cfg.schedule.steps = get_or<std::int64_t>(schedule, "schedule", "steps",
                                              cfg.schedule.steps);
    cfg.schedule.batch_size = get_or<std::int64_t>(
        schedule, "schedule", "batch_size", cfg.schedule.batch_size);
    cfg.schedule.seed =
        get_or<std::uint64_t>(schedule, "schedule", "seed", cfg.schedule.seed);

    const json encoder = j.value("encoder", json::object());
    cfg.encoder.layer_sizes = get_or<std::vector<std::int64_t>>(
        encoder, "encoder", "layer_sizes", {});
    cfg.encoder.activation = activation_from_string(
        get_or<std::string>(encoder, "encoder", "activation", "relu"));
    cfg.encoder.init_seed = get_or<std::uint64_t>(
        encoder, "encoder", "init_seed",
        derive_seed(cfg.schedule.seed, 0xE4C0DE));
    if (cfg.encoder.layer_sizes.empty()) {
        // default: obs_dim resolved later; placeholder filled by caller
        throw config_error("encoder.layer_sizes is required");
    }
    try {
        cfg.encoder.validate();
    } catch (const config_error& e) {
        throw config_error(std::string("encoder.layer_sizes: ") + e.what());
    }

    const json loss = j.value("loss", json::object());
    cfg.loss.kind = loss_kind_from_string(get_or<std::string>(
        loss, "loss", "kind", to_string(default_loss_for(cfg.sampler_kind))));
    cfg.loss.epsilon =
        get_or<double>(loss, "loss", "epsilon", cfg.loss.epsilon);
    cfg.loss.tau = get_or<double>(loss, "loss", "tau", cfg.loss.tau);
    if (!(cfg.loss.epsilon > 0.0))
        throw config_error("invalid value at loss.epsilon");
    if (!(cfg.loss.tau > 0.0)) throw config_error("invalid value at loss.tau");

    const json optim = j.value("optim", json::object());
    cfg.optim.lr = get_or<double>(optim, "optim", "lr", cfg.optim.lr);
    if (optim.contains("betas")) {
        const auto betas = optim.at("betas").get<std::vector<double>>();
        if (betas.size() != 2)
            throw config_error("optim.betas needs exactly 2 values");
        cfg.optim.beta1 = betas[0];
        cfg.optim.beta2 = betas[1];
    }
    cfg.optim.eps = get_or<double>(optim, "optim", "eps", cfg.optim.eps);

    const json eval = j.value("eval", json::object());
    if (eval.contains("game_pairs")) {
        for (const auto& p : eval.at("game_pairs")) {
            const auto pair = p.get<std::vector<std::string>>();
            if (pair.size() != 2)
                throw config_error("eval.game_pairs entries need 2 games");
            cfg.eval_game_pairs.emplace_back(pair[0], pair[1]);
        }
    }
    cfg.eval_k =
        get_or<std::vector<std::int64_t>>(eval, "eval", "k", cfg.eval_k);
    cfg.eval_v_tol = get_or<double>(eval, "eval", "v_tol", cfg.eval_v_tol);
    cfg.eval_n_pairs =
        get_or<std::int64_t>(eval, "eval", "n_pairs", cfg.eval_n_pairs);
    cfg.eval_n_queries =
        get_or<std::int64_t>(eval, "eval", "n_queries", cfg.eval_n_queries);
    cfg.eval_probe_lambda = get_or<double>(eval, "eval", "probe_lambda",
                                           cfg.eval_probe_lambda);
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config parse: ") + e.what());
    }
    return parse(j);
}

json RunConfig::echo() const {
    json synth = json::array();
    for (const auto& s : synth_specs) synth.push_back(spec_json(s));
    json pairs = json::array();
    for (const auto& [x, y] : eval_game_pairs)
        pairs.push_back(json::array({x, y}));
    return {
        {"data",
         {{"paths", data_paths},
          {"synthworld", synth},
          {"episodes_per_game", episodes_per_game}}},
        {"value",
         {{"gamma", value.gamma},
          {"reward_threshold", value.reward_threshold}}},
        {"sampler",
         {{"kind", to_string(sampler_kind)},
          {"d_thresh_frac", sampler.vep.d_thresh_frac},
          {"v_thresh", sampler.vep.v_thresh},
          {"max_retries", sampler.vep.max_retries},
          {"margin_steps", sampler.tcn.margin_steps},
          {"som_gamma", sampler.som.gamma},
          {"som_horizon", sampler.som.horizon},
          {"min_len", sampler.vip.min_len},
          {"max_len", sampler.vip.max_len},
          {"n_negatives", sampler.vip_negatives}}},
        {"encoder",
         {{"layer_sizes", encoder.layer_sizes},
          {"activation", to_string(encoder.activation)},
          {"init_seed", encoder.init_seed}}},
        {"loss",
         {{"kind", to_string(loss.kind)},
          {"epsilon", loss.epsilon},
          {"tau", loss.tau}}},
        {"optim",
         {{"lr", optim.lr},
          {"betas", {optim.beta1, optim.beta2}},
          {"eps", optim.eps}}},
        {"schedule",
         {{"steps", schedule.steps},
          {"batch_size", schedule.batch_size},
          {"seed", schedule.seed}}},
        {"eval",
         {{"game_pairs", pairs},
          {"k", eval_k},
          {"v_tol", eval_v_tol},
          {"n_pairs", eval_n_pairs},
          {"n_queries", eval_n_queries},
          {"probe_lambda", eval_probe_lambda}}}};
}

TrajectoryDataset build_run_dataset(const RunConfig& cfg) {
    std::vector<Episode> episodes;
    if (!cfg.data_paths.empty()) {
        for (const auto& path : cfg.data_paths) {
            auto eps = load_episodes(path);
            for (auto& e : eps) episodes.push_back(std::move(e));
        }
    } else if (!cfg.synth_specs.empty()) {
        for (std::size_t i = 0; i < cfg.synth_specs.size(); ++i) {
            auto eps = generate_dataset(
                cfg.synth_specs[i], cfg.episodes_per_game,
                derive_seed(cfg.schedule.seed, i));
            for (auto& e : eps) episodes.push_back(std::move(e));
        }
    } else {
        throw config_error("data.paths or data.synthworld is required");
    }
    return build_dataset(episodes, cfg.value);
}

}  // namespace valign

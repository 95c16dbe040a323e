#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "valign/encoder.hpp"
#include "valign/eval.hpp"
#include "valign/kernels.hpp"
#include "valign/report_chart.hpp"
#include "valign/rng.hpp"
#include "valign/run_config.hpp"
#include "valign/synthworld.hpp"
#include "valign/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace valign;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// distinct exit codes per failure class
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitEmptyDataset = 4;
constexpr int kExitSampling = 5;
constexpr int kExitDivergence = 6;
constexpr int kExitCheckpointMismatch = 7;
constexpr int kExitReportSchema = 8;

struct checkpoint_mismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int configured_threads() {
    const char* env = std::getenv("VALIGN_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

void write_manifest(const fs::path& out_dir, const RunConfig& cfg,
                    const json& artifacts, double wall_ms) {
    json m;
    m["config"] = cfg.echo();
    m["seed"] = cfg.schedule.seed;
    m["artifacts"] = artifacts;
    m["tool_version"] = kToolVersion;
    m["wall_clock_ms"] = wall_ms;
    m["threads"] = configured_threads();
    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw io_error("cannot write manifest");
    out << m.dump(2) << "\n";
}

void write_resolved_config(const fs::path& out_dir, const RunConfig& cfg) {
    std::ofstream out(out_dir / "config.resolved.json");
    if (!out) throw io_error("cannot write resolved config");
    out << cfg.echo().dump(2) << "\n";
}

int cmd_gen(const std::string& config_path, const std::string& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = RunConfig::load(config_path);
    if (cfg.synth_specs.empty())
        throw config_error("data.synthworld is required for gen");
    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    json artifacts = json::object();
    json files = json::array();
    for (std::size_t i = 0; i < cfg.synth_specs.size(); ++i) {
        const auto& spec = cfg.synth_specs[i];
        const auto episodes = generate_dataset(
            spec, cfg.episodes_per_game, derive_seed(cfg.schedule.seed, i));
        const auto path = out_dir / (spec.game_id + ".jsonl");
        write_episodes(path.string(), episodes);
        files.push_back(path.string());
    }
    artifacts["episode_files"] = std::move(files);
    write_resolved_config(out_dir, cfg);
    artifacts["resolved_config"] = (out_dir / "config.resolved.json").string();
    const double wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    write_manifest(out_dir, cfg, artifacts, wall_ms);
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = RunConfig::load(config_path);
    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    const TrajectoryDataset dataset = build_run_dataset(cfg);
    const auto result =
        pretrain(dataset, cfg.sampler_kind, cfg.encoder, cfg.loss, cfg.optim,
                 cfg.schedule, cfg.sampler);
    const auto ckpt = out_dir / "checkpoint.json";
    const auto metrics = out_dir / "metrics.csv";
    save_checkpoint(ckpt.string(), cfg.encoder, result.params);
    write_metrics_csv(metrics.string(), result.log);
    write_resolved_config(out_dir, cfg);
    json artifacts = {{"checkpoint", ckpt.string()},
                      {"metrics", metrics.string()},
                      {"resolved_config",
                       (out_dir / "config.resolved.json").string()}};
    const double wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    write_manifest(out_dir, cfg, artifacts, wall_ms);
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& out, bool random_baseline) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = RunConfig::load(config_path);
    if (cfg.eval_game_pairs.empty())
        throw config_error("eval.game_pairs is required for eval");
    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    const TrajectoryDataset dataset = build_run_dataset(cfg);

    EncoderConfig enc_cfg = cfg.encoder;
    EncoderParams params;
    if (random_baseline) {
        params = init_params(enc_cfg);
    } else {
        if (checkpoint.empty())
            throw config_error("--checkpoint is required without "
                               "--random-baseline");
        auto [ck_cfg, ck_params] = load_checkpoint(checkpoint);
        if (ck_cfg.layer_sizes != cfg.encoder.layer_sizes ||
            ck_cfg.activation != cfg.encoder.activation)
            throw checkpoint_mismatch(
                "checkpoint encoder does not match config");
        enc_cfg = ck_cfg;
        params = std::move(ck_params);
    }

    const EmbeddedDataset ed = embed_dataset(dataset, params, enc_cfg);

    AlignmentReport report;
    report.encoder = enc_cfg;
    report.n_pairs = cfg.eval_n_pairs;
    report.n_queries = cfg.eval_n_queries;
    report.seed = cfg.schedule.seed;
    double rho = 0.0, r2w = 0.0, r2t = 0.0;
    std::map<std::int64_t, double> retr;
    for (std::size_t p = 0; p < cfg.eval_game_pairs.size(); ++p) {
        const auto& [gx, gy] = cfg.eval_game_pairs[p];
        rho += cross_game_alignment(ed, gx, gy, cfg.eval_n_pairs,
                                    derive_seed(cfg.schedule.seed, 100 + p));
        for (auto k : cfg.eval_k)
            retr[k] += retrieval_at_k(
                ed, gx, gy, k, cfg.eval_v_tol, cfg.eval_n_queries,
                derive_seed(cfg.schedule.seed, 200 + p));
        const auto [w, t] =
            value_probe(ed, gx, gy, cfg.eval_probe_lambda,
                        derive_seed(cfg.schedule.seed, 300 + p));
        r2w += w;
        r2t += t;
    }
    const double np = static_cast<double>(cfg.eval_game_pairs.size());
    report.spearman_rho = rho / np;
    for (auto& [k, v] : retr) report.retrieval_at_k[k] = v / np;
    report.probe_r2_within = r2w / np;
    report.probe_r2_transfer = r2t / np;

    const auto report_path = out_dir / "report.json";
    write_report(report, report_path.string(), ReportFormat::json);
    write_resolved_config(out_dir, cfg);
    json artifacts = {{"report", report_path.string()},
                      {"resolved_config",
                       (out_dir / "config.resolved.json").string()}};
    const double wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    write_manifest(out_dir, cfg, artifacts, wall_ms);
    return 0;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& out) {
    if (paths.empty()) throw config_error("at least one report path required");
    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    std::vector<LabeledReport> reports;
    for (const auto& p : paths) {
        LabeledReport lr;
        lr.label = fs::path(p).parent_path().filename().string();
        if (lr.label.empty()) lr.label = fs::path(p).stem().string();
        lr.report = read_report(p);
        reports.push_back(std::move(lr));
    }
    write_comparison_csv((out_dir / "comparison.csv").string(), reports);
    write_comparison_svg((out_dir / "comparison.svg").string(), reports);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Value-based contrastive pretraining pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", checkpoint;
    bool random_baseline = false;
    std::vector<std::string> report_paths;

    auto* gen = app.add_subcommand("gen", "generate synthetic episode files");
    gen->add_option("--config", config_path)->required();
    gen->add_option("--out", out_dir);

    auto* pre = app.add_subcommand("pretrain", "pretrain an encoder");
    pre->add_option("--config", config_path)->required();
    pre->add_option("--out", out_dir);

    auto* ev = app.add_subcommand("eval", "evaluate a frozen encoder");
    ev->add_option("--config", config_path)->required();
    ev->add_option("--checkpoint", checkpoint);
    ev->add_option("--out", out_dir);
    ev->add_flag("--random-baseline", random_baseline);

    auto* rep = app.add_subcommand("report", "merge reports into csv + svg");
    rep->add_option("reports", report_paths, "report json paths");
    rep->add_option("--out", out_dir);

    CLI11_PARSE(app, argc, argv);

    kernels::set_threads(configured_threads());

    try {
        if (*gen) return cmd_gen(config_path, out_dir);
        if (*pre) return cmd_pretrain(config_path, out_dir);
        if (*ev) return cmd_eval(config_path, checkpoint, out_dir,
                                 random_baseline);
        if (*rep) return cmd_report(report_paths, out_dir);
    } catch (const checkpoint_mismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckpointMismatch;
    } catch (const empty_dataset_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEmptyDataset;
    } catch (const sampling_error& e) {
        std::cerr << "error: sampling failure";
        if (!e.game_id.empty()) std::cerr << " in game " << e.game_id;
        std::cerr << ": " << e.what() << "\n";
        return kExitSampling;
    } catch (const divergence_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return *rep ? kExitReportSchema : kExitConfig;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

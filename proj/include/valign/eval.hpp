#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "valign/encoder.hpp"
#include "valign/tensor.hpp"
#include "valign/trajectory.hpp"

namespace valign {

struct FrameRef {
    std::int64_t trajectory = 0;
    std::int64_t frame = 0;
};

struct EmbeddedGame {
    Tensor embeddings;  // [N, D], rows aligned with provenance
    std::vector<double> values;
    std::vector<FrameRef> provenance;
};

struct EmbeddedDataset {
    std::map<std::string, EmbeddedGame> games;
    std::int64_t embed_dim = 0;
    EncoderConfig encoder;  // producing encoder, echoed in reports

    const EmbeddedGame& game(const std::string& id) const;
};

struct AlignmentReport {
    double spearman_rho = 0.0;
    std::map<std::int64_t, double> retrieval_at_k;
    double probe_r2_within = 0.0;
    double probe_r2_transfer = 0.0;
    std::int64_t n_pairs = 0;
    std::int64_t n_queries = 0;
    std::uint64_t seed = 0;
    EncoderConfig encoder;
};

EmbeddedDataset embed_dataset(const TrajectoryDataset& dataset,
                              const EncoderParams& params,
                              const EncoderConfig& cfg);

// Rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Spearman between cross-game embedding distance and value gap over random
// frame pairs.
double cross_game_alignment(const EmbeddedDataset& ed,
                            const std::string& game_x,
                            const std::string& game_y, std::int64_t n_pairs,
                            std::uint64_t seed);

double retrieval_at_k(const EmbeddedDataset& ed, const std::string& game_x,
                      const std::string& game_y, std::int64_t k, double v_tol,
                      std::int64_t n_queries, std::uint64_t seed);

// Closed-form ridge from embeddings to values; within-game r2 on a held-out
// 20% trajectory split, transfer r2 on the whole test game.
std::pair<double, double> value_probe(const EmbeddedDataset& ed,
                                      const std::string& train_game,
                                      const std::string& test_game,
                                      double lambda,
                                      std::uint64_t split_seed = 0);

enum class ReportFormat { json, csv };

void write_report(const AlignmentReport& report, const std::string& path,
                  ReportFormat format);

AlignmentReport read_report(const std::string& path);

}  // namespace valign

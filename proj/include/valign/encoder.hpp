#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "valign/samplers.hpp"
#include "valign/tensor.hpp"
#include "valign/trajectory.hpp"

namespace valign {

enum class Activation { relu, tanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct EncoderConfig {
    // layer_sizes[0] = obs_dim, back() = embedding size
    std::vector<std::int64_t> layer_sizes;
    Activation activation = Activation::relu;
    std::uint64_t init_seed = 0;

    void validate() const;
    std::int64_t input_dim() const { return layer_sizes.front(); }
    std::int64_t embed_dim() const { return layer_sizes.back(); }
};

struct Layer {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
};

struct EncoderParams {
    std::vector<Layer> layers;

    std::int64_t flat_size() const;
    // in-place p += alpha * g, matching layer by layer
    void axpy(double alpha, const EncoderParams& g);
    double l2_norm() const;
    bool all_finite() const;
    static EncoderParams zeros_like(const EncoderParams& p);
};

EncoderParams init_params(const EncoderConfig& cfg);

struct ForwardCache {
    Tensor input;                      // [N, in]
    std::vector<Tensor> pre_acts;      // per layer, [N, out]
    std::vector<Tensor> activations;   // inputs to layers 1..L-1
    std::size_t layer_count = 0;
};

std::pair<Tensor, ForwardCache> encode_forward(const EncoderParams& params,
                                               const EncoderConfig& cfg,
                                               const Tensor& batch);

// Gradients of the loss w.r.t. every weight and bias, given upstream
// gradients on the embeddings.
EncoderParams backward(const EncoderParams& params, const EncoderConfig& cfg,
                       const ForwardCache& cache, const Tensor& upstream);

struct TripletGrads {
    Tensor d_anchor, d_positive, d_negative;  // each [N, D]
};

std::pair<double, TripletGrads> triplet_loss(const Tensor& emb_a,
                                             const Tensor& emb_p,
                                             const Tensor& emb_n,
                                             double epsilon);

struct InfoNceGrads {
    Tensor d_anchor, d_positive;  // [N, D]
    Tensor d_negatives;           // [N, M, D]
};

// S(u, v) = exp(-||u - v||^2 / tau); per-row loss
// -log( S(a, p) / mean_m S(a, g_m) )
std::pair<double, InfoNceGrads> infonce_loss(const Tensor& emb_anchor,
                                             const Tensor& emb_pos,
                                             const Tensor& emb_negs,
                                             double tau);

struct OptimConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimState {
    std::int64_t step = 0;
    EncoderParams m;
    EncoderParams v;

    static OptimState init(const EncoderParams& params);
};

void adam_step(EncoderParams& params, const EncoderParams& grads,
               OptimState& state, const OptimConfig& cfg);

enum class SamplerKind { vep, tcn, som, vip };

SamplerKind sampler_kind_from_string(const std::string& s);
std::string to_string(SamplerKind k);

enum class LossKind { triplet, infonce };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

// Default loss pairing: vep/tcn -> triplet, som/vip -> infonce.
LossKind default_loss_for(SamplerKind k);

struct LossConfig {
    LossKind kind = LossKind::triplet;
    double epsilon = 0.5;  // triplet margin
    double tau = 1.0;      // infonce temperature
};

struct SamplerParams {
    VepConfig vep;
    TcnConfig tcn;
    SomConfig som;
    VipConfig vip;
    std::int64_t vip_negatives = 4;
};

struct Schedule {
    std::int64_t steps = 0;
    std::int64_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct MetricsRow {
    std::int64_t step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

struct PretrainResult {
    EncoderParams params;
    std::vector<MetricsRow> log;
};

PretrainResult pretrain(const TrajectoryDataset& dataset, SamplerKind sampler,
                        const EncoderConfig& encoder_cfg,
                        const LossConfig& loss_cfg, const OptimConfig& optim,
                        const Schedule& schedule,
                        const SamplerParams& sampler_params = {});

struct GradCheckTrial {
    double max_rel_err = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckTrial> trials;
    double worst = 0.0;
    bool all_passed = true;
};

GradCheckReport grad_check(const EncoderConfig& encoder_cfg,
                           const LossConfig& loss_cfg, std::int64_t trials,
                           double tolerance, std::uint64_t seed = 1234);

// Self-describing JSON checkpoint; write -> read is bit-exact.
void save_checkpoint(const std::string& path, const EncoderConfig& cfg,
                     const EncoderParams& params);
std::pair<EncoderConfig, EncoderParams> load_checkpoint(
    const std::string& path);

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& log);

}  // namespace valign

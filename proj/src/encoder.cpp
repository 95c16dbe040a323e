#include "valign/encoder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "valign/kernels.hpp"
#include "valign/rng.hpp"

namespace valign {

using nlohmann::json;

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw config_error("unknown activation: " + s);
}

std::string to_string(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

void EncoderConfig::validate() const {
    if (layer_sizes.size() < 2)
        throw config_error("encoder needs at least input and output sizes");
    for (auto s : layer_sizes)
        if (s < 1) throw config_error("layer sizes must be positive");
}

std::int64_t EncoderParams::flat_size() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.weight.numel() + l.bias.numel();
    return n;
}

void EncoderParams::axpy(double alpha, const EncoderParams& g) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& w = layers[l].weight.data;
        const auto& gw = g.layers[l].weight.data;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += alpha * gw[i];
        auto& b = layers[l].bias.data;
        const auto& gb = g.layers[l].bias.data;
        for (std::size_t i = 0; i < b.size(); ++i) b[i] += alpha * gb[i];
    }
}

double EncoderParams::l2_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
        for (double x : l.weight.data) s += x * x;
        for (double x : l.bias.data) s += x * x;
    }
    return std::sqrt(s);
}

bool EncoderParams::all_finite() const {
    for (const auto& l : layers) {
        for (double x : l.weight.data)
            if (!std::isfinite(x)) return false;
        for (double x : l.bias.data)
            if (!std::isfinite(x)) return false;
    }
    return true;
}

EncoderParams EncoderParams::zeros_like(const EncoderParams& p) {
    EncoderParams z;
    for (const auto& l : p.layers)
        z.layers.push_back({Tensor(l.weight.shape), Tensor(l.bias.shape)});
    return z;
}

EncoderParams init_params(const EncoderConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.init_seed);
    EncoderParams p;
    for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l) {
        const std::int64_t fan_in = cfg.layer_sizes[l];
        const std::int64_t fan_out = cfg.layer_sizes[l + 1];
        const double scale =
            cfg.activation == Activation::relu
                ? std::sqrt(2.0 / static_cast<double>(fan_in))
                : std::sqrt(1.0 / static_cast<double>(fan_in));
        Layer layer{Tensor({fan_out, fan_in}), Tensor({fan_out})};
        for (auto& w : layer.weight.data) w = scale * rng.gaussian();
        p.layers.push_back(std::move(layer));
    }
    return p;
}

std::pair<Tensor, ForwardCache> encode_forward(const EncoderParams& params,
                                               const EncoderConfig& cfg,
                                               const Tensor& batch) {
    cfg.validate();
    if (batch.shape.size() != 2 || batch.dim(1) != cfg.input_dim())
        throw dimension_error("encode_forward: batch inner dim mismatch");
    if (params.layers.size() != cfg.layer_sizes.size() - 1)
        throw dimension_error("encode_forward: params do not match config");
    const std::int64_t n = batch.dim(0);
    ForwardCache cache;
    cache.input = batch;
    cache.layer_count = params.layers.size();
    Tensor h = batch;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        const std::int64_t out = layer.weight.dim(0);
        const std::int64_t in = layer.weight.dim(1);
        if (h.dim(1) != in)
            throw dimension_error("encode_forward: layer shape mismatch");
        Tensor z({n, out});
        kernels::matmul_nt(h.data, layer.weight.data, z.data, n, in, out);
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < out; ++c)
                z.at(r, c) += layer.bias.data[static_cast<std::size_t>(c)];
        cache.pre_acts.push_back(z);
        const bool last = l + 1 == params.layers.size();
        if (last) {
            h = std::move(z);
        } else {
            Tensor a({n, out});
            if (cfg.activation == Activation::relu) {
                for (std::size_t i = 0; i < z.data.size(); ++i)
                    a.data[i] = z.data[i] > 0.0 ? z.data[i] : 0.0;
            } else {
                for (std::size_t i = 0; i < z.data.size(); ++i)
                    a.data[i] = std::tanh(z.data[i]);
            }
            cache.activations.push_back(a);
            h = std::move(a);
        }
    }
    return {h, std::move(cache)};
}

EncoderParams backward(const EncoderParams& params, const EncoderConfig& cfg,
                       const ForwardCache& cache, const Tensor& upstream) {
    if (cache.layer_count != params.layers.size())
        throw usage_error("backward: cache does not match params");
    if (!upstream.same_shape(cache.pre_acts.back()))
        throw usage_error("backward: upstream shape does not match cache");
    const std::int64_t n = cache.input.dim(0);
    EncoderParams grads = EncoderParams::zeros_like(params);
    Tensor dz = upstream;
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& layer = params.layers[li];
        const std::int64_t out = layer.weight.dim(0);
        const std::int64_t in = layer.weight.dim(1);
        const Tensor& x = li == 0 ? cache.input : cache.activations[li - 1];
        // dW = dZ^T X, db = column sums of dZ
        kernels::matmul_tn(dz.data, x.data, grads.layers[li].weight.data, n,
                           out, in);
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < out; ++c)
                grads.layers[li].bias.data[static_cast<std::size_t>(c)] +=
                    dz.at(r, c);
        if (li == 0) break;
        Tensor dx({n, in});
        kernels::matmul_nn(dz.data, layer.weight.data, dx.data, n, out, in);
        const Tensor& pre = cache.pre_acts[li - 1];
        if (cfg.activation == Activation::relu) {
            for (std::size_t i = 0; i < dx.data.size(); ++i)
                if (pre.data[i] <= 0.0) dx.data[i] = 0.0;
        } else {
            for (std::size_t i = 0; i < dx.data.size(); ++i) {
                const double t = std::tanh(pre.data[i]);
                dx.data[i] *= 1.0 - t * t;
            }
        }
        dz = std::move(dx);
    }
    return grads;
}

std::pair<double, TripletGrads> triplet_loss(const Tensor& emb_a,
                                             const Tensor& emb_p,
                                             const Tensor& emb_n,
                                             double epsilon) {
    if (!(epsilon > 0.0)) throw config_error("triplet margin must be > 0");
    if (!emb_a.same_shape(emb_p) || !emb_a.same_shape(emb_n) ||
        emb_a.shape.size() != 2)
        throw dimension_error("triplet_loss: shape mismatch");
    const std::int64_t n = emb_a.dim(0);
    const std::int64_t d = emb_a.dim(1);
    TripletGrads g{Tensor({n, d}), Tensor({n, d}), Tensor({n, d})};
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::int64_t r = 0; r < n; ++r) {
        double d_ap = 0.0, d_an = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
            const double ap = emb_a.at(r, c) - emb_p.at(r, c);
            const double an = emb_a.at(r, c) - emb_n.at(r, c);
            d_ap += ap * ap;
            d_an += an * an;
        }
        const double hinge = d_ap - d_an + epsilon;
        if (hinge > 0.0) {
            loss += hinge;
            for (std::int64_t c = 0; c < d; ++c) {
                const double ap = emb_a.at(r, c) - emb_p.at(r, c);
                const double an = emb_a.at(r, c) - emb_n.at(r, c);
                g.d_anchor.at(r, c) = inv_n * 2.0 * (ap - an);
                g.d_positive.at(r, c) = inv_n * -2.0 * ap;
                g.d_negative.at(r, c) = inv_n * 2.0 * an;
            }
        }
    }
    return {loss * inv_n, std::move(g)};
}

std::pair<double, InfoNceGrads> infonce_loss(const Tensor& emb_anchor,
                                             const Tensor& emb_pos,
                                             const Tensor& emb_negs,
                                             double tau) {
    if (!(tau > 0.0)) throw config_error("infonce temperature must be > 0");
    if (emb_anchor.shape.size() != 2 || !emb_anchor.same_shape(emb_pos) ||
        emb_negs.shape.size() != 3 || emb_negs.dim(0) != emb_anchor.dim(0) ||
        emb_negs.dim(2) != emb_anchor.dim(1) || emb_negs.dim(1) < 1)
        throw dimension_error("infonce_loss: shape mismatch");
    const std::int64_t n = emb_anchor.dim(0);
    const std::int64_t m = emb_negs.dim(1);
    const std::int64_t d = emb_anchor.dim(1);
    InfoNceGrads g{Tensor({n, d}), Tensor({n, d}), Tensor({n, m, d})};
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> scores(static_cast<std::size_t>(m));
    for (std::int64_t r = 0; r < n; ++r) {
        double d_ap = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
            const double diff = emb_anchor.at(r, c) - emb_pos.at(r, c);
            d_ap += diff * diff;
        }
        double max_s = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < m; ++j) {
            double d_am = 0.0;
            for (std::int64_t c = 0; c < d; ++c) {
                const double diff = emb_anchor.at(r, c) - emb_negs.at(r, j, c);
                d_am += diff * diff;
            }
            scores[static_cast<std::size_t>(j)] = -d_am / tau;
            max_s = std::max(max_s, scores[static_cast<std::size_t>(j)]);
        }
        double sum_exp = 0.0;
        for (std::int64_t j = 0; j < m; ++j)
            sum_exp += std::exp(scores[static_cast<std::size_t>(j)] - max_s);
        const double lse = max_s + std::log(sum_exp);
        // loss_r = d_ap/tau + log(mean_m exp(-d_am/tau))
        loss += d_ap / tau + lse - std::log(static_cast<double>(m));
        for (std::int64_t c = 0; c < d; ++c) {
            const double diff = emb_anchor.at(r, c) - emb_pos.at(r, c);
            g.d_anchor.at(r, c) += inv_n * (2.0 / tau) * diff;
            g.d_positive.at(r, c) = inv_n * (-2.0 / tau) * diff;
        }
        for (std::int64_t j = 0; j < m; ++j) {
            const double w =
                std::exp(scores[static_cast<std::size_t>(j)] - lse);
            for (std::int64_t c = 0; c < d; ++c) {
                const double diff = emb_anchor.at(r, c) - emb_negs.at(r, j, c);
                g.d_anchor.at(r, c) -= inv_n * (2.0 / tau) * w * diff;
                g.d_negatives.at(r, j, c) = inv_n * (2.0 / tau) * w * diff;
            }
        }
    }
    return {loss * inv_n, std::move(g)};
}

OptimState OptimState::init(const EncoderParams& params) {
    OptimState s;
    s.m = EncoderParams::zeros_like(params);
    s.v = EncoderParams::zeros_like(params);
    return s;
}

void adam_step(EncoderParams& params, const EncoderParams& grads,
               OptimState& state, const OptimConfig& cfg) {
    if (!grads.all_finite())
        throw divergence_error("non-finite gradient in adam_step");
    state.step += 1;
    const double bc1 =
        1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 =
        1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                p[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
            }
        };
        update(params.layers[l].weight.data, grads.layers[l].weight.data,
               state.m.layers[l].weight.data, state.v.layers[l].weight.data);
        update(params.layers[l].bias.data, grads.layers[l].bias.data,
               state.m.layers[l].bias.data, state.v.layers[l].bias.data);
    }
}

SamplerKind sampler_kind_from_string(const std::string& s) {
    if (s == "vep") return SamplerKind::vep;
    if (s == "tcn") return SamplerKind::tcn;
    if (s == "som") return SamplerKind::som;
    if (s == "vip") return SamplerKind::vip;
    throw config_error("unknown sampler kind: " + s);
}

std::string to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::vep: return "vep";
        case SamplerKind::tcn: return "tcn";
        case SamplerKind::som: return "som";
        case SamplerKind::vip: return "vip";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "triplet") return LossKind::triplet;
    if (s == "infonce") return LossKind::infonce;
    throw config_error("unknown loss kind: " + s);
}

std::string to_string(LossKind k) {
    return k == LossKind::triplet ? "triplet" : "infonce";
}

LossKind default_loss_for(SamplerKind k) {
    return (k == SamplerKind::vep || k == SamplerKind::tcn)
               ? LossKind::triplet
               : LossKind::infonce;
}

namespace {

struct TrainBatch {
    Tensor anchors;    // [N, obs]
    Tensor positives;  // [N, obs]
    Tensor negatives;  // triplet: [N, obs]; infonce: [N, M, obs]
};

std::vector<std::string> games_with(const TrajectoryDataset& ds,
                                    std::int64_t min_len) {
    std::vector<std::string> out;
    for (const auto& [id, trajs] : ds.games)
        for (const auto& t : trajs)
            if (t.length() >= min_len) {
                out.push_back(id);
                break;
            }
    return out;
}

const SubTrajectory& pick_trajectory(const TrajectoryDataset& ds,
                                     const std::string& game,
                                     std::int64_t min_len, Rng& rng) {
    const auto& trajs = ds.trajectories(game);
    std::vector<std::size_t> eligible;
    for (std::size_t t = 0; t < trajs.size(); ++t)
        if (trajs[t].length() >= min_len) eligible.push_back(t);
    if (eligible.empty())
        throw sampling_error("no trajectory of length >= " +
                                 std::to_string(min_len) + " in " + game,
                             game);
    return trajs[eligible[static_cast<std::size_t>(
        rng.uniform_index(eligible.size()))]];
}

void copy_obs(const SubTrajectory& traj, std::int64_t frame, Tensor& dst,
              std::int64_t row) {
    const auto& obs = traj.frames[static_cast<std::size_t>(frame)].observation;
    for (std::size_t c = 0; c < obs.size(); ++c)
        dst.at(row, static_cast<std::int64_t>(c)) = obs[c];
}

void copy_obs3(const SubTrajectory& traj, std::int64_t frame, Tensor& dst,
               std::int64_t row, std::int64_t slot) {
    const auto& obs = traj.frames[static_cast<std::size_t>(frame)].observation;
    for (std::size_t c = 0; c < obs.size(); ++c)
        dst.at(row, slot, static_cast<std::int64_t>(c)) = obs[c];
}

TrainBatch make_vep_batch(const TrajectoryDataset& ds, const VepConfig& cfg,
                          std::int64_t batch_size, Rng& rng) {
    const auto games = ds.game_ids();
    if (games.size() < 2)
        throw config_error("vep pretraining needs at least two games");
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::int64_t b = 0; b < batch_size; ++b) {
        const auto xi = rng.uniform_index(games.size());
        auto yi = rng.uniform_index(games.size() - 1);
        if (yi >= xi) ++yi;
        pairs.emplace_back(games[static_cast<std::size_t>(xi)],
                           games[static_cast<std::size_t>(yi)]);
    }
    const auto batch = assemble_batch(ds, pairs, cfg, rng.next_u64());
    return {PairedTripletBatch::fold(batch.anchors),
            PairedTripletBatch::fold(batch.positives),
            PairedTripletBatch::fold(batch.negatives)};
}

TrainBatch make_tcn_batch(const TrajectoryDataset& ds, const TcnConfig& cfg,
                          std::int64_t batch_size, Rng& rng) {
    const auto games = games_with(ds, 3);
    if (games.empty())
        throw sampling_error("no game has a trajectory of length >= 3", "");
    TrainBatch b{Tensor({batch_size, ds.obs_dim}),
                 Tensor({batch_size, ds.obs_dim}),
                 Tensor({batch_size, ds.obs_dim})};
    for (std::int64_t r = 0; r < batch_size; ++r) {
        const auto& game =
            games[static_cast<std::size_t>(rng.uniform_index(games.size()))];
        // retry unlucky positives whose negative set is empty
        for (std::int64_t attempt = 0;; ++attempt) {
            const auto& traj = pick_trajectory(ds, game, 3, rng);
            try {
                const auto t = sample_tcn(traj, cfg, rng);
                copy_obs(traj, t.anchor, b.anchors, r);
                copy_obs(traj, t.positive, b.positives, r);
                copy_obs(traj, t.negative, b.negatives, r);
                break;
            } catch (const sampling_error&) {
                if (attempt >= 100) throw;
            }
        }
    }
    return b;
}

TrainBatch make_som_batch(const TrajectoryDataset& ds, const SomConfig& cfg,
                          std::int64_t batch_size, Rng& rng) {
    if (batch_size < 2)
        throw config_error("som pretraining needs batch size >= 2");
    const auto games = games_with(ds, 2);
    if (games.empty())
        throw sampling_error("no game has a trajectory of length >= 2", "");
    TrainBatch b{Tensor({batch_size, ds.obs_dim}),
                 Tensor({batch_size, ds.obs_dim}),
                 Tensor({batch_size, batch_size - 1, ds.obs_dim})};
    std::vector<std::vector<double>> pos_obs(
        static_cast<std::size_t>(batch_size));
    for (std::int64_t r = 0; r < batch_size; ++r) {
        const auto& game =
            games[static_cast<std::size_t>(rng.uniform_index(games.size()))];
        const auto& traj = pick_trajectory(ds, game, 2, rng);
        const auto [a, p] = sample_som_pair(traj, cfg, rng);
        copy_obs(traj, a, b.anchors, r);
        copy_obs(traj, p, b.positives, r);
        pos_obs[static_cast<std::size_t>(r)] =
            traj.frames[static_cast<std::size_t>(p)].observation;
    }
    // batch-negative convention: each row's negatives are the other rows'
    // positives
    for (std::int64_t r = 0; r < batch_size; ++r) {
        std::int64_t slot = 0;
        for (std::int64_t o = 0; o < batch_size; ++o) {
            if (o == r) continue;
            const auto& obs = pos_obs[static_cast<std::size_t>(o)];
            for (std::size_t c = 0; c < obs.size(); ++c)
                b.negatives.at(r, slot, static_cast<std::int64_t>(c)) = obs[c];
            ++slot;
        }
    }
    return b;
}

TrainBatch make_vip_batch(const TrajectoryDataset& ds, const VipConfig& cfg,
                          std::int64_t n_negatives, std::int64_t batch_size,
                          Rng& rng) {
    if (cfg.min_len - 2 < n_negatives)
        throw config_error(
            "vip min_len too small for the configured negative count");
    const auto games = games_with(ds, cfg.min_len);
    if (games.empty())
        throw sampling_error("no game has a trajectory of length >= vip "
                             "min_len",
                             "");
    TrainBatch b{Tensor({batch_size, ds.obs_dim}),
                 Tensor({batch_size, ds.obs_dim}),
                 Tensor({batch_size, n_negatives, ds.obs_dim})};
    for (std::int64_t r = 0; r < batch_size; ++r) {
        const auto& game =
            games[static_cast<std::size_t>(rng.uniform_index(games.size()))];
        const auto& traj = pick_trajectory(ds, game, cfg.min_len, rng);
        const auto s = sample_vip(traj, cfg, rng, n_negatives);
        copy_obs(traj, s.anchor, b.anchors, r);
        copy_obs(traj, s.positive, b.positives, r);
        for (std::int64_t j = 0; j < n_negatives; ++j)
            copy_obs3(traj, s.negatives[static_cast<std::size_t>(j)],
                      b.negatives, r, j);
    }
    return b;
}

}  // namespace

PretrainResult pretrain(const TrajectoryDataset& dataset, SamplerKind sampler,
                        const EncoderConfig& encoder_cfg,
                        const LossConfig& loss_cfg, const OptimConfig& optim,
                        const Schedule& schedule,
                        const SamplerParams& sampler_params) {
    encoder_cfg.validate();
    if (dataset.games.empty()) throw empty_dataset_error("empty dataset");
    if (dataset.obs_dim != encoder_cfg.input_dim())
        throw dimension_error("dataset obs_dim does not match encoder input");
    if ((sampler == SamplerKind::som || sampler == SamplerKind::vip) &&
        loss_cfg.kind != LossKind::infonce)
        throw config_error("som/vip pretraining requires the infonce loss");

    PretrainResult result;
    result.params = init_params(encoder_cfg);
    OptimState state = OptimState::init(result.params);
    Rng rng(schedule.seed);

    for (std::int64_t step = 0; step < schedule.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        TrainBatch batch;
        switch (sampler) {
            case SamplerKind::vep:
                batch = make_vep_batch(dataset, sampler_params.vep,
                                       schedule.batch_size, rng);
                break;
            case SamplerKind::tcn:
                batch = make_tcn_batch(dataset, sampler_params.tcn,
                                       schedule.batch_size, rng);
                break;
            case SamplerKind::som:
                batch = make_som_batch(dataset, sampler_params.som,
                                       schedule.batch_size, rng);
                break;
            case SamplerKind::vip:
                batch = make_vip_batch(dataset, sampler_params.vip,
                                       sampler_params.vip_negatives,
                                       schedule.batch_size, rng);
                break;
        }

        auto [emb_a, cache_a] =
            encode_forward(result.params, encoder_cfg, batch.anchors);
        auto [emb_p, cache_p] =
            encode_forward(result.params, encoder_cfg, batch.positives);

        double loss = 0.0;
        EncoderParams grads = EncoderParams::zeros_like(result.params);
        if (loss_cfg.kind == LossKind::triplet) {
            auto [emb_n, cache_n] =
                encode_forward(result.params, encoder_cfg, batch.negatives);
            auto [l, g] = triplet_loss(emb_a, emb_p, emb_n, loss_cfg.epsilon);
            loss = l;
            grads = backward(result.params, encoder_cfg, cache_a, g.d_anchor);
            grads.axpy(1.0, backward(result.params, encoder_cfg, cache_p,
                                     g.d_positive));
            grads.axpy(1.0, backward(result.params, encoder_cfg, cache_n,
                                     g.d_negative));
        } else {
            Tensor negs = batch.negatives;
            if (negs.shape.size() == 2)
                negs = negs.reshaped({negs.dim(0), 1, negs.dim(1)});
            const std::int64_t nn = negs.dim(0);
            const std::int64_t m = negs.dim(1);
            const Tensor negs_flat = negs.reshaped({nn * m, negs.dim(2)});
            auto [emb_n, cache_n] =
                encode_forward(result.params, encoder_cfg, negs_flat);
            const Tensor emb_n3 =
                emb_n.reshaped({nn, m, encoder_cfg.embed_dim()});
            auto [l, g] = infonce_loss(emb_a, emb_p, emb_n3, loss_cfg.tau);
            loss = l;
            grads = backward(result.params, encoder_cfg, cache_a, g.d_anchor);
            grads.axpy(1.0, backward(result.params, encoder_cfg, cache_p,
                                     g.d_positive));
            const Tensor dneg_flat =
                g.d_negatives.reshaped({nn * m, encoder_cfg.embed_dim()});
            grads.axpy(1.0, backward(result.params, encoder_cfg, cache_n,
                                     dneg_flat));
        }

        adam_step(result.params, grads, state, optim);
        const auto t1 = std::chrono::steady_clock::now();
        const double wall_ms =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.log.push_back({step, loss, grads.l2_norm(), wall_ms});
    }
    return result;
}

GradCheckReport grad_check(const EncoderConfig& encoder_cfg,
                           const LossConfig& loss_cfg, std::int64_t trials,
                           double tolerance, std::uint64_t seed) {
    if (!(tolerance > 0.0)) throw config_error("tolerance must be > 0");
    encoder_cfg.validate();
    GradCheckReport report;
    const std::int64_t n = 3;
    const std::int64_t m = 2;
    const std::int64_t in = encoder_cfg.input_dim();
    for (std::int64_t trial = 0; trial < trials; ++trial) {
        EncoderConfig cfg = encoder_cfg;
        cfg.init_seed = derive_seed(seed, static_cast<std::uint64_t>(trial));
        EncoderParams params = init_params(cfg);
        Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(trial)));

        Tensor a({n, in}), p({n, in}), negs({n, m, in});
        // resample until no pre-activation sits near a relu kink
        for (int attempt = 0; attempt < 50; ++attempt) {
            for (auto& x : a.data) x = rng.gaussian();
            for (auto& x : p.data) x = rng.gaussian();
            for (auto& x : negs.data) x = rng.gaussian();
            if (cfg.activation != Activation::relu) break;
            bool near_kink = false;
            for (const Tensor& t :
                 {a, p, negs.reshaped({n * m, in})}) {
                auto [emb, cache] = encode_forward(params, cfg, t);
                for (const auto& pre : cache.pre_acts)
                    for (double z : pre.data)
                        if (std::abs(z) < 1e-3) near_kink = true;
            }
            if (!near_kink) break;
        }

        auto loss_of = [&](const EncoderParams& pp) {
            auto [emb_a, ca] = encode_forward(pp, cfg, a);
            auto [emb_p, cp] = encode_forward(pp, cfg, p);
            if (loss_cfg.kind == LossKind::triplet) {
                Tensor neg0 = negs.reshaped({n, m, in});
                Tensor first({n, in});
                for (std::int64_t r = 0; r < n; ++r)
                    for (std::int64_t c = 0; c < in; ++c)
                        first.at(r, c) = neg0.at(r, 0, c);
                auto [emb_n, cn] = encode_forward(pp, cfg, first);
                return triplet_loss(emb_a, emb_p, emb_n, loss_cfg.epsilon)
                    .first;
            }
            auto [emb_n, cn] =
                encode_forward(pp, cfg, negs.reshaped({n * m, in}));
            return infonce_loss(emb_a, emb_p,
                                emb_n.reshaped({n, m, cfg.embed_dim()}),
                                loss_cfg.tau)
                .first;
        };

        // analytic gradients through the full pipeline
        EncoderParams analytic = EncoderParams::zeros_like(params);
        {
            auto [emb_a, ca] = encode_forward(params, cfg, a);
            auto [emb_p, cp] = encode_forward(params, cfg, p);
            if (loss_cfg.kind == LossKind::triplet) {
                Tensor first({n, in});
                for (std::int64_t r = 0; r < n; ++r)
                    for (std::int64_t c = 0; c < in; ++c)
                        first.at(r, c) = negs.at(r, 0, c);
                auto [emb_n, cn] = encode_forward(params, cfg, first);
                auto [l, g] =
                    triplet_loss(emb_a, emb_p, emb_n, loss_cfg.epsilon);
                analytic = backward(params, cfg, ca, g.d_anchor);
                analytic.axpy(1.0, backward(params, cfg, cp, g.d_positive));
                analytic.axpy(1.0, backward(params, cfg, cn, g.d_negative));
            } else {
                auto [emb_n, cn] =
                    encode_forward(params, cfg, negs.reshaped({n * m, in}));
                auto [l, g] = infonce_loss(
                    emb_a, emb_p, emb_n.reshaped({n, m, cfg.embed_dim()}),
                    loss_cfg.tau);
                analytic = backward(params, cfg, ca, g.d_anchor);
                analytic.axpy(1.0, backward(params, cfg, cp, g.d_positive));
                analytic.axpy(
                    1.0, backward(params, cfg, cn,
                                  g.d_negatives.reshaped(
                                      {n * m, cfg.embed_dim()})));
            }
        }

        const double h = 1e-6;
        double max_rel = 0.0;
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            auto check_buf = [&](std::vector<double>& buf,
                                 const std::vector<double>& abuf) {
                for (std::size_t i = 0; i < buf.size(); ++i) {
                    const double orig = buf[i];
                    buf[i] = orig + h;
                    const double lp = loss_of(params);
                    buf[i] = orig - h;
                    const double lm = loss_of(params);
                    buf[i] = orig;
                    const double num = (lp - lm) / (2.0 * h);
                    const double ana = abuf[i];
                    // the floor keeps finite-difference roundoff (~1e-9
                    // absolute) from dominating zero-gradient entries
                    const double denom =
                        std::max(1e-3, std::abs(num) + std::abs(ana));
                    max_rel = std::max(max_rel,
                                       std::abs(num - ana) / denom);
                }
            };
            check_buf(params.layers[l].weight.data,
                      analytic.layers[l].weight.data);
            check_buf(params.layers[l].bias.data,
                      analytic.layers[l].bias.data);
        }
        const bool pass = max_rel < tolerance;
        report.trials.push_back({max_rel, pass});
        report.worst = std::max(report.worst, max_rel);
        report.all_passed = report.all_passed && pass;
    }
    return report;
}

void save_checkpoint(const std::string& path, const EncoderConfig& cfg,
                     const EncoderParams& params) {
    json j;
    j["format"] = "valign-checkpoint-v1";
    j["encoder"] = {{"layer_sizes", cfg.layer_sizes},
                    {"activation", to_string(cfg.activation)},
                    {"init_seed", cfg.init_seed}};
    json layers = json::array();
    for (const auto& l : params.layers) {
        layers.push_back({{"out", l.weight.dim(0)},
                          {"in", l.weight.dim(1)},
                          {"weight", l.weight.data},
                          {"bias", l.bias.data}});
    }
    j["layers"] = std::move(layers);
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed: " + path);
}

std::pair<EncoderConfig, EncoderParams> load_checkpoint(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("checkpoint parse: ") + e.what());
    }
    if (j.value("format", "") != "valign-checkpoint-v1")
        throw parse_error("not a valign checkpoint: " + path);
    EncoderConfig cfg;
    cfg.layer_sizes =
        j["encoder"]["layer_sizes"].get<std::vector<std::int64_t>>();
    cfg.activation =
        activation_from_string(j["encoder"]["activation"].get<std::string>());
    cfg.init_seed = j["encoder"]["init_seed"].get<std::uint64_t>();
    cfg.validate();
    EncoderParams params;
    for (const auto& l : j["layers"]) {
        const auto out = l["out"].get<std::int64_t>();
        const auto in_dim = l["in"].get<std::int64_t>();
        Layer layer{
            Tensor({out, in_dim}, l["weight"].get<std::vector<double>>()),
            Tensor({out}, l["bias"].get<std::vector<double>>())};
        params.layers.push_back(std::move(layer));
    }
    if (params.layers.size() != cfg.layer_sizes.size() - 1)
        throw parse_error("checkpoint layer count does not match config");
    return {cfg, std::move(params)};
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& log) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "step,loss,grad_norm,wall_ms\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.3f\n",
                      static_cast<long long>(r.step), r.loss, r.grad_norm,
                      r.wall_ms);
        out << buf;
    }
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace valign

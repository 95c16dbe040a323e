#include "valign/samplers.hpp"

#include <algorithm>
#include <cmath>

namespace valign {

namespace {

std::int64_t ceil_frac(double frac, std::int64_t length) {
    return static_cast<std::int64_t>(
        std::ceil(frac * static_cast<double>(length)));
}

// Number of indices k in [0, L) with |anchor - k| > dist, plus a draw helper.
std::int64_t negative_count(std::int64_t anchor, std::int64_t length,
                            std::int64_t dist) {
    const std::int64_t left = std::max<std::int64_t>(0, anchor - dist);
    const std::int64_t right =
        std::max<std::int64_t>(0, length - 1 - (anchor + dist));
    return left + right;
}

std::int64_t draw_negative(std::int64_t anchor, std::int64_t length,
                           std::int64_t dist, Rng& rng) {
    const std::int64_t left = std::max<std::int64_t>(0, anchor - dist);
    const std::int64_t right =
        std::max<std::int64_t>(0, length - 1 - (anchor + dist));
    std::int64_t pick = rng.uniform_int(0, left + right - 1);
    if (pick < left) return pick;  // [0, anchor - dist)
    return anchor + dist + 1 + (pick - left);
}

// A y-side positive at offset d from the anchor needs some index farther than
// d on either side.
bool negative_feasible(std::int64_t anchor, std::int64_t length,
                       std::int64_t dist) {
    return negative_count(anchor, length, dist) > 0;
}

}  // namespace

std::pair<std::int64_t, std::int64_t> find_closest_by_value(
    const TrajectoryDataset& dataset, const std::string& game, double target,
    std::optional<std::tuple<std::int64_t, std::int64_t, std::int64_t>>
        restrict) {
    if (restrict) {
        const auto [tid, lo, hi] = *restrict;
        const auto& traj = dataset.trajectories(game).at(
            static_cast<std::size_t>(tid));
        if (lo > hi) throw usage_error("empty restriction window");
        std::int64_t best = lo;
        double best_d = std::abs(traj.values[static_cast<std::size_t>(lo)] -
                                 target);
        for (std::int64_t f = lo + 1; f <= hi; ++f) {
            const double d =
                std::abs(traj.values[static_cast<std::size_t>(f)] - target);
            if (d < best_d) {
                best_d = d;
                best = f;
            }
        }
        return {tid, best};
    }
    const auto& idx = dataset.index(game);
    if (idx.empty()) throw lookup_error("no indexed frames for game " + game);
    auto it = std::lower_bound(
        idx.begin(), idx.end(), target,
        [](const ValueIndexEntry& e, double t) { return e.value < t; });
    const ValueIndexEntry* lo_cand =
        it == idx.begin() ? nullptr : &*(it - 1);
    const ValueIndexEntry* hi_cand = it == idx.end() ? nullptr : &*it;
    // Equal-value runs are already (trajectory, frame)-sorted, so the first
    // entry of a run is its tie-break winner; only the below/above pair can
    // still tie on distance.
    auto run_head = [&](const ValueIndexEntry* e) {
        auto first = std::lower_bound(
            idx.begin(), idx.end(), e->value,
            [](const ValueIndexEntry& a, double t) { return a.value < t; });
        return &*first;
    };
    if (!lo_cand) hi_cand = run_head(hi_cand);
    if (!hi_cand) lo_cand = run_head(lo_cand);
    const ValueIndexEntry* best;
    if (!lo_cand) {
        best = hi_cand;
    } else if (!hi_cand) {
        best = lo_cand;
    } else {
        lo_cand = run_head(lo_cand);
        hi_cand = run_head(hi_cand);
        const double dl = std::abs(lo_cand->value - target);
        const double dh = std::abs(hi_cand->value - target);
        if (dl < dh)
            best = lo_cand;
        else if (dh < dl)
            best = hi_cand;
        else
            best = *lo_cand < *hi_cand ? lo_cand : hi_cand;
    }
    return {best->trajectory, best->frame};
}

namespace {

// x-side of the VEP draw; also reused for the y-side negative.
TripletIndex sample_vep_x(const TrajectoryDataset& dataset,
                          const std::string& game, const VepConfig& cfg,
                          Rng& rng) {
    const auto& trajs = dataset.trajectories(game);
    std::vector<std::int64_t> eligible;
    for (std::size_t t = 0; t < trajs.size(); ++t)
        if (trajs[t].length() >= 3)
            eligible.push_back(static_cast<std::int64_t>(t));
    if (eligible.empty())
        throw sampling_error("no trajectory of length >= 3 in " + game, game);
    for (std::int64_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
        const std::int64_t tid = eligible[static_cast<std::size_t>(
            rng.uniform_index(eligible.size()))];
        const auto& traj = trajs[static_cast<std::size_t>(tid)];
        const std::int64_t len = traj.length();
        const std::int64_t d_thresh = ceil_frac(cfg.d_thresh_frac, len);
        if (d_thresh < 2) continue;  // no j with 0 < j - i < d_thresh
        const std::int64_t i = rng.uniform_int(0, len - 2);
        const std::int64_t j_hi = std::min(len - 1, i + d_thresh - 1);
        const std::int64_t j = rng.uniform_int(i + 1, j_hi);
        const double gap = std::abs(traj.values[static_cast<std::size_t>(i)] -
                                    traj.values[static_cast<std::size_t>(j)]);
        if (!(gap < cfg.v_thresh)) continue;
        if (!negative_feasible(i, len, j - i)) continue;
        const std::int64_t k = draw_negative(i, len, j - i, rng);
        return {game, tid, i, j, k};
    }
    throw sampling_error(
        "vep sampling exhausted retries for game " + game +
            " (v_thresh likely too tight for its reward density)",
        game);
}

}  // namespace

std::pair<TripletIndex, TripletIndex> sample_vep_pair(
    const TrajectoryDataset& dataset, const std::string& game_x,
    const std::string& game_y, const VepConfig& cfg, Rng& rng) {
    const TripletIndex tx = sample_vep_x(dataset, game_x, cfg, rng);
    const auto& traj_x =
        dataset.trajectories(game_x)[static_cast<std::size_t>(tx.trajectory)];
    const double v_ax = traj_x.values[static_cast<std::size_t>(tx.anchor)];
    const double v_px = traj_x.values[static_cast<std::size_t>(tx.positive)];
    const double value_gap = std::abs(v_px - v_ax);

    // y anchor: value-index entry closest to v_ax that still admits a
    // positive and a negative; walk outward from the insertion point so the
    // common case stays the global argmin.
    const auto& idx = dataset.index(game_y);
    const auto& trajs_y = dataset.trajectories(game_y);
    auto it = std::lower_bound(
        idx.begin(), idx.end(), v_ax,
        [](const ValueIndexEntry& e, double t) { return e.value < t; });
    std::int64_t lo = static_cast<std::int64_t>(it - idx.begin()) - 1;
    std::int64_t hi = static_cast<std::int64_t>(it - idx.begin());
    const std::int64_t n = static_cast<std::int64_t>(idx.size());

    auto feasible_anchor = [&](const ValueIndexEntry& e) {
        const auto& traj = trajs_y[static_cast<std::size_t>(e.trajectory)];
        const std::int64_t len = traj.length();
        const std::int64_t d_thresh = ceil_frac(cfg.d_thresh_frac, len);
        if (e.frame >= len - 1 || d_thresh < 2) return false;
        // smallest positive offset is 1; it needs a farther negative
        return negative_feasible(e.frame, len, 1);
    };

    const ValueIndexEntry* anchor_y = nullptr;
    while (lo >= 0 || hi < n) {
        const double dl =
            lo >= 0 ? std::abs(idx[static_cast<std::size_t>(lo)].value - v_ax)
                    : std::numeric_limits<double>::infinity();
        const double dh =
            hi < n ? std::abs(idx[static_cast<std::size_t>(hi)].value - v_ax)
                   : std::numeric_limits<double>::infinity();
        const ValueIndexEntry* cand;
        if (dl < dh ||
            (dl == dh && lo >= 0 && hi < n &&
             idx[static_cast<std::size_t>(lo)] <
                 idx[static_cast<std::size_t>(hi)])) {
            cand = &idx[static_cast<std::size_t>(lo)];
            --lo;
        } else {
            cand = &idx[static_cast<std::size_t>(hi)];
            ++hi;
        }
        if (feasible_anchor(*cand)) {
            anchor_y = cand;
            break;
        }
    }
    if (!anchor_y)
        throw sampling_error("no feasible anchor in game " + game_y, game_y);

    const auto& traj_y =
        trajs_y[static_cast<std::size_t>(anchor_y->trajectory)];
    const std::int64_t len_y = traj_y.length();
    const std::int64_t d_thresh_y = ceil_frac(cfg.d_thresh_frac, len_y);
    const double target = anchor_y->value + value_gap;

    // positive: closest value to target within the threshold window after the
    // anchor, restricted to offsets that leave room for a negative
    std::int64_t best_j = -1;
    double best_d = 0.0;
    const std::int64_t j_hi =
        std::min(len_y - 1, anchor_y->frame + d_thresh_y - 1);
    for (std::int64_t j = anchor_y->frame + 1; j <= j_hi; ++j) {
        if (!negative_feasible(anchor_y->frame, len_y, j - anchor_y->frame))
            continue;
        const double d =
            std::abs(traj_y.values[static_cast<std::size_t>(j)] - target);
        if (best_j < 0 || d < best_d) {
            best_j = j;
            best_d = d;
        }
    }
    if (best_j < 0)
        throw sampling_error("no feasible positive in game " + game_y, game_y);
    const std::int64_t k_y =
        draw_negative(anchor_y->frame, len_y, best_j - anchor_y->frame, rng);

    TripletIndex ty{game_y, anchor_y->trajectory, anchor_y->frame, best_j,
                    k_y};
    return {tx, ty};
}

TripletIndex sample_tcn(const SubTrajectory& trajectory, const TcnConfig& cfg,
                        Rng& rng) {
    const std::int64_t len = trajectory.length();
    if (len < 3)
        throw sampling_error("tcn needs length >= 3", trajectory.game_id);
    if (cfg.margin_steps < 1) throw config_error("margin_steps must be >= 1");
    // valid anchors: some positive at distance d and some index farther than d
    std::vector<std::int64_t> anchors;
    for (std::int64_t a = 0; a < len; ++a)
        if (std::max(a, len - 1 - a) >= 2) anchors.push_back(a);
    const std::int64_t a =
        anchors[static_cast<std::size_t>(rng.uniform_index(anchors.size()))];
    std::vector<std::int64_t> positives;
    for (std::int64_t d = 1; d <= cfg.margin_steps; ++d) {
        if (a - d >= 0) positives.push_back(a - d);
        if (a + d < len) positives.push_back(a + d);
    }
    const std::int64_t p = positives[static_cast<std::size_t>(
        rng.uniform_index(positives.size()))];
    const std::int64_t dist = std::abs(p - a);
    if (!negative_feasible(a, len, dist))
        throw sampling_error("trajectory too short for the drawn positive",
                             trajectory.game_id);
    const std::int64_t k = draw_negative(a, len, dist, rng);
    return {trajectory.game_id, 0, a, p, k};
}

std::int64_t sample_som_offset(const SomConfig& cfg, Rng& rng) {
    const std::int64_t h = cfg.horizon;
    if (h < 1) throw config_error("som horizon must be >= 1");
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0))
        throw config_error("som gamma must lie in (0, 1)");
    if (h == 1) return 1;
    // inverse CDF of the truncated geometric
    const double u = rng.uniform();
    const double tail = 1.0 - u * (1.0 - std::pow(cfg.gamma, h));
    const double raw = std::log(tail) / std::log(cfg.gamma);
    std::int64_t dt =
        static_cast<std::int64_t>(std::ceil(raw - 1e-12));
    if (dt < 1) dt = 1;
    if (dt > h) dt = h;
    return dt;
}

std::pair<std::int64_t, std::int64_t> sample_som_pair(
    const SubTrajectory& trajectory, const SomConfig& cfg, Rng& rng) {
    const std::int64_t len = trajectory.length();
    if (len < 2)
        throw sampling_error("som needs length >= 2", trajectory.game_id);
    const std::int64_t a = rng.uniform_int(0, len - 2);
    SomConfig local = cfg;
    local.horizon = len - 1 - a;
    if (cfg.horizon > 0) local.horizon = std::min(local.horizon, cfg.horizon);
    const std::int64_t dt = sample_som_offset(local, rng);
    return {a, a + dt};
}

VipSample sample_vip(const SubTrajectory& trajectory, const VipConfig& cfg,
                     Rng& rng, std::int64_t n_negatives) {
    const std::int64_t len = trajectory.length();
    if (cfg.min_len < 2 || cfg.min_len > cfg.max_len)
        throw config_error("vip length bounds invalid");
    if (n_negatives < 1) throw config_error("n_negatives must be >= 1");
    if (len < cfg.min_len)
        throw sampling_error("trajectory shorter than vip min_len",
                             trajectory.game_id);
    const std::int64_t max_eff = std::min(cfg.max_len, len);
    // uniform over all feasible (start, length) windows
    std::int64_t total = 0;
    for (std::int64_t wl = cfg.min_len; wl <= max_eff; ++wl)
        total += len - wl + 1;
    std::int64_t pick = rng.uniform_int(0, total - 1);
    std::int64_t wl = cfg.min_len;
    while (pick >= len - wl + 1) {
        pick -= len - wl + 1;
        ++wl;
    }
    const std::int64_t s = pick;
    const std::int64_t e = s + wl - 1;
    VipSample out;
    out.anchor = s;
    out.positive = e;
    std::vector<std::int64_t> interior;
    for (std::int64_t t = s + 1; t < e; ++t) interior.push_back(t);
    const auto m = static_cast<std::int64_t>(interior.size());
    if (m <= n_negatives) {
        out.negatives = std::move(interior);
        return out;
    }
    // partial Fisher-Yates for sampling without replacement
    for (std::int64_t t = 0; t < n_negatives; ++t) {
        const std::int64_t j = rng.uniform_int(t, m - 1);
        std::swap(interior[static_cast<std::size_t>(t)],
                  interior[static_cast<std::size_t>(j)]);
        out.negatives.push_back(interior[static_cast<std::size_t>(t)]);
    }
    return out;
}

namespace {

void gather_row(const TrajectoryDataset& dataset, const TripletIndex& t,
                std::int64_t frame, Tensor& dst, std::int64_t b,
                std::int64_t side) {
    const auto& obs = dataset.trajectories(t.game_id)[static_cast<std::size_t>(
                                                          t.trajectory)]
                          .frames[static_cast<std::size_t>(frame)]
                          .observation;
    for (std::size_t d = 0; d < obs.size(); ++d)
        dst.at(b, side, static_cast<std::int64_t>(d)) = obs[d];
}

}  // namespace

PairedTripletBatch assemble_batch(
    const TrajectoryDataset& dataset,
    const std::vector<std::pair<std::string, std::string>>& game_pairs,
    const VepConfig& cfg, std::uint64_t base_seed) {
    const auto b = static_cast<std::int64_t>(game_pairs.size());
    if (b < 1) throw usage_error("assemble_batch: empty pair list");
    PairedTripletBatch batch;
    batch.anchors = Tensor({b, 2, dataset.obs_dim});
    batch.positives = Tensor({b, 2, dataset.obs_dim});
    batch.negatives = Tensor({b, 2, dataset.obs_dim});
    for (std::int64_t i = 0; i < b; ++i) {
        Rng rng(derive_seed(base_seed, static_cast<std::uint64_t>(i)));
        const auto& [gx, gy] = game_pairs[static_cast<std::size_t>(i)];
        const auto [tx, ty] = sample_vep_pair(dataset, gx, gy, cfg, rng);
        gather_row(dataset, tx, tx.anchor, batch.anchors, i, 0);
        gather_row(dataset, tx, tx.positive, batch.positives, i, 0);
        gather_row(dataset, tx, tx.negative, batch.negatives, i, 0);
        gather_row(dataset, ty, ty.anchor, batch.anchors, i, 1);
        gather_row(dataset, ty, ty.positive, batch.positives, i, 1);
        gather_row(dataset, ty, ty.negative, batch.negatives, i, 1);
    }
    return batch;
}

}  // namespace valign

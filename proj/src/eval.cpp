#include "valign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "valign/kernels.hpp"
#include "valign/rng.hpp"

namespace valign {

using nlohmann::json;

const EmbeddedGame& EmbeddedDataset::game(const std::string& id) const {
    auto it = games.find(id);
    if (it == games.end()) throw lookup_error("game not embedded: " + id);
    return it->second;
}

EmbeddedDataset embed_dataset(const TrajectoryDataset& dataset,
                              const EncoderParams& params,
                              const EncoderConfig& cfg) {
    cfg.validate();
    if (dataset.obs_dim != cfg.input_dim())
        throw dimension_error("dataset obs_dim does not match encoder input");
    EmbeddedDataset ed;
    ed.embed_dim = cfg.embed_dim();
    ed.encoder = cfg;
    for (const auto& [id, trajs] : dataset.games) {
        EmbeddedGame g;
        std::int64_t rows = 0;
        for (const auto& t : trajs) rows += t.length();
        Tensor obs({rows, dataset.obs_dim});
        std::int64_t r = 0;
        for (std::size_t t = 0; t < trajs.size(); ++t) {
            for (std::int64_t f = 0; f < trajs[t].length(); ++f) {
                const auto& o =
                    trajs[t].frames[static_cast<std::size_t>(f)].observation;
                for (std::size_t c = 0; c < o.size(); ++c)
                    obs.at(r, static_cast<std::int64_t>(c)) = o[c];
                g.values.push_back(
                    trajs[t].values[static_cast<std::size_t>(f)]);
                g.provenance.push_back({static_cast<std::int64_t>(t), f});
                ++r;
            }
        }
        g.embeddings = encode_forward(params, cfg, obs).first;
        ed.games.emplace(id, std::move(g));
    }
    return ed;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw usage_error("spearman needs two equal-length vectors, n >= 2");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw numeric_error("spearman undefined for a constant input");
    return sxy / std::sqrt(sxx * syy);
}

double cross_game_alignment(const EmbeddedDataset& ed,
                            const std::string& game_x,
                            const std::string& game_y, std::int64_t n_pairs,
                            std::uint64_t seed) {
    if (n_pairs < 100) throw usage_error("cross_game_alignment: n_pairs < 100");
    const auto& gx = ed.game(game_x);
    const auto& gy = ed.game(game_y);
    const std::int64_t nx = gx.embeddings.dim(0);
    const std::int64_t ny = gy.embeddings.dim(0);
    const std::int64_t d = ed.embed_dim;
    Rng rng(seed);
    std::vector<double> dist, vgap;
    dist.reserve(static_cast<std::size_t>(n_pairs));
    vgap.reserve(static_cast<std::size_t>(n_pairs));
    for (std::int64_t p = 0; p < n_pairs; ++p) {
        const auto a = static_cast<std::int64_t>(
            rng.uniform_index(static_cast<std::uint64_t>(nx)));
        const auto b = static_cast<std::int64_t>(
            rng.uniform_index(static_cast<std::uint64_t>(ny)));
        double s = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
            const double diff = gx.embeddings.at(a, c) - gy.embeddings.at(b, c);
            s += diff * diff;
        }
        dist.push_back(std::sqrt(s));
        vgap.push_back(std::abs(gx.values[static_cast<std::size_t>(a)] -
                                gy.values[static_cast<std::size_t>(b)]));
    }
    return spearman(dist, vgap);
}

double retrieval_at_k(const EmbeddedDataset& ed, const std::string& game_x,
                      const std::string& game_y, std::int64_t k, double v_tol,
                      std::int64_t n_queries, std::uint64_t seed) {
    if (k < 1) throw usage_error("retrieval_at_k: k must be >= 1");
    const auto& gx = ed.game(game_x);
    const auto& gy = ed.game(game_y);
    const std::int64_t nx = gx.embeddings.dim(0);
    const std::int64_t ny = gy.embeddings.dim(0);
    if (ny < k) throw usage_error("retrieval_at_k: game_y has fewer than k frames");
    const std::int64_t d = ed.embed_dim;
    Rng rng(seed);
    Tensor queries({n_queries, d});
    std::vector<std::int64_t> qrows(static_cast<std::size_t>(n_queries));
    for (std::int64_t q = 0; q < n_queries; ++q) {
        const auto r = static_cast<std::int64_t>(
            rng.uniform_index(static_cast<std::uint64_t>(nx)));
        qrows[static_cast<std::size_t>(q)] = r;
        for (std::int64_t c = 0; c < d; ++c)
            queries.at(q, c) = gx.embeddings.at(r, c);
    }
    Tensor sqdist({n_queries, ny});
    kernels::pairwise_sqdist(queries.data, gy.embeddings.data, sqdist.data,
                             n_queries, ny, d);
    std::int64_t hits = 0;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(ny));
    for (std::int64_t q = 0; q < n_queries; ++q) {
        std::iota(idx.begin(), idx.end(), 0);
        // squared-distance ties broken by provenance (row) order
        std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                          [&](std::int64_t a, std::int64_t b) {
                              const double da = sqdist.at(q, a);
                              const double db = sqdist.at(q, b);
                              if (da != db) return da < db;
                              return a < b;
                          });
        const double vq =
            gx.values[static_cast<std::size_t>(qrows[static_cast<std::size_t>(q)])];
        for (std::int64_t j = 0; j < k; ++j) {
            const double vn = gy.values[static_cast<std::size_t>(
                idx[static_cast<std::size_t>(j)])];
            if (std::abs(vq - vn) <= v_tol) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n_queries);
}

namespace {

// Solve (X^T X + lambda I') w = X^T y with an unpenalized trailing bias
// column, by Gaussian elimination with partial pivoting.
std::vector<double> ridge_fit(const std::vector<std::vector<double>>& x,
                              const std::vector<double>& y, double lambda) {
    const std::size_t n = x.size();
    const std::size_t d = x.front().size();  // includes bias column
    std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += x[r][i] * x[r][j];
            a[i][j] = s;
        }
        if (i + 1 < d) a[i][i] += lambda;  // bias unpenalized
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += x[r][i] * y[r];
        a[i][d] = s;
    }
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-12) {
            if (lambda == 0.0)
                throw numeric_error(
                    "singular normal matrix; use lambda > 0");
            throw numeric_error("ridge system is singular");
        }
        std::swap(a[col], a[piv]);
        for (std::size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c <= d; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::vector<double> w(d);
    for (std::size_t i = 0; i < d; ++i) w[i] = a[i][d] / a[i][i];
    return w;
}

double r2_score(const std::vector<std::vector<double>>& x,
                const std::vector<double>& y, const std::vector<double>& w) {
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double sse = 0.0, sst = 0.0;
    for (std::size_t r = 0; r < x.size(); ++r) {
        double pred = 0.0;
        for (std::size_t c = 0; c < w.size(); ++c) pred += x[r][c] * w[c];
        sse += (y[r] - pred) * (y[r] - pred);
        sst += (y[r] - mean) * (y[r] - mean);
    }
    if (sst == 0.0)
        throw numeric_error("r2 undefined for a constant target");
    return 1.0 - sse / sst;
}

std::vector<std::vector<double>> design_rows(const EmbeddedGame& g,
                                             const std::vector<std::size_t>& rows) {
    const std::int64_t d = g.embeddings.dim(1);
    std::vector<std::vector<double>> x;
    x.reserve(rows.size());
    for (auto r : rows) {
        std::vector<double> row(static_cast<std::size_t>(d) + 1);
        for (std::int64_t c = 0; c < d; ++c)
            row[static_cast<std::size_t>(c)] =
                g.embeddings.at(static_cast<std::int64_t>(r), c);
        row[static_cast<std::size_t>(d)] = 1.0;
        x.push_back(std::move(row));
    }
    return x;
}

}  // namespace

std::pair<double, double> value_probe(const EmbeddedDataset& ed,
                                      const std::string& train_game,
                                      const std::string& test_game,
                                      double lambda,
                                      std::uint64_t split_seed) {
    if (lambda < 0.0) throw usage_error("ridge lambda must be >= 0");
    const auto& gt = ed.game(train_game);
    const auto& ge = ed.game(test_game);
    // 80/20 split by trajectory id so frames of one trajectory never straddle
    // the split
    std::vector<std::int64_t> traj_ids;
    for (const auto& p : gt.provenance)
        if (traj_ids.empty() || traj_ids.back() != p.trajectory)
            traj_ids.push_back(p.trajectory);
    std::sort(traj_ids.begin(), traj_ids.end());
    traj_ids.erase(std::unique(traj_ids.begin(), traj_ids.end()),
                   traj_ids.end());
    Rng rng(split_seed);
    for (std::size_t i = traj_ids.size(); i-- > 1;) {
        const auto j = rng.uniform_index(i + 1);
        std::swap(traj_ids[i], traj_ids[static_cast<std::size_t>(j)]);
    }
    const std::size_t n_held =
        std::max<std::size_t>(1, traj_ids.size() / 5);
    std::vector<std::int64_t> held_ids(traj_ids.begin(),
                                       traj_ids.begin() +
                                           static_cast<std::ptrdiff_t>(n_held));
    auto is_held = [&](std::int64_t t) {
        return std::find(held_ids.begin(), held_ids.end(), t) !=
               held_ids.end();
    };
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t r = 0; r < gt.provenance.size(); ++r) {
        if (is_held(gt.provenance[r].trajectory))
            test_rows.push_back(r);
        else
            train_rows.push_back(r);
    }
    if (train_rows.empty() || test_rows.empty())
        throw usage_error("value_probe: train game needs >= 2 trajectories");
    const auto xtr = design_rows(gt, train_rows);
    std::vector<double> ytr;
    for (auto r : train_rows) ytr.push_back(gt.values[r]);
    const auto w = ridge_fit(xtr, ytr, lambda);

    const auto xte = design_rows(gt, test_rows);
    std::vector<double> yte;
    for (auto r : test_rows) yte.push_back(gt.values[r]);
    const double r2_within = r2_score(xte, yte, w);

    std::vector<std::size_t> all_rows(ge.provenance.size());
    std::iota(all_rows.begin(), all_rows.end(), 0);
    const auto xtf = design_rows(ge, all_rows);
    const double r2_transfer = r2_score(xtf, ge.values, w);
    return {r2_within, r2_transfer};
}

namespace {

json encoder_json(const EncoderConfig& cfg) {
    return {{"layer_sizes", cfg.layer_sizes},
            {"activation", to_string(cfg.activation)},
            {"init_seed", cfg.init_seed}};
}

}  // namespace

void write_report(const AlignmentReport& report, const std::string& path,
                  ReportFormat format) {
    if (format == ReportFormat::json) {
        json retrieval = json::object();
        for (const auto& [k, rate] : report.retrieval_at_k)
            retrieval[std::to_string(k)] = rate;
        json j = {{"encoder", encoder_json(report.encoder)},
                  {"metrics",
                   {{"spearman_rho", report.spearman_rho},
                    {"retrieval_at_k", retrieval},
                    {"probe_r2_within", report.probe_r2_within},
                    {"probe_r2_transfer", report.probe_r2_transfer}}},
                  {"sampling",
                   {{"n_pairs", report.n_pairs},
                    {"n_queries", report.n_queries},
                    {"seed", report.seed}}}};
        std::ofstream out(path);
        if (!out) throw io_error("cannot open " + path + " for writing");
        out << j.dump(2) << "\n";
        if (!out) throw io_error("write failed: " + path);
        return;
    }
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "spearman_rho";
    for (const auto& [k, rate] : report.retrieval_at_k)
        out << ",retrieval_at_" << k;
    out << ",probe_r2_within,probe_r2_transfer,n_pairs,n_queries,seed\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << num(report.spearman_rho);
    for (const auto& [k, rate] : report.retrieval_at_k) out << "," << num(rate);
    out << "," << num(report.probe_r2_within) << ","
        << num(report.probe_r2_transfer) << "," << report.n_pairs << ","
        << report.n_queries << "," << report.seed << "\n";
    if (!out) throw io_error("write failed: " + path);
}

AlignmentReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("report parse: ") + e.what());
    }
    if (!j.contains("metrics") || !j.contains("encoder") ||
        !j.contains("sampling"))
        throw parse_error("report missing required sections: " + path);
    AlignmentReport r;
    r.encoder.layer_sizes =
        j["encoder"]["layer_sizes"].get<std::vector<std::int64_t>>();
    r.encoder.activation =
        activation_from_string(j["encoder"]["activation"].get<std::string>());
    r.encoder.init_seed = j["encoder"]["init_seed"].get<std::uint64_t>();
    const auto& m = j["metrics"];
    r.spearman_rho = m["spearman_rho"].get<double>();
    for (const auto& [key, rate] : m["retrieval_at_k"].items())
        r.retrieval_at_k[std::stoll(key)] = rate.get<double>();
    r.probe_r2_within = m["probe_r2_within"].get<double>();
    r.probe_r2_transfer = m["probe_r2_transfer"].get<double>();
    const auto& s = j["sampling"];
    r.n_pairs = s["n_pairs"].get<std::int64_t>();
    r.n_queries = s["n_queries"].get<std::int64_t>();
    r.seed = s["seed"].get<std::uint64_t>();
    return r;
}

}  // namespace valign

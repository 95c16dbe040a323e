#include "valign/synthworld.hpp"

#include <cmath>

#include "valign/rng.hpp"

namespace valign {

void GameSpec::validate() const {
    if (state_dim < 1) throw config_error("state_dim must be >= 1");
    if (obs_dim < 2 * state_dim)
        throw config_error("obs_dim must be >= 2 * state_dim");
    if (!(step_size > 0.0)) throw config_error("step_size must be > 0");
    if (episode_len_max < 2)
        throw config_error("episode_len_max must be >= 2");
    if (!(start_distance_range.first > 0.0) ||
        start_distance_range.second < start_distance_range.first)
        throw config_error("invalid start_distance_range");
    if (action_noise < 0.0) throw config_error("action_noise must be >= 0");
}

namespace {

// Affine latent->observation map with bounded conditioning, built as
// U diag(s) V^T with orthonormal factors and singular values in [0.5, 2].
struct AffineMap {
    std::vector<double> a;  // [obs_dim, latent_dim] row-major
    std::vector<double> b;  // [obs_dim]
    std::int64_t rows = 0;
    std::int64_t cols = 0;

    void apply(const std::vector<double>& z, std::vector<double>& out) const {
        for (std::int64_t r = 0; r < rows; ++r) {
            double s = b[static_cast<std::size_t>(r)];
            for (std::int64_t c = 0; c < cols; ++c)
                s += a[static_cast<std::size_t>(r * cols + c)] *
                     z[static_cast<std::size_t>(c)];
            out[static_cast<std::size_t>(r)] = s;
        }
    }
};

// Gram-Schmidt on Gaussian columns; rows x k with k <= rows.
std::vector<double> orthonormal_columns(std::int64_t rows, std::int64_t k,
                                        Rng& rng) {
    std::vector<double> q(static_cast<std::size_t>(rows * k));
    for (std::int64_t c = 0; c < k; ++c) {
        std::vector<double> v(static_cast<std::size_t>(rows));
        double norm = 0.0;
        while (norm < 1e-6) {
            for (auto& x : v) x = rng.gaussian();
            for (std::int64_t p = 0; p < c; ++p) {
                double dot = 0.0;
                for (std::int64_t r = 0; r < rows; ++r)
                    dot += v[static_cast<std::size_t>(r)] *
                           q[static_cast<std::size_t>(r * k + p)];
                for (std::int64_t r = 0; r < rows; ++r)
                    v[static_cast<std::size_t>(r)] -=
                        dot * q[static_cast<std::size_t>(r * k + p)];
            }
            norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
        }
        for (std::int64_t r = 0; r < rows; ++r)
            q[static_cast<std::size_t>(r * k + c)] =
                v[static_cast<std::size_t>(r)] / norm;
    }
    return q;
}

AffineMap make_affine(const GameSpec& spec) {
    const std::int64_t latent = 2 * spec.state_dim;
    Rng rng(mix64(spec.appearance_seed));
    const auto u = orthonormal_columns(spec.obs_dim, latent, rng);
    const auto v = orthonormal_columns(latent, latent, rng);
    std::vector<double> sv(static_cast<std::size_t>(latent));
    for (auto& s : sv) s = rng.uniform(0.5, 2.0);
    AffineMap map;
    map.rows = spec.obs_dim;
    map.cols = latent;
    map.a.assign(static_cast<std::size_t>(spec.obs_dim * latent), 0.0);
    for (std::int64_t r = 0; r < spec.obs_dim; ++r)
        for (std::int64_t c = 0; c < latent; ++c) {
            double s = 0.0;
            for (std::int64_t k = 0; k < latent; ++k)
                s += u[static_cast<std::size_t>(r * latent + k)] *
                     sv[static_cast<std::size_t>(k)] *
                     v[static_cast<std::size_t>(c * latent + k)];
            map.a[static_cast<std::size_t>(r * latent + c)] = s;
        }
    map.b.assign(static_cast<std::size_t>(spec.obs_dim), 0.0);
    for (auto& x : map.b) x = rng.uniform(-1.0, 1.0);
    return map;
}

double distance(const std::vector<double>& p, const std::vector<double>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - g[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

std::vector<std::pair<Episode, std::vector<double>>> generate_with_latents(
    const GameSpec& spec, std::int64_t n_episodes, std::uint64_t seed) {
    spec.validate();
    if (n_episodes < 1) throw config_error("n_episodes must be >= 1");
    const AffineMap affine = make_affine(spec);
    const std::int64_t sd = spec.state_dim;
    std::vector<std::pair<Episode, std::vector<double>>> out;
    out.reserve(static_cast<std::size_t>(n_episodes));
    for (std::int64_t e = 0; e < n_episodes; ++e) {
        // dynamics and appearance draw from disjoint streams so appearance
        // ablations leave the latent trajectory untouched
        Rng dyn(derive_seed(seed, static_cast<std::uint64_t>(e)));
        Rng app(derive_seed(mix64(spec.appearance_seed) ^ 0x5eedu,
                            static_cast<std::uint64_t>(e)));
        std::vector<double> goal(static_cast<std::size_t>(sd));
        // unit-scale latent world keeps observations O(1) for the encoder;
        // goals cluster near the arena center so the start distance, not the
        // goal placement, dominates episode-to-episode variation
        for (auto& x : goal) x = dyn.uniform(-0.1, 0.1);
        // start distance snapped to a whole number of steps
        const double raw = dyn.uniform(spec.start_distance_range.first,
                                       spec.start_distance_range.second);
        const auto k = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(raw / spec.step_size)));
        std::vector<double> dir(static_cast<std::size_t>(sd));
        double norm = 0.0;
        while (norm < 1e-9) {
            for (auto& x : dir) x = dyn.gaussian();
            norm = 0.0;
            for (double x : dir) norm += x * x;
            norm = std::sqrt(norm);
        }
        // approach from a consistent half-space; otherwise mirrored starts
        // make goal distance unidentifiable from the linear observation map
        if (dir[0] < 0.0)
            for (auto& x : dir) x = -x;
        std::vector<double> pos(static_cast<std::size_t>(sd));
        for (std::int64_t i = 0; i < sd; ++i)
            pos[static_cast<std::size_t>(i)] =
                goal[static_cast<std::size_t>(i)] +
                static_cast<double>(k) * spec.step_size *
                    dir[static_cast<std::size_t>(i)] / norm;

        Episode ep;
        ep.game_id = spec.game_id;
        std::vector<double> latents;
        std::vector<double> z(static_cast<std::size_t>(2 * sd));
        for (std::int64_t t = 0; t < spec.episode_len_max; ++t) {
            const double d = distance(pos, goal);
            Frame f;
            f.timestep = t;
            f.reward = d <= spec.step_size / 2.0 ? 1.0 : 0.0;
            for (std::int64_t i = 0; i < sd; ++i) {
                z[static_cast<std::size_t>(i)] =
                    pos[static_cast<std::size_t>(i)];
                z[static_cast<std::size_t>(sd + i)] =
                    goal[static_cast<std::size_t>(i)];
            }
            f.observation.assign(static_cast<std::size_t>(spec.obs_dim), 0.0);
            affine.apply(z, f.observation);
            for (auto& x : f.observation)
                x += spec.distractor_std * app.gaussian();
            ep.frames.push_back(std::move(f));
            latents.push_back(d);
            if (ep.frames.back().reward > 0.0) break;
            // move toward the goal
            for (std::int64_t i = 0; i < sd; ++i)
                pos[static_cast<std::size_t>(i)] +=
                    spec.step_size *
                        (goal[static_cast<std::size_t>(i)] -
                         pos[static_cast<std::size_t>(i)]) /
                        d +
                    spec.action_noise * dyn.gaussian();
        }
        out.emplace_back(std::move(ep), std::move(latents));
    }
    return out;
}

std::vector<Episode> generate_dataset(const GameSpec& spec,
                                      std::int64_t n_episodes,
                                      std::uint64_t seed) {
    auto pairs = generate_with_latents(spec, n_episodes, seed);
    std::vector<Episode> out;
    out.reserve(pairs.size());
    for (auto& [ep, latents] : pairs) out.push_back(std::move(ep));
    return out;
}

double ground_truth_value(const GameSpec& spec, double distance, double gamma) {
    if (distance < 0.0) throw config_error("distance must be >= 0");
    std::int64_t remaining = 0;
    if (distance > spec.step_size / 2.0)
        remaining = static_cast<std::int64_t>(
            std::ceil(distance / spec.step_size - 1e-9));
    // repeated multiplication, matching the backward value recursion bit for
    // bit on sparse-reward episodes
    double v = 1.0;
    for (std::int64_t i = 0; i < remaining; ++i) v *= gamma;
    return v;
}

}  // namespace valign

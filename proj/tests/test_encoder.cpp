#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "valign/encoder.hpp"
#include "valign/rng.hpp"
#include "valign/trajectory.hpp"

using namespace valign;

namespace {

Episode sparse_episode(const std::string& game, std::int64_t len,
                       double marker) {
    Episode ep;
    ep.game_id = game;
    for (std::int64_t t = 0; t < len; ++t) {
        Frame f;
        f.observation = {static_cast<double>(t), marker};
        f.reward = t == len - 1 ? 1.0 : 0.0;
        f.timestep = t;
        ep.frames.push_back(std::move(f));
    }
    return ep;
}

TrajectoryDataset small_dataset() {
    ValueConfig vcfg;
    std::vector<Episode> eps;
    for (int e = 0; e < 6; ++e) {
        eps.push_back(sparse_episode("gx", 24 + e, 1.0));
        eps.push_back(sparse_episode("gy", 24 + e, 2.0));
    }
    return build_dataset(eps, vcfg);
}

EncoderParams identity_params(std::int64_t d) {
    EncoderParams p;
    Layer l{Tensor({d, d}), Tensor({d})};
    for (std::int64_t i = 0; i < d; ++i) l.weight.at(i, i) = 1.0;
    p.layers.push_back(std::move(l));
    return p;
}

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& x : t.data) x = rng.gaussian();
    return t;
}

bool params_equal(const EncoderParams& a, const EncoderParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (a.layers[l].weight.data != b.layers[l].weight.data ||
            a.layers[l].bias.data != b.layers[l].bias.data)
            return false;
    return true;
}

}  // namespace

TEST_CASE("single linear layer forward is W x + b") {
    EncoderConfig cfg;
    cfg.layer_sizes = {2, 2};
    auto params = identity_params(2);
    params.layers[0].bias.data = {1.0, -1.0};
    Tensor batch({2, 2}, {3.0, 4.0, -1.0, 2.0});
    const auto [emb, cache] = encode_forward(params, cfg, batch);
    CHECK(emb.data == std::vector<double>{4.0, 3.0, 0.0, 1.0});
    CHECK(cache.pre_acts.size() == 1);
}

TEST_CASE("relu is applied between layers but not on the output") {
    EncoderConfig cfg;
    cfg.layer_sizes = {1, 1, 1};
    EncoderParams p;
    p.layers.push_back({Tensor({1, 1}, {1.0}), Tensor({1})});
    p.layers.push_back({Tensor({1, 1}, {1.0}), Tensor({1})});
    Tensor batch({2, 1}, {-3.0, 2.0});
    const auto [emb, cache] = encode_forward(p, cfg, batch);
    // -3 is clipped by the hidden relu; the final layer stays linear
    CHECK(emb.data == std::vector<double>{0.0, 2.0});

    EncoderConfig tcfg = cfg;
    tcfg.activation = Activation::tanh;
    const auto [temb, tcache] = encode_forward(p, tcfg, batch);
    CHECK(temb.data[0] == std::tanh(-3.0));
    CHECK(temb.data[1] == std::tanh(2.0));
}

TEST_CASE("forward rejects mismatched shapes") {
    EncoderConfig cfg;
    cfg.layer_sizes = {3, 2};
    const auto params = init_params(cfg);
    CHECK_THROWS_AS(encode_forward(params, cfg, Tensor({4, 2})),
                    dimension_error);
    EncoderConfig bad;
    bad.layer_sizes = {3};
    CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("init_params is deterministic in the seed") {
    EncoderConfig cfg;
    cfg.layer_sizes = {4, 8, 2};
    cfg.init_seed = 77;
    CHECK(params_equal(init_params(cfg), init_params(cfg)));
    EncoderConfig other = cfg;
    other.init_seed = 78;
    CHECK(!params_equal(init_params(cfg), init_params(other)));
}

TEST_CASE("triplet loss trivial cases") {
    Tensor a({1, 2}, {0.0, 0.0});
    Tensor p({1, 2}, {0.0, 0.0});
    Tensor n({1, 2}, {0.0, 0.0});
    // identical embeddings: hinge is exactly the margin, gradients vanish
    const auto [l, g] = triplet_loss(a, p, n, 0.5);
    CHECK(l == 0.5);
    CHECK(g.d_anchor.data == std::vector<double>{0.0, 0.0});

    // far negative deactivates the hinge entirely
    Tensor far({1, 2}, {10.0, 0.0});
    const auto [l2, g2] = triplet_loss(a, p, far, 0.5);
    CHECK(l2 == 0.0);
    CHECK(g2.d_anchor.data == std::vector<double>{0.0, 0.0});
    CHECK(g2.d_negative.data == std::vector<double>{0.0, 0.0});

    CHECK_THROWS_AS(triplet_loss(a, p, n, 0.0), config_error);
}

TEST_CASE("triplet loss hand-computed value") {
    // d_ap = 1, d_an = 0.25, hinge = 1 - 0.25 + 0.5 = 1.25
    Tensor a({1, 1}, {0.0});
    Tensor p({1, 1}, {1.0});
    Tensor n({1, 1}, {0.5});
    const auto [l, g] = triplet_loss(a, p, n, 0.5);
    CHECK(l == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(g.d_anchor.at(0, 0) == doctest::Approx(-1.0));   // 2(ap - an)
    CHECK(g.d_positive.at(0, 0) == doctest::Approx(2.0));  // -2 ap
    CHECK(g.d_negative.at(0, 0) == doctest::Approx(-1.0)); // 2 an
}

TEST_CASE("triplet loss is translation invariant") {
    Rng rng(4);
    Tensor a = random_tensor({5, 3}, rng);
    Tensor p = random_tensor({5, 3}, rng);
    Tensor n = random_tensor({5, 3}, rng);
    const double base = triplet_loss(a, p, n, 0.5).first;
    for (auto* t : {&a, &p, &n})
        for (std::size_t i = 0; i < t->data.size(); ++i)
            t->data[i] += 7.25;  // same shift on every coordinate
    CHECK(triplet_loss(a, p, n, 0.5).first ==
          doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("triplet gradients match central differences on embeddings") {
    Rng rng(11);
    Tensor a = random_tensor({4, 3}, rng);
    Tensor p = random_tensor({4, 3}, rng);
    Tensor n = random_tensor({4, 3}, rng);
    const auto [l, g] = triplet_loss(a, p, n, 0.5);
    const double h = 1e-6;
    auto fd = [&](Tensor& t, const Tensor& grad) {
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double orig = t.data[i];
            t.data[i] = orig + h;
            const double lp = triplet_loss(a, p, n, 0.5).first;
            t.data[i] = orig - h;
            const double lm = triplet_loss(a, p, n, 0.5).first;
            t.data[i] = orig;
            CHECK(std::abs((lp - lm) / (2 * h) - grad.data[i]) < 1e-7);
        }
    };
    fd(a, g.d_anchor);
    fd(p, g.d_positive);
    fd(n, g.d_negative);
}

TEST_CASE("infonce trivial one-negative case") {
    // d_ap = 0, single negative at squared distance 1, tau = 1:
    // loss = 0 + log(exp(-1)) = -1
    Tensor a({1, 1}, {0.0});
    Tensor p({1, 1}, {0.0});
    Tensor negs({1, 1, 1}, {1.0});
    const auto [l, g] = infonce_loss(a, p, negs, 1.0);
    CHECK(l == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK_THROWS_AS(infonce_loss(a, p, negs, 0.0), config_error);
    CHECK_THROWS_AS(infonce_loss(a, p, Tensor({1, 1}), 1.0),
                    dimension_error);
}

TEST_CASE("infonce equidistant negatives reduce to the mean score") {
    // all negatives at squared distance 4: lse term is -4/tau exactly
    Tensor a({1, 2}, {0.0, 0.0});
    Tensor p({1, 2}, {1.0, 0.0});
    Tensor negs({1, 3, 2}, {2.0, 0.0, 0.0, 2.0, -2.0, 0.0});
    const auto [l, g] = infonce_loss(a, p, negs, 2.0);
    CHECK(l == doctest::Approx(1.0 / 2.0 - 4.0 / 2.0).epsilon(1e-12));
}

TEST_CASE("infonce loss is translation invariant") {
    Rng rng(6);
    Tensor a = random_tensor({4, 3}, rng);
    Tensor p = random_tensor({4, 3}, rng);
    Tensor negs = random_tensor({4, 5, 3}, rng);
    const double base = infonce_loss(a, p, negs, 1.0).first;
    for (auto* t : {&a, &p, &negs})
        for (std::size_t i = 0; i < t->data.size(); ++i) t->data[i] -= 3.5;
    CHECK(infonce_loss(a, p, negs, 1.0).first ==
          doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("infonce gradients match central differences on embeddings") {
    Rng rng(13);
    Tensor a = random_tensor({3, 2}, rng);
    Tensor p = random_tensor({3, 2}, rng);
    Tensor negs = random_tensor({3, 4, 2}, rng);
    const auto [l, g] = infonce_loss(a, p, negs, 0.7);
    const double h = 1e-6;
    auto fd = [&](Tensor& t, const Tensor& grad) {
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double orig = t.data[i];
            t.data[i] = orig + h;
            const double lp = infonce_loss(a, p, negs, 0.7).first;
            t.data[i] = orig - h;
            const double lm = infonce_loss(a, p, negs, 0.7).first;
            t.data[i] = orig;
            CHECK(std::abs((lp - lm) / (2 * h) - grad.data[i]) < 1e-7);
        }
    };
    fd(a, g.d_anchor);
    fd(p, g.d_positive);
    fd(negs, g.d_negatives);
}

TEST_CASE("backward of a linear layer gives dW = dZ^T X") {
    EncoderConfig cfg;
    cfg.layer_sizes = {2, 1};
    EncoderParams p;
    p.layers.push_back({Tensor({1, 2}, {1.0, 2.0}), Tensor({1})});
    Tensor x({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const auto [emb, cache] = encode_forward(p, cfg, x);
    Tensor up({2, 1}, {3.0, 5.0});
    const auto g = backward(p, cfg, cache, up);
    CHECK(g.layers[0].weight.data == std::vector<double>{3.0, 5.0});
    CHECK(g.layers[0].bias.data == std::vector<double>{8.0});

    Tensor zero_up({2, 1});
    const auto gz = backward(p, cfg, cache, zero_up);
    CHECK(gz.layers[0].weight.data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("grad_check passes the analytic pipeline at 1e-4") {
    EncoderConfig cfg;
    cfg.layer_sizes = {4, 8, 3};
    LossConfig triplet;
    const auto r1 = grad_check(cfg, triplet, 10, 1e-4);
    CHECK(r1.all_passed);
    CHECK(r1.trials.size() == 10);
    CHECK(r1.worst < 1e-4);

    LossConfig nce;
    nce.kind = LossKind::infonce;
    const auto r2 = grad_check(cfg, nce, 10, 1e-4);
    CHECK(r2.all_passed);

    EncoderConfig tcfg = cfg;
    tcfg.activation = Activation::tanh;
    CHECK(grad_check(tcfg, triplet, 5, 1e-4).all_passed);
}

TEST_CASE("grad_check flags an impossible tolerance") {
    // negative control: finite-difference noise alone exceeds 1e-13
    EncoderConfig cfg;
    cfg.layer_sizes = {4, 8, 3};
    LossConfig loss;
    const auto r = grad_check(cfg, loss, 10, 1e-13);
    CHECK(!r.all_passed);
}

TEST_CASE("adam first step moves each weight by about lr") {
    EncoderConfig cfg;
    cfg.layer_sizes = {2, 2};
    auto params = identity_params(2);
    auto grads = EncoderParams::zeros_like(params);
    for (auto& x : grads.layers[0].weight.data) x = 0.5;
    auto state = OptimState::init(params);
    OptimConfig ocfg;
    ocfg.lr = 0.01;
    adam_step(params, grads, state, ocfg);
    CHECK(state.step == 1);
    // bias correction makes the first update lr * g/(|g| + eps) ~ lr
    CHECK(params.layers[0].weight.at(0, 0) ==
          doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(params.layers[0].bias.data[0] == 0.0);  // zero grad, zero move
}

TEST_CASE("adam drives a convex quadratic toward zero") {
    EncoderConfig cfg;
    cfg.layer_sizes = {3, 3};
    cfg.init_seed = 5;
    auto params = init_params(cfg);
    auto state = OptimState::init(params);
    OptimConfig ocfg;
    ocfg.lr = 0.05;
    const double before = params.l2_norm();
    for (int i = 0; i < 300; ++i) {
        auto grads = EncoderParams::zeros_like(params);
        grads.axpy(1.0, params);  // grad of 0.5 * ||p||^2
        adam_step(params, grads, state, ocfg);
    }
    CHECK(params.l2_norm() < 0.05 * before);
}

TEST_CASE("adam rejects non-finite gradients") {
    auto params = identity_params(2);
    auto grads = EncoderParams::zeros_like(params);
    grads.layers[0].weight.data[0] = std::nan("");
    auto state = OptimState::init(params);
    CHECK_THROWS_AS(adam_step(params, grads, state, OptimConfig{}),
                    divergence_error);
}

TEST_CASE("sampler and loss names round trip") {
    for (const auto* s : {"vep", "tcn", "som", "vip"})
        CHECK(to_string(sampler_kind_from_string(s)) == s);
    CHECK_THROWS_AS(sampler_kind_from_string("cpc"), config_error);
    CHECK(default_loss_for(SamplerKind::vep) == LossKind::triplet);
    CHECK(default_loss_for(SamplerKind::tcn) == LossKind::triplet);
    CHECK(default_loss_for(SamplerKind::som) == LossKind::infonce);
    CHECK(default_loss_for(SamplerKind::vip) == LossKind::infonce);
    CHECK_THROWS_AS(loss_kind_from_string("mse"), config_error);
}

TEST_CASE("pretrain with zero steps returns the initialization") {
    const auto ds = small_dataset();
    EncoderConfig cfg;
    cfg.layer_sizes = {2, 8, 4};
    cfg.init_seed = 9;
    Schedule sched;
    sched.steps = 0;
    const auto r =
        pretrain(ds, SamplerKind::vep, cfg, LossConfig{}, OptimConfig{}, sched);
    CHECK(r.log.empty());
    CHECK(params_equal(r.params, init_params(cfg)));
}

TEST_CASE("pretrain runs every sampler and is seed-deterministic") {
    const auto ds = small_dataset();
    EncoderConfig cfg;
    cfg.layer_sizes = {2, 8, 4};
    cfg.init_seed = 9;
    Schedule sched;
    sched.steps = 5;
    sched.batch_size = 8;
    sched.seed = 321;
    for (const auto kind : {SamplerKind::vep, SamplerKind::tcn,
                            SamplerKind::som, SamplerKind::vip}) {
        LossConfig loss;
        loss.kind = default_loss_for(kind);
        const auto a = pretrain(ds, kind, cfg, loss, OptimConfig{}, sched);
        const auto b = pretrain(ds, kind, cfg, loss, OptimConfig{}, sched);
        REQUIRE(a.log.size() == 5);
        CHECK(params_equal(a.params, b.params));
        for (std::size_t i = 0; i < a.log.size(); ++i) {
            CHECK(a.log[i].loss == b.log[i].loss);
            CHECK(a.log[i].grad_norm == b.log[i].grad_norm);
            CHECK(std::isfinite(a.log[i].loss));
        }
    }
}

TEST_CASE("pretrain rejects incompatible configurations") {
    const auto ds = small_dataset();
    EncoderConfig cfg;
    cfg.layer_sizes = {2, 4};
    Schedule sched;
    sched.steps = 1;
    LossConfig triplet;  // som requires infonce
    CHECK_THROWS_AS(
        pretrain(ds, SamplerKind::som, cfg, triplet, OptimConfig{}, sched),
        config_error);
    EncoderConfig wrong;
    wrong.layer_sizes = {5, 4};
    CHECK_THROWS_AS(
        pretrain(ds, SamplerKind::vep, wrong, LossConfig{}, OptimConfig{},
                 sched),
        dimension_error);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    EncoderConfig cfg;
    cfg.layer_sizes = {3, 7, 2};
    cfg.init_seed = 4242;
    const auto params = init_params(cfg);
    const auto path =
        (std::filesystem::temp_directory_path() / "valign_ckpt.json").string();
    save_checkpoint(path, cfg, params);
    const auto [cfg2, params2] = load_checkpoint(path);
    CHECK(cfg2.layer_sizes == cfg.layer_sizes);
    CHECK(cfg2.init_seed == cfg.init_seed);
    CHECK(params_equal(params, params2));
    std::filesystem::remove(path);
}

TEST_CASE("loading a non-checkpoint file fails cleanly") {
    const auto path =
        (std::filesystem::temp_directory_path() / "valign_notckpt.json")
            .string();
    { std::ofstream(path) << "{\"format\": \"something-else\"}\n"; }
    CHECK_THROWS_AS(load_checkpoint(path), parse_error);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nope.json"), io_error);
    std::filesystem::remove(path);
}

TEST_CASE("metrics csv has a header and one row per step") {
    const auto path =
        (std::filesystem::temp_directory_path() / "valign_metrics.csv")
            .string();
    write_metrics_csv(path, {{0, 1.0, 2.0, 3.0}, {1, 0.5, 1.0, 2.0}});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,loss,grad_norm,wall_ms");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
    std::filesystem::remove(path);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "invmm/dataset.hpp"
#include "invmm/errors.hpp"
#include "invmm/judge.hpp"
#include "invmm/sampler.hpp"
#include "invmm/train.hpp"

using namespace invmm;

namespace {

DenoiserConfig tiny_config(std::size_t dim, bool conditional = false, std::size_t classes = 0) {
    DenoiserConfig cfg;
    cfg.data_dim = dim;
    cfg.hidden_dim = 24;
    cfg.hidden_layers = 2;
    cfg.time_embed_dim = 8;
    if (conditional) {
        cfg.cond_embed_dim = 4;
        cfg.vocab_size = classes + 1;
    }
    return cfg;
}

// One point heavily duplicated: the smallest memorizing model we can train.
struct MemorizedToy {
    ToyDataset data;
    NoiseSchedule sched = make_schedule(50, 2e-3, 0.4);
    Denoiser model;
    TrainReport report;

    MemorizedToy()
        : data([] {
              DatasetSpec spec;
              spec.kind = "gauss2d";
              spec.size = 1;
              spec.seed = 3;
              spec.duplication = {{0, 64}};
              return generate_dataset(spec);
          }()),
          model([&] {
              TrainConfig tc;
              tc.epochs = 200;
              tc.batch_size = 16;
              tc.lr = 3e-3;
              tc.seed = 9;
              return train_denoiser(data, sched, tiny_config(2), tc, &report);
          }()) {}
};

const MemorizedToy& memorized_toy() {
    static MemorizedToy toy;
    return toy;
}

} // namespace

TEST_CASE("forward_diffuse endpoint and analytic cases") {
    Tensor x0({1}, {2.0});
    Tensor eps({1}, {1.0});
    CHECK(forward_diffuse(x0, eps, 1.0)[0] == doctest::Approx(2.0));
    CHECK(forward_diffuse(x0, eps, 0.0)[0] == doctest::Approx(1.0));
    CHECK(forward_diffuse(x0, eps, 0.25)[0] ==
          doctest::Approx(0.5 * 2.0 + std::sqrt(0.75) * 1.0).epsilon(1e-12)); // ~1.8660
    CHECK_THROWS_AS(forward_diffuse(Tensor({2}), Tensor({3}), 0.5), ContractError);
}

TEST_CASE("forward_diffuse timestep bounds follow the schedule") {
    const NoiseSchedule s = make_schedule(50, 2e-3, 0.4);
    Tensor x0({2}, {0.1, -0.2});
    Tensor eps({2}, {1.0, 1.0});
    CHECK_NOTHROW(forward_diffuse(x0, 1, eps, s));
    CHECK_THROWS_AS(forward_diffuse(x0, 0, eps, s), ContractError);
    CHECK_THROWS_AS(forward_diffuse(x0, 51, eps, s), ContractError);
}

TEST_CASE("forward_diffuse is affine in (x0, eps) at fixed t") {
    Rng rng(4);
    const double ab = 0.37;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x1 = rng.normal_tensor({3});
        Tensor x2 = rng.normal_tensor({3});
        Tensor e1 = rng.normal_tensor({3});
        Tensor e2 = rng.normal_tensor({3});
        const double a = rng.normal(), b = rng.normal();
        // x_t(a x1 + b x2, a e1 + b e2) == a x_t(x1, e1) + b x_t(x2, e2)
        Tensor lhs = forward_diffuse(add(scale(x1, a), scale(x2, b)),
                                     add(scale(e1, a), scale(e2, b)), ab);
        Tensor rhs = add(scale(forward_diffuse(x1, e1, ab), a),
                         scale(forward_diffuse(x2, e2, ab), b));
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(lhs[i] - rhs[i]) < 1e-10);
    }
}

TEST_CASE("eps loss definition on an all-zero model") {
    // Zero weights make the network the constant-zero predictor.
    DenoiserConfig cfg = tiny_config(2);
    Denoiser zero_model(cfg, std::vector<double>(Denoiser(cfg, 0).weight_count(), 0.0));
    const NoiseSchedule s = make_schedule(50, 2e-3, 0.4);
    Var x0 = Var::constant(Tensor({1, 2}, {0.3, -0.1}));

    // eps_theta == eps == 0: the perfect-predictor case gives 0
    Var zero_eps = Var::constant(Tensor({1, 2}, {0.0, 0.0}));
    CHECK(eps_loss_at(zero_model, s, x0, zero_eps, 10).value().item() == 0.0);

    // eps_theta == 0, eps = [1, 1]: element-mean of squares = 1
    Var ones = Var::constant(Tensor({1, 2}, {1.0, 1.0}));
    CHECK(eps_loss_at(zero_model, s, x0, ones, 10).value().item() == doctest::Approx(1.0));
}

TEST_CASE("eps loss is a nonnegative finite scalar on random init") {
    const NoiseSchedule s = make_schedule(50, 2e-3, 0.4);
    Denoiser model(tiny_config(2), 42);
    Rng rng(11);
    Var x0 = Var::constant(rng.uniform_tensor({4, 2}, -1.0, 1.0));
    Var eps = Var::constant(rng.normal_tensor({4, 2}));
    std::vector<std::size_t> ts = {1, 10, 25, 50};
    const double v = eps_loss(model, s, x0, eps, ts).value().item();
    CHECK(v >= 0.0);
    CHECK(std::isfinite(v));
}

TEST_CASE("x0 loss equals the reweighted eps loss exactly") {
    const NoiseSchedule s = make_schedule(50, 2e-3, 0.4);
    Denoiser model(tiny_config(2), 1);
    Rng rng(2);
    Var x0 = Var::constant(rng.uniform_tensor({3, 2}, -1.0, 1.0));
    Var eps = Var::constant(rng.normal_tensor({3, 2}));
    for (std::size_t t = 1; t <= 50; t += 7) {
        const double w = (1.0 - s.alpha_bar(t)) / s.alpha_bar(t);
        const double le = eps_loss_at(model, s, x0, eps, t).value().item();
        const double lx = x0_loss(model, s, x0, eps, t).value().item();
        CHECK(lx == w * le);
    }
}

TEST_CASE("training on one duplicated image memorizes it") {
    const auto& toy = memorized_toy();
    CHECK(toy.report.final_ema < 0.05);
    CHECK(toy.report.epoch_ema_loss.front() > toy.report.epoch_ema_loss.back());
}

TEST_CASE("zero epochs returns the initialization") {
    const auto& toy = memorized_toy();
    TrainConfig tc;
    tc.epochs = 0;
    tc.seed = 123;
    const Denoiser trained = train_denoiser(toy.data, toy.sched, tiny_config(2), tc);
    const Denoiser fresh(tiny_config(2), 123);
    CHECK(trained.flat_weights() == fresh.flat_weights());
}

TEST_CASE("training is deterministic in config and seed") {
    const auto& toy = memorized_toy();
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 8;
    tc.lr = 1e-3;
    tc.seed = 77;
    const Denoiser a = train_denoiser(toy.data, toy.sched, tiny_config(2), tc);
    const Denoiser b = train_denoiser(toy.data, toy.sched, tiny_config(2), tc);
    CHECK(a.flat_weights() == b.flat_weights());
}

TEST_CASE("ddim with eta 0 is a pure function of its inputs") {
    const auto& toy = memorized_toy();
    SamplerConfig sc;
    sc.ddim_steps = 25;
    Rng rng(8);
    const Tensor noise = rng.normal_tensor({3, 2});
    const Tensor a = ddim_sample(toy.model, toy.sched, noise, sc);
    const Tensor b = ddim_sample(toy.model, toy.sched, noise, sc);
    CHECK(a.vec() == b.vec());
}

TEST_CASE("ddim step count must divide the schedule") {
    const auto& toy = memorized_toy();
    SamplerConfig sc;
    sc.ddim_steps = 7; // 50 % 7 != 0
    Rng rng(8);
    CHECK_THROWS_AS(ddim_sample(toy.model, toy.sched, rng.normal_tensor({1, 2}), sc), ConfigError);
}

TEST_CASE("memorizing model reproduces its training point from any noise") {
    const auto& toy = memorized_toy();
    JudgeConfig jc;
    jc.beta = 0.25;
    ReplicationJudge judge(jc);
    SamplerConfig sc;
    sc.ddim_steps = 50;
    Rng rng(21);
    const Tensor out = ddim_sample(toy.model, toy.sched, rng.normal_tensor({8, 2}), sc);
    int hits = 0;
    for (int i = 0; i < 8; ++i) {
        Tensor row({2}, {out.at2(i, 0), out.at2(i, 1)});
        hits += judge.is_replication(row, toy.data.images[0]) ? 1 : 0;
    }
    CHECK(hits == 8);
}

TEST_CASE("ddim at eta 1 with all steps matches ancestral sampling in distribution") {
    const auto& toy = memorized_toy();

    // Oracle: the ancestral reverse chain
    //   x_{t-1} = (x_t - beta_t/sqrt(1-ab_t) eps_hat)/sqrt(alpha_t) + sigma_t z,
    //   sigma_t^2 = (1-ab_{t-1})/(1-ab_t) beta_t,
    // implemented here independently of the sampler under test.
    auto ancestral = [&](Rng& rng) {
        const NoiseSchedule& s = toy.sched;
        Tensor x = rng.normal_tensor({1, 2});
        for (std::size_t t = s.steps(); t >= 1; --t) {
            std::vector<std::size_t> ts(1, t);
            const Tensor eps_hat = toy.model.forward_plain(x, ts);
            const double a = s.alpha(t);
            const double ab = s.alpha_bar(t);
            const double ab_prev = s.alpha_bar_or_one(t - 1);
            const double beta = 1.0 - a;
            Tensor next({1, 2});
            const double sigma = t > 1 ? std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta) : 0.0;
            for (int i = 0; i < 2; ++i) {
                next[i] = (x[i] - beta / std::sqrt(1.0 - ab) * eps_hat[i]) / std::sqrt(a);
                if (t > 1) next[i] += sigma * rng.normal();
            }
            x = next;
        }
        return x;
    };

    const int n = 1000;
    Rng rng_a(1001);
    double mean_a[2] = {0, 0}, var_a[2] = {0, 0};
    std::vector<Tensor> oracle_samples;
    for (int i = 0; i < n; ++i) oracle_samples.push_back(ancestral(rng_a));
    for (const auto& s : oracle_samples) {
        mean_a[0] += s[0] / n;
        mean_a[1] += s[1] / n;
    }
    for (const auto& s : oracle_samples) {
        var_a[0] += (s[0] - mean_a[0]) * (s[0] - mean_a[0]) / n;
        var_a[1] += (s[1] - mean_a[1]) * (s[1] - mean_a[1]) / n;
    }

    SamplerConfig sc;
    sc.ddim_steps = toy.sched.steps();
    sc.eta = 1.0;
    Rng rng_b(2002);
    Tensor noise = rng_b.normal_tensor({n, 2});
    const Tensor out = ddim_sample(toy.model, toy.sched, noise, sc, std::nullopt, &rng_b);
    double mean_b[2] = {0, 0}, var_b[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
        mean_b[0] += out.at2(i, 0) / n;
        mean_b[1] += out.at2(i, 1) / n;
    }
    for (int i = 0; i < n; ++i) {
        var_b[0] += (out.at2(i, 0) - mean_b[0]) * (out.at2(i, 0) - mean_b[0]) / n;
        var_b[1] += (out.at2(i, 1) - mean_b[1]) * (out.at2(i, 1) - mean_b[1]) / n;
    }
    for (int d = 0; d < 2; ++d) {
        CHECK(std::abs(mean_a[d] - mean_b[d]) < 0.1);
        CHECK(std::abs(var_a[d] - var_b[d]) < 0.1);
    }
}

TEST_CASE("cfg prediction algebra") {
    DatasetSpec spec;
    spec.kind = "gauss2d";
    spec.size = 8;
    spec.num_classes = 2;
    spec.seed = 5;
    const ToyDataset data = generate_dataset(spec);
    const NoiseSchedule sched = make_schedule(50, 2e-3, 0.4);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.conditional = true;
    tc.seed = 6;
    const Denoiser model = train_denoiser(data, sched, tiny_config(2, true, 2), tc);

    Rng rng(9);
    const Tensor x_t = rng.normal_tensor({1, 2});
    const std::size_t t = 25;
    const Tensor uncond = cfg_predict(model, x_t, t, 0, 0.0);
    const Tensor cond1 = cfg_predict(model, x_t, t, 0, 1.0);
    std::vector<std::size_t> ids{0};
    // scale 1 equals the conditional branch
    const Tensor emb = model.embed_ids_plain(ids);
    const Tensor cond_direct = model.forward_plain(x_t, std::vector<std::size_t>{t}, &emb);
    for (std::size_t i = 0; i < 2; ++i) CHECK(cond1[i] == doctest::Approx(cond_direct[i]).epsilon(1e-12));

    // scale 0 equals the null-condition branch
    std::vector<std::size_t> nulls{model.null_id()};
    const Tensor null_emb = model.embed_ids_plain(nulls);
    const Tensor uncond_direct = model.forward_plain(x_t, std::vector<std::size_t>{t}, &null_emb);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(uncond[i] == doctest::Approx(uncond_direct[i]).epsilon(1e-12));
    }

    // null condition coincides with unconditional prediction at any scale
    const Tensor null_cfg = cfg_predict(model, x_t, t, model.null_id(), 4.5);
    for (std::size_t i = 0; i < 2; ++i) CHECK(null_cfg[i] == doctest::Approx(uncond[i]).epsilon(1e-12));

    // affine in the scale: f(s) = u + s (c - u)
    for (double s : {0.3, 2.0, 6.5}) {
        const Tensor fs = cfg_predict(model, x_t, t, 0, s);
        for (std::size_t i = 0; i < 2; ++i) {
            const double expect = uncond[i] + s * (cond1[i] - uncond[i]);
            CHECK(std::abs(fs[i] - expect) < 1e-10);
        }
    }

    // unconditional models reject guided prediction
    const auto& toy = memorized_toy();
    CHECK_THROWS_AS(cfg_predict(toy.model, x_t, t, 0, 1.0), ContractError);
}

TEST_CASE("conditional training drops conditions to the null id") {
    DatasetSpec spec;
    spec.kind = "gauss2d";
    spec.size = 12;
    spec.num_classes = 3;
    spec.seed = 15;
    const ToyDataset data = generate_dataset(spec);
    const NoiseSchedule sched = make_schedule(50, 2e-3, 0.4);
    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 12;
    tc.conditional = true;
    tc.cond_drop_prob = 0.1;
    tc.seed = 16;
    // The null embedding row only receives gradient when conditions are
    // dropped; it must move from its initialization.
    const DenoiserConfig mc = tiny_config(2, true, 3);
    const Denoiser before(mc, tc.seed);
    const Denoiser after = train_denoiser(data, sched, mc, tc);
    const Tensor t0 = before.embedding_table().value();
    const Tensor t1 = after.embedding_table().value();
    const std::size_t null_row = after.null_id();
    double delta = 0.0;
    for (std::size_t j = 0; j < mc.cond_embed_dim; ++j) {
        delta += std::abs(t1.at2(null_row, j) - t0.at2(null_row, j));
    }
    CHECK(delta > 0.0);
}

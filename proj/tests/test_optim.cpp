#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "invmm/errors.hpp"
#include "invmm/optim.hpp"

using namespace invmm;

TEST_CASE("zero gradient leaves parameters unchanged") {
    Tensor p({2}, {1.0, -2.0});
    AdamSlot slot;
    for (long s = 1; s <= 10; ++s) {
        adam_step(p, Tensor::zeros({2}), slot, s, AdamConfig{}, "p");
    }
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
}

TEST_CASE("first bias-corrected step moves by about lr * sign(g)") {
    AdamConfig cfg;
    cfg.lr = 0.05;
    Tensor p({1}, {0.0});
    AdamSlot slot;
    adam_step(p, Tensor({1}, {3.7}), slot, 1, cfg, "p");
    CHECK(p[0] == doctest::Approx(-0.05).epsilon(1e-6));
    Tensor q({1}, {0.0});
    AdamSlot slot2;
    adam_step(q, Tensor({1}, {-0.004}), slot2, 1, cfg, "q");
    CHECK(q[0] == doctest::Approx(0.05).epsilon(1e-3));
}

TEST_CASE("100 steps on f(x)=x^2 from 5 converge inside 0.5") {
    // Oracle: run the scalar recurrence directly with the same formulas.
    const AdamConfig cfg{.lr = 0.1};
    double x = 5.0, m = 0.0, v = 0.0;
    for (long s = 1; s <= 100; ++s) {
        const double g = 2.0 * x;
        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        const double mhat = m / (1 - std::pow(cfg.beta1, s));
        const double vhat = v / (1 - std::pow(cfg.beta2, s));
        x -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    CHECK(std::abs(x) < 0.5);

    // Library path, driven through the graph, must match the recurrence.
    Var p = Var::leaf(Tensor::scalar(5.0), true);
    Adam opt(cfg);
    opt.add_param("x", p);
    for (int s = 0; s < 100; ++s) {
        opt.step(backward(square(p)));
    }
    CHECK(p.value().item() == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("non-finite gradient raises a training error naming the parameter") {
    Tensor p({1}, {0.0});
    AdamSlot slot;
    try {
        adam_step(p, Tensor({1}, {std::numeric_limits<double>::quiet_NaN()}), slot, 1, AdamConfig{},
                  "layers.0.w");
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("layers.0.w") != std::string::npos);
    }
}

TEST_CASE("adam is deterministic given identical inputs") {
    auto run = [] {
        Var p = Var::leaf(Tensor({2}, {1.0, -1.0}), true);
        Adam opt(AdamConfig{.lr = 0.01});
        opt.add_param("p", p);
        for (int s = 0; s < 25; ++s) opt.step(backward(mean(square(p))));
        return p.value();
    };
    const Tensor a = run();
    const Tensor b = run();
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "invmm/gradcheck.hpp"
#include "invmm/noise_dist.hpp"

using namespace invmm;

namespace {

// Brute-force oracle: E_q[log q(x) - log p(x)] by sampling, with q and p
// evaluated from their densities directly.
double mc_kl_per_dim(const Tensor& mu, const Tensor& log_var, std::size_t draws, Rng& rng) {
    const std::size_t n = mu.size();
    double acc = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        double log_q = 0.0, log_p = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sigma = std::exp(0.5 * log_var[i]);
            const double z = rng.normal();
            const double x = mu[i] + sigma * z;
            log_q += -0.5 * z * z - 0.5 * log_var[i] - 0.5 * std::log(2.0 * M_PI);
            log_p += -0.5 * x * x - 0.5 * std::log(2.0 * M_PI);
        }
        acc += (log_q - log_p);
    }
    return acc / (static_cast<double>(draws) * static_cast<double>(n));
}

} // namespace

TEST_CASE("standard initialization has exactly zero divergence") {
    NoiseDistribution dist(16);
    CHECK(dist.kl_value() == 0.0);
    CHECK(dist.kl_to_standard().value().item() == 0.0);
}

TEST_CASE("closed-form divergence on analytic cases") {
    // N=2, mu=(1,1), sigma=1: (1/4)(1+1) = 0.5
    NoiseDistribution d1(Tensor({2}, {1.0, 1.0}), Tensor::zeros({2}));
    CHECK(d1.kl_value() == doctest::Approx(0.5).epsilon(1e-15));
    // mu=0, sigma^2=e per dim: (e-2)/2
    NoiseDistribution d2(Tensor::zeros({3}), Tensor::full({3}, 1.0));
    CHECK(d2.kl_value() == doctest::Approx((M_E - 2.0) / 2.0).epsilon(1e-12));
    CHECK(d2.kl_value() == doctest::Approx(0.35914).epsilon(1e-4));
}

TEST_CASE("divergence is nonnegative and zero only at the prior") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor mu = rng.normal_tensor({4});
        Tensor lv = rng.uniform_tensor({4}, -2.0, 2.0);
        NoiseDistribution d(mu, lv);
        CHECK(d.kl_value() >= 0.0);
        double param_norm = l2_norm(mu) + l2_norm(lv);
        if (d.kl_value() < 1e-10) CHECK(param_norm < 1e-4);
    }
}

TEST_CASE("closed form matches the Monte-Carlo oracle within 1 percent") {
    Rng rng(77);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor mu = rng.uniform_tensor({4}, -1.5, 1.5);
        Tensor lv = rng.uniform_tensor({4}, -1.0, 1.0);
        NoiseDistribution d(mu, lv);
        Rng mc(1000 + trial);
        const double est = mc_kl_per_dim(mu, lv, 100000, mc);
        CHECK(d.kl_value() == doctest::Approx(est).epsilon(0.01));
    }
}

TEST_CASE("divergence gradient matches finite differences") {
    Rng rng(5);
    Tensor mu = rng.normal_tensor({3});
    Tensor lv = rng.uniform_tensor({3}, -1.0, 1.0);
    // w.r.t. mu with log_var held fixed
    CHECK(finite_diff_check(
              [&](const Var& m) {
                  Var vv = Var::constant(lv);
                  Var inner = sub(sub(add(square(m), exp(vv)), vv), Var::scalar(1.0));
                  return mul(sum(inner), Var::scalar(0.5 / 3.0));
              },
              mu, 1e-5) < 1e-6);
    // w.r.t. log_var through the library's graph
    NoiseDistribution d(mu, lv);
    Var kl = d.kl_to_standard();
    const Tensor g = backward(kl).get(d.log_var());
    for (std::size_t i = 0; i < 3; ++i) {
        const double expect = 0.5 / 3.0 * (std::exp(lv[i]) - 1.0);
        CHECK(g[i] == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("reparameterized draws are deterministic and track mu") {
    NoiseDistribution d(Tensor({2}, {0.7, -0.4}), Tensor::full({2}, -1.0));
    Rng a(12), b(12);
    const Tensor s1 = d.sample_plain(5, a);
    const Tensor s2 = d.sample_plain(5, b);
    CHECK(s1.vec() == s2.vec());

    // Sample mean approaches mu: tolerance 3 sigma / sqrt(n) per dim.
    Rng c(13);
    const std::size_t n = 10000;
    const Tensor draws = d.sample_plain(n, c);
    const double sigma = std::exp(-0.5);
    for (std::size_t j = 0; j < 2; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += draws.at2(i, j) / n;
        CHECK(std::abs(mean - d.mu_value()[j]) < 3.0 * sigma / std::sqrt(double(n)));
    }
}

TEST_CASE("degenerate variance collapses draws onto mu") {
    NoiseDistribution d(Tensor({2}, {0.2, -0.9}), Tensor::full({2}, -60.0));
    Rng rng(3);
    const Tensor draws = d.sample_plain(100, rng);
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const double target = d.mu_value()[i % 2];
        CHECK(std::abs(draws[i] - target) < 1e-10);
    }
}

TEST_CASE("free-function forms expose the module operations") {
    NoiseDistribution d(8);
    CHECK(kl_to_standard(d) == 0.0);
    Rng rng(1);
    CHECK(sample_noise(d, 3, rng).shape() == std::vector<std::size_t>{3, 8});
    CHECK_THROWS_AS(d.sample(0, rng), ContractError);
}

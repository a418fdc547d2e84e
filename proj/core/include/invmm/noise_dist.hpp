#pragma once

#include "invmm/graph.hpp"
#include "invmm/rng.hpp"

namespace invmm {

/// Learnable diagonal Gaussian over the latent noise space, parameterized
/// as (mu, log sigma^2) so the variance stays positive without constrained
/// optimization. Freshly constructed it equals the standard Gaussian and
/// its divergence from the prior is exactly zero.
class NoiseDistribution {
public:
    explicit NoiseDistribution(std::size_t dim);
    NoiseDistribution(Tensor mu, Tensor log_var);

    std::size_t dim() const { return dim_; }
    Var& mu() { return mu_; }
    Var& log_var() { return log_var_; }
    const Var& mu() const { return mu_; }
    const Var& log_var() const { return log_var_; }

    Tensor mu_value() const { return mu_.value(); }
    Tensor sigma_value() const;

    /// Dimension-averaged divergence to the standard Gaussian:
    ///   (1/2N) sum_i (mu_i^2 + sigma_i^2 - log sigma_i^2 - 1)
    /// as a differentiable graph node.
    Var kl_to_standard() const;
    double kl_value() const;

    /// `count` reparameterized draws, one per row: eps = eps' * sigma + mu
    /// with eps' ~ N(0, I). The path through (mu, log_var) is differentiable.
    Var sample(std::size_t count, Rng& rng) const;
    Tensor sample_plain(std::size_t count, Rng& rng) const;

private:
    std::size_t dim_;
    Var mu_;
    Var log_var_;
};

/// Free-function forms of the distribution ops.
inline double kl_to_standard(const NoiseDistribution& dist) { return dist.kl_value(); }
inline Tensor sample_noise(const NoiseDistribution& dist, std::size_t count, Rng& rng) {
    return dist.sample_plain(count, rng);
}

} // namespace invmm

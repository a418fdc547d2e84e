#include "invmm/noise_dist.hpp"

#include <cmath>

#include "invmm/errors.hpp"

namespace invmm {

NoiseDistribution::NoiseDistribution(std::size_t dim)
    : dim_(dim),
      mu_(Var::leaf(Tensor::zeros({dim}), true)),
      log_var_(Var::leaf(Tensor::zeros({dim}), true)) {
    if (dim == 0) throw ContractError("noise distribution dimension must be positive");
}

NoiseDistribution::NoiseDistribution(Tensor mu, Tensor log_var) : dim_(mu.size()) {
    if (dim_ == 0 || !mu.same_shape(log_var)) {
        throw ContractError("mu and log_var must share a nonempty shape");
    }
    mu_ = Var::leaf(std::move(mu), true);
    log_var_ = Var::leaf(std::move(log_var), true);
}

Tensor NoiseDistribution::sigma_value() const {
    Tensor s(log_var_.value().shape());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(0.5 * log_var_.value()[i]);
    return s;
}

Var NoiseDistribution::kl_to_standard() const {
    Var var = exp(log_var_);
    Var inner = sub(sub(add(square(mu_), var), log_var_), Var::scalar(1.0));
    return mul(sum(inner), Var::scalar(0.5 / static_cast<double>(dim_)));
}

double NoiseDistribution::kl_value() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        const double m = mu_.value()[i];
        const double lv = log_var_.value()[i];
        acc += m * m + std::exp(lv) - lv - 1.0;
    }
    return acc * 0.5 / static_cast<double>(dim_);
}

Var NoiseDistribution::sample(std::size_t count, Rng& rng) const {
    if (count == 0) throw ContractError("sample count must be >= 1");
    Tensor raw = rng.normal_tensor({count, dim_});
    Var sigma = exp(mul(log_var_, Var::scalar(0.5)));
    return add(mul(Var::constant(std::move(raw)), tile_rows(sigma, count)), tile_rows(mu_, count));
}

Tensor NoiseDistribution::sample_plain(std::size_t count, Rng& rng) const {
    NoGradScope ng;
    return sample(count, rng).value();
}

} // namespace invmm

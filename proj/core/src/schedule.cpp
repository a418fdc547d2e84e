#include "invmm/schedule.hpp"

#include <cmath>
#include <string>

#include "invmm/errors.hpp"

namespace invmm {

NoiseSchedule NoiseSchedule::from_alphas(std::vector<double> alphas) {
    if (alphas.size() < 2) throw ConfigError("schedule needs at least 2 steps");
    NoiseSchedule s;
    s.alphas_ = std::move(alphas);
    s.alpha_bars_.reserve(s.alphas_.size());
    double prod = 1.0;
    double prev_bar = 1.0;
    for (double a : s.alphas_) {
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("schedule alphas must lie in (0,1)");
        prod *= a;
        if (!(prod < prev_bar)) throw ConfigError("alpha_bars must be strictly decreasing");
        prev_bar = prod;
        s.alpha_bars_.push_back(prod);
    }
    if (!(s.alpha_bars_.back() < 1e-3)) {
        throw ConfigError("terminal alpha_bar " + std::to_string(s.alpha_bars_.back()) +
                          " is not < 1e-3; the noised endpoint would not be Gaussian");
    }
    return s;
}

double NoiseSchedule::alpha(std::size_t t) const {
    if (t < 1 || t > alphas_.size()) throw ContractError("timestep out of range");
    return alphas_[t - 1];
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
    if (t < 1 || t > alpha_bars_.size()) throw ContractError("timestep out of range");
    return alpha_bars_[t - 1];
}

NoiseSchedule make_schedule(std::size_t t_diff, double beta_min, double beta_max) {
    if (t_diff < 2) throw ConfigError("t_diff must be >= 2");
    if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0)) {
        throw ConfigError("beta range must satisfy 0 < beta_min < beta_max < 1");
    }
    std::vector<double> alphas(t_diff);
    for (std::size_t i = 0; i < t_diff; ++i) {
        const double beta =
            beta_min + (beta_max - beta_min) * static_cast<double>(i) / static_cast<double>(t_diff - 1);
        alphas[i] = 1.0 - beta;
    }
    return NoiseSchedule::from_alphas(std::move(alphas));
}

void default_betas_for(std::size_t t_diff, double& beta_min, double& beta_max) {
    const double s = 1000.0 / static_cast<double>(t_diff);
    beta_min = 1e-4 * s;
    beta_max = 0.02 * s;
}

} // namespace invmm

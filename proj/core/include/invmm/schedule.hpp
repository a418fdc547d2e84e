#pragma once

#include <cstddef>
#include <vector>

namespace invmm {

/// Diffusion weight schedule: alphas[t-1] = alpha_t for t in [1, T], and
/// alpha_bars[t-1] = prod_{i<=t} alpha_i. Constructed so that alpha_bars is
/// strictly decreasing and alpha_bar_T < 1e-3, which keeps the fully noised
/// state indistinguishable from a standard Gaussian.
class NoiseSchedule {
public:
    static NoiseSchedule from_alphas(std::vector<double> alphas);

    std::size_t steps() const { return alphas_.size(); }
    /// 1-based timestep access.
    double alpha(std::size_t t) const;
    double alpha_bar(std::size_t t) const;
    /// alpha_bar(0) == 1 by convention (no noise added yet).
    double alpha_bar_or_one(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar(t); }

    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

private:
    NoiseSchedule() = default;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

/// Linear-beta schedule: beta linearly spaced on [beta_min, beta_max],
/// alpha_t = 1 - beta_t. Requires 0 < beta_min < beta_max < 1, T >= 2.
NoiseSchedule make_schedule(std::size_t t_diff, double beta_min, double beta_max);

/// Betas that keep the terminal alpha_bar at the reference 1000-step level
/// for a shorter desk-scale T (beta scaled by 1000/T).
void default_betas_for(std::size_t t_diff, double& beta_min, double& beta_max);

} // namespace invmm

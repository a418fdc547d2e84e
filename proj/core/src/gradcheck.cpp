#include "invmm/gradcheck.hpp"

#include <cmath>

#include "invmm/errors.hpp"

namespace invmm {

namespace {

double eval_plain(const std::function<Var(const Var&)>& f, const Tensor& x) {
    NoGradScope no_grad;
    const double v = f(Var::constant(x)).value().item();
    if (!std::isfinite(v)) throw MathDomainError("finite_diff_check: non-finite function value");
    return v;
}

} // namespace

double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h) {
    Var leaf = Var::leaf(x, true);
    Var y = f(leaf);
    if (!y.value().is_scalar()) {
        throw ContractError("finite_diff_check: f must return a scalar");
    }
    if (!std::isfinite(y.value().item())) {
        throw MathDomainError("finite_diff_check: non-finite function value at x");
    }
    const Tensor analytic = backward(y).get(leaf);

    double worst = 0.0;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        probe[i] = xi + h;
        const double fp = eval_plain(f, probe);
        probe[i] = xi - h;
        const double fm = eval_plain(f, probe);
        probe[i] = xi;
        const double central = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - central) / (std::abs(central) + 1e-12);
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace invmm

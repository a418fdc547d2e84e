#pragma once

#include <functional>

#include "invmm/graph.hpp"

namespace invmm {

/// Max relative error between the analytic gradient of `f` at `x` and a
/// central finite difference with step `h`:
///   max_i |analytic_i - central_i| / (|central_i| + 1e-12)
/// `f` must map a Var to a scalar Var and be evaluable at x +- h*e_i.
/// Throws MathDomainError if any evaluation is non-finite.
double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h);

} // namespace invmm

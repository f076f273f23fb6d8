#pragma once

#include <cstddef>
#include <functional>

#include "pairdis/graph.hpp"

namespace pairdis {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  Tensor analytic;
  Tensor numeric;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Builds a scalar from one variable leaf.
using ScalarFn = std::function<Var(Graph&, Var)>;

// Compares reverse-mode gradients of f at x against central differences
// (f(x + h e_i) - f(x - h e_i)) / 2h. A non-finite probe raises probe-failure.
GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

}  // namespace pairdis

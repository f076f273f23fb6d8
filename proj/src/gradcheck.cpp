#include "pairdis/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pairdis/error.hpp"

namespace pairdis {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarFn& f, const Tensor& x, std::size_t index) {
  try {
    Graph g;
    const double v = f(g, g.variable(x)).value().item();
    if (!std::isfinite(v)) fail(ErrorKind::probe_failure, "non-finite objective at probe index " + std::to_string(index));
    return v;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::probe_failure) throw;
    fail(ErrorKind::probe_failure, "probe index " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  require(h > 0.0, ErrorKind::invalid_argument, "finite_diff_check: step must be positive");
  GradCheckReport report;
  {
    Graph g;
    Var leaf = g.variable(x);
    Var out = f(g, leaf);
    g.backward(out);
    report.analytic = g.grad(leaf);
  }
  report.numeric = Tensor(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = evaluate(f, probe, i);
    probe[i] = orig - h;
    const double down = evaluate(f, probe, i);
    probe[i] = orig;
    report.numeric[i] = (up - down) / (2.0 * h);
    const double err = relative_error(report.analytic[i], report.numeric[i]);
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_index = i;
    }
  }
  return report;
}

}  // namespace pairdis

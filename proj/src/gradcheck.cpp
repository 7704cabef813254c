#include "cgap2/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cgap2 {

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor64>& inputs, const GradCheckOptions& options) {
  for (auto t : inputs) t.zero_grad();
  Tensor64 loss = f(inputs);
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) {
    if (t.requires_grad() && t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.numel(), 0.0);
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    Tensor64 t = inputs[a];
    if (!t.requires_grad()) continue;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t[i];
      t[i] = saved + options.eps;
      const double up = f(inputs).item();
      t[i] = saved - options.eps;
      const double down = f(inputs).item();
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double an = analytic[a][i];
      const double denom = std::max({std::abs(an), std::abs(numeric), options.magnitude_floor});
      const double rel = std::abs(an - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) {
          report.worst_input = a;
          report.worst_index = i;
          report.worst_analytic = an;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace cgap2

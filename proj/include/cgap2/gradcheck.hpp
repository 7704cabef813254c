#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cgap2/tensor.hpp"

namespace cgap2 {

struct GradCheckOptions {
  double eps = 1e-6;
  double tol = 1e-6;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  // Below the floor the measure degrades to absolute error, which keeps
  // near-zero gradient entries from amplifying double-precision roundoff.
  double magnitude_floor = 1.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;  // number of perturbed coordinates
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

using ScalarFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

/// Compares backward() against central differences (f(x+eps) - f(x-eps)) / 2eps
/// for every coordinate of every input that requires a gradient. Inputs that
/// do not require a gradient (frozen parameters, constants) are skipped.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor64>& inputs, const GradCheckOptions& options = {});

}  // namespace cgap2

#pragma once

// Pose error and classification metrics. Everything accumulates in double
// regardless of the tensor precision.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cgap2/tensor.hpp"

namespace cgap2 {

inline constexpr std::size_t kNumJoints = 17;

/// Per-sample mean Euclidean joint distance for [N,J,3] flat buffers.
std::vector<double> per_sample_mpjpe(std::span<const double> predicted, std::span<const double> target,
                                     std::size_t joints = kNumJoints);

/// Mean over samples of the per-sample mean joint distance (millimeters).
/// No root alignment is applied.
template <typename T>
double mpjpe(const Tensor<T>& predicted, const Tensor<T>& target);

struct EvalReport {
  double overall_mpjpe = 0.0;
  std::map<int, double> per_class_mpjpe;  // only classes that have samples
  std::map<int, std::size_t> counts;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

/// Groups per-sample errors by label; overall is the sample-weighted mean.
template <typename T>
EvalReport mpjpe_per_class(const Tensor<T>& predicted, const Tensor<T>& target, std::span<const int> labels);

EvalReport mpjpe_per_class(std::span<const double> per_sample, std::span<const int> labels);

/// Fraction of rows whose argmax equals the label; ties go to the lower index.
template <typename T>
double accuracy(const Tensor<T>& logits, std::span<const int> labels);

std::vector<int> argmax_rows(std::span<const double> logits, std::size_t classes);

/// Table-shaped CSV: "Method,<class names...>,Avg" then one row. Classes
/// without samples print "-".
std::string eval_table_csv(const EvalReport& report, const std::vector<std::string>& class_names,
                           const std::string& method = "CGAP2");

std::string eval_report_json(const EvalReport& report, const std::vector<std::string>& class_names);

}  // namespace cgap2

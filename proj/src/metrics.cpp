#include "cgap2/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace cgap2 {

std::vector<double> per_sample_mpjpe(std::span<const double> predicted, std::span<const double> target,
                                     std::size_t joints) {
  require(predicted.size() == target.size(), ErrorKind::Shape, "mpjpe: operand sizes differ");
  require(joints > 0 && predicted.size() % (joints * 3) == 0, ErrorKind::Shape,
          "mpjpe: buffer is not a whole number of poses");
  const std::size_t n = predicted.size() / (joints * 3);
  std::vector<double> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::size_t j = 0; j < joints; ++j) {
      const std::size_t b = (s * joints + j) * 3;
      const double dx = predicted[b] - target[b], dy = predicted[b + 1] - target[b + 1],
                   dz = predicted[b + 2] - target[b + 2];
      acc += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    out[s] = acc / double(joints);
  }
  return out;
}

namespace {

template <typename T>
std::vector<double> pose_errors(const Tensor<T>& predicted, const Tensor<T>& target) {
  require(predicted.shape() == target.shape(), ErrorKind::Shape,
          "mpjpe: shapes " + shape_str(predicted.shape()) + " and " + shape_str(target.shape()) + " differ");
  require(predicted.rank() == 3 && predicted.dim(2) == 3, ErrorKind::Shape,
          "mpjpe: expected [N,J,3], got " + shape_str(predicted.shape()));
  std::vector<double> p(predicted.data().begin(), predicted.data().end());
  std::vector<double> t(target.data().begin(), target.data().end());
  return per_sample_mpjpe(p, t, predicted.dim(1));
}

}  // namespace

template <typename T>
double mpjpe(const Tensor<T>& predicted, const Tensor<T>& target) {
  auto errs = pose_errors(predicted, target);
  require(!errs.empty(), ErrorKind::Shape, "mpjpe: empty batch");
  double total = 0.0;
  for (double e : errs) total += e;
  return total / double(errs.size());
}

EvalReport mpjpe_per_class(std::span<const double> per_sample, std::span<const int> labels) {
  require(per_sample.size() == labels.size(), ErrorKind::Shape, "mpjpe_per_class: one label per sample required");
  EvalReport r;
  std::map<int, double> sums;
  double total = 0.0;
  for (std::size_t i = 0; i < per_sample.size(); ++i) {
    sums[labels[i]] += per_sample[i];
    ++r.counts[labels[i]];
    total += per_sample[i];
  }
  for (const auto& [cls, s] : sums) r.per_class_mpjpe[cls] = s / double(r.counts[cls]);
  r.samples = per_sample.size();
  r.overall_mpjpe = r.samples ? total / double(r.samples) : 0.0;
  return r;
}

template <typename T>
EvalReport mpjpe_per_class(const Tensor<T>& predicted, const Tensor<T>& target, std::span<const int> labels) {
  auto errs = pose_errors(predicted, target);
  return mpjpe_per_class(errs, labels);
}

std::vector<int> argmax_rows(std::span<const double> logits, std::size_t classes) {
  require(classes > 0 && logits.size() % classes == 0, ErrorKind::Shape, "argmax_rows: ragged logits");
  std::vector<int> out(logits.size() / classes);
  for (std::size_t n = 0; n < out.size(); ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k)
      if (logits[n * classes + k] > logits[n * classes + best]) best = k;
    out[n] = int(best);
  }
  return out;
}

template <typename T>
double accuracy(const Tensor<T>& logits, std::span<const int> labels) {
  require(logits.rank() == 2 && logits.dim(0) == labels.size(), ErrorKind::Shape,
          "accuracy: expected [N,K] logits with N labels");
  require(!labels.empty(), ErrorKind::Shape, "accuracy: empty batch");
  std::vector<double> z(logits.data().begin(), logits.data().end());
  auto pred = argmax_rows(z, logits.dim(1));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return double(hit) / double(labels.size());
}

namespace {
std::string fmt_mm(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}
}  // namespace

std::string eval_table_csv(const EvalReport& report, const std::vector<std::string>& class_names,
                           const std::string& method) {
  std::string head = "Method", row = method;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    head += "," + class_names[c];
    auto it = report.per_class_mpjpe.find(int(c));
    row += "," + (it == report.per_class_mpjpe.end() ? std::string("-") : fmt_mm(it->second));
  }
  head += ",Avg\n";
  row += "," + fmt_mm(report.overall_mpjpe) + "\n";
  return head + row;
}

std::string eval_report_json(const EvalReport& report, const std::vector<std::string>& class_names) {
  nlohmann::ordered_json j;
  j["overall_mpjpe_mm"] = report.overall_mpjpe;
  j["accuracy"] = report.accuracy;
  j["samples"] = report.samples;
  auto& per = j["per_class"];
  per = nlohmann::ordered_json::array();
  for (const auto& [cls, v] : report.per_class_mpjpe) {
    nlohmann::ordered_json e;
    e["class_id"] = cls;
    e["name"] = cls >= 0 && std::size_t(cls) < class_names.size() ? class_names[cls] : std::to_string(cls);
    e["mpjpe_mm"] = v;
    e["count"] = report.counts.at(cls);
    per.push_back(e);
  }
  return j.dump(2) + "\n";
}

template double mpjpe<float>(const Tensor<float>&, const Tensor<float>&);
template double mpjpe<double>(const Tensor<double>&, const Tensor<double>&);
template EvalReport mpjpe_per_class<float>(const Tensor<float>&, const Tensor<float>&, std::span<const int>);
template EvalReport mpjpe_per_class<double>(const Tensor<double>&, const Tensor<double>&, std::span<const int>);
template double accuracy<float>(const Tensor<float>&, std::span<const int>);
template double accuracy<double>(const Tensor<double>&, std::span<const int>);

}  // namespace cgap2

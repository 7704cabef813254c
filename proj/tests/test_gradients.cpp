#include <random>

#include "cgap2/gradcheck.hpp"
#include "cgap2/ops.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cgap2;

namespace {

// Projects an op output onto fixed random weights so every output element
// contributes a distinct upstream gradient.
Tensor64 project(const Tensor64& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, oracle::random_tensor<double>(y.shape(), rng, 0.5, 1.5)));
}

Tensor64 param(Tensor64 t) {
  t.set_requires_grad(true);
  return t;
}

void check_passes(const GradCheckReport& r, double tol) {
  INFO("max rel err " << r.max_rel_error << " at input " << r.worst_input << "[" << r.worst_index
                      << "] analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.coordinates > 0);
  CHECK(r.max_rel_error <= tol);
}

}  // namespace

TEST_CASE("grad_check is exact for a linear map") {
  std::mt19937_64 rng(1);
  auto x = param(oracle::random_tensor<double>({3, 4}, rng));
  auto w = param(oracle::random_tensor<double>({2, 4}, rng));
  auto b = param(oracle::random_tensor<double>({2}, rng));
  auto r = grad_check([](const std::vector<Tensor64>& in) { return project(linear(in[0], in[1], in[2]), 2); },
                      {x, w, b}, {.eps = 1e-6, .tol = 1e-9});
  check_passes(r, 1e-9);
  CHECK(r.passed);
}

TEST_CASE("grad_check skips frozen parameters") {
  std::mt19937_64 rng(2);
  Parameter<double> w("w", oracle::random_tensor<double>({2, 3}, rng));
  auto x = param(oracle::random_tensor<double>({4, 3}, rng));
  w.set_frozen(true);
  auto r = grad_check([](const std::vector<Tensor64>& in) { return project(linear(in[0], in[1], Tensor64()), 3); },
                      {x, w.value});
  CHECK(r.coordinates == x.numel());
  check_passes(r, 1e-6);
}

TEST_CASE("conv3d gradients") {
  std::mt19937_64 rng(3);
  auto x = param(oracle::random_tensor<double>({2, 2, 3, 4, 4}, rng));
  auto w = param(oracle::random_tensor<double>({3, 2, 3, 3, 3}, rng));
  auto b = param(oracle::random_tensor<double>({3}, rng));
  auto r = grad_check(
      [](const std::vector<Tensor64>& in) { return project(conv3d(in[0], in[1], in[2], {1, 2, 1}, {1, 1, 0}), 4); },
      {x, w, b});
  check_passes(r, 1e-6);
}

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(4);
  auto x = param(oracle::random_tensor<double>({2, 3, 5, 5}, rng));
  auto w = param(oracle::random_tensor<double>({2, 3, 3, 3}, rng));
  auto b = param(oracle::random_tensor<double>({2}, rng));
  auto r = grad_check(
      [](const std::vector<Tensor64>& in) { return project(conv2d(in[0], in[1], in[2], {2, 2}, {1, 1}), 5); },
      {x, w, b});
  check_passes(r, 1e-6);
}

TEST_CASE("maxpool3d gradients away from ties") {
  std::mt19937_64 rng(5);
  // Distinct values spaced far apart relative to eps.
  std::vector<double> vals(1 * 2 * 2 * 4 * 4);
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.1 * double(i);
  std::shuffle(vals.begin(), vals.end(), rng);
  auto x = param(Tensor64({1, 2, 2, 4, 4}, vals));
  auto r = grad_check([](const std::vector<Tensor64>& in) { return project(maxpool3d(in[0], {1, 2, 2}, {1, 2, 2}), 6); },
                      {x});
  check_passes(r, 1e-6);
}

TEST_CASE("batchnorm3d gradients in train and eval mode") {
  std::mt19937_64 rng(6);
  auto x = param(oracle::random_tensor<double>({2, 3, 2, 2, 2}, rng));
  auto g = param(oracle::random_tensor<double>({3}, rng, 0.5, 1.5));
  auto b = param(oracle::random_tensor<double>({3}, rng));
  for (auto mode : {NormMode::Train, NormMode::Eval}) {
    auto r = grad_check(
        [mode](const std::vector<Tensor64>& in) {
          BatchNormState<double> st(3);
          st.running_mean = {0.1, -0.2, 0.3};
          st.running_var = {0.5, 1.5, 2.0};
          return project(batchnorm3d(in[0], in[1], in[2], st, mode), 7);
        },
        {x, g, b});
    check_passes(r, 1e-6);
  }
}

TEST_CASE("upsample, relu, concat, slice, reshape, permute gradients") {
  std::mt19937_64 rng(7);
  auto x = param(oracle::random_away_from_zero<double>({1, 2, 2, 2, 3}, rng));
  auto y = param(oracle::random_tensor<double>({1, 2, 1, 2, 3}, rng));
  auto r = grad_check(
      [](const std::vector<Tensor64>& in) {
        auto u = upsample_nearest3d(relu(in[0]), {1, 2, 1});
        auto c = concat(u, upsample_nearest3d(in[1], {2, 2, 1}), 2);
        auto s = slice(c, 2, 1, 3);
        auto p = permute(reshape(s, {2, 3, 4, 3}), {3, 1, 0, 2});
        return project(p, 8);
      },
      {x, y});
  check_passes(r, 1e-6);
}

TEST_CASE("l1_pose_loss gradients away from zero differences") {
  std::mt19937_64 rng(8);
  auto p = param(oracle::random_tensor<double>({2, 17, 3}, rng));
  auto off = oracle::random_away_from_zero<double>({2, 17, 3}, rng);
  auto t = param(Tensor64({2, 17, 3}));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = p[i] + off[i];
  auto r = grad_check([](const std::vector<Tensor64>& in) { return l1_pose_loss(in[0], in[1]); }, {p, t});
  check_passes(r, 1e-6);
}

TEST_CASE("softmax_cross_entropy gradients") {
  std::mt19937_64 rng(9);
  auto z = param(oracle::random_tensor<double>({4, 5}, rng, -3.0, 3.0));
  auto r = grad_check(
      [](const std::vector<Tensor64>& in) { return softmax_cross_entropy(in[0], std::vector<int>{0, 4, 2, 2}); }, {z});
  check_passes(r, 1e-6);
}

TEST_CASE("soft_argmax3d gradients with a volume transform") {
  std::mt19937_64 rng(10);
  auto h = param(oracle::random_tensor<double>({2, 2, 3, 4, 3}, rng, -2.0, 2.0));
  VolumeTransform tf;
  tf.source_axis = {2, 1, 0};
  tf.scale = {1.5, -0.5, 2.0};
  tf.offset = {10.0, 0.0, -3.0};
  auto r = grad_check([tf](const std::vector<Tensor64>& in) { return project(soft_argmax3d(in[0], tf), 11); }, {h});
  check_passes(r, 1e-6);
}

TEST_CASE("composite conv3d -> relu -> linear chain") {
  std::mt19937_64 rng(12);
  auto x = param(oracle::random_tensor<double>({2, 2, 3, 3, 3}, rng));
  auto w = param(oracle::random_tensor<double>({2, 2, 3, 3, 3}, rng, -0.5, 0.5));
  auto b = param(Tensor64({2}, std::vector<double>{0.2, -0.3}));
  auto fw = param(oracle::random_tensor<double>({3, 54}, rng));
  auto fb = param(oracle::random_tensor<double>({3}, rng));
  auto f = [](const std::vector<Tensor64>& in) {
    auto c = relu(conv3d(in[0], in[1], in[2], {1, 1, 1}, {1, 1, 1}));
    return project(linear(reshape(c, {2, 54}), in[3], in[4]), 13);
  };
  // Shift x so no pre-activation sits within the finite-difference stencil of 0.
  {
    NoGradGuard ng;
    for (int attempt = 0; attempt < 50; ++attempt) {
      auto pre = conv3d(x, w, b, {1, 1, 1}, {1, 1, 1});
      double closest = 1e9;
      for (auto v : pre.data()) closest = std::min(closest, std::abs(v));
      if (closest > 1e-3) break;
      x = param(oracle::random_tensor<double>({2, 2, 3, 3, 3}, rng));
    }
  }
  auto r = grad_check(f, {x, w, b, fw, fb});
  check_passes(r, 1e-6);
}

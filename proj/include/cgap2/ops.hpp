#pragma once

// Differentiable layer primitives. Every op is a pure function of its
// operands (batchnorm additionally updates the running statistics it is
// handed) and is explicitly instantiated for float and double.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "cgap2/tensor.hpp"

namespace cgap2 {

using Triple = std::array<std::size_t, 3>;
using Pair = std::array<std::size_t, 2>;

/// 3D cross-correlation. `bias` may be an empty tensor (numel 0) for no bias.
/// input [N,C_in,D,H,W], weight [C_out,C_in,kD,kH,kW] -> [N,C_out,D',H',W'].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Triple stride,
                 Triple padding);

/// 2D cross-correlation; shares the 3D kernel with a unit depth axis.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Pair stride,
                 Pair padding);

/// Max over non-overlapping or strided windows, no padding. Gradient goes to
/// the first maximal voxel of each window in row-major scan order.
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input, Triple window, Triple stride);

enum class NormMode { Train, Eval };

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  explicit BatchNormState(std::size_t channels = 0) : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

/// Per-channel normalization of [N,C,D,H,W]. Train mode uses batch mean and
/// biased variance and blends them into `state` with weight `momentum`.
template <typename T>
Tensor<T> batchnorm3d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, NormMode mode, T eps = T(1e-5), T momentum = T(0.1));

template <typename T>
Tensor<T> upsample_nearest3d(const Tensor<T>& input, Triple factor);

/// input [N,F_in], weight [F_out,F_in], bias [F_out] -> [N,F_out].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Concatenation along `axis`. An operand with no elements is ignored.
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis);

/// Contiguous sub-range [start, start+length) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& input, std::size_t axis, std::size_t start, std::size_t length);

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape);

/// Axis permutation: output axis i is input axis perm[i].
template <typename T>
Tensor<T> permute(const Tensor<T>& input, const std::vector<std::size_t>& perm);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sum(const Tensor<T>& input);

/// Sum over joints and coordinates of |predicted - target|, averaged over the
/// batch. Operands are [N,17,3].
template <typename T>
Tensor<T> l1_pose_loss(const Tensor<T>& predicted, const Tensor<T>& target);

/// Mean negative log-likelihood of max-shifted log-softmax.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Affine map from soft-argmax voxel coordinates to output coordinates.
/// Output coordinate c = offset[c] + scale[c] * E[voxel axis source_axis[c]],
/// where voxel axes are ordered (d, h, w).
struct VolumeTransform {
  std::array<std::size_t, 3> source_axis{0, 1, 2};
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  std::array<double, 3> offset{0.0, 0.0, 0.0};
};

/// heatmap [N,J,D,H,W] -> [N,J,3] expected coordinate under a per-joint
/// softmax over D*H*W.
template <typename T>
Tensor<T> soft_argmax3d(const Tensor<T>& heatmap, const VolumeTransform& transform = {});

}  // namespace cgap2

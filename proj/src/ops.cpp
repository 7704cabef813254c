#include "cgap2/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kernels.hpp"

namespace cgap2 {

namespace {

void check_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  require(s.size() == rank, ErrorKind::Shape,
          std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " + shape_str(s));
}

template <typename T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ---------------------------------------------------------------------------
// Convolution via im2col + GEMM.
//
// Columns are laid out [K][N*P] with K = C*kD*kH*kW ordered (c, kd, kh, kw)
// and P = D'*H'*W'. Each output element is bias + sum over k in ascending
// order, i.e. the same sequence of additions as the textbook nested loops.
// Padded taps contribute w*0, which leaves the accumulator unchanged.
// ---------------------------------------------------------------------------

struct ConvGeom {
  std::size_t n, c, d, h, w;
  std::size_t o, kd, kh, kw;
  std::size_t sd, sh, sw, pd, ph, pw;
  std::size_t od, oh, ow;
  std::size_t k() const { return c * kd * kh * kw; }
  std::size_t p() const { return od * oh * ow; }
};

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t pad, const char* op) {
  require(s >= 1, ErrorKind::Shape, std::string(op) + ": stride must be >= 1");
  require(k >= 1, ErrorKind::Shape, std::string(op) + ": kernel extent must be >= 1");
  require(in + 2 * pad >= k, ErrorKind::Shape,
          std::string(op) + ": kernel " + std::to_string(k) + " does not fit padded extent " +
              std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / s + 1;
}

// Per-thread scratch reused across convolution calls; the column matrices are
// large enough that fresh allocations cost more than the arithmetic.
enum ScratchSlot : std::size_t { kColSlot, kGradColSlot, kRowSlot, kNumSlots };

template <typename T>
T* scratch(ScratchSlot slot, std::size_t n) {
  thread_local std::array<std::vector<T>, kNumSlots> buffers;
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b.data();
}

// Output positions zw in [lo, hi) whose tap zw*stride + e - pad lands inside [0, extent).
std::pair<std::size_t, std::size_t> valid_span(std::size_t e, std::size_t stride, std::size_t pad, std::size_t extent,
                                               std::size_t out) {
  std::size_t lo = 0;
  while (lo < out && lo * stride + e < pad) ++lo;
  std::size_t hi = lo;
  while (hi < out && hi * stride + e - pad < extent) ++hi;
  return {lo, hi};
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::size_t np = g.n * g.p();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t a = 0; a < g.kd; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t e = 0; e < g.kw; ++e, ++row) {
          T* dst = col + row * np;
          for (std::size_t n = 0; n < g.n; ++n) {
            const T* src = x + (n * g.c + c) * g.d * g.h * g.w;
            for (std::size_t zd = 0; zd < g.od; ++zd) {
              const long id = long(zd * g.sd + a) - long(g.pd);
              for (std::size_t zh = 0; zh < g.oh; ++zh) {
                const long ih = long(zh * g.sh + b) - long(g.ph);
                const bool row_ok = id >= 0 && id < long(g.d) && ih >= 0 && ih < long(g.h);
                if (!row_ok) {
                  dst = std::fill_n(dst, g.ow, T(0));
                  continue;
                }
                const auto [lo, hi] = valid_span(e, g.sw, g.pw, g.w, g.ow);
                dst = std::fill_n(dst, lo, T(0));
                const T* line = src + (std::size_t(id) * g.h + std::size_t(ih)) * g.w + lo * g.sw + e - g.pw;
                if (g.sw == 1) {
                  dst = std::copy_n(line, hi - lo, dst);
                } else {
                  for (std::size_t zw = lo; zw < hi; ++zw, line += g.sw) *dst++ = *line;
                }
                dst = std::fill_n(dst, g.ow - hi, T(0));
              }
            }
          }
        }
}

template <typename T>
void col2im(const T* col, const ConvGeom& g, T* x) {
  const std::size_t np = g.n * g.p();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t a = 0; a < g.kd; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t e = 0; e < g.kw; ++e, ++row) {
          const T* src = col + row * np;
          for (std::size_t n = 0; n < g.n; ++n) {
            T* dst = x + (n * g.c + c) * g.d * g.h * g.w;
            for (std::size_t zd = 0; zd < g.od; ++zd) {
              const long id = long(zd * g.sd + a) - long(g.pd);
              for (std::size_t zh = 0; zh < g.oh; ++zh) {
                const long ih = long(zh * g.sh + b) - long(g.ph);
                const bool row_ok = id >= 0 && id < long(g.d) && ih >= 0 && ih < long(g.h);
                if (!row_ok) {
                  src += g.ow;
                  continue;
                }
                const auto [lo, hi] = valid_span(e, g.sw, g.pw, g.w, g.ow);
                T* line = dst + (std::size_t(id) * g.h + std::size_t(ih)) * g.w + lo * g.sw + e - g.pw;
                src += lo;
                for (std::size_t zw = lo; zw < hi; ++zw, line += g.sw) *line += *src++;
                src += g.ow - hi;
              }
            }
          }
        }
}

template <typename T>
Tensor<T> conv_core(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& bias, const ConvGeom& g,
                    Shape out_shape, const char* name) {
  const std::size_t K = g.k(), P = g.p(), NP = g.n * P, O = g.o;
  T* col = scratch<T>(kColSlot, K * NP);
  im2col(x.data().data(), g, col);

  T* acc = scratch<T>(kRowSlot, O * NP);
  const bool has_bias = bias.numel() > 0;
  for (std::size_t o = 0; o < O; ++o) std::fill_n(acc + o * NP, NP, has_bias ? bias[o] : T(0));
  kernels::gemm_acc(O, NP, K, wt.data().data(), col, acc);

  std::vector<T> out(g.n * O * P);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t o = 0; o < O; ++o) std::copy_n(acc + o * NP + n * P, P, out.begin() + (n * O + o) * P);

  auto xi = x.impl(), wi = wt.impl(), bi = bias.impl();
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {&x, &wt, has_bias ? &bias : nullptr}, name,
      [xi, wi, bi, g, has_bias](std::span<const T> gy) {
        const std::size_t K = g.k(), P = g.p(), NP = g.n * P, O = g.o;
        T* gyt = scratch<T>(kRowSlot, O * NP);
        for (std::size_t n = 0; n < g.n; ++n)
          for (std::size_t o = 0; o < O; ++o) std::copy_n(gy.begin() + (n * O + o) * P, P, gyt + o * NP + n * P);

        if (has_bias && bi->requires_grad) {
          auto gb = bi->grad_buffer();
          for (std::size_t o = 0; o < O; ++o) {
            T s = T(0);
            for (std::size_t j = 0; j < NP; ++j) s += gyt[o * NP + j];
            gb[o] += s;
          }
        }
        if (wi->requires_grad) {
          T* col = scratch<T>(kColSlot, K * NP);
          im2col(xi->data.data(), g, col);
          std::vector<T> gw(O * K, T(0));
          kernels::gemm_nt_acc(O, K, NP, gyt, col, gw.data());
          accumulate<T>(wi->grad_buffer(), gw);
        }
        if (xi->requires_grad) {
          std::vector<T> wtr(K * O);
          kernels::transpose(O, K, wi->data.data(), wtr.data());
          T* gcol = scratch<T>(kGradColSlot, K * NP);
          std::fill_n(gcol, K * NP, T(0));
          kernels::gemm_acc(K, NP, O, wtr.data(), gyt, gcol);
          col2im(gcol, g, xi->grad_buffer().data());
        }
      });
}

template <typename T>
void check_conv_operands(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t rank,
                         const char* op) {
  check_rank(x.shape(), rank, op, "input");
  check_rank(w.shape(), rank, op, "weight");
  require(x.dim(1) == w.dim(1), ErrorKind::Shape,
          std::string(op) + ": input channels " + std::to_string(x.dim(1)) + " != weight channels " +
              std::to_string(w.dim(1)));
  require(b.numel() == 0 || b.numel() == w.dim(0), ErrorKind::Shape,
          std::string(op) + ": bias length must equal output channels");
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Triple stride,
                 Triple padding) {
  check_conv_operands(input, weight, bias, 5, "conv3d");
  const auto& s = input.shape();
  const auto& ws = weight.shape();
  ConvGeom g{s[0], s[1], s[2], s[3], s[4], ws[0], ws[2], ws[3], ws[4],
             stride[0], stride[1], stride[2], padding[0], padding[1], padding[2], 0, 0, 0};
  g.od = out_extent(g.d, g.kd, g.sd, g.pd, "conv3d");
  g.oh = out_extent(g.h, g.kh, g.sh, g.ph, "conv3d");
  g.ow = out_extent(g.w, g.kw, g.sw, g.pw, "conv3d");
  return conv_core(input, weight, bias, g, Shape{g.n, g.o, g.od, g.oh, g.ow}, "conv3d");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Pair stride,
                 Pair padding) {
  check_conv_operands(input, weight, bias, 4, "conv2d");
  const auto& s = input.shape();
  const auto& ws = weight.shape();
  ConvGeom g{s[0], s[1], 1, s[2], s[3], ws[0], 1, ws[2], ws[3], 1, stride[0], stride[1], 0, padding[0],
             padding[1], 1, 0, 0};
  g.oh = out_extent(g.h, g.kh, g.sh, g.ph, "conv2d");
  g.ow = out_extent(g.w, g.kw, g.sw, g.pw, "conv2d");
  return conv_core(input, weight, bias, g, Shape{g.n, g.o, g.oh, g.ow}, "conv2d");
}

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input, Triple window, Triple stride) {
  check_rank(input.shape(), 5, "maxpool3d", "input");
  const auto& s = input.shape();
  const std::size_t od = out_extent(s[2], window[0], stride[0], 0, "maxpool3d");
  const std::size_t oh = out_extent(s[3], window[1], stride[1], 0, "maxpool3d");
  const std::size_t ow = out_extent(s[4], window[2], stride[2], 0, "maxpool3d");
  const std::size_t planes = s[0] * s[1], D = s[2], H = s[3], W = s[4];
  std::vector<T> out(planes * od * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const T* x = input.data().data();
  std::size_t q = 0;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = x + pl * D * H * W;
    for (std::size_t a = 0; a < od; ++a)
      for (std::size_t b = 0; b < oh; ++b)
        for (std::size_t c = 0; c < ow; ++c, ++q) {
          std::size_t best = (a * stride[0] * H + b * stride[1]) * W + c * stride[2];
          for (std::size_t i = 0; i < window[0]; ++i)
            for (std::size_t j = 0; j < window[1]; ++j)
              for (std::size_t k = 0; k < window[2]; ++k) {
                const std::size_t idx = ((a * stride[0] + i) * H + b * stride[1] + j) * W + c * stride[2] + k;
                if (src[idx] > src[best]) best = idx;
              }
          out[q] = src[best];
          argmax[q] = pl * D * H * W + best;
        }
  }
  auto xi = input.impl();
  return detail::make_result<T>(Shape{s[0], s[1], od, oh, ow}, std::move(out), {&input}, "maxpool3d",
                                [xi, argmax = std::move(argmax)](std::span<const T> gy) {
                                  auto gx = xi->grad_buffer();
                                  for (std::size_t q = 0; q < gy.size(); ++q) gx[argmax[q]] += gy[q];
                                });
}

template <typename T>
Tensor<T> batchnorm3d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, NormMode mode, T eps, T momentum) {
  check_rank(input.shape(), 5, "batchnorm3d", "input");
  const auto& s = input.shape();
  const std::size_t N = s[0], C = s[1], S = s[2] * s[3] * s[4], M = N * S;
  require(gamma.numel() == C && beta.numel() == C, ErrorKind::Shape, "batchnorm3d: gamma/beta must have C entries");
  require(state.running_mean.size() == C && state.running_var.size() == C, ErrorKind::Shape,
          "batchnorm3d: running statistics must have C entries");
  const bool train = mode == NormMode::Train;
  require(!train || M >= 2, ErrorKind::Statistics,
          "batchnorm3d: train mode needs at least two elements per channel, got " + std::to_string(M));

  const T* x = input.data().data();
  std::vector<T> mean(C), inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (train) {
      T m = T(0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < S; ++i) m += x[(n * C + c) * S + i];
      m /= T(M);
      T v = T(0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < S; ++i) {
          const T dlt = x[(n * C + c) * S + i] - m;
          v += dlt * dlt;
        }
      v /= T(M);
      mean[c] = m;
      inv_std[c] = T(1) / std::sqrt(v + eps);
      state.running_mean[c] = (T(1) - momentum) * state.running_mean[c] + momentum * m;
      state.running_var[c] = (T(1) - momentum) * state.running_var[c] + momentum * v;
    } else {
      mean[c] = state.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(state.running_var[c] + eps);
    }
  }
  std::vector<T> xhat(input.numel()), out(input.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t idx = (n * C + c) * S + i;
        xhat[idx] = (x[idx] - mean[c]) * inv_std[c];
        out[idx] = gamma[c] * xhat[idx] + beta[c];
      }

  auto xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
  return detail::make_result<T>(
      s, std::move(out), {&input, &gamma, &beta}, "batchnorm3d",
      [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std), N, C, S, M, train](std::span<const T> gy) {
        std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < S; ++i) {
              const std::size_t idx = (n * C + c) * S + i;
              sum_g[c] += gy[idx];
              sum_gx[c] += gy[idx] * xhat[idx];
            }
        if (gi->requires_grad) accumulate<T>(gi->grad_buffer(), sum_gx);
        if (bi->requires_grad) accumulate<T>(bi->grad_buffer(), sum_g);
        if (!xi->requires_grad) return;
        auto gx = xi->grad_buffer();
        const auto& gamma = gi->data;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < S; ++i) {
              const std::size_t idx = (n * C + c) * S + i;
              if (train) {
                const T mg = sum_g[c] / T(M), mgx = sum_gx[c] / T(M);
                gx[idx] += gamma[c] * inv_std[c] * (gy[idx] - mg - xhat[idx] * mgx);
              } else {
                gx[idx] += gamma[c] * inv_std[c] * gy[idx];
              }
            }
      });
}

template <typename T>
Tensor<T> upsample_nearest3d(const Tensor<T>& input, Triple factor) {
  check_rank(input.shape(), 5, "upsample_nearest3d", "input");
  for (auto f : factor) require(f >= 1, ErrorKind::Shape, "upsample_nearest3d: factors must be >= 1");
  const auto& s = input.shape();
  const std::size_t planes = s[0] * s[1], D = s[2], H = s[3], W = s[4];
  const std::size_t OD = D * factor[0], OH = H * factor[1], OW = W * factor[2];
  std::vector<std::size_t> src_index(planes * OD * OH * OW);
  std::size_t q = 0;
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t a = 0; a < OD; ++a)
      for (std::size_t b = 0; b < OH; ++b)
        for (std::size_t c = 0; c < OW; ++c)
          src_index[q++] = ((pl * D + a / factor[0]) * H + b / factor[1]) * W + c / factor[2];
  std::vector<T> out(src_index.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[src_index[i]];
  auto xi = input.impl();
  return detail::make_result<T>(Shape{s[0], s[1], OD, OH, OW}, std::move(out), {&input}, "upsample_nearest3d",
                                [xi, src_index = std::move(src_index)](std::span<const T> gy) {
                                  auto gx = xi->grad_buffer();
                                  for (std::size_t i = 0; i < gy.size(); ++i) gx[src_index[i]] += gy[i];
                                });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  check_rank(input.shape(), 2, "linear", "input");
  check_rank(weight.shape(), 2, "linear", "weight");
  const std::size_t N = input.dim(0), Fin = input.dim(1), Fout = weight.dim(0);
  require(weight.dim(1) == Fin, ErrorKind::Shape,
          "linear: inner dimensions disagree (" + shape_str(input.shape()) + " x " + shape_str(weight.shape()) + ")");
  const bool has_bias = bias.numel() > 0;
  require(!has_bias || bias.numel() == Fout, ErrorKind::Shape, "linear: bias length must equal output features");
  std::vector<T> out(N * Fout);
  const T* x = input.data().data();
  const T* w = weight.data().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < Fout; ++o) {
      T acc = has_bias ? bias[o] : T(0);
      for (std::size_t i = 0; i < Fin; ++i) acc += w[o * Fin + i] * x[n * Fin + i];
      out[n * Fout + o] = acc;
    }
  auto xi = input.impl(), wi = weight.impl(), bi = bias.impl();
  return detail::make_result<T>(
      Shape{N, Fout}, std::move(out), {&input, &weight, has_bias ? &bias : nullptr}, "linear",
      [xi, wi, bi, N, Fin, Fout, has_bias](std::span<const T> gy) {
        if (has_bias && bi->requires_grad) {
          auto gb = bi->grad_buffer();
          for (std::size_t o = 0; o < Fout; ++o) {
            T s = T(0);
            for (std::size_t n = 0; n < N; ++n) s += gy[n * Fout + o];
            gb[o] += s;
          }
        }
        if (wi->requires_grad) {
          std::vector<T> gw(Fout * Fin, T(0));
          kernels::gemm_tn_acc(Fout, Fin, N, gy.data(), xi->data.data(), gw.data());
          accumulate<T>(wi->grad_buffer(), gw);
        }
        if (xi->requires_grad) {
          std::vector<T> gx(N * Fin, T(0));
          kernels::gemm_acc(N, Fin, Fout, gy.data(), wi->data.data(), gx.data());
          accumulate<T>(xi->grad_buffer(), gx);
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  auto xi = input.impl();
  return detail::make_result<T>(input.shape(), std::move(out), {&input}, "relu", [xi](std::span<const T> gy) {
    auto gx = xi->grad_buffer();
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xi->data[i] > T(0)) gx[i] += gy[i];
  });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  if (b.numel() == 0) return a;
  if (a.numel() == 0) return b;
  require(a.rank() == b.rank() && axis < a.rank(), ErrorKind::Shape,
          "concat: incompatible ranks or axis for " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  for (std::size_t i = 0; i < a.rank(); ++i)
    require(i == axis || a.dim(i) == b.dim(i), ErrorKind::Shape,
            "concat: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ off-axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t la = a.dim(axis) * inner, lb = b.dim(axis) * inner;
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  std::vector<T> out(outer * (la + lb));
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().begin() + o * la, la, out.begin() + o * (la + lb));
    std::copy_n(b.data().begin() + o * lb, lb, out.begin() + o * (la + lb) + la);
  }
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result<T>(std::move(shape), std::move(out), {&a, &b}, "concat",
                                [ai, bi, outer, la, lb](std::span<const T> gy) {
                                  for (std::size_t o = 0; o < outer; ++o) {
                                    if (ai->requires_grad)
                                      accumulate<T>(ai->grad_buffer().subspan(o * la, la), gy.subspan(o * (la + lb), la));
                                    if (bi->requires_grad)
                                      accumulate<T>(bi->grad_buffer().subspan(o * lb, lb),
                                                    gy.subspan(o * (la + lb) + la, lb));
                                  }
                                });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& input, std::size_t axis, std::size_t start, std::size_t length) {
  require(axis < input.rank() && start + length <= input.dim(axis), ErrorKind::Shape,
          "slice: range out of bounds for " + shape_str(input.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= input.dim(i);
  for (std::size_t i = axis + 1; i < input.rank(); ++i) inner *= input.dim(i);
  const std::size_t full = input.dim(axis) * inner, part = length * inner, off = start * inner;
  Shape shape = input.shape();
  shape[axis] = length;
  std::vector<T> out(outer * part);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(input.data().begin() + o * full + off, part, out.begin() + o * part);
  auto xi = input.impl();
  return detail::make_result<T>(std::move(shape), std::move(out), {&input}, "slice",
                                [xi, outer, full, part, off](std::span<const T> gy) {
                                  auto gx = xi->grad_buffer();
                                  for (std::size_t o = 0; o < outer; ++o)
                                    accumulate<T>(gx.subspan(o * full + off, part), gy.subspan(o * part, part));
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape) {
  require(shape_numel(shape) == input.numel(), ErrorKind::Shape,
          "reshape: cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  std::vector<T> out(input.data().begin(), input.data().end());
  auto xi = input.impl();
  return detail::make_result<T>(std::move(shape), std::move(out), {&input}, "reshape",
                                [xi](std::span<const T> gy) { accumulate<T>(xi->grad_buffer(), gy); });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& input, const std::vector<std::size_t>& perm) {
  const std::size_t r = input.rank();
  require(perm.size() == r, ErrorKind::Shape, "permute: permutation rank mismatch");
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    require(p < r && !seen[p], ErrorKind::Shape, "permute: not a permutation");
    seen[p] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * input.dim(i);
  Shape shape(r);
  for (std::size_t i = 0; i < r; ++i) shape[i] = input.dim(perm[i]);
  std::vector<std::size_t> src(input.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t q = 0; q < src.size(); ++q) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_stride[perm[i]];
    src[q] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<T> out(src.size());
  for (std::size_t q = 0; q < src.size(); ++q) out[q] = input[src[q]];
  auto xi = input.impl();
  return detail::make_result<T>(std::move(shape), std::move(out), {&input}, "permute",
                                [xi, src = std::move(src)](std::span<const T> gy) {
                                  auto gx = xi->grad_buffer();
                                  for (std::size_t q = 0; q < gy.size(); ++q) gx[src[q]] += gy[q];
                                });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), ErrorKind::Shape,
          "add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, "add", [ai, bi](std::span<const T> gy) {
    if (ai->requires_grad) accumulate<T>(ai->grad_buffer(), gy);
    if (bi->requires_grad) accumulate<T>(bi->grad_buffer(), gy);
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), ErrorKind::Shape,
          "mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, "mul", [ai, bi](std::span<const T> gy) {
    if (ai->requires_grad) {
      auto g = ai->grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      auto g = bi->grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * ai->data[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
  T s = T(0);
  for (auto v : input.data()) s += v;
  auto xi = input.impl();
  return detail::make_result<T>(Shape{}, std::vector<T>{s}, {&input}, "sum", [xi](std::span<const T> gy) {
    auto gx = xi->grad_buffer();
    for (auto& g : gx) g += gy[0];
  });
}

template <typename T>
Tensor<T> l1_pose_loss(const Tensor<T>& predicted, const Tensor<T>& target) {
  check_rank(predicted.shape(), 3, "l1_pose_loss", "predicted");
  check_rank(target.shape(), 3, "l1_pose_loss", "target");
  require(predicted.dim(1) == 17 && target.dim(1) == 17, ErrorKind::Shape,
          "l1_pose_loss: poses must have 17 joints, got " + shape_str(predicted.shape()) + " and " +
              shape_str(target.shape()));
  require(predicted.shape() == target.shape() && predicted.dim(2) == 3, ErrorKind::Shape,
          "l1_pose_loss: operand shapes " + shape_str(predicted.shape()) + " and " + shape_str(target.shape()) +
              " must both be [N,17,3]");
  const std::size_t N = predicted.dim(0), per = 17 * 3;
  require(N > 0, ErrorKind::Shape, "l1_pose_loss: empty batch");
  T total = T(0);
  for (std::size_t n = 0; n < N; ++n) {
    T s = T(0);
    for (std::size_t i = 0; i < per; ++i) s += std::abs(predicted[n * per + i] - target[n * per + i]);
    total += s;
  }
  auto pi = predicted.impl(), ti = target.impl();
  return detail::make_result<T>(Shape{}, std::vector<T>{total / T(N)}, {&predicted, &target}, "l1_pose_loss",
                                [pi, ti, N](std::span<const T> gy) {
                                  const T scale = gy[0] / T(N);
                                  for (std::size_t i = 0; i < pi->data.size(); ++i) {
                                    const T d = pi->data[i] - ti->data[i];
                                    const T sg = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                                    if (pi->requires_grad) pi->grad_buffer()[i] += scale * sg;
                                    if (ti->requires_grad) ti->grad_buffer()[i] -= scale * sg;
                                  }
                                });
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  check_rank(logits.shape(), 2, "softmax_cross_entropy", "logits");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  require(labels.size() == N, ErrorKind::Shape, "softmax_cross_entropy: one label per row required");
  require(N > 0 && K > 0, ErrorKind::Shape, "softmax_cross_entropy: empty logits");
  std::vector<T> prob(N * K);
  T total = T(0);
  for (std::size_t n = 0; n < N; ++n) {
    require(labels[n] >= 0 && std::size_t(labels[n]) < K, ErrorKind::Shape,
            "softmax_cross_entropy: label " + std::to_string(labels[n]) + " out of range");
    const T* row = logits.data().data() + n * K;
    const T m = *std::max_element(row, row + K);
    T z = T(0);
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    const T log_z = std::log(z);
    for (std::size_t k = 0; k < K; ++k) prob[n * K + k] = std::exp(row[k] - m - log_z);
    total += log_z - (row[labels[n]] - m);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  auto li = logits.impl();
  return detail::make_result<T>(Shape{}, std::vector<T>{total / T(N)}, {&logits}, "softmax_cross_entropy",
                                [li, prob = std::move(prob), lab = std::move(lab), N, K](std::span<const T> gy) {
                                  auto g = li->grad_buffer();
                                  const T scale = gy[0] / T(N);
                                  for (std::size_t n = 0; n < N; ++n)
                                    for (std::size_t k = 0; k < K; ++k)
                                      g[n * K + k] +=
                                          scale * (prob[n * K + k] - (int(k) == lab[n] ? T(1) : T(0)));
                                });
}

template <typename T>
Tensor<T> soft_argmax3d(const Tensor<T>& heatmap, const VolumeTransform& transform) {
  check_rank(heatmap.shape(), 5, "soft_argmax3d", "heatmap");
  for (auto a : transform.source_axis) require(a < 3, ErrorKind::Shape, "soft_argmax3d: source axis must be < 3");
  const auto& s = heatmap.shape();
  const std::size_t maps = s[0] * s[1], D = s[2], H = s[3], W = s[4], V = D * H * W;
  require(V > 0, ErrorKind::Shape, "soft_argmax3d: empty volume");
  std::vector<T> prob(maps * V);
  std::vector<T> expect(maps * 3);  // voxel-space expectations (d, h, w)
  std::vector<T> out(maps * 3);
  for (std::size_t m = 0; m < maps; ++m) {
    const T* h = heatmap.data().data() + m * V;
    T* p = prob.data() + m * V;
    const T mx = *std::max_element(h, h + V);
    T z = T(0);
    for (std::size_t v = 0; v < V; ++v) z += (p[v] = std::exp(h[v] - mx));
    T ed = 0, eh = 0, ew = 0;
    for (std::size_t d = 0, v = 0; d < D; ++d)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x, ++v) {
          p[v] /= z;
          ed += p[v] * T(d);
          eh += p[v] * T(y);
          ew += p[v] * T(x);
        }
    const T e[3] = {ed, eh, ew};
    for (std::size_t c = 0; c < 3; ++c) {
      expect[m * 3 + c] = e[c];
      out[m * 3 + c] = T(transform.offset[c]) + T(transform.scale[c]) * e[transform.source_axis[c]];
    }
  }
  auto hi = heatmap.impl();
  return detail::make_result<T>(
      Shape{s[0], s[1], 3}, std::move(out), {&heatmap}, "soft_argmax3d",
      [hi, prob = std::move(prob), expect = std::move(expect), transform, maps, D, H, W](std::span<const T> gy) {
        const std::size_t V = D * H * W;
        auto g = hi->grad_buffer();
        for (std::size_t m = 0; m < maps; ++m) {
          // Upstream gradient w.r.t. the voxel-space expectation of each axis.
          T ge[3] = {0, 0, 0};
          for (std::size_t c = 0; c < 3; ++c) ge[transform.source_axis[c]] += gy[m * 3 + c] * T(transform.scale[c]);
          const T* p = prob.data() + m * V;
          const T* e = expect.data() + m * 3;
          T* gm = g.data() + m * V;
          for (std::size_t d = 0, v = 0; d < D; ++d) {
            const T td = ge[0] * (T(d) - e[0]);
            for (std::size_t y = 0; y < H; ++y) {
              const T ch = T(y) - e[1];
              for (std::size_t x = 0; x < W; ++x, ++v) {
                const T cw = T(x) - e[2];
                gm[v] += p[v] * (td + ge[1] * ch + ge[2] * cw);
              }
            }
          }
        }
      });
}

#define CGAP2_INSTANTIATE_OPS(T)                                                                            \
  template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Triple, Triple);         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Pair, Pair);             \
  template Tensor<T> maxpool3d(const Tensor<T>&, Triple, Triple);                                           \
  template Tensor<T> batchnorm3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&, \
                                 NormMode, T, T);                                                            \
  template Tensor<T> upsample_nearest3d(const Tensor<T>&, Triple);                                          \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> relu(const Tensor<T>&);                                                                \
  template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&, std::size_t);                               \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                      \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                                 \
  template Tensor<T> l1_pose_loss(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);                         \
  template Tensor<T> soft_argmax3d(const Tensor<T>&, const VolumeTransform&);

CGAP2_INSTANTIATE_OPS(float)
CGAP2_INSTANTIATE_OPS(double)

}  // namespace cgap2

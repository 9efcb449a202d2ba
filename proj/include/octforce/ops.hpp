#pragma once

// The closed layer set needed by the 1D ResNets: conv1d, batchnorm1d, relu,
// add, global_avg_pool, linear, mse_loss. sum and mul exist for tests.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "octforce/error.hpp"
#include "octforce/tensor.hpp"

namespace octforce::nn {

namespace detail {

inline void expect_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  require(t.rank() == rank, ErrorKind::Shape,
          std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
              shape_string(t.shape()));
}

inline void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::Shape,
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

// Fixed-order multi-accumulator reductions: vectorizable and independent of
// buffer alignment, so results are bit-reproducible.
inline double reduce_sum(const double* x, std::size_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += x[i];
    a1 += x[i + 1];
    a2 += x[i + 2];
    a3 += x[i + 3];
  }
  for (; i < n; ++i) a0 += x[i];
  return (a0 + a1) + (a2 + a3);
}

inline double reduce_dot(const double* x, const double* y, std::size_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += x[i] * y[i];
    a1 += x[i + 1] * y[i + 1];
    a2 += x[i + 2] * y[i + 2];
    a3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) a0 += x[i] * y[i];
  return (a0 + a1) + (a2 + a3);
}

inline double reduce_centered_sq(const double* x, double m, std::size_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += (x[i] - m) * (x[i] - m);
    a1 += (x[i + 1] - m) * (x[i + 1] - m);
    a2 += (x[i + 2] - m) * (x[i + 2] - m);
    a3 += (x[i + 3] - m) * (x[i + 3] - m);
  }
  for (; i < n; ++i) a0 += (x[i] - m) * (x[i] - m);
  return (a0 + a1) + (a2 + a3);
}

// Output positions l in [first, last) for which l*stride + tap - padding lands
// inside [0, length).
struct TapRange {
  std::size_t first = 0;
  std::size_t last = 0;
};

inline TapRange tap_range(std::size_t length, std::size_t out_length, std::size_t tap,
                          std::size_t stride, std::size_t padding) {
  TapRange r;
  if (tap < padding) r.first = (padding - tap + stride - 1) / stride;
  if (length + padding <= tap) return {0, 0};
  r.last = std::min(out_length, (length - 1 + padding - tap) / stride + 1);
  if (r.last < r.first) r.last = r.first;
  return r;
}

}  // namespace detail

inline std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
  return (length + 2 * padding - kernel) / stride + 1;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t batch, in_ch, length, out_ch, kernel, stride, padding, out_length;
  std::size_t col_rows() const { return in_ch * kernel; }
  std::size_t col_cols() const { return batch * out_length; }
};

// col[ci*K + k][b*Lo + l] = x[b, ci, l*stride + k - padding], zero outside.
inline void im2col(const ConvGeometry& g, const double* x, RowMatrix& col) {
  col.setZero(g.col_rows(), g.col_cols());
  for (std::size_t ci = 0; ci < g.in_ch; ++ci)
    for (std::size_t k = 0; k < g.kernel; ++k) {
      const auto [first, last] = tap_range(g.length, g.out_length, k, g.stride, g.padding);
      double* row = col.data() + (ci * g.kernel + k) * g.col_cols();
      for (std::size_t b = 0; b < g.batch; ++b) {
        const double* src = x + (b * g.in_ch + ci) * g.length + (first * g.stride + k - g.padding);
        double* dst = row + b * g.out_length;
        if (g.stride == 1) {
          std::copy(src, src + (last - first), dst + first);
        } else {
          for (std::size_t l = first; l < last; ++l) dst[l] = src[(l - first) * g.stride];
        }
      }
    }
}

// Inverse scatter of im2col, accumulating into gx.
inline void col2im_add(const ConvGeometry& g, const RowMatrix& col, double* gx) {
  for (std::size_t ci = 0; ci < g.in_ch; ++ci)
    for (std::size_t k = 0; k < g.kernel; ++k) {
      const auto [first, last] = tap_range(g.length, g.out_length, k, g.stride, g.padding);
      const double* row = col.data() + (ci * g.kernel + k) * g.col_cols();
      for (std::size_t b = 0; b < g.batch; ++b) {
        double* dst = gx + (b * g.in_ch + ci) * g.length + (first * g.stride + k - g.padding);
        const double* src = row + b * g.out_length;
        if (g.stride == 1) {
          for (std::size_t l = first; l < last; ++l) dst[l - first] += src[l];
        } else {
          for (std::size_t l = first; l < last; ++l) dst[(l - first) * g.stride] += src[l];
        }
      }
    }
}

}  // namespace detail

/// Zero-padded 1D cross-correlation. input [B, C_in, L], weight [C_out, C_in, K],
/// optional bias [C_out]; returns [B, C_out, L_out].
inline Tensor conv1d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                     std::size_t stride, std::size_t padding) {
  detail::expect_rank(input, 3, "conv1d", "input");
  detail::expect_rank(weight, 3, "conv1d", "weight");
  const std::size_t B = input.dim(0), Ci = input.dim(1), L = input.dim(2);
  const std::size_t Co = weight.dim(0), K = weight.dim(2);
  require(weight.dim(1) == Ci, ErrorKind::Shape,
          "conv1d: input has " + std::to_string(Ci) + " channels, weight expects " +
              std::to_string(weight.dim(1)));
  require(stride >= 1, ErrorKind::Contract, "conv1d: stride must be >= 1");
  require(L + 2 * padding >= K, ErrorKind::Shape, "conv1d: kernel longer than padded input");
  if (bias) {
    require(bias->rank() == 1 && bias->dim(0) == Co, ErrorKind::Shape,
            "conv1d: bias shape " + shape_string(bias->shape()));
  }
  const detail::ConvGeometry geo{B, Ci, L, Co, K, stride, padding,
                                 conv_output_length(L, K, stride, padding)};
  const std::size_t Lo = geo.out_length;
  using Map = Eigen::Map<const detail::RowMatrix>;

  detail::RowMatrix col;
  detail::im2col(geo, input.data().data(), col);
  detail::RowMatrix prod(Co, geo.col_cols());
  prod.noalias() = Map(weight.data().data(), Co, Ci * K) * col;

  std::vector<double> out(B * Co * Lo);
  for (std::size_t co = 0; co < Co; ++co) {
    const double b0 = bias ? bias->data()[co] : 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double* src = prod.data() + co * geo.col_cols() + b * Lo;
      double* dst = out.data() + (b * Co + co) * Lo;
      for (std::size_t l = 0; l < Lo; ++l) dst[l] = src[l] + b0;
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return Tensor::make_result(
      {B, Co, Lo}, std::move(out), std::move(inputs), [geo, has_bias](Node& self) {
        Node& xn = *self.parents[0];
        Node& wn = *self.parents[1];
        const std::size_t B = geo.batch, Co = geo.out_ch, Lo = geo.out_length;
        detail::RowMatrix gout(Co, geo.col_cols());
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t co = 0; co < Co; ++co)
            std::copy_n(self.grad.data() + (b * Co + co) * Lo, Lo,
                        gout.data() + co * geo.col_cols() + b * Lo);
        if (wn.requires_grad) {
          detail::RowMatrix col;
          detail::im2col(geo, xn.data.data(), col);
          Eigen::Map<detail::RowMatrix> gw(wn.ensure_grad().data(), Co, geo.col_rows());
          gw.noalias() += gout * col.transpose();
        }
        if (xn.requires_grad) {
          detail::RowMatrix gcol(geo.col_rows(), geo.col_cols());
          gcol.noalias() =
              Eigen::Map<const detail::RowMatrix>(wn.data.data(), Co, geo.col_rows()).transpose() * gout;
          detail::col2im_add(geo, gcol, xn.ensure_grad().data());
        }
        if (has_bias && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->ensure_grad();
          for (std::size_t co = 0; co < Co; ++co) gb[co] += gout.row(co).sum();
        }
      });
}

/// Per-channel running mean/variance owned by a batchnorm layer.
struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  bool initialized = false;

  RunningStats() = default;
  explicit RunningStats(std::size_t channels) : mean(channels, 0.0), var(channels, 1.0) {}
};

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Batch normalization over (batch, length) per channel. Training mode uses
/// batch statistics and updates `stats`; eval mode reads `stats`.
inline Tensor batchnorm1d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                          RunningStats& stats, Mode mode) {
  detail::expect_rank(input, 3, "batchnorm1d", "input");
  const std::size_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
  require(gamma.shape() == Shape{C} && beta.shape() == Shape{C}, ErrorKind::Shape,
          "batchnorm1d: affine parameters must have shape [" + std::to_string(C) + "]");
  require(stats.mean.size() == C && stats.var.size() == C, ErrorKind::Shape,
          "batchnorm1d: running stats channel count mismatch");
  const std::size_t n = B * L;
  const double* x = input.data().data();

  std::vector<double> mean(C), inv_std(C);
  if (mode == Mode::Train) {
    require(B >= 2, ErrorKind::Contract, "batchnorm1d: training mode needs batch >= 2");
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) s += detail::reduce_sum(x + (b * C + c) * L, L);
      const double m = s / static_cast<double>(n);
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b) v += detail::reduce_centered_sq(x + (b * C + c) * L, m, L);
      v /= static_cast<double>(n);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(v + kBatchNormEps);
      const double unbiased = v * static_cast<double>(n) / static_cast<double>(n - 1);
      stats.mean[c] = (1.0 - kBatchNormMomentum) * stats.mean[c] + kBatchNormMomentum * m;
      stats.var[c] = (1.0 - kBatchNormMomentum) * stats.var[c] + kBatchNormMomentum * unbiased;
    }
    stats.initialized = true;
  } else {
    require(stats.initialized, ErrorKind::UninitializedStats,
            "batchnorm1d: eval mode before any training update");
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + kBatchNormEps);
    }
  }

  std::vector<double> xhat(B * C * L);
  std::vector<double> out(B * C * L);
  const double* g = gamma.data().data();
  const double* be = beta.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (b * C + c) * L;
      for (std::size_t l = 0; l < L; ++l) {
        const double h = (x[off + l] - mean[c]) * inv_std[c];
        xhat[off + l] = h;
        out[off + l] = g[c] * h + be[c];
      }
    }

  const bool batch_stats = mode == Mode::Train;
  return Tensor::make_result(
      {B, C, L}, std::move(out), {input, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& xn = *self.parents[0];
        Node& gn = *self.parents[1];
        Node& bn = *self.parents[2];
        const double* go = self.grad.data();
        std::vector<double> sum_g(C, 0.0), sum_gh(C, 0.0);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = (b * C + c) * L;
            sum_g[c] += detail::reduce_sum(go + off, L);
            sum_gh[c] += detail::reduce_dot(go + off, xhat.data() + off, L);
          }
        if (gn.requires_grad) {
          auto& gg = gn.ensure_grad();
          for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gh[c];
        }
        if (bn.requires_grad) {
          auto& gb = bn.ensure_grad();
          for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
        }
        if (xn.requires_grad) {
          double* gx = xn.ensure_grad().data();
          const double* xh = xhat.data();
          const double* gam = gn.data.data();
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t off = (b * C + c) * L;
              const double scale = gam[c] * inv_std[c];
              if (batch_stats) {
                const double mg = sum_g[c] * inv_n;
                const double mgh = sum_gh[c] * inv_n;
                for (std::size_t l = 0; l < L; ++l)
                  gx[off + l] += scale * (go[off + l] - mg - xh[off + l] * mgh);
              } else {
                for (std::size_t l = 0; l < L; ++l) gx[off + l] += scale * go[off + l];
              }
            }
        }
      });
}

inline Tensor relu(const Tensor& input) {
  std::vector<double> out(input.numel());
  const auto x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return Tensor::make_result(input.shape(), std::move(out), {input}, [](Node& self) {
    Node& xn = *self.parents[0];
    double* gx = xn.ensure_grad().data();
    const double* x = xn.data.data();
    const double* g = self.grad.data();
    const std::size_t n = xn.data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += x[i] > 0.0 ? g[i] : 0.0;
  });
}

/// Elementwise sum of equal-shaped tensors (residual shortcut).
inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::expect_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const double* go = self.grad.data();
    const std::size_t n = self.grad.size();
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      double* g = p->ensure_grad().data();
      for (std::size_t i = 0; i < n; ++i) g[i] += go[i];
    }
  });
}

/// Elementwise product of equal-shaped tensors.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::expect_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) {
      auto& g = an.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.data[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.data[i];
    }
  });
}

inline Tensor sum(const Tensor& input) {
  const double s = detail::reduce_sum(input.data().data(), input.numel());
  return Tensor::make_result({1}, {s}, {input}, [](Node& self) {
    const double g0 = self.grad[0];
    for (double& v : self.parents[0]->ensure_grad()) v += g0;
  });
}

/// Mean over the length axis: [B, C, L] -> [B, C].
inline Tensor global_avg_pool(const Tensor& input) {
  detail::expect_rank(input, 3, "global_avg_pool", "input");
  const std::size_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
  std::vector<double> out(B * C);
  const auto x = input.data();
  for (std::size_t r = 0; r < B * C; ++r) out[r] = detail::reduce_sum(x.data() + r * L, L) / static_cast<double>(L);
  return Tensor::make_result({B, C}, std::move(out), {input}, [=](Node& self) {
    double* g = self.parents[0]->ensure_grad().data();
    const double inv = 1.0 / static_cast<double>(L);
    for (std::size_t r = 0; r < B * C; ++r) {
      const double v = self.grad[r] * inv;
      double* row = g + r * L;
      for (std::size_t l = 0; l < L; ++l) row[l] += v;
    }
  });
}

/// Affine map: input [B, F], weight [O, F], bias [O] -> [B, O].
inline Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  detail::expect_rank(input, 2, "linear", "input");
  detail::expect_rank(weight, 2, "linear", "weight");
  const std::size_t B = input.dim(0), F = input.dim(1), O = weight.dim(0);
  require(weight.dim(1) == F, ErrorKind::Shape,
          "linear: input features " + std::to_string(F) + " vs weight " + shape_string(weight.shape()));
  require(bias.shape() == Shape{O}, ErrorKind::Shape, "linear: bias shape " + shape_string(bias.shape()));
  std::vector<double> out(B * O);
  const auto x = input.data();
  const auto w = weight.data();
  const auto bv = bias.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o) {
      out[b * O + o] = bv[o] + detail::reduce_dot(w.data() + o * F, x.data() + b * F, F);
    }
  return Tensor::make_result({B, O}, std::move(out), {input, weight, bias}, [=](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    const auto& go = self.grad;
    if (xn.requires_grad) {
      auto& gx = xn.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
          for (std::size_t f = 0; f < F; ++f) gx[b * F + f] += go[b * O + o] * wn.data[o * F + f];
    }
    if (wn.requires_grad) {
      auto& gw = wn.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
          for (std::size_t f = 0; f < F; ++f) gw[o * F + f] += go[b * O + o] * xn.data[b * F + f];
    }
    if (bn.requires_grad) {
      auto& gb = bn.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) gb[o] += go[b * O + o];
    }
  });
}

/// Mean squared error over all elements; returns a scalar [1].
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  detail::expect_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.numel();
  require(n > 0, ErrorKind::Shape, "mse_loss: empty input");
  const auto p = pred.data();
  const auto t = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return Tensor::make_result({1}, {s / static_cast<double>(n)}, {pred, target}, [n](Node& self) {
    Node& pn = *self.parents[0];
    Node& tn = *self.parents[1];
    const double scale = 2.0 * self.grad[0] / static_cast<double>(n);
    if (pn.requires_grad) {
      auto& g = pn.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += scale * (pn.data[i] - tn.data[i]);
    }
    if (tn.requires_grad) {
      auto& g = tn.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] -= scale * (pn.data[i] - tn.data[i]);
    }
  });
}

}  // namespace octforce::nn

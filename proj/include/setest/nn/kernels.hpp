#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "setest/nn/tensor.hpp"

// Forward kernels shared by the autodiff graph and by direct callers. All
// operate on rank-2 views (rows x cols) of row-major tensors.

namespace setest::nn::kernels {

inline constexpr double kLayerNormEps = 1e-5;

// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out = Tensor::uninit(a.rows(), b.cols());
  out.mat().noalias() = a.mat() * b.mat();
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::uninit(a.rows(), a.cols());
  out.mat() = a.mat() + b.mat();
  return out;
}

inline double gelu(double x) noexcept {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

inline double gelu_grad(double x) noexcept {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

inline Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::uninit(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

/// Numerically stable softmax of one row in place. Entries equal to -inf
/// receive probability exactly 0.
inline void softmax_inplace(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (double& v : row) v *= inv;
}

inline Tensor softmax_rows(const Tensor& x) {
  Tensor out = Tensor::uninit(x.rows(), x.cols());
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row_span(r));
  return out;
}

/// Per-row statistics produced by layer normalization; reused by the backward pass.
struct LayerNormStats {
  std::vector<double> mean;
  std::vector<double> rstd;
};

/// (x - mean) / sqrt(var + eps) over the last axis, before the affine step.
inline Tensor layer_norm_rows(const Tensor& x, LayerNormStats* stats = nullptr,
                              double eps = kLayerNormEps) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out = Tensor::uninit(rows, cols);
  if (stats) {
    stats->mean.assign(rows, 0.0);
    stats->rstd.assign(rows, 0.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = x.row_span(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double rstd = 1.0 / std::sqrt(var + eps);
    auto o = out.row_span(r);
    for (std::size_t c = 0; c < cols; ++c) o[c] = (in[c] - mean) * rstd;
    if (stats) {
      stats->mean[r] = mean;
      stats->rstd[r] = rstd;
    }
  }
  return out;
}

/// Row gather: out[i] = table[indices[i]].
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  const std::size_t cols = table.cols();
  Tensor out = Tensor::uninit(indices.size(), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= table.rows()) {
      throw RangeError("embedding_lookup: index " + std::to_string(indices[i]) +
                       " outside table with " + std::to_string(table.rows()) + " rows");
    }
    auto src = table.row_span(indices[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

}  // namespace setest::nn::kernels

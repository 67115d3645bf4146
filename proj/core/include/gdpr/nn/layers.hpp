#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gdpr/errors.hpp"
#include "gdpr/nn/tensor.hpp"
#include "gdpr/rng.hpp"

// Forward and backward passes for the layers of the segment classifier.
// Backward functions accumulate (+=) into caller-provided gradient buffers so
// a mini-batch can be summed without temporaries.
namespace gdpr::nn {

// Same-length zero padding for kernel size k: (k-1)/2 rows before, the rest after.
constexpr std::size_t pad_before(std::size_t kernel) noexcept { return (kernel - 1) / 2; }
constexpr std::size_t pad_after(std::size_t kernel) noexcept {
  return kernel - 1 - pad_before(kernel);
}

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
bool row_is_zero(std::span<const T> row) noexcept {
  for (const T v : row) {
    if (v != T{0}) return false;
  }
  return true;
}

}  // namespace detail

// 1-D convolution over time with stride one.
//   input   L x D
//   filters F x (kernel*D); row f is filter f laid out as [j][d]
//   bias    F
// out[t][f] = bias[f] + sum_{j,d} padded[t+j][d] * filter_f[j][d]   (L x F)
// Windows made only of zero rows (padding, or zero-padded token positions)
// produce exactly bias[f] and are skipped.
template <typename T>
Matrix<T> conv1d(const Matrix<T>& input, const Matrix<T>& filters, std::span<const T> bias,
                 std::size_t kernel) {
  detail::require(kernel >= 1, "conv1d: kernel size must be >= 1");
  detail::require(input.rows() >= 1, "conv1d: input must have at least one row");
  const std::size_t length = input.rows();
  const std::size_t dim = input.cols();
  detail::require(filters.cols() == kernel * dim, "conv1d: filter width != kernel * input dim");
  detail::require(bias.size() == filters.rows(), "conv1d: bias length != filter count");

  const std::size_t n_filters = filters.rows();
  const auto before = static_cast<std::ptrdiff_t>(pad_before(kernel));
  const auto k = static_cast<std::ptrdiff_t>(kernel);
  const auto len = static_cast<std::ptrdiff_t>(length);

  std::vector<char> nonzero(length);
  for (std::size_t r = 0; r < length; ++r) nonzero[r] = !detail::row_is_zero<T>(input.row(r));

  Matrix<T> out(length, n_filters);
  for (std::ptrdiff_t t = 0; t < len; ++t) {
    const std::ptrdiff_t first = t - before;
    const std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, first);
    const std::ptrdiff_t r1 = std::min<std::ptrdiff_t>(len, first + k);
    bool any = false;
    for (std::ptrdiff_t r = r0; r < r1; ++r) any = any || nonzero[static_cast<std::size_t>(r)];
    auto out_row = out.row(static_cast<std::size_t>(t));
    if (!any) {
      std::copy(bias.begin(), bias.end(), out_row.begin());
      continue;
    }
    const T* window = input.row(static_cast<std::size_t>(r0)).data();
    const std::size_t offset = static_cast<std::size_t>(r0 - first) * dim;
    const std::size_t span_len = static_cast<std::size_t>(r1 - r0) * dim;
    for (std::size_t f = 0; f < n_filters; ++f) {
      out_row[f] = static_cast<T>(static_cast<double>(bias[f]) +
                                  dot(window, filters.row(f).data() + offset, span_len));
    }
  }
  return out;
}

// Gradients of conv1d given dL/dout (L x F). grad_input may be null; the
// classifier never requests it because its embedding inputs are frozen.
template <typename T>
void conv1d_backward(const Matrix<T>& input, const Matrix<T>& filters, std::size_t kernel,
                     const Matrix<T>& grad_out, Matrix<T>& grad_filters, std::span<T> grad_bias,
                     Matrix<T>* grad_input = nullptr) {
  const std::size_t length = input.rows();
  const std::size_t dim = input.cols();
  const std::size_t n_filters = filters.rows();
  detail::require(filters.cols() == kernel * dim, "conv1d_backward: filter width mismatch");
  detail::require(grad_out.rows() == length && grad_out.cols() == n_filters,
                  "conv1d_backward: grad_out shape mismatch");
  detail::require(grad_filters.rows() == n_filters && grad_filters.cols() == filters.cols(),
                  "conv1d_backward: grad_filters shape mismatch");
  detail::require(grad_bias.size() == n_filters, "conv1d_backward: grad_bias length mismatch");
  if (grad_input) {
    detail::require(grad_input->rows() == length && grad_input->cols() == dim,
                    "conv1d_backward: grad_input shape mismatch");
  }

  const auto before = static_cast<std::ptrdiff_t>(pad_before(kernel));
  const auto k = static_cast<std::ptrdiff_t>(kernel);
  const auto len = static_cast<std::ptrdiff_t>(length);
  for (std::ptrdiff_t t = 0; t < len; ++t) {
    const std::ptrdiff_t first = t - before;
    const std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, first);
    const std::ptrdiff_t r1 = std::min<std::ptrdiff_t>(len, first + k);
    const std::size_t offset = static_cast<std::size_t>(r0 - first) * dim;
    const std::size_t span_len = static_cast<std::size_t>(r1 - r0) * dim;
    const T* window = input.row(static_cast<std::size_t>(r0)).data();
    const auto g_row = grad_out.row(static_cast<std::size_t>(t));
    for (std::size_t f = 0; f < n_filters; ++f) {
      const T g = g_row[f];
      if (g == T{0}) continue;
      grad_bias[f] += g;
      axpy(g, window, grad_filters.row(f).data() + offset, span_len);
      if (grad_input) {
        axpy(g, filters.row(f).data() + offset, grad_input->row(static_cast<std::size_t>(r0)).data(),
             span_len);
      }
    }
  }
}

template <typename T>
void relu_inplace(std::span<T> values) noexcept {
  for (T& v : values) v = v > T{0} ? v : T{0};
}

template <typename T>
Matrix<T> relu(Matrix<T> m) {
  relu_inplace(m.flat());
  return m;
}

template <typename T>
Vector<T> relu(Vector<T> v) {
  relu_inplace(std::span<T>(v));
  return v;
}

// grad *= 1[activation > 0]; activation may be the pre- or post-ReLU value.
template <typename T>
void relu_backward(std::span<const T> activation, std::span<T> grad) {
  detail::require(activation.size() == grad.size(), "relu_backward: length mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > T{0})) grad[i] = T{0};
  }
}

template <typename T>
struct MaxPoolResult {
  Vector<T> values;                 // F
  std::vector<std::size_t> argmax;  // time index of each column's maximum
};

// Column-wise maximum over time; ties resolve to the earliest row.
template <typename T>
MaxPoolResult<T> maxpool_time(const Matrix<T>& input) {
  detail::require(input.rows() >= 1, "maxpool_time: empty input");
  MaxPoolResult<T> out{Vector<T>(input.row(0).begin(), input.row(0).end()),
                       std::vector<std::size_t>(input.cols(), 0)};
  for (std::size_t t = 1; t < input.rows(); ++t) {
    const auto row = input.row(t);
    for (std::size_t f = 0; f < input.cols(); ++f) {
      if (row[f] > out.values[f]) {
        out.values[f] = row[f];
        out.argmax[f] = t;
      }
    }
  }
  return out;
}

template <typename T>
Matrix<T> maxpool_time_backward(const std::vector<std::size_t>& argmax, std::span<const T> grad,
                                std::size_t length) {
  detail::require(argmax.size() == grad.size(), "maxpool_time_backward: length mismatch");
  Matrix<T> out(length, grad.size());
  for (std::size_t f = 0; f < grad.size(); ++f) out(argmax[f], f) = grad[f];
  return out;
}

// y = W x + b with W: m x n.
template <typename T>
Vector<T> dense(std::span<const T> x, const Matrix<T>& weights, std::span<const T> bias) {
  detail::require(weights.cols() == x.size(), "dense: weight columns != input length");
  detail::require(weights.rows() == bias.size(), "dense: bias length != weight rows");
  Vector<T> y(weights.rows());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = static_cast<T>(static_cast<double>(bias[i]) +
                          dot(weights.row(i).data(), x.data(), x.size()));
  }
  return y;
}

template <typename T>
void dense_backward(std::span<const T> x, const Matrix<T>& weights, std::span<const T> grad_y,
                    Matrix<T>& grad_weights, std::span<T> grad_bias,
                    std::span<T> grad_x = {}) {
  detail::require(weights.cols() == x.size() && weights.rows() == grad_y.size(),
                  "dense_backward: shape mismatch");
  detail::require(grad_weights.rows() == weights.rows() && grad_weights.cols() == weights.cols(),
                  "dense_backward: grad_weights shape mismatch");
  detail::require(grad_bias.size() == grad_y.size(), "dense_backward: grad_bias length mismatch");
  detail::require(grad_x.empty() || grad_x.size() == x.size(),
                  "dense_backward: grad_x length mismatch");
  for (std::size_t i = 0; i < grad_y.size(); ++i) {
    const T g = grad_y[i];
    grad_bias[i] += g;
    if (g == T{0}) continue;
    axpy(g, x.data(), grad_weights.row(i).data(), x.size());
    if (!grad_x.empty()) axpy(g, weights.row(i).data(), grad_x.data(), x.size());
  }
}

// Numerically stable softmax (max subtracted, sums in double).
template <typename T>
Vector<T> softmax(std::span<const T> logits) {
  detail::require(!logits.empty(), "softmax: empty input");
  double peak = -std::numeric_limits<double>::infinity();
  for (const T z : logits) peak = std::max(peak, static_cast<double>(z));
  std::vector<double> e(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - peak);
    total += e[i];
  }
  Vector<T> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(e[i] / total);
  return out;
}

inline constexpr double kLogEpsilon = 1e-12;

template <typename T>
struct CrossEntropy {
  double loss = 0.0;
  Vector<T> grad_logits;  // probs - onehot(gold)
};

// loss = -log(probs[gold] + eps); gradient taken w.r.t. the softmax logits.
template <typename T>
CrossEntropy<T> cross_entropy(std::span<const T> probs, std::size_t gold) {
  if (gold >= probs.size()) {
    throw IndexError("cross_entropy: gold class " + std::to_string(gold) + " out of range");
  }
  CrossEntropy<T> out;
  out.loss = -std::log(static_cast<double>(probs[gold]) + kLogEpsilon);
  out.grad_logits.assign(probs.begin(), probs.end());
  out.grad_logits[gold] -= T{1};
  return out;
}

template <typename T>
struct DropoutResult {
  Vector<T> output;
  Vector<T> mask;  // 0 or 1/(1-rate); empty in eval mode
};

// Inverted dropout: in train mode each unit is zeroed with probability
// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
template <typename T>
DropoutResult<T> dropout(std::span<const T> x, double rate, Rng& rng, bool train_mode) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ShapeError("dropout: rate must be in [0, 1)");
  DropoutResult<T> out{Vector<T>(x.begin(), x.end()), {}};
  if (!train_mode || rate == 0.0) return out;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  out.mask.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.mask[i] = rng.uniform() < rate ? T{0} : keep_scale;
    out.output[i] *= out.mask[i];
  }
  return out;
}

// grad *= mask (no-op for an empty eval-mode mask).
template <typename T>
void dropout_backward(std::span<const T> mask, std::span<T> grad) {
  if (mask.empty()) return;
  detail::require(mask.size() == grad.size(), "dropout_backward: length mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask[i];
}

}  // namespace gdpr::nn

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gdpr/errors.hpp"
#include "gdpr/nn/layers.hpp"
#include "gdpr/nn/tensor.hpp"
#include "gdpr/rng.hpp"

// The segment classifier network over a frozen, pre-encoded input:
//   conv1d -> ReLU -> dropout -> max over time -> dense -> ReLU -> dropout
//   -> dense -> softmax
// Templated on the scalar so gradient checks can run in float and double.
namespace gdpr {

template <typename T>
struct CnnParams {
  nn::Matrix<T> conv_filters;  // F x (k*D)
  nn::Vector<T> conv_bias;     // F
  nn::Matrix<T> fc1_weights;   // H x F
  nn::Vector<T> fc1_bias;      // H
  nn::Matrix<T> fc2_weights;   // C x H
  nn::Vector<T> fc2_bias;      // C

  static CnnParams zeros(std::size_t n_filters, std::size_t kernel, std::size_t dim,
                         std::size_t hidden, std::size_t n_classes) {
    return {nn::Matrix<T>(n_filters, kernel * dim), nn::Vector<T>(n_filters, T{0}),
            nn::Matrix<T>(hidden, n_filters),       nn::Vector<T>(hidden, T{0}),
            nn::Matrix<T>(n_classes, hidden),       nn::Vector<T>(n_classes, T{0})};
  }

  // Same shapes, all zero.
  CnnParams zeros_like() const {
    return {nn::Matrix<T>(conv_filters.rows(), conv_filters.cols()),
            nn::Vector<T>(conv_bias.size(), T{0}),
            nn::Matrix<T>(fc1_weights.rows(), fc1_weights.cols()),
            nn::Vector<T>(fc1_bias.size(), T{0}),
            nn::Matrix<T>(fc2_weights.rows(), fc2_weights.cols()),
            nn::Vector<T>(fc2_bias.size(), T{0})};
  }

  // Tensors in serialization order.
  std::vector<std::span<T>> tensors() {
    return {conv_filters.flat(), conv_bias, fc1_weights.flat(), fc1_bias, fc2_weights.flat(), fc2_bias};
  }
  std::vector<std::span<const T>> tensors() const {
    return {conv_filters.flat(), conv_bias, fc1_weights.flat(), fc1_bias, fc2_weights.flat(), fc2_bias};
  }

  template <typename U>
  CnnParams<U> cast() const {
    auto vec = [](const nn::Vector<T>& v) { return nn::Vector<U>(v.begin(), v.end()); };
    return {conv_filters.template cast<U>(), vec(conv_bias), fc1_weights.template cast<U>(),
            vec(fc1_bias), fc2_weights.template cast<U>(), vec(fc2_bias)};
  }

  friend bool operator==(const CnnParams&, const CnnParams&) = default;

};

// Per-parameter gradients mirror the parameter shapes exactly.
template <typename T>
using LayerGradients = CnnParams<T>;

struct DropoutRates {
  double conv = 0.0;
  double fc = 0.0;
};

// Activations recorded by a forward pass for the matching backward pass.
template <typename T>
struct ForwardCache {
  bool valid = false;
  nn::Matrix<T> input;          // L x D
  nn::Matrix<T> conv_relu;      // L x F, after ReLU
  nn::Vector<T> conv_mask;      // L*F dropout mask (empty in eval mode)
  std::vector<std::size_t> pool_argmax;
  nn::Vector<T> pooled;         // F
  nn::Vector<T> fc1_relu;       // H, after ReLU
  nn::Vector<T> fc1_mask;       // H
  nn::Vector<T> fc1_dropped;    // H
  nn::Vector<T> probs;          // C
};

template <typename T>
nn::Vector<T> cnn_forward(const CnnParams<T>& params, std::size_t kernel, const nn::Matrix<T>& input,
                          bool train_mode, const DropoutRates& rates, Rng& rng,
                          ForwardCache<T>* cache = nullptr) {
  auto conv = nn::relu(nn::conv1d(input, params.conv_filters,
                                  std::span<const T>(params.conv_bias), kernel));
  auto conv_drop = nn::dropout(std::span<const T>(conv.flat()), rates.conv, rng, train_mode);
  const nn::Matrix<T> dropped(conv.rows(), conv.cols(), std::move(conv_drop.output));
  auto pool = nn::maxpool_time(dropped);
  auto fc1 = nn::relu(nn::dense(std::span<const T>(pool.values), params.fc1_weights,
                                std::span<const T>(params.fc1_bias)));
  auto fc1_drop = nn::dropout(std::span<const T>(fc1), rates.fc, rng, train_mode);
  const auto logits = nn::dense(std::span<const T>(fc1_drop.output), params.fc2_weights,
                                std::span<const T>(params.fc2_bias));
  auto probs = nn::softmax(std::span<const T>(logits));
  if (cache) {
    cache->valid = true;
    cache->input = input;
    cache->conv_relu = std::move(conv);
    cache->conv_mask = std::move(conv_drop.mask);
    cache->pool_argmax = std::move(pool.argmax);
    cache->pooled = std::move(pool.values);
    cache->fc1_relu = std::move(fc1);
    cache->fc1_mask = std::move(fc1_drop.mask);
    cache->fc1_dropped = std::move(fc1_drop.output);
    cache->probs = probs;
  }
  return probs;
}

// Accumulates dLoss/dparams for cross-entropy against `gold` into `grads`
// and returns the loss. No gradient is produced for the input: the
// embedding layer is frozen. Throws StateError without a recorded forward.
template <typename T>
double cnn_backward(const CnnParams<T>& params, std::size_t kernel, const ForwardCache<T>& cache,
                    std::size_t gold, LayerGradients<T>& grads) {
  if (!cache.valid) throw StateError("cnn_backward called before a recorded forward pass");
  const auto ce = nn::cross_entropy(std::span<const T>(cache.probs), gold);

  nn::Vector<T> grad_fc1(params.fc1_weights.rows(), T{0});
  nn::dense_backward(std::span<const T>(cache.fc1_dropped), params.fc2_weights,
                     std::span<const T>(ce.grad_logits), grads.fc2_weights,
                     std::span<T>(grads.fc2_bias), std::span<T>(grad_fc1));
  nn::dropout_backward(std::span<const T>(cache.fc1_mask), std::span<T>(grad_fc1));
  nn::relu_backward(std::span<const T>(cache.fc1_relu), std::span<T>(grad_fc1));

  nn::Vector<T> grad_pooled(params.fc1_weights.cols(), T{0});
  nn::dense_backward(std::span<const T>(cache.pooled), params.fc1_weights,
                     std::span<const T>(grad_fc1), grads.fc1_weights, std::span<T>(grads.fc1_bias),
                     std::span<T>(grad_pooled));

  auto grad_conv = nn::maxpool_time_backward(cache.pool_argmax, std::span<const T>(grad_pooled),
                                             cache.conv_relu.rows());
  nn::dropout_backward(std::span<const T>(cache.conv_mask), grad_conv.flat());
  nn::relu_backward(std::span<const T>(cache.conv_relu.flat()), grad_conv.flat());
  nn::conv1d_backward(cache.input, params.conv_filters, kernel, grad_conv, grads.conv_filters,
                      std::span<T>(grads.conv_bias));
  return ce.loss;
}

// Loss of one example under fixed dropout masks (rng is copied, not advanced).
template <typename T>
double cnn_loss(const CnnParams<T>& params, std::size_t kernel, const nn::Matrix<T>& input,
                std::size_t gold, bool train_mode, const DropoutRates& rates, Rng rng) {
  const auto probs = cnn_forward(params, kernel, input, train_mode, rates, rng);
  return nn::cross_entropy(std::span<const T>(probs), gold).loss;
}

}  // namespace gdpr

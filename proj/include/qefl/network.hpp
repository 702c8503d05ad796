#pragma once
// Dense network with phase-shifted sine hidden layers and an affine output
// head. Forward pass, analytic backward pass, cross-entropy loss, and
// mini-batch SGD. Everything is double precision and fully deterministic
// given the caller's rng stream.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "qefl/arch.hpp"
#include "qefl/data.hpp"
#include "qefl/rng.hpp"

namespace qefl {

// z_out_i = sin(sum_j W[i,j] * z_in[j] + phase_i). Output entries lie in [-1, 1].
inline void sine_layer_forward(std::span<const double> weights, std::span<const double> phase,
                               std::span<const double> z_in, std::span<double> z_out) {
  const std::size_t rows = phase.size();
  const std::size_t cols = z_in.size();
  if (weights.size() != rows * cols || z_out.size() != rows) {
    throw std::invalid_argument("sine_layer_forward: shape mismatch");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const double* w = weights.data() + i * cols;
    double acc = phase[i];
    for (std::size_t j = 0; j < cols; ++j) {
      acc += w[j] * z_in[j];
    }
    z_out[i] = std::sin(acc);
  }
}

// Backward through one sine layer. preact holds a = W z_in + phase.
//   g = upstream ∘ cos(a);  dW = g z_in^T;  dphase = g;  dz_in = W^T g.
// Gradient blocks are accumulated (+=) so batch sums compose.
inline void sine_layer_backward(std::span<const double> weights, std::span<const double> preact,
                                std::span<const double> z_in, std::span<const double> upstream,
                                std::span<double> d_weights, std::span<double> d_phase,
                                std::span<double> dz_in) {
  const std::size_t rows = preact.size();
  const std::size_t cols = z_in.size();
  if (weights.size() != rows * cols || upstream.size() != rows || d_weights.size() != rows * cols ||
      d_phase.size() != rows || dz_in.size() != cols) {
    throw std::invalid_argument("sine_layer_backward: shape mismatch");
  }
  for (std::size_t j = 0; j < cols; ++j) {
    dz_in[j] = 0.0;
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const double g = upstream[i] * std::cos(preact[i]);
    d_phase[i] += g;
    const double* w = weights.data() + i * cols;
    double* dw = d_weights.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      dw[j] += g * z_in[j];
      dz_in[j] += w[j] * g;
    }
  }
}

// Per-example bookkeeping for the backward pass. Buffers are reused across
// calls to avoid reallocation in training loops.
struct ActivationCache {
  std::vector<std::vector<double>> preact;  // a^(l), one per sine layer
  std::vector<std::vector<double>> post;    // z^(0) = input, then z^(l)
  std::vector<double> logits;
};

inline void forward(const QennArchitecture& arch, const ParamVector& params,
                    std::span<const double> x, ActivationCache& cache) {
  check_param_size(arch, params);
  if (x.size() != arch.input_dim) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  const ParamLayout layout = param_layout(arch);
  const std::size_t n_layers = layout.sine.size();
  cache.preact.resize(n_layers);
  cache.post.resize(n_layers + 1);
  cache.post[0].assign(x.begin(), x.end());

  for (std::size_t l = 0; l < n_layers; ++l) {
    const SineLayerLayout& sl = layout.sine[l];
    cache.preact[l].resize(sl.rows);
    cache.post[l + 1].resize(sl.rows);
    const std::vector<double>& z_in = cache.post[l];
    for (std::size_t i = 0; i < sl.rows; ++i) {
      const double* w = params.data() + sl.weights + i * sl.cols;
      double acc = params[sl.phase + i];
      for (std::size_t j = 0; j < sl.cols; ++j) {
        acc += w[j] * z_in[j];
      }
      cache.preact[l][i] = acc;
      cache.post[l + 1][i] = std::sin(acc);
    }
  }

  const HeadLayout& h = layout.head;
  const std::vector<double>& z_last = cache.post[n_layers];
  cache.logits.resize(h.rows);
  for (std::size_t i = 0; i < h.rows; ++i) {
    const double* w = params.data() + h.weights + i * h.cols;
    double acc = params[h.bias + i];
    for (std::size_t j = 0; j < h.cols; ++j) {
      acc += w[j] * z_last[j];
    }
    cache.logits[i] = acc;
  }
}

inline std::vector<double> forward(const QennArchitecture& arch, const ParamVector& params,
                                   std::span<const double> x) {
  ActivationCache cache;
  forward(arch, params, x, cache);
  return cache.logits;
}

// Returns -log softmax(logits)[label]; when dlogits is non-null, writes
// softmax(logits) - onehot(label) into it. Max-subtracted for stability.
inline double softmax_cross_entropy(std::span<const double> logits, std::size_t label,
                                    std::vector<double>* dlogits = nullptr) {
  if (label >= logits.size()) {
    throw std::invalid_argument("softmax_cross_entropy: label out of range");
  }
  double max_logit = logits[0];
  for (double v : logits) {
    if (v > max_logit) {
      max_logit = v;
    }
  }
  double sum = 0.0;
  for (double v : logits) {
    sum += std::exp(v - max_logit);
  }
  const double log_sum = std::log(sum);
  const double loss = log_sum - (logits[label] - max_logit);
  if (dlogits != nullptr) {
    dlogits->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      (*dlogits)[i] = std::exp(logits[i] - max_logit) / sum;
    }
    (*dlogits)[label] -= 1.0;
  }
  return loss;
}

// Accumulates dLoss/dparams into grads (same packing as params). grads must
// be pre-sized to the parameter count; the caller zeroes it per batch.
inline void backward_accumulate(const QennArchitecture& arch, const ParamVector& params,
                                const ActivationCache& cache, std::span<const double> dlogits,
                                Gradients& grads) {
  check_param_size(arch, params);
  if (grads.size() != params.size()) {
    throw std::invalid_argument("backward_accumulate: gradient length mismatch");
  }
  const ParamLayout layout = param_layout(arch);
  const HeadLayout& h = layout.head;
  if (dlogits.size() != h.rows) {
    throw std::invalid_argument("backward_accumulate: dlogits length mismatch");
  }
  const std::size_t n_layers = layout.sine.size();

  // Head: dV = dlogits z_last^T, db = dlogits, dz_last = V^T dlogits.
  const std::vector<double>& z_last = cache.post[n_layers];
  std::vector<double> dz(z_last.size(), 0.0);
  for (std::size_t i = 0; i < h.rows; ++i) {
    const double g = dlogits[i];
    grads[h.bias + i] += g;
    const double* w = params.data() + h.weights + i * h.cols;
    double* dw = grads.data() + h.weights + i * h.cols;
    for (std::size_t j = 0; j < h.cols; ++j) {
      dw[j] += g * z_last[j];
      dz[j] += w[j] * g;
    }
  }

  std::vector<double> dz_prev;
  for (std::size_t l = n_layers; l-- > 0;) {
    const SineLayerLayout& sl = layout.sine[l];
    dz_prev.assign(sl.cols, 0.0);
    sine_layer_backward(std::span<const double>(params.data() + sl.weights, sl.rows * sl.cols),
                        cache.preact[l], cache.post[l], dz,
                        std::span<double>(grads.data() + sl.weights, sl.rows * sl.cols),
                        std::span<double>(grads.data() + sl.phase, sl.rows), dz_prev);
    dz.swap(dz_prev);
  }
}

// Full-network gradient of the single-example cross-entropy loss.
inline double example_gradient(const QennArchitecture& arch, const ParamVector& params,
                               const Example& ex, ActivationCache& cache,
                               std::vector<double>& dlogits, Gradients& grads) {
  forward(arch, params, ex.features, cache);
  const double loss = softmax_cross_entropy(cache.logits, ex.label, &dlogits);
  backward_accumulate(arch, params, cache, dlogits, grads);
  return loss;
}

// Mean cross-entropy over the dataset.
inline double local_loss(const QennArchitecture& arch, const ParamVector& params,
                         const Dataset& data) {
  if (data.empty()) {
    throw std::invalid_argument("local_loss: dataset is empty");
  }
  ActivationCache cache;
  double total = 0.0;
  for (const Example& ex : data.examples) {
    forward(arch, params, ex.features, cache);
    total += softmax_cross_entropy(cache.logits, ex.label);
  }
  return total / static_cast<double>(data.size());
}

inline void sgd_step_inplace(ParamVector& params, const Gradients& grads, double learning_rate) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("sgd_step: gradient length mismatch");
  }
  if (!(learning_rate >= 0.0)) {
    throw std::invalid_argument("sgd_step: learning rate must be non-negative");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) {
      throw std::invalid_argument("sgd_step: non-finite gradient entry");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= learning_rate * grads[i];
  }
}

inline ParamVector sgd_step(ParamVector params, const Gradients& grads, double learning_rate) {
  sgd_step_inplace(params, grads, learning_rate);
  return params;
}

// epochs passes of mini-batch SGD with a per-epoch Fisher-Yates reshuffle
// driven by the supplied stream. Batch gradients are averaged; the final
// short batch is included. learning_rate 0 is a no-op.
inline ParamVector train_epochs(const QennArchitecture& arch, ParamVector params,
                                const Dataset& data, std::size_t epochs, double learning_rate,
                                std::size_t batch_size, SplitRng& rng) {
  check_param_size(arch, params);
  if (epochs == 0) {
    throw std::invalid_argument("train_epochs: epochs must be >= 1");
  }
  if (data.empty()) {
    throw std::invalid_argument("train_epochs: dataset is empty");
  }
  if (batch_size == 0) {
    throw std::invalid_argument("train_epochs: batch_size must be >= 1");
  }
  if (learning_rate == 0.0) {
    return params;
  }

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  ActivationCache cache;
  std::vector<double> dlogits;
  Gradients grads(params.size());

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) {
      order[i] = i;
    }
    shuffle(order, rng);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(start + batch_size, n);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        example_gradient(arch, params, data.examples[order[k]], cache, dlogits, grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double& g : grads) {
        g *= scale;
      }
      sgd_step_inplace(params, grads, learning_rate);
    }
  }
  return params;
}

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero phases, zero output bias.
// Deterministic for a given seed; draws follow the packing order.
inline ParamVector init_params(const QennArchitecture& arch, std::uint64_t seed) {
  validate(arch);
  const ParamLayout layout = param_layout(arch);
  ParamVector params(layout.total, 0.0);
  SplitRng rng = SplitRng(seed).derive(stream::kInit);
  for (const SineLayerLayout& sl : layout.sine) {
    const double bound = std::sqrt(6.0 / static_cast<double>(sl.rows + sl.cols));
    for (std::size_t k = 0; k < sl.rows * sl.cols; ++k) {
      params[sl.weights + k] = (2.0 * rng.uniform01() - 1.0) * bound;
    }
    // phases stay 0
  }
  const HeadLayout& h = layout.head;
  const double bound = std::sqrt(6.0 / static_cast<double>(h.rows + h.cols));
  for (std::size_t k = 0; k < h.rows * h.cols; ++k) {
    params[h.weights + k] = (2.0 * rng.uniform01() - 1.0) * bound;
  }
  return params;
}

}  // namespace qefl

#pragma once
// Network shape and the flat parameter layout.
//
// All model parameters live in a single flat vector, the unit of mutation,
// noising and aggregation. Packing order: per sine layer the row-major
// weight matrix followed by its phase vector; the affine output head last
// (row-major weights, then bias).

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace qefl {

using ParamVector = std::vector<double>;
using Gradients = std::vector<double>;

struct QennArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;  // one entry per sine layer
  std::size_t output_dim = 0;            // number of classes

  std::size_t n_sine_layers() const { return hidden_dims.size(); }

  std::size_t last_hidden() const {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
  }

  std::size_t param_count() const {
    std::size_t total = 0;
    std::size_t prev = input_dim;
    for (std::size_t d : hidden_dims) {
      total += d * prev + d;
      prev = d;
    }
    total += output_dim * prev + output_dim;
    return total;
  }

  bool operator==(const QennArchitecture&) const = default;
};

inline void validate(const QennArchitecture& arch) {
  if (arch.input_dim == 0) {
    throw std::invalid_argument("architecture: input_dim must be >= 1");
  }
  if (arch.hidden_dims.empty()) {
    throw std::invalid_argument("architecture: at least one hidden layer required");
  }
  for (std::size_t d : arch.hidden_dims) {
    if (d == 0) {
      throw std::invalid_argument("architecture: hidden dims must be >= 1");
    }
  }
  if (arch.output_dim == 0) {
    throw std::invalid_argument("architecture: output_dim must be >= 1");
  }
}

// Offsets of each parameter block inside the flat vector.
struct SineLayerLayout {
  std::size_t weights = 0;  // rows x cols, row-major
  std::size_t phase = 0;    // rows
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct HeadLayout {
  std::size_t weights = 0;
  std::size_t bias = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct ParamLayout {
  std::vector<SineLayerLayout> sine;
  HeadLayout head;
  std::size_t total = 0;
};

inline ParamLayout param_layout(const QennArchitecture& arch) {
  ParamLayout layout;
  std::size_t offset = 0;
  std::size_t prev = arch.input_dim;
  layout.sine.reserve(arch.hidden_dims.size());
  for (std::size_t d : arch.hidden_dims) {
    SineLayerLayout l;
    l.rows = d;
    l.cols = prev;
    l.weights = offset;
    offset += d * prev;
    l.phase = offset;
    offset += d;
    layout.sine.push_back(l);
    prev = d;
  }
  layout.head.rows = arch.output_dim;
  layout.head.cols = prev;
  layout.head.weights = offset;
  offset += arch.output_dim * prev;
  layout.head.bias = offset;
  offset += arch.output_dim;
  layout.total = offset;
  return layout;
}

// Structured copies of the flat vector, for inspection and tests.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct SineLayerParams {
  Matrix weights;
  std::vector<double> phase;
};

struct UnpackedParams {
  std::vector<SineLayerParams> sine;
  Matrix head_weights;
  std::vector<double> head_bias;
};

inline void check_param_size(const QennArchitecture& arch, const ParamVector& params) {
  if (params.size() != arch.param_count()) {
    throw std::invalid_argument("params: length does not match architecture parameter count");
  }
}

inline UnpackedParams unpack(const QennArchitecture& arch, const ParamVector& params) {
  check_param_size(arch, params);
  const ParamLayout layout = param_layout(arch);
  UnpackedParams out;
  out.sine.reserve(layout.sine.size());
  for (const SineLayerLayout& l : layout.sine) {
    SineLayerParams sp;
    sp.weights.rows = l.rows;
    sp.weights.cols = l.cols;
    sp.weights.data.assign(params.begin() + static_cast<std::ptrdiff_t>(l.weights),
                           params.begin() + static_cast<std::ptrdiff_t>(l.weights + l.rows * l.cols));
    sp.phase.assign(params.begin() + static_cast<std::ptrdiff_t>(l.phase),
                    params.begin() + static_cast<std::ptrdiff_t>(l.phase + l.rows));
    out.sine.push_back(std::move(sp));
  }
  const HeadLayout& h = layout.head;
  out.head_weights.rows = h.rows;
  out.head_weights.cols = h.cols;
  out.head_weights.data.assign(params.begin() + static_cast<std::ptrdiff_t>(h.weights),
                               params.begin() + static_cast<std::ptrdiff_t>(h.weights + h.rows * h.cols));
  out.head_bias.assign(params.begin() + static_cast<std::ptrdiff_t>(h.bias),
                       params.begin() + static_cast<std::ptrdiff_t>(h.bias + h.rows));
  return out;
}

inline ParamVector pack(const QennArchitecture& arch, const UnpackedParams& unpacked) {
  if (unpacked.sine.size() != arch.hidden_dims.size()) {
    throw std::invalid_argument("pack: sine layer count does not match architecture");
  }
  ParamVector out;
  out.reserve(arch.param_count());
  for (const SineLayerParams& sp : unpacked.sine) {
    out.insert(out.end(), sp.weights.data.begin(), sp.weights.data.end());
    out.insert(out.end(), sp.phase.begin(), sp.phase.end());
  }
  out.insert(out.end(), unpacked.head_weights.data.begin(), unpacked.head_weights.data.end());
  out.insert(out.end(), unpacked.head_bias.begin(), unpacked.head_bias.end());
  if (out.size() != arch.param_count()) {
    throw std::invalid_argument("pack: block sizes do not match architecture");
  }
  return out;
}

}  // namespace qefl

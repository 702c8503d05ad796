#pragma once
// Finite-difference validation of the analytic backward pass. Each draw
// builds a random small architecture, randomizes parameters (including
// phases), and compares every coordinate of the analytic gradient of a
// single-example cross-entropy loss against central differences.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qefl/arch.hpp"
#include "qefl/network.hpp"
#include "qefl/rng.hpp"

namespace qefl {

struct GradCheckOptions {
  std::size_t draws = 100;
  double step = 1e-5;       // central-difference h
  double threshold = 1e-5;  // max allowed relative error
  double inject_error = 0.0;  // test fixture: corrupt one analytic entry by this factor
};

struct GradCheckWorst {
  std::string location;  // e.g. "layer2.weights", "head.bias"
  std::size_t draw = 0;
  std::size_t param_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::vector<GradCheckWorst> worst_by_location;
};

namespace detail {

// Relative error with a unit floor, so near-zero gradients are compared
// absolutely: |a - n| / max(1, |a|, |n|).
inline double grad_rel_err(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

inline std::string block_location(const ParamLayout& layout, std::size_t index) {
  for (std::size_t l = 0; l < layout.sine.size(); ++l) {
    const SineLayerLayout& sl = layout.sine[l];
    if (index < sl.phase) {
      return "layer" + std::to_string(l + 1) + ".weights";
    }
    if (index < sl.phase + sl.rows) {
      return "layer" + std::to_string(l + 1) + ".phase";
    }
  }
  return index < layout.head.bias ? "head.weights" : "head.bias";
}

}  // namespace detail

inline GradCheckReport run_gradcheck(std::uint64_t seed, GradCheckOptions opts = {}) {
  GradCheckReport report;
  std::vector<GradCheckWorst> worst;  // one slot per distinct location seen

  SplitRng root(seed);
  for (std::size_t draw = 0; draw < opts.draws; ++draw) {
    SplitRng rng = root.derive(draw);

    QennArchitecture arch;
    arch.input_dim = 2 + rng.below(4);
    const std::size_t depth = 1 + rng.below(3);
    for (std::size_t l = 0; l < depth; ++l) {
      arch.hidden_dims.push_back(2 + rng.below(5));
    }
    arch.output_dim = 2 + rng.below(3);

    ParamVector params = init_params(arch, rng.next_u64());
    for (double& v : params) {
      v += 0.3 * rng.gaussian();  // phases and biases leave zero
    }
    Example ex;
    ex.features.resize(arch.input_dim);
    for (double& f : ex.features) {
      f = rng.gaussian();
    }
    ex.label = rng.below(arch.output_dim);

    ActivationCache cache;
    std::vector<double> dlogits;
    Gradients analytic(params.size(), 0.0);
    example_gradient(arch, params, ex, cache, dlogits, analytic);
    if (opts.inject_error != 0.0) {
      const std::size_t victim = params.size() / 2;
      analytic[victim] += opts.inject_error * (std::abs(analytic[victim]) + 1.0);
    }

    const ParamLayout layout = param_layout(arch);
    ParamVector probe = params;
    for (std::size_t j = 0; j < params.size(); ++j) {
      probe[j] = params[j] + opts.step;
      const double loss_hi = softmax_cross_entropy(forward(arch, probe, ex.features), ex.label);
      probe[j] = params[j] - opts.step;
      const double loss_lo = softmax_cross_entropy(forward(arch, probe, ex.features), ex.label);
      probe[j] = params[j];
      const double numeric = (loss_hi - loss_lo) / (2.0 * opts.step);
      const double err = detail::grad_rel_err(analytic[j], numeric);
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
      }
      const std::string loc = detail::block_location(layout, j);
      bool found = false;
      for (GradCheckWorst& w : worst) {
        if (w.location == loc) {
          found = true;
          if (err > w.rel_err) {
            w = {loc, draw, j, analytic[j], numeric, err};
          }
          break;
        }
      }
      if (!found) {
        worst.push_back({loc, draw, j, analytic[j], numeric, err});
      }
    }
  }

  report.worst_by_location = std::move(worst);
  report.pass = report.max_rel_err < opts.threshold;
  return report;
}

}  // namespace qefl

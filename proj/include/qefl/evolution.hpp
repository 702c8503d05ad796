#pragma once
// Gaussian mutation of parameter vectors, best-of-K variant selection, and
// an empirical estimator for the improvement-probability claim.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qefl/arch.hpp"
#include "qefl/data.hpp"
#include "qefl/network.hpp"
#include "qefl/rng.hpp"

namespace qefl {

struct MutationConfig {
  double sigma = 0.1;         // mutation standard deviation
  std::size_t variants = 10;  // perturbed copies per client per round
};

inline void validate(const MutationConfig& cfg) {
  if (!(cfg.sigma >= 0.0) || !std::isfinite(cfg.sigma)) {
    throw std::invalid_argument("mutation_sigma: must be finite and >= 0");
  }
  if (cfg.variants == 0) {
    throw std::invalid_argument("variants: must be >= 1");
  }
}

// params + N(0, sigma^2 I). sigma == 0 returns an identical copy and
// consumes no draws.
inline ParamVector mutate(const ParamVector& params, double sigma, SplitRng& rng) {
  if (!(sigma >= 0.0)) {
    throw std::invalid_argument("mutate: sigma must be >= 0");
  }
  ParamVector out = params;
  if (sigma == 0.0) {
    return out;
  }
  for (double& v : out) {
    v += sigma * rng.gaussian();
  }
  return out;
}

struct VariantOutcome {
  std::size_t variant_index = 0;  // 1-based
  ParamVector params;
  double loss = 0.0;
};

// Minimal loss; ties broken by the lowest variant index.
inline const VariantOutcome& select_best(const std::vector<VariantOutcome>& outcomes) {
  if (outcomes.empty()) {
    throw std::invalid_argument("select_best: empty outcome list");
  }
  const VariantOutcome* best = &outcomes[0];
  for (const VariantOutcome& o : outcomes) {
    if (o.loss < best->loss || (o.loss == best->loss && o.variant_index < best->variant_index)) {
      best = &o;
    }
  }
  return *best;
}

// For every population size 1..max_variants, the fraction of trials in which
// the best of the first k fresh mutations strictly improves on the
// unperturbed local loss. All sizes share one pool of draws per trial, so
// the profile is non-decreasing by construction. No fine-tuning happens
// here; this tests the bare perturbation claim.
inline std::vector<double> improvement_frequency_profile(const QennArchitecture& arch,
                                                         const ParamVector& params,
                                                         const Dataset& data, double sigma,
                                                         std::size_t max_variants,
                                                         std::size_t trials, SplitRng rng) {
  if (max_variants == 0) {
    throw std::invalid_argument("improvement_frequency_profile: max_variants must be >= 1");
  }
  if (trials == 0) {
    throw std::invalid_argument("improvement_frequency_profile: trials must be >= 1");
  }
  const double baseline = local_loss(arch, params, data);
  std::vector<std::size_t> hits(max_variants, 0);
  for (std::size_t t = 0; t < trials; ++t) {
    SplitRng trial_rng = rng.derive(t);
    double best = baseline;
    for (std::size_t k = 0; k < max_variants; ++k) {
      SplitRng variant_rng = trial_rng.derive(k);
      const ParamVector candidate = mutate(params, sigma, variant_rng);
      const double loss = local_loss(arch, candidate, data);
      if (loss < best) {
        best = loss;
      }
      if (best < baseline) {
        ++hits[k];
      }
    }
  }
  std::vector<double> freq(max_variants);
  for (std::size_t k = 0; k < max_variants; ++k) {
    freq[k] = static_cast<double>(hits[k]) / static_cast<double>(trials);
  }
  return freq;
}

// Fraction of trials where the best of `variants` mutations strictly beats
// the unperturbed loss.
inline double estimate_improvement_probability(const QennArchitecture& arch,
                                               const ParamVector& params, const Dataset& data,
                                               double sigma, std::size_t variants,
                                               std::size_t trials, SplitRng rng) {
  return improvement_frequency_profile(arch, params, data, sigma, variants, trials, rng).back();
}

}  // namespace qefl

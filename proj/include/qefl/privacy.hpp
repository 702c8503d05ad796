#pragma once
// Gaussian-mechanism noising of released client models, optional update
// clipping to bound sensitivity, and per-round (epsilon, delta) accounting
// with naive linear composition.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qefl/arch.hpp"
#include "qefl/rng.hpp"

namespace qefl {

struct PrivacyConfig {
  double noise_sigma = 0.01;        // std of the release noise
  std::optional<double> clip_norm;  // L2 bound on the update; disabled when absent
  bool enabled = true;
};

inline void validate(const PrivacyConfig& cfg) {
  if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma)) {
    throw std::invalid_argument("noise_sigma: must be finite and >= 0");
  }
  if (cfg.clip_norm && !(*cfg.clip_norm > 0.0)) {
    throw std::invalid_argument("clip_norm: must be > 0 when set");
  }
}

// params + N(0, noise_sigma^2 I). noise_sigma == 0 is the identity and
// consumes no draws.
inline ParamVector add_noise(const ParamVector& params, double noise_sigma, SplitRng& rng) {
  if (!(noise_sigma >= 0.0)) {
    throw std::invalid_argument("add_noise: noise_sigma must be >= 0");
  }
  ParamVector out = params;
  if (noise_sigma == 0.0) {
    return out;
  }
  for (double& v : out) {
    v += noise_sigma * rng.gaussian();
  }
  return out;
}

inline double l2_distance(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("l2_distance: length mismatch");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

// Rescales the update u = selected - global onto the L2 ball of radius
// clip_norm; updates already inside the ball pass through unchanged.
inline ParamVector clip_update(const ParamVector& selected, const ParamVector& global,
                               double clip_norm) {
  if (!(clip_norm > 0.0)) {
    throw std::invalid_argument("clip_update: clip_norm must be > 0");
  }
  const double norm = l2_distance(selected, global);
  if (norm <= clip_norm) {
    return selected;
  }
  const double scale = clip_norm / norm;
  ParamVector out(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    out[i] = global[i] + (selected[i] - global[i]) * scale;
  }
  return out;
}

// Per-round epsilon of the Gaussian mechanism: sensitivity^2 / (2 sigma^2).
inline double epsilon_for(double sensitivity, double noise_sigma) {
  if (!(sensitivity >= 0.0)) {
    throw std::invalid_argument("epsilon_for: sensitivity must be >= 0");
  }
  if (!(noise_sigma > 0.0)) {
    throw std::invalid_argument("epsilon_for: noise_sigma must be > 0 (epsilon unbounded)");
  }
  return sensitivity * sensitivity / (2.0 * noise_sigma * noise_sigma);
}

struct PrivacyRoundRecord {
  std::size_t round = 0;
  double delta_sensitivity = 0.0;
  double epsilon_round = 0.0;
  double epsilon_total = 0.0;
};

struct PrivacyReport {
  std::size_t rounds_composed = 0;
  double epsilon_total = 0.0;  // naive linear composition across rounds
  double dp_delta = 1e-5;      // the delta of (epsilon, delta); configured, not derived
  bool delta_from_clip = false;  // sensitivity source: clip bound vs observed update norms
  bool unbounded = false;        // some round released with zero noise
  std::vector<PrivacyRoundRecord> rounds;
};

// Records one round. With noise_sigma == 0 the release is unprotected: the
// round is logged with infinite epsilon and the report flagged unbounded.
inline const PrivacyRoundRecord& account_round(PrivacyReport& report, std::size_t round,
                                               double sensitivity, double noise_sigma) {
  double eps;
  if (noise_sigma > 0.0) {
    eps = epsilon_for(sensitivity, noise_sigma);
  } else {
    eps = std::numeric_limits<double>::infinity();
    report.unbounded = true;
  }
  report.epsilon_total += eps;
  report.rounds_composed += 1;
  report.rounds.push_back({round, sensitivity, eps, report.epsilon_total});
  return report.rounds.back();
}

}  // namespace qefl

#pragma once
// Round orchestration: per-client mutation, local fine-tuning, best-variant
// selection, clipping/noising, optional client dropout, server-side
// averaging, and the Monte-Carlo estimator of the privacy-regularized
// objective.
//
// Stream discipline: the master seed is split into hierarchical streams
// (purpose -> round -> client -> variant) through the helpers in
// `streams`, so concurrent client execution cannot change results.

#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qefl/arch.hpp"
#include "qefl/data.hpp"
#include "qefl/evolution.hpp"
#include "qefl/metrics.hpp"
#include "qefl/network.hpp"
#include "qefl/privacy.hpp"
#include "qefl/rng.hpp"

namespace qefl {

enum class AggregationMode { kUniform, kWeighted };

struct RoundConfig {
  std::size_t n_clients = 5;
  std::size_t local_epochs = 5;
  double learning_rate = 0.05;
  MutationConfig mutation;
  PrivacyConfig privacy;
  std::size_t rounds = 20;
  double dropout_prob = 0.0;
  AggregationMode aggregation = AggregationMode::kUniform;
  std::size_t batch_size = 16;
  std::uint64_t master_seed = 42;
};

inline void validate(const RoundConfig& cfg) {
  if (cfg.n_clients == 0) {
    throw std::invalid_argument("clients: must be >= 1");
  }
  if (cfg.local_epochs == 0) {
    throw std::invalid_argument("local_epochs: must be >= 1");
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate: must be > 0");
  }
  if (cfg.rounds == 0) {
    throw std::invalid_argument("rounds: must be >= 1");
  }
  if (!(cfg.dropout_prob >= 0.0 && cfg.dropout_prob <= 1.0)) {
    throw std::invalid_argument("dropout_prob: must be in [0, 1]");
  }
  if (cfg.batch_size == 0) {
    throw std::invalid_argument("batch_size: must be >= 1");
  }
  validate(cfg.mutation);
  validate(cfg.privacy);
}

struct ClientState {
  std::size_t client_id = 0;
  Dataset shard;
};

// Public stream derivations; tests and oracles reproduce runs through these.
namespace streams {

inline SplitRng dropout(std::uint64_t master_seed, std::size_t round) {
  return SplitRng(master_seed).derive(stream::kDropout, round);
}

inline SplitRng mutation(std::uint64_t master_seed, std::size_t round, std::size_t client,
                         std::size_t variant) {
  return SplitRng(master_seed).derive(stream::kMutation, round, client, variant);
}

inline SplitRng shuffle(std::uint64_t master_seed, std::size_t round, std::size_t client,
                        std::size_t variant) {
  return SplitRng(master_seed).derive(stream::kShuffle, round, client, variant);
}

inline SplitRng noise(std::uint64_t master_seed, std::size_t round, std::size_t client) {
  return SplitRng(master_seed).derive(stream::kNoise, round, client);
}

}  // namespace streams

struct ClientRoundResult {
  ParamVector released;          // post-clip, post-noise
  double best_loss = 0.0;        // selected variant's local loss, before noise
  std::size_t best_variant = 0;  // 1-based
  double update_norm = 0.0;      // ||released_pre_noise - theta_global||_2
};

// One client's round: spawn K mutations of the global model, fine-tune each
// for E local epochs, evaluate, keep the best, then clip and noise the
// release.
inline ClientRoundResult client_round(const QennArchitecture& arch, const ParamVector& theta_global,
                                      const ClientState& client, const RoundConfig& cfg,
                                      std::size_t round) {
  if (client.shard.empty()) {
    throw std::invalid_argument("client_round: client shard is empty");
  }
  std::vector<VariantOutcome> outcomes;
  outcomes.reserve(cfg.mutation.variants);
  for (std::size_t k = 1; k <= cfg.mutation.variants; ++k) {
    SplitRng mutation_rng = streams::mutation(cfg.master_seed, round, client.client_id, k);
    ParamVector candidate = mutate(theta_global, cfg.mutation.sigma, mutation_rng);
    SplitRng shuffle_rng = streams::shuffle(cfg.master_seed, round, client.client_id, k);
    candidate = train_epochs(arch, std::move(candidate), client.shard, cfg.local_epochs,
                             cfg.learning_rate, cfg.batch_size, shuffle_rng);
    const double loss = local_loss(arch, candidate, client.shard);
    outcomes.push_back({k, std::move(candidate), loss});
  }
  const VariantOutcome& best = select_best(outcomes);

  ClientRoundResult result;
  result.best_loss = best.loss;
  result.best_variant = best.variant_index;
  result.released = best.params;
  if (cfg.privacy.enabled && cfg.privacy.clip_norm) {
    result.released = clip_update(result.released, theta_global, *cfg.privacy.clip_norm);
  }
  result.update_norm = l2_distance(result.released, theta_global);
  if (cfg.privacy.enabled && cfg.privacy.noise_sigma > 0.0) {
    SplitRng noise_rng = streams::noise(cfg.master_seed, round, client.client_id);
    result.released = add_noise(result.released, cfg.privacy.noise_sigma, noise_rng);
  }
  return result;
}

// Elementwise (weighted) mean via a running incremental mean, so averaging
// identical models reproduces them bitwise. Weights, when given, are the
// client example counts.
inline ParamVector aggregate(const std::vector<ParamVector>& models,
                             const std::vector<double>* weights = nullptr) {
  if (models.empty()) {
    throw std::invalid_argument("aggregate: empty model list");
  }
  const std::size_t p = models[0].size();
  for (const ParamVector& m : models) {
    if (m.size() != p) {
      throw std::invalid_argument("aggregate: model length mismatch");
    }
  }
  if (weights != nullptr) {
    if (weights->size() != models.size()) {
      throw std::invalid_argument("aggregate: weight count mismatch");
    }
    for (double w : *weights) {
      if (!(w > 0.0)) {
        throw std::invalid_argument("aggregate: weights must be positive");
      }
    }
  }

  ParamVector mean = models[0];
  double weight_sum = weights ? (*weights)[0] : 1.0;
  for (std::size_t i = 1; i < models.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    weight_sum += w;
    const double t = w / weight_sum;
    const ParamVector& m = models[i];
    for (std::size_t j = 0; j < p; ++j) {
      mean[j] += t * (m[j] - mean[j]);
    }
  }
  return mean;
}

struct RoundOutcome {
  std::size_t round = 0;  // 1-based
  ParamVector theta;      // new global model
  std::vector<std::size_t> participants;
  std::vector<double> client_best_losses;  // parallel to participants
  double train_loss = 0.0;                 // size-weighted local loss of the new global model
  bool empty_round = false;                // all clients dropped; model unchanged
  PrivacyRoundRecord privacy;
};

// Size-weighted mean of the per-client local losses: sum_i (n_i / n) L_i.
inline double global_train_loss(const QennArchitecture& arch, const ParamVector& params,
                                const std::vector<ClientState>& clients) {
  double total_examples = 0.0;
  for (const ClientState& c : clients) {
    total_examples += static_cast<double>(c.shard.size());
  }
  double loss = 0.0;
  for (const ClientState& c : clients) {
    loss += (static_cast<double>(c.shard.size()) / total_examples) *
            local_loss(arch, params, c.shard);
  }
  return loss;
}

inline RoundOutcome run_round(const QennArchitecture& arch, const ParamVector& theta_global,
                              const std::vector<ClientState>& clients, const RoundConfig& cfg,
                              std::size_t round, PrivacyReport& report, bool parallel = false) {
  if (clients.empty()) {
    throw std::invalid_argument("run_round: need at least one client");
  }

  // Dropout draws happen sequentially in client order, from the round's own
  // stream, so serial and parallel execution see the same participant set.
  SplitRng dropout_rng = streams::dropout(cfg.master_seed, round);
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    if (dropout_rng.uniform01() >= cfg.dropout_prob) {
      survivors.push_back(i);
    }
  }

  RoundOutcome outcome;
  outcome.round = round;
  if (survivors.empty()) {
    outcome.theta = theta_global;
    outcome.empty_round = true;
    outcome.train_loss = global_train_loss(arch, theta_global, clients);
    // Nothing was released; no privacy budget is spent.
    outcome.privacy = {round, 0.0, 0.0, report.epsilon_total};
    return outcome;
  }

  std::vector<ClientRoundResult> results(survivors.size());
  if (parallel && survivors.size() > 1) {
    std::vector<std::future<ClientRoundResult>> futures;
    futures.reserve(survivors.size());
    for (std::size_t s = 0; s < survivors.size(); ++s) {
      const ClientState& client = clients[survivors[s]];
      futures.push_back(std::async(std::launch::async, [&arch, &theta_global, &client, &cfg,
                                                        round] {
        return client_round(arch, theta_global, client, cfg, round);
      }));
    }
    for (std::size_t s = 0; s < survivors.size(); ++s) {
      results[s] = futures[s].get();
    }
  } else {
    for (std::size_t s = 0; s < survivors.size(); ++s) {
      results[s] = client_round(arch, theta_global, clients[survivors[s]], cfg, round);
    }
  }

  std::vector<ParamVector> models;
  std::vector<double> weights;
  models.reserve(results.size());
  weights.reserve(results.size());
  double max_update_norm = 0.0;
  for (std::size_t s = 0; s < survivors.size(); ++s) {
    models.push_back(std::move(results[s].released));
    weights.push_back(static_cast<double>(clients[survivors[s]].shard.size()));
    outcome.participants.push_back(clients[survivors[s]].client_id);
    outcome.client_best_losses.push_back(results[s].best_loss);
    if (results[s].update_norm > max_update_norm) {
      max_update_norm = results[s].update_norm;
    }
  }
  outcome.theta = aggregate(models, cfg.aggregation == AggregationMode::kWeighted ? &weights
                                                                                  : nullptr);
  outcome.train_loss = global_train_loss(arch, outcome.theta, clients);

  if (cfg.privacy.enabled) {
    const double sensitivity = cfg.privacy.clip_norm ? *cfg.privacy.clip_norm : max_update_norm;
    outcome.privacy = account_round(report, round, sensitivity, cfg.privacy.noise_sigma);
  } else {
    report.unbounded = true;
    report.epsilon_total = std::numeric_limits<double>::infinity();
    outcome.privacy = {round, max_update_norm, std::numeric_limits<double>::infinity(),
                       report.epsilon_total};
  }
  return outcome;
}

struct TrainingHistory {
  std::vector<RoundOutcome> outcomes;
  std::vector<RoundMetrics> metrics;
};

struct TrainingResult {
  ParamVector theta;
  TrainingHistory history;
};

// R sequential rounds from theta; the global model is evaluated on the
// held-out test set after every round. on_round, when set, receives each
// round's metrics as they are produced.
inline TrainingResult run_training(const QennArchitecture& arch, ParamVector theta,
                                   const std::vector<ClientState>& clients, const RoundConfig& cfg,
                                   const Dataset& test_set, PrivacyReport& report,
                                   const std::function<void(const RoundMetrics&)>& on_round = {},
                                   bool parallel = false) {
  validate(cfg);
  validate(arch);
  check_param_size(arch, theta);
  if (clients.size() != cfg.n_clients) {
    throw std::invalid_argument("clients: client list does not match configured count");
  }
  for (const ClientState& c : clients) {
    if (c.shard.empty()) {
      throw std::invalid_argument("clients: every client needs a non-empty shard");
    }
  }
  report.delta_from_clip = cfg.privacy.clip_norm.has_value();

  TrainingResult result;
  result.history.outcomes.reserve(cfg.rounds);
  result.history.metrics.reserve(cfg.rounds);
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    RoundOutcome outcome = run_round(arch, theta, clients, cfg, round, report, parallel);
    theta = outcome.theta;
    const EvalResult eval = evaluate(arch, theta, test_set);
    const RoundMetrics metrics{round, eval.accuracy, eval.macro_f1, eval.mean_loss,
                               report.epsilon_total};
    result.history.outcomes.push_back(std::move(outcome));
    result.history.metrics.push_back(metrics);
    if (on_round) {
      on_round(metrics);
    }
  }
  result.theta = std::move(theta);
  return result;
}

struct ObjectiveEstimateConfig {
  double lambda = 0.0;          // weight of the noise penalty term
  std::size_t mc_samples = 1;
};

// Monte-Carlo estimate of the privacy-regularized objective
//   sum_i (n_i/n) E[ min_k L_i(theta + eps_k) + (lambda/2) ||delta_i||^2 ].
// Per sample and client: K fresh mutations, one noise draw. Degenerate
// noise (sigma = 0, lambda or sigma_p = 0) collapses exactly to the plain
// weighted objective.
inline double estimate_objective(const QennArchitecture& arch, const ParamVector& theta,
                                 const std::vector<ClientState>& clients, const RoundConfig& cfg,
                                 const ObjectiveEstimateConfig& obj_cfg, SplitRng rng) {
  if (obj_cfg.mc_samples == 0) {
    throw std::invalid_argument("estimate_objective: mc_samples must be >= 1");
  }
  if (!(obj_cfg.lambda >= 0.0)) {
    throw std::invalid_argument("estimate_objective: lambda must be >= 0");
  }
  double total_examples = 0.0;
  for (const ClientState& c : clients) {
    total_examples += static_cast<double>(c.shard.size());
  }

  double mean = 0.0;
  for (std::size_t s = 0; s < obj_cfg.mc_samples; ++s) {
    SplitRng sample_rng = rng.derive(s);
    double value = 0.0;
    for (const ClientState& client : clients) {
      SplitRng client_rng = sample_rng.derive(client.client_id);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k <= cfg.mutation.variants; ++k) {
        SplitRng mutation_rng = client_rng.derive(stream::kMutation, k);
        const ParamVector candidate = mutate(theta, cfg.mutation.sigma, mutation_rng);
        const double loss = local_loss(arch, candidate, client.shard);
        if (loss < best) {
          best = loss;
        }
      }
      double penalty = 0.0;
      if (obj_cfg.lambda > 0.0 && cfg.privacy.noise_sigma > 0.0) {
        SplitRng noise_rng = client_rng.derive(stream::kNoise);
        double norm_sq = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
          const double d = cfg.privacy.noise_sigma * noise_rng.gaussian();
          norm_sq += d * d;
        }
        penalty = 0.5 * obj_cfg.lambda * norm_sq;
      }
      value += (static_cast<double>(client.shard.size()) / total_examples) * (best + penalty);
    }
    mean += (value - mean) / static_cast<double>(s + 1);
  }
  return mean;
}

}  // namespace qefl

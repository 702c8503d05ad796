#pragma once
// Turns a RunConfig into a ready-to-train experiment: dataset generation or
// loading, train/test split, client sharding, and the architecture. The CLI
// and the test suites share this assembly so they always agree on seeds.

#include <stdexcept>
#include <string>
#include <vector>

#include "qefl/config.hpp"
#include "qefl/data.hpp"
#include "qefl/federation.hpp"

namespace qefl {

struct PreparedExperiment {
  QennArchitecture arch;
  Dataset train;
  Dataset test;
  ShardPlan plan;
  std::vector<ClientState> clients;
};

inline void validate_client_count(std::size_t n_clients, std::size_t train_size) {
  if (n_clients > train_size) {
    throw std::invalid_argument("clients: more clients (" + std::to_string(n_clients) +
                                ") than training examples (" + std::to_string(train_size) + ")");
  }
}

inline PreparedExperiment prepare_experiment(const RunConfig& cfg) {
  validate(cfg);
  PreparedExperiment exp;
  if (cfg.dataset == "synthetic") {
    const Dataset full = gen_synthetic(cfg.synthetic_n, cfg.round.master_seed);
    auto [train, test] = train_test_split(full, cfg.test_fraction, cfg.round.master_seed);
    exp.train = std::move(train);
    exp.test = std::move(test);
  } else {
    exp.train = load_idx(cfg.idx_train_images, cfg.idx_train_labels);
    exp.test = load_idx(cfg.idx_test_images, cfg.idx_test_labels);
    if (exp.train.input_dim != exp.test.input_dim) {
      throw std::invalid_argument("idx_test_images: dimension differs from the training images");
    }
  }
  validate_client_count(cfg.round.n_clients, exp.train.size());

  exp.plan = cfg.shard == "dirichlet"
                 ? shard_dirichlet(exp.train, cfg.round.n_clients, cfg.dirichlet_alpha,
                                   cfg.round.master_seed)
                 : shard_iid(exp.train, cfg.round.n_clients, cfg.round.master_seed);
  std::vector<Dataset> shards = materialize_shards(exp.train, exp.plan);
  exp.clients.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    exp.clients.push_back({i, std::move(shards[i])});
  }

  exp.arch.input_dim = exp.train.input_dim;
  exp.arch.hidden_dims = cfg.hidden_dims;
  exp.arch.output_dim = exp.train.n_classes;
  validate(exp.arch);
  return exp;
}

}  // namespace qefl

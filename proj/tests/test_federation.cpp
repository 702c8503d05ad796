#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "qefl/experiment.hpp"
#include "qefl/federation.hpp"

using namespace qefl;

namespace {

RoundConfig degenerate_config(std::uint64_t seed, std::size_t epochs, double lr,
                              std::size_t batch) {
  RoundConfig cfg;
  cfg.n_clients = 1;
  cfg.local_epochs = epochs;
  cfg.learning_rate = lr;
  cfg.mutation = {0.0, 1};
  cfg.privacy = {0.0, std::nullopt, true};
  cfg.rounds = 3;
  cfg.dropout_prob = 0.0;
  cfg.batch_size = batch;
  cfg.master_seed = seed;
  return cfg;
}

std::vector<ClientState> single_client(const Dataset& shard) {
  return {{0, shard}};
}

}  // namespace

TEST_CASE("aggregate") {
  SUBCASE("identical models reproduce bitwise") {
    const ParamVector model{0.1, -0.2, 0.3};
    const std::vector<ParamVector> models{model, model, model};
    CHECK(aggregate(models) == model);
  }
  SUBCASE("uniform mean arithmetic") {
    const std::vector<ParamVector> models{{0.0, 0.0}, {2.0, 4.0}};
    const ParamVector mean = aggregate(models);
    CHECK(mean[0] == doctest::Approx(1.0));
    CHECK(mean[1] == doctest::Approx(2.0));
  }
  SUBCASE("weighted mean arithmetic") {
    const std::vector<ParamVector> models{{0.0, 0.0}, {4.0, 4.0}};
    const std::vector<double> weights{1.0, 3.0};
    const ParamVector mean = aggregate(models, &weights);
    CHECK(mean[0] == doctest::Approx(3.0));
    CHECK(mean[1] == doctest::Approx(3.0));
  }
  SUBCASE("independent mean oracle on random inputs") {
    SplitRng rng(41);
    for (int rep = 0; rep < 50; ++rep) {
      const std::size_t n = 2 + rng.below(6);
      const std::size_t p = 1 + rng.below(8);
      std::vector<ParamVector> models(n, ParamVector(p));
      std::vector<double> weights(n);
      for (auto& m : models) {
        for (double& v : m) {
          v = 4.0 * rng.gaussian();
        }
      }
      for (double& w : weights) {
        w = 0.5 + rng.uniform01();
      }
      const ParamVector uniform = aggregate(models);
      const ParamVector weighted = aggregate(models, &weights);
      double wsum = 0.0;
      for (double w : weights) {
        wsum += w;
      }
      for (std::size_t j = 0; j < p; ++j) {
        double acc = 0.0;
        double wacc = 0.0;
        double lo = models[0][j], hi = models[0][j];
        for (std::size_t i = 0; i < n; ++i) {
          acc += models[i][j];
          wacc += weights[i] * models[i][j];
          lo = std::min(lo, models[i][j]);
          hi = std::max(hi, models[i][j]);
        }
        CHECK(uniform[j] == doctest::Approx(acc / static_cast<double>(n)).epsilon(1e-12));
        CHECK(weighted[j] == doctest::Approx(wacc / wsum).epsilon(1e-12));
        // uniform mean stays inside the coordinatewise hull
        CHECK(uniform[j] >= lo - 1e-12);
        CHECK(uniform[j] <= hi + 1e-12);
      }
      // permutation invariance up to roundoff
      std::vector<ParamVector> shuffled = models;
      std::reverse(shuffled.begin(), shuffled.end());
      const ParamVector again = aggregate(shuffled);
      for (std::size_t j = 0; j < p; ++j) {
        CHECK(again[j] == doctest::Approx(uniform[j]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
    CHECK_THROWS_AS(aggregate({{1.0, 2.0}, {1.0}}), std::invalid_argument);
    const std::vector<ParamVector> models{{1.0}, {2.0}};
    const std::vector<double> bad_weights{1.0, 0.0};
    CHECK_THROWS_AS(aggregate(models, &bad_weights), std::invalid_argument);
  }
}

TEST_CASE("client_round") {
  const QennArchitecture arch{10, {6}, 2};
  const Dataset shard = gen_synthetic(40, 99);
  const ParamVector theta = init_params(arch, 99);

  SUBCASE("all randomness and learning disabled returns the global model") {
    RoundConfig cfg = degenerate_config(5, 2, 0.0, 8);
    // learning_rate 0 bypasses the normal config validation on purpose
    const ClientRoundResult r = client_round(arch, theta, {0, shard}, cfg, 1);
    CHECK(r.released == theta);
    CHECK(r.best_variant == 1);
    CHECK(r.update_norm == 0.0);
  }
  SUBCASE("degenerate settings reduce to plain local SGD") {
    RoundConfig cfg = degenerate_config(5, 3, 0.05, 8);
    const ClientRoundResult r = client_round(arch, theta, {0, shard}, cfg, 2);

    SplitRng oracle_rng = streams::shuffle(cfg.master_seed, 2, 0, 1);
    const ParamVector expected =
        train_epochs(arch, theta, shard, 3, 0.05, 8, oracle_rng);
    CHECK(r.released == expected);
    CHECK(r.best_loss == doctest::Approx(local_loss(arch, expected, shard)).epsilon(1e-15));
  }
  SUBCASE("best_loss is the minimum over the fine-tuned variants, by rng replay") {
    RoundConfig cfg = degenerate_config(5, 2, 0.05, 8);
    cfg.mutation = {0.1, 4};
    const ClientRoundResult r = client_round(arch, theta, {0, shard}, cfg, 3);

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= 4; ++k) {
      SplitRng mut = streams::mutation(cfg.master_seed, 3, 0, k);
      ParamVector candidate = mutate(theta, 0.1, mut);
      SplitRng shf = streams::shuffle(cfg.master_seed, 3, 0, k);
      candidate = train_epochs(arch, std::move(candidate), shard, 2, 0.05, 8, shf);
      best = std::min(best, local_loss(arch, candidate, shard));
    }
    CHECK(r.best_loss == best);
  }
  SUBCASE("noise is applied after selection") {
    RoundConfig cfg = degenerate_config(5, 1, 0.05, 8);
    cfg.privacy = {0.05, std::nullopt, true};
    const ClientRoundResult noisy = client_round(arch, theta, {0, shard}, cfg, 1);
    cfg.privacy = {0.0, std::nullopt, true};
    const ClientRoundResult clean = client_round(arch, theta, {0, shard}, cfg, 1);
    CHECK(noisy.released != clean.released);
    CHECK(noisy.best_loss == clean.best_loss);
    CHECK(noisy.update_norm == clean.update_norm);  // norm measured pre-noise
  }
  SUBCASE("clipping bounds the released update") {
    RoundConfig cfg = degenerate_config(5, 3, 0.5, 4);  // large steps
    cfg.privacy = {0.0, 0.01, true};
    const ClientRoundResult r = client_round(arch, theta, {0, shard}, cfg, 1);
    CHECK(r.update_norm <= 0.01 + 1e-12);
  }
}

TEST_CASE("run_round") {
  const QennArchitecture arch{10, {6}, 2};
  const Dataset data = gen_synthetic(60, 123);
  const ParamVector theta = init_params(arch, 123);

  SUBCASE("full dropout is a flagged no-op") {
    RoundConfig cfg = degenerate_config(5, 1, 0.05, 8);
    cfg.dropout_prob = 1.0;
    PrivacyReport report;
    const RoundOutcome out = run_round(arch, theta, single_client(data), cfg, 1, report);
    CHECK(out.empty_round);
    CHECK(out.theta == theta);
    CHECK(out.participants.empty());
    CHECK(report.rounds_composed == 0);  // nothing released, no budget spent
    CHECK(out.privacy.epsilon_round == 0.0);
  }
  SUBCASE("identical client updates aggregate to that update") {
    // single-example identical shards make every client's batch gradient,
    // and so its update, bitwise identical regardless of shuffle order
    Dataset one;
    one.input_dim = 10;
    one.n_classes = 2;
    one.examples = {data.examples[0]};
    RoundConfig cfg = degenerate_config(5, 2, 0.05, 4);
    cfg.n_clients = 3;
    const std::vector<ClientState> clients{{0, one}, {1, one}, {2, one}};
    PrivacyReport report;
    const RoundOutcome out = run_round(arch, theta, clients, cfg, 1, report);

    SplitRng oracle = streams::shuffle(cfg.master_seed, 1, 0, 1);
    const ParamVector update = train_epochs(arch, theta, one, 2, 0.05, 4, oracle);
    CHECK(out.theta == update);
  }
  SUBCASE("privacy accounting uses the clip bound when clipping is on") {
    RoundConfig cfg = degenerate_config(5, 2, 0.5, 4);
    cfg.privacy = {1.0, 0.5, true};
    PrivacyReport report;
    run_round(arch, theta, single_client(data), cfg, 1, report);
    REQUIRE(report.rounds.size() == 1);
    CHECK(report.rounds[0].delta_sensitivity == 0.5);
    CHECK(report.rounds[0].epsilon_round == doctest::Approx(0.125));
  }
  SUBCASE("without clipping the observed update norm is recorded") {
    RoundConfig cfg = degenerate_config(5, 2, 0.05, 4);
    cfg.privacy = {1.0, std::nullopt, true};
    PrivacyReport report;
    const RoundOutcome out = run_round(arch, theta, single_client(data), cfg, 1, report);
    REQUIRE(report.rounds.size() == 1);
    CHECK(report.rounds[0].delta_sensitivity > 0.0);
    CHECK(out.privacy.delta_sensitivity == report.rounds[0].delta_sensitivity);
  }
  SUBCASE("disabled privacy leaves epsilon unbounded") {
    RoundConfig cfg = degenerate_config(5, 1, 0.05, 8);
    cfg.privacy.enabled = false;
    PrivacyReport report;
    const RoundOutcome out = run_round(arch, theta, single_client(data), cfg, 1, report);
    CHECK(report.unbounded);
    CHECK(std::isinf(out.privacy.epsilon_round));
  }
}

TEST_CASE("run_training") {
  const QennArchitecture arch{10, {6}, 2};
  const Dataset full = gen_synthetic(120, 321);
  const auto [train, test] = train_test_split(full, 0.25, 321);

  SUBCASE("degenerate pipeline is bitwise-identical to centralized SGD") {
    for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
      RoundConfig cfg = degenerate_config(seed, 2, 0.08, 16);
      cfg.rounds = 4;
      const ParamVector theta0 = init_params(arch, seed);

      PrivacyReport report;
      const TrainingResult fed =
          run_training(arch, theta0, single_client(train), cfg, test, report);

      ParamVector central = theta0;
      for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        SplitRng rng = streams::shuffle(cfg.master_seed, round, 0, 1);
        central = train_epochs(arch, std::move(central), train, cfg.local_epochs,
                               cfg.learning_rate, cfg.batch_size, rng);
      }
      CHECK(fed.theta == central);
    }
  }
  SUBCASE("history length and determinism") {
    RoundConfig cfg = degenerate_config(7, 1, 0.05, 16);
    cfg.rounds = 1;
    const ParamVector theta0 = init_params(arch, 7);
    PrivacyReport r1;
    const TrainingResult a = run_training(arch, theta0, single_client(train), cfg, test, r1);
    CHECK(a.history.metrics.size() == 1);
    CHECK(a.history.outcomes.size() == 1);

    cfg.rounds = 3;
    cfg.mutation = {0.05, 2};
    cfg.privacy = {0.01, std::nullopt, true};
    PrivacyReport r2;
    const TrainingResult b = run_training(arch, theta0, single_client(train), cfg, test, r2);
    PrivacyReport r3;
    const TrainingResult c = run_training(arch, theta0, single_client(train), cfg, test, r3);
    CHECK(b.theta == c.theta);
    REQUIRE(b.history.metrics.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(b.history.metrics[i].accuracy == c.history.metrics[i].accuracy);
      CHECK(b.history.metrics[i].mean_loss == c.history.metrics[i].mean_loss);
      CHECK(b.history.metrics[i].epsilon_total == c.history.metrics[i].epsilon_total);
      CHECK(b.history.outcomes[i].train_loss == c.history.outcomes[i].train_loss);
    }
  }
  SUBCASE("parallel client execution changes nothing") {
    RoundConfig cfg;
    cfg.n_clients = 3;
    cfg.local_epochs = 2;
    cfg.learning_rate = 0.05;
    cfg.mutation = {0.05, 2};
    cfg.privacy = {0.01, std::nullopt, true};
    cfg.rounds = 2;
    cfg.batch_size = 8;
    cfg.master_seed = 99;

    const ShardPlan plan = shard_iid(train, 3, 99);
    std::vector<Dataset> shards = materialize_shards(train, plan);
    std::vector<ClientState> clients;
    for (std::size_t i = 0; i < 3; ++i) {
      clients.push_back({i, shards[i]});
    }
    const ParamVector theta0 = init_params(arch, 99);
    PrivacyReport ra, rb;
    const TrainingResult serial =
        run_training(arch, theta0, clients, cfg, test, ra, {}, false);
    const TrainingResult parallel =
        run_training(arch, theta0, clients, cfg, test, rb, {}, true);
    CHECK(serial.theta == parallel.theta);
    CHECK(ra.epsilon_total == rb.epsilon_total);
  }
  SUBCASE("config invariants are enforced") {
    RoundConfig cfg = degenerate_config(7, 1, 0.05, 16);
    cfg.rounds = 0;
    PrivacyReport report;
    CHECK_THROWS_AS(
        run_training(arch, init_params(arch, 7), single_client(train), cfg, test, report),
        std::invalid_argument);
  }
}

TEST_CASE("estimate_objective") {
  const QennArchitecture arch{10, {4}, 2};
  const Dataset data = gen_synthetic(60, 17);
  const ShardPlan plan = shard_iid(data, 2, 17);
  std::vector<Dataset> shards = materialize_shards(data, plan);
  const std::vector<ClientState> clients{{0, shards[0]}, {1, shards[1]}};
  const ParamVector theta = init_params(arch, 17);

  RoundConfig cfg;
  cfg.n_clients = 2;
  cfg.mutation = {0.05, 2};
  cfg.privacy = {0.02, std::nullopt, true};

  SUBCASE("degenerate noise collapses to the weighted plain objective") {
    RoundConfig quiet = cfg;
    quiet.mutation.sigma = 0.0;
    quiet.privacy.noise_sigma = 0.0;
    const double est = estimate_objective(arch, theta, clients, quiet, {0.5, 4}, SplitRng(1));
    double expected = 0.0;
    const double n = static_cast<double>(data.size());
    for (const ClientState& c : clients) {
      expected += (static_cast<double>(c.shard.size()) / n) * local_loss(arch, theta, c.shard);
    }
    CHECK(est == expected);
  }
  SUBCASE("lambda zero ignores the noise draws") {
    RoundConfig quiet = cfg;
    quiet.privacy.noise_sigma = 0.0;
    const double with_noise_cfg = estimate_objective(arch, theta, clients, cfg, {0.0, 6}, SplitRng(2));
    const double without = estimate_objective(arch, theta, clients, quiet, {0.0, 6}, SplitRng(2));
    CHECK(with_noise_cfg == without);
  }
  SUBCASE("replayed-draw oracle") {
    const ObjectiveEstimateConfig ocfg{0.7, 5};
    const double est = estimate_objective(arch, theta, clients, cfg, ocfg, SplitRng(3));

    const double n = static_cast<double>(data.size());
    double mean = 0.0;
    for (std::size_t s = 0; s < ocfg.mc_samples; ++s) {
      SplitRng sample_rng = SplitRng(3).derive(s);
      double value = 0.0;
      for (const ClientState& client : clients) {
        SplitRng client_rng = sample_rng.derive(client.client_id);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k <= cfg.mutation.variants; ++k) {
          SplitRng mut = client_rng.derive(stream::kMutation, k);
          best = std::min(best,
                          local_loss(arch, mutate(theta, cfg.mutation.sigma, mut), client.shard));
        }
        SplitRng noise_rng = client_rng.derive(stream::kNoise);
        double norm_sq = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
          const double d = cfg.privacy.noise_sigma * noise_rng.gaussian();
          norm_sq += d * d;
        }
        value += (static_cast<double>(client.shard.size()) / n) *
                 (best + 0.5 * ocfg.lambda * norm_sq);
      }
      mean += (value - mean) / static_cast<double>(s + 1);
    }
    CHECK(est == doctest::Approx(mean).epsilon(1e-12));
  }
}

#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "qefl/privacy.hpp"

using namespace qefl;

TEST_CASE("add_noise") {
  const ParamVector params{0.1, -0.7, 1.9};

  SUBCASE("zero sigma is the identity") {
    SplitRng rng(1);
    CHECK(add_noise(params, 0.0, rng) == params);
  }
  SUBCASE("empirical per-coordinate variance at sigma 0.05") {
    const double sigma = 0.05;
    const std::size_t reps = 100000;
    std::vector<double> sum(params.size(), 0.0);
    std::vector<double> sum_sq(params.size(), 0.0);
    SplitRng rng(9);
    for (std::size_t r = 0; r < reps; ++r) {
      const ParamVector out = add_noise(params, sigma, rng);
      for (std::size_t j = 0; j < params.size(); ++j) {
        const double d = out[j] - params[j];
        sum[j] += d;
        sum_sq[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < params.size(); ++j) {
      const double mean = sum[j] / static_cast<double>(reps);
      const double var = sum_sq[j] / static_cast<double>(reps) - mean * mean;
      CHECK(std::abs(var - 0.0025) < 0.05 * 0.0025);
      // mean of the noised copies stays within 3 standard errors of the input
      const double standard_error = sigma / std::sqrt(static_cast<double>(reps));
      CHECK(std::abs(mean) < 3.0 * standard_error);
    }
  }
}

TEST_CASE("clip_update") {
  const ParamVector global{1.0, 1.0, 1.0, 1.0};

  SUBCASE("zero update returns the global model") {
    CHECK(clip_update(global, global, 0.5) == global);
  }
  SUBCASE("an update of twice the bound is scaled to exactly the bound") {
    const double clip = 0.5;
    ParamVector selected = global;
    selected[0] += 2.0 * clip;  // ||u|| = 1.0 = 2 * clip
    const ParamVector out = clip_update(selected, global, clip);
    CHECK(l2_distance(out, global) == doctest::Approx(clip).epsilon(1e-12));
  }
  SUBCASE("updates inside the ball pass through bitwise") {
    ParamVector selected = global;
    selected[1] += 0.3;
    CHECK(clip_update(selected, global, 0.5) == selected);
  }
  SUBCASE("direction is preserved") {
    SplitRng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
      ParamVector selected = global;
      for (double& v : selected) {
        v += rng.gaussian();
      }
      const ParamVector out = clip_update(selected, global, 0.25);
      CHECK(l2_distance(out, global) <= 0.25 + 1e-12);
      // cosine similarity between clipped and unclipped update
      double dot = 0.0, nu = 0.0, nv = 0.0;
      for (std::size_t j = 0; j < global.size(); ++j) {
        const double u = selected[j] - global[j];
        const double v = out[j] - global[j];
        dot += u * v;
        nu += u * u;
        nv += v * v;
      }
      CHECK(dot / std::sqrt(nu * nv) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("non-positive bound throws") {
    CHECK_THROWS_AS(clip_update(global, global, 0.0), std::invalid_argument);
  }
}

TEST_CASE("epsilon_for") {
  CHECK(epsilon_for(0.0, 1.0) == 0.0);
  CHECK(epsilon_for(1.0, 1.0) == doctest::Approx(0.5));
  CHECK(epsilon_for(2.0, 0.5) == doctest::Approx(8.0));
  CHECK_THROWS_AS(epsilon_for(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_for(-1.0, 1.0), std::invalid_argument);

  SUBCASE("monotone in sensitivity and inversely in noise") {
    SplitRng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
      const double delta = rng.uniform01() * 4.0;
      const double sigma = 0.1 + rng.uniform01();
      CHECK(epsilon_for(delta + 0.5, sigma) >= epsilon_for(delta, sigma));
      CHECK(epsilon_for(delta, sigma * 0.5) >= epsilon_for(delta, sigma));
    }
  }
}

TEST_CASE("account_round composes linearly") {
  PrivacyReport report;
  const PrivacyRoundRecord& r1 = account_round(report, 1, 1.0, 1.0);
  CHECK(r1.epsilon_round == doctest::Approx(0.5));
  CHECK(report.epsilon_total == doctest::Approx(0.5));
  CHECK(report.rounds_composed == 1);

  account_round(report, 2, 1.0, 1.0);
  CHECK(report.epsilon_total == doctest::Approx(1.0));
  CHECK(report.rounds_composed == 2);
  CHECK(report.rounds.size() == 2);
  CHECK(!report.unbounded);

  SUBCASE("zero noise marks the report unbounded") {
    account_round(report, 3, 1.0, 0.0);
    CHECK(report.unbounded);
    CHECK(std::isinf(report.epsilon_total));
  }
}

#pragma once
// Datasets: the synthetic sum-threshold benchmark, train/test splitting,
// client sharding (IID and Dirichlet label-skew), and an IDX image loader.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qefl/rng.hpp"

namespace qefl {

struct Example {
  std::vector<double> features;
  std::size_t label = 0;
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t input_dim = 0;
  std::size_t n_classes = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

// Label rule of the synthetic benchmark: 1 iff the feature sum exceeds 5
// (strict inequality), else 0.
inline std::size_t synthetic_label(const std::vector<double>& features) {
  double sum = 0.0;
  for (double f : features) {
    sum += f;
  }
  return sum > 5.0 ? 1 : 0;
}

// n examples with 10 i.i.d. Uniform[0,1) features, labeled by synthetic_label.
inline Dataset gen_synthetic(std::size_t n, std::uint64_t seed) {
  if (n == 0) {
    throw std::invalid_argument("gen_synthetic: n must be >= 1");
  }
  constexpr std::size_t kDim = 10;
  SplitRng rng = SplitRng(seed).derive(stream::kSynthetic);
  Dataset data;
  data.input_dim = kDim;
  data.n_classes = 2;
  data.examples.resize(n);
  for (Example& ex : data.examples) {
    ex.features.resize(kDim);
    for (double& f : ex.features) {
      f = rng.uniform01();
    }
    ex.label = synthetic_label(ex.features);
  }
  return data;
}

// Disjoint shuffle-split; the test set takes round(fraction * n) examples,
// so an integral fraction*n is honored exactly.
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction,
                                                    std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("train_test_split: test_fraction must be in (0, 1)");
  }
  const std::size_t n = data.size();
  if (n < 2) {
    throw std::invalid_argument("train_test_split: need at least 2 examples");
  }
  std::size_t test_count = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(n)));
  test_count = std::clamp<std::size_t>(test_count, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitRng rng = SplitRng(seed).derive(stream::kSplit);
  shuffle(order, rng);

  Dataset test;
  test.input_dim = data.input_dim;
  test.n_classes = data.n_classes;
  Dataset train = test;
  test.examples.reserve(test_count);
  train.examples.reserve(n - test_count);
  for (std::size_t i = 0; i < n; ++i) {
    (i < test_count ? test : train).examples.push_back(data.examples[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

struct ShardPlan {
  std::vector<std::size_t> assignment;  // example index -> client id
  std::size_t n_clients = 0;
  std::string strategy;  // "iid" | "dirichlet"
  double alpha = 0.0;    // dirichlet concentration, when applicable
};

inline void validate(const ShardPlan& plan) {
  std::vector<bool> seen(plan.n_clients, false);
  for (std::size_t client : plan.assignment) {
    if (client >= plan.n_clients) {
      throw std::invalid_argument("shard plan: assignment references unknown client");
    }
    seen[client] = true;
  }
  for (bool s : seen) {
    if (!s) {
      throw std::invalid_argument("shard plan: every client must receive at least one example");
    }
  }
}

// Random permutation, contiguous equal slices; the remainder goes to the
// first clients.
inline ShardPlan shard_iid(const Dataset& train, std::size_t n_clients, std::uint64_t seed) {
  if (n_clients == 0) {
    throw std::invalid_argument("shard_iid: n_clients must be >= 1");
  }
  if (n_clients > train.size()) {
    throw std::invalid_argument("shard_iid: more clients than examples");
  }
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitRng rng = SplitRng(seed).derive(stream::kShard);
  shuffle(order, rng);

  ShardPlan plan;
  plan.n_clients = n_clients;
  plan.strategy = "iid";
  plan.assignment.resize(n);
  const std::size_t base = n / n_clients;
  const std::size_t extra = n % n_clients;
  std::size_t pos = 0;
  for (std::size_t client = 0; client < n_clients; ++client) {
    const std::size_t count = base + (client < extra ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k) {
      plan.assignment[order[pos++]] = client;
    }
  }
  validate(plan);
  return plan;
}

// Label-skewed sharding: per class, client proportions drawn from
// Dirichlet(alpha * 1). Empty shards are repaired by moving one example
// from the largest shard.
inline ShardPlan shard_dirichlet(const Dataset& train, std::size_t n_clients, double alpha,
                                 std::uint64_t seed) {
  if (n_clients == 0) {
    throw std::invalid_argument("shard_dirichlet: n_clients must be >= 1");
  }
  if (n_clients > train.size()) {
    throw std::invalid_argument("shard_dirichlet: more clients than examples");
  }
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("shard_dirichlet: alpha must be > 0");
  }
  SplitRng rng = SplitRng(seed).derive(stream::kShard);

  std::vector<std::vector<std::size_t>> by_class(train.n_classes);
  for (std::size_t i = 0; i < train.size(); ++i) {
    by_class[train.examples[i].label].push_back(i);
  }

  std::vector<std::vector<std::size_t>> shards(n_clients);
  for (std::vector<std::size_t>& members : by_class) {
    if (members.empty()) {
      continue;
    }
    shuffle(members, rng);

    std::vector<double> props(n_clients);
    double total = 0.0;
    for (double& p : props) {
      p = rng.gamma(alpha);
      total += p;
    }
    for (double& p : props) {
      p /= total;
    }

    // Integer counts by largest remainder, ties to the lower client id.
    const std::size_t m = members.size();
    std::vector<std::size_t> counts(n_clients);
    std::vector<std::pair<double, std::size_t>> remainders(n_clients);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
      const double want = props[c] * static_cast<double>(m);
      counts[c] = static_cast<std::size_t>(want);
      remainders[c] = {want - static_cast<double>(counts[c]), c};
      assigned += counts[c];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < m; ++k, ++assigned) {
      ++counts[remainders[k % n_clients].second];
    }

    std::size_t pos = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
      for (std::size_t k = 0; k < counts[c]; ++k) {
        shards[c].push_back(members[pos++]);
      }
    }
  }

  // Repair: no client may end up empty.
  for (;;) {
    std::size_t empty_client = n_clients;
    for (std::size_t c = 0; c < n_clients; ++c) {
      if (shards[c].empty()) {
        empty_client = c;
        break;
      }
    }
    if (empty_client == n_clients) {
      break;
    }
    std::size_t donor = 0;
    for (std::size_t c = 1; c < n_clients; ++c) {
      if (shards[c].size() > shards[donor].size()) {
        donor = c;
      }
    }
    shards[empty_client].push_back(shards[donor].back());
    shards[donor].pop_back();
  }

  ShardPlan plan;
  plan.n_clients = n_clients;
  plan.strategy = "dirichlet";
  plan.alpha = alpha;
  plan.assignment.resize(train.size());
  for (std::size_t c = 0; c < n_clients; ++c) {
    for (std::size_t idx : shards[c]) {
      plan.assignment[idx] = c;
    }
  }
  validate(plan);
  return plan;
}

// Client datasets in original example order.
inline std::vector<Dataset> materialize_shards(const Dataset& train, const ShardPlan& plan) {
  if (plan.assignment.size() != train.size()) {
    throw std::invalid_argument("materialize_shards: plan does not match dataset");
  }
  std::vector<Dataset> shards(plan.n_clients);
  for (Dataset& s : shards) {
    s.input_dim = train.input_dim;
    s.n_classes = train.n_classes;
  }
  for (std::size_t i = 0; i < train.size(); ++i) {
    shards[plan.assignment[i]].examples.push_back(train.examples[i]);
  }
  return shards;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (in.gcount() != 4) {
    throw std::runtime_error("idx: truncated header in " + path);
  }
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

}  // namespace detail

// IDX ubyte image/label pair (the published MNIST layout, big-endian).
// Pixels are scaled to [0,1]; images flattened row-major.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) {
    throw std::runtime_error("idx: cannot open " + images_path);
  }
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) {
    throw std::runtime_error("idx: cannot open " + labels_path);
  }

  const std::uint32_t image_magic = detail::read_be32(images, images_path);
  if (image_magic != 0x00000803u) {
    throw std::runtime_error("idx: bad magic in " + images_path + " (expected 0x00000803)");
  }
  const std::uint32_t n_images = detail::read_be32(images, images_path);
  const std::uint32_t rows = detail::read_be32(images, images_path);
  const std::uint32_t cols = detail::read_be32(images, images_path);

  const std::uint32_t label_magic = detail::read_be32(labels, labels_path);
  if (label_magic != 0x00000801u) {
    throw std::runtime_error("idx: bad magic in " + labels_path + " (expected 0x00000801)");
  }
  const std::uint32_t n_labels = detail::read_be32(labels, labels_path);
  if (n_images != n_labels) {
    throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(n_images) +
                             " images vs " + std::to_string(n_labels) + " labels)");
  }

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  Dataset data;
  data.input_dim = dim;
  data.examples.resize(n_images);
  std::vector<unsigned char> pixel_buf(dim);
  std::size_t max_label = 0;
  for (std::uint32_t i = 0; i < n_images; ++i) {
    images.read(reinterpret_cast<char*>(pixel_buf.data()), static_cast<std::streamsize>(dim));
    if (images.gcount() != static_cast<std::streamsize>(dim)) {
      throw std::runtime_error("idx: truncated image data in " + images_path);
    }
    unsigned char label = 0;
    labels.read(reinterpret_cast<char*>(&label), 1);
    if (labels.gcount() != 1) {
      throw std::runtime_error("idx: truncated label data in " + labels_path);
    }
    Example& ex = data.examples[i];
    ex.features.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      ex.features[j] = static_cast<double>(pixel_buf[j]) / 255.0;
    }
    ex.label = label;
    max_label = std::max<std::size_t>(max_label, label);
  }
  data.n_classes = std::max<std::size_t>(max_label + 1, 2);
  return data;
}

}  // namespace qefl

#pragma once
// Run configuration: a flat key = value text format. Unknown and duplicate
// keys are errors, so typos fail loudly. serialize_config() emits a
// canonical snapshot that reproduces the run when fed back in.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qefl/federation.hpp"
#include "qefl/metrics.hpp"

namespace qefl {

struct RunConfig {
  std::string dataset = "synthetic";  // synthetic | idx
  std::string idx_train_images;
  std::string idx_train_labels;
  std::string idx_test_images;
  std::string idx_test_labels;
  std::size_t synthetic_n = 1000;
  double test_fraction = 0.3;
  std::string shard = "iid";  // iid | dirichlet
  double dirichlet_alpha = 0.5;
  std::vector<std::size_t> hidden_dims = {32};
  RoundConfig round;
  double dp_delta = 1e-5;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": not a number: '" + value + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    if (value.empty() || value[0] == '-' || value[0] == '+') {
      throw std::invalid_argument("sign not allowed");
    }
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": not a non-negative integer: '" + value + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + value + "'");
}

inline std::vector<std::size_t> parse_dims(const std::string& key, const std::string& value) {
  std::vector<std::size_t> dims;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      throw std::invalid_argument(key + ": empty entry in '" + value + "'");
    }
    dims.push_back(static_cast<std::size_t>(parse_u64(key, item)));
  }
  if (dims.empty()) {
    throw std::invalid_argument(key + ": needs at least one dimension");
  }
  return dims;
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_dims;
  using detail::parse_double;
  using detail::parse_u64;

  if (key == "dataset") {
    if (value != "synthetic" && value != "idx") {
      throw std::invalid_argument("dataset: expected synthetic or idx, got '" + value + "'");
    }
    cfg.dataset = value;
  } else if (key == "idx_train_images") {
    cfg.idx_train_images = value;
  } else if (key == "idx_train_labels") {
    cfg.idx_train_labels = value;
  } else if (key == "idx_test_images") {
    cfg.idx_test_images = value;
  } else if (key == "idx_test_labels") {
    cfg.idx_test_labels = value;
  } else if (key == "synthetic_n") {
    cfg.synthetic_n = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "test_fraction") {
    cfg.test_fraction = parse_double(key, value);
  } else if (key == "shard") {
    if (value != "iid" && value != "dirichlet") {
      throw std::invalid_argument("shard: expected iid or dirichlet, got '" + value + "'");
    }
    cfg.shard = value;
  } else if (key == "dirichlet_alpha") {
    cfg.dirichlet_alpha = parse_double(key, value);
  } else if (key == "hidden_dims") {
    cfg.hidden_dims = parse_dims(key, value);
  } else if (key == "clients") {
    cfg.round.n_clients = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "local_epochs") {
    cfg.round.local_epochs = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "learning_rate") {
    cfg.round.learning_rate = parse_double(key, value);
  } else if (key == "batch_size") {
    cfg.round.batch_size = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "rounds") {
    cfg.round.rounds = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "variants") {
    cfg.round.mutation.variants = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "mutation_sigma") {
    cfg.round.mutation.sigma = parse_double(key, value);
  } else if (key == "noise_sigma") {
    cfg.round.privacy.noise_sigma = parse_double(key, value);
  } else if (key == "privacy_enabled") {
    cfg.round.privacy.enabled = parse_bool(key, value);
  } else if (key == "clip_norm") {
    if (value == "none") {
      cfg.round.privacy.clip_norm.reset();
    } else {
      cfg.round.privacy.clip_norm = parse_double(key, value);
    }
  } else if (key == "dp_delta") {
    cfg.dp_delta = parse_double(key, value);
  } else if (key == "dropout_prob") {
    cfg.round.dropout_prob = parse_double(key, value);
  } else if (key == "aggregation") {
    if (value == "uniform") {
      cfg.round.aggregation = AggregationMode::kUniform;
    } else if (value == "weighted") {
      cfg.round.aggregation = AggregationMode::kWeighted;
    } else {
      throw std::invalid_argument("aggregation: expected uniform or weighted, got '" + value +
                                  "'");
    }
  } else if (key == "master_seed") {
    cfg.round.master_seed = parse_u64(key, value);
  } else {
    throw std::invalid_argument("unknown configuration key: '" + key + "'");
  }
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, bool> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') {
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    }
    if (seen[key]) {
      throw std::invalid_argument("duplicate configuration key: '" + key + "'");
    }
    seen[key] = true;
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("config: cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

inline void validate(const RunConfig& cfg) {
  validate(cfg.round);
  if (cfg.dataset == "synthetic") {
    if (cfg.synthetic_n < 2) {
      throw std::invalid_argument("synthetic_n: must be >= 2");
    }
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
      throw std::invalid_argument("test_fraction: must be in (0, 1)");
    }
  } else {
    if (cfg.idx_train_images.empty() || cfg.idx_train_labels.empty() ||
        cfg.idx_test_images.empty() || cfg.idx_test_labels.empty()) {
      throw std::invalid_argument(
          "idx_train_images/idx_train_labels/idx_test_images/idx_test_labels: all four paths are "
          "required for dataset = idx");
    }
  }
  if (cfg.shard == "dirichlet" && !(cfg.dirichlet_alpha > 0.0)) {
    throw std::invalid_argument("dirichlet_alpha: must be > 0");
  }
  if (cfg.hidden_dims.empty()) {
    throw std::invalid_argument("hidden_dims: at least one hidden layer required");
  }
  for (std::size_t d : cfg.hidden_dims) {
    if (d == 0) {
      throw std::invalid_argument("hidden_dims: dimensions must be >= 1");
    }
  }
  if (!(cfg.dp_delta > 0.0 && cfg.dp_delta < 1.0)) {
    throw std::invalid_argument("dp_delta: must be in (0, 1)");
  }
}

// Canonical snapshot; parse_config_text(serialize_config(cfg)) round-trips.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  const auto add = [&out](const std::string& key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  add("dataset", cfg.dataset);
  add("idx_train_images", cfg.idx_train_images);
  add("idx_train_labels", cfg.idx_train_labels);
  add("idx_test_images", cfg.idx_test_images);
  add("idx_test_labels", cfg.idx_test_labels);
  add("synthetic_n", std::to_string(cfg.synthetic_n));
  add("test_fraction", format_double(cfg.test_fraction));
  add("shard", cfg.shard);
  add("dirichlet_alpha", format_double(cfg.dirichlet_alpha));
  std::string dims;
  for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
    if (i > 0) dims += ',';
    dims += std::to_string(cfg.hidden_dims[i]);
  }
  add("hidden_dims", dims);
  add("clients", std::to_string(cfg.round.n_clients));
  add("local_epochs", std::to_string(cfg.round.local_epochs));
  add("learning_rate", format_double(cfg.round.learning_rate));
  add("batch_size", std::to_string(cfg.round.batch_size));
  add("rounds", std::to_string(cfg.round.rounds));
  add("variants", std::to_string(cfg.round.mutation.variants));
  add("mutation_sigma", format_double(cfg.round.mutation.sigma));
  add("noise_sigma", format_double(cfg.round.privacy.noise_sigma));
  add("privacy_enabled", cfg.round.privacy.enabled ? "true" : "false");
  add("clip_norm",
      cfg.round.privacy.clip_norm ? format_double(*cfg.round.privacy.clip_norm) : "none");
  add("dp_delta", format_double(cfg.dp_delta));
  add("dropout_prob", format_double(cfg.round.dropout_prob));
  add("aggregation", cfg.round.aggregation == AggregationMode::kWeighted ? "weighted" : "uniform");
  add("master_seed", std::to_string(cfg.round.master_seed));
  return out;
}

}  // namespace qefl

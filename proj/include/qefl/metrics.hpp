#pragma once
// Model evaluation (accuracy, macro-F1, mean cross-entropy), loss-trend
// diagnostics, and CSV export of per-round metrics.

#include <charconv>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qefl/arch.hpp"
#include "qefl/data.hpp"
#include "qefl/network.hpp"
#include "qefl/privacy.hpp"

namespace qefl {

struct ConfusionCounts {
  std::size_t n_classes = 0;
  std::vector<std::size_t> counts;  // row = true class, col = predicted

  explicit ConfusionCounts(std::size_t classes = 0)
      : n_classes(classes), counts(classes * classes, 0) {}

  std::size_t& at(std::size_t truth, std::size_t predicted) {
    return counts[truth * n_classes + predicted];
  }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * n_classes + predicted];
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (std::size_t c : counts) {
      t += c;
    }
    return t;
  }
  std::size_t trace() const {
    std::size_t t = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      t += at(c, c);
    }
    return t;
  }
};

// argmax with the lowest class index winning ties.
inline std::size_t predict_class(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) {
      best = i;
    }
  }
  return best;
}

struct EvalResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_loss = 0.0;
  ConfusionCounts confusion;
};

// Macro-F1 averages per-class F1 unweighted; a class with no true and no
// predicted instances contributes 0 and still counts in the average.
inline double macro_f1_from_confusion(const ConfusionCounts& confusion) {
  double sum = 0.0;
  for (std::size_t c = 0; c < confusion.n_classes; ++c) {
    std::size_t tp = confusion.at(c, c);
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t k = 0; k < confusion.n_classes; ++k) {
      if (k != c) {
        fp += confusion.at(k, c);
        fn += confusion.at(c, k);
      }
    }
    const std::size_t denom = 2 * tp + fp + fn;
    if (denom > 0) {
      sum += 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
  }
  return sum / static_cast<double>(confusion.n_classes);
}

inline EvalResult evaluate(const QennArchitecture& arch, const ParamVector& params,
                           const Dataset& data) {
  if (data.empty()) {
    throw std::invalid_argument("evaluate: dataset is empty");
  }
  EvalResult result;
  result.confusion = ConfusionCounts(arch.output_dim);
  ActivationCache cache;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const Example& ex : data.examples) {
    if (ex.label >= arch.output_dim) {
      throw std::invalid_argument("evaluate: label out of range for architecture");
    }
    forward(arch, params, ex.features, cache);
    loss_sum += softmax_cross_entropy(cache.logits, ex.label);
    const std::size_t predicted = predict_class(cache.logits);
    result.confusion.at(ex.label, predicted) += 1;
    if (predicted == ex.label) {
      ++correct;
    }
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  result.mean_loss = loss_sum / static_cast<double>(data.size());
  result.macro_f1 = macro_f1_from_confusion(result.confusion);
  return result;
}

enum class TrendStatus { kPass, kFail, kNotApplicable };

struct TrendResult {
  TrendStatus status = TrendStatus::kNotApplicable;
  std::size_t first_violation_round = 0;  // 1-based; 0 when none
};

// Passes iff the moving average of the losses over `window` rounds never
// increases by more than `slack` from one step to the next once the warmup
// window is full.
inline TrendResult trend_check(const std::vector<double>& losses, std::size_t window,
                               double slack) {
  if (window == 0) {
    throw std::invalid_argument("trend_check: window must be >= 1");
  }
  if (losses.size() < window) {
    return {TrendStatus::kNotApplicable, 0};
  }
  std::vector<double> moving;
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    acc += losses[i];
    if (i + 1 >= window) {
      moving.push_back(acc / static_cast<double>(window));
      acc -= losses[i + 1 - window];
    }
  }
  for (std::size_t i = 1; i < moving.size(); ++i) {
    if (moving[i] - moving[i - 1] > slack) {
      return {TrendStatus::kFail, window + i};  // 1-based round of the violating step
    }
  }
  return {TrendStatus::kPass, 0};
}

struct RoundMetrics {
  std::size_t round = 0;  // 1-based
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_loss = 0.0;
  double epsilon_total = 0.0;
};

// Shortest decimal representation that parses back to the same double.
// Locale-independent.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline std::string export_csv(const std::vector<RoundMetrics>& history) {
  if (history.empty()) {
    throw std::invalid_argument("export_csv: empty history");
  }
  std::string out = "round,accuracy,macro_f1,mean_loss,epsilon_total\n";
  for (const RoundMetrics& m : history) {
    out += std::to_string(m.round);
    out += ',';
    out += format_double(m.accuracy);
    out += ',';
    out += format_double(m.macro_f1);
    out += ',';
    out += format_double(m.mean_loss);
    out += ',';
    out += format_double(m.epsilon_total);
    out += '\n';
  }
  return out;
}

// Fixed machine-parseable progress layout.
inline std::string progress_line(const RoundMetrics& m) {
  return "round=" + std::to_string(m.round) + " acc=" + format_double(m.accuracy) +
         " loss=" + format_double(m.mean_loss);
}

// One row per example: the feature columns, then the label.
inline std::string dataset_csv(const Dataset& data) {
  if (data.empty()) {
    throw std::invalid_argument("dataset_csv: empty dataset");
  }
  std::string out;
  for (std::size_t j = 0; j < data.input_dim; ++j) {
    out += "x" + std::to_string(j) + ",";
  }
  out += "label\n";
  for (const Example& ex : data.examples) {
    for (double f : ex.features) {
      out += format_double(f);
      out += ',';
    }
    out += std::to_string(ex.label);
    out += '\n';
  }
  return out;
}

// Per-round privacy accounting rows. Header-only output when nothing was
// accounted (privacy disabled).
inline std::string privacy_csv(const PrivacyReport& report) {
  std::string out = "round,delta_sensitivity,epsilon_round,epsilon_total\n";
  for (const PrivacyRoundRecord& r : report.rounds) {
    out += std::to_string(r.round);
    out += ',';
    out += format_double(r.delta_sensitivity);
    out += ',';
    out += format_double(r.epsilon_round);
    out += ',';
    out += format_double(r.epsilon_total);
    out += '\n';
  }
  return out;
}

}  // namespace qefl

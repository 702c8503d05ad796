// Command-line front end: training runs, the mutated-variant accuracy table,
// gradient checking, privacy accounting, and model evaluation.
//
// Artifacts written by `train` into the output directory:
//   metrics.csv   per-round accuracy / macro-F1 / test loss / epsilon total
//   privacy.csv   per-round sensitivity and epsilon accounting
//   model.bin     final global model (QEFLMDL1 binary format)
//   config.conf   resolved configuration; feeding it back reproduces the run

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qefl/config.hpp"
#include "qefl/experiment.hpp"
#include "qefl/federation.hpp"
#include "qefl/gradcheck.hpp"
#include "qefl/metrics.hpp"
#include "qefl/model_io.hpp"

namespace fs = std::filesystem;
using namespace qefl;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool parallel = false;
};

RunConfig load_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : parse_config_file(args.config_path);
  if (args.seed) {
    cfg.round.master_seed = *args.seed;
  }
  validate(cfg);
  return cfg;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << content;
  if (!out) {
    throw std::runtime_error("write failure on " + path.string());
  }
}

int cmd_train(const CommonArgs& args, bool export_data) {
  const RunConfig cfg = load_config(args);
  const PreparedExperiment exp = prepare_experiment(cfg);
  const ParamVector theta0 = init_params(exp.arch, cfg.round.master_seed);

  PrivacyReport report;
  report.dp_delta = cfg.dp_delta;
  const TrainingResult result = run_training(
      exp.arch, theta0, exp.clients, cfg.round, exp.test, report,
      [](const RoundMetrics& m) { std::cout << progress_line(m) << "\n"; }, args.parallel);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  write_text_file(out / "metrics.csv", export_csv(result.history.metrics));
  write_text_file(out / "privacy.csv", privacy_csv(report));
  save_model((out / "model.bin").string(), exp.arch, result.theta);
  write_text_file(out / "config.conf", serialize_config(cfg));
  if (export_data) {
    write_text_file(out / "train_data.csv", dataset_csv(exp.train));
    write_text_file(out / "test_data.csv", dataset_csv(exp.test));
  }
  std::cerr << "artifacts written to " << out.string() << "\n";
  return 0;
}

int cmd_reproduce_table1(const CommonArgs& args) {
  const RunConfig cfg = load_config(args);
  if (cfg.dataset != "synthetic") {
    throw std::invalid_argument("dataset: reproduce-table1 requires the synthetic dataset");
  }
  const PreparedExperiment exp = prepare_experiment(cfg);
  const ParamVector theta0 = init_params(exp.arch, cfg.round.master_seed);

  PrivacyReport report;
  report.dp_delta = cfg.dp_delta;
  const TrainingResult result = run_training(
      exp.arch, theta0, exp.clients, cfg.round, exp.test, report,
      [](const RoundMetrics& m) { std::cerr << progress_line(m) << "\n"; }, args.parallel);

  // Ten fresh mutations of the trained global model, each fine-tuned on the
  // first client's shard, evaluated on the held-out test set.
  constexpr std::size_t kTableVariants = 10;
  const ClientState& host = exp.clients.front();
  std::string csv = "mutation,accuracy\n";
  for (std::size_t m = 1; m <= kTableVariants; ++m) {
    SplitRng mutation_rng =
        SplitRng(cfg.round.master_seed).derive(stream::kVariantTable, m, stream::kMutation);
    ParamVector candidate = mutate(result.theta, cfg.round.mutation.sigma, mutation_rng);
    SplitRng shuffle_rng =
        SplitRng(cfg.round.master_seed).derive(stream::kVariantTable, m, stream::kShuffle);
    candidate = train_epochs(exp.arch, std::move(candidate), host.shard, cfg.round.local_epochs,
                             cfg.round.learning_rate, cfg.round.batch_size, shuffle_rng);
    const double accuracy = evaluate(exp.arch, candidate, exp.test).accuracy;
    std::printf("M%-3zu %.6f\n", m, accuracy);
    csv += "M" + std::to_string(m) + "," + format_double(accuracy) + "\n";
  }
  fs::create_directories(args.out_dir);
  write_text_file(fs::path(args.out_dir) / "table1.csv", csv);
  return 0;
}

int cmd_gradcheck(const CommonArgs& args, double inject_error) {
  GradCheckOptions opts;
  opts.inject_error = inject_error;
  const GradCheckReport report = run_gradcheck(args.seed.value_or(42), opts);
  std::printf("draws=%zu step=%.0e threshold=%.0e\n", opts.draws, opts.step, opts.threshold);
  for (const GradCheckWorst& w : report.worst_by_location) {
    std::printf("%-16s worst: draw=%zu index=%zu analytic=% .9e numeric=% .9e rel_err=%.3e\n",
                w.location.c_str(), w.draw, w.param_index, w.analytic, w.numeric, w.rel_err);
  }
  std::printf("max_rel_err=%.3e\n", report.max_rel_err);
  std::printf("%s\n", report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : 1;
}

int cmd_privacy_report(const CommonArgs& args, bool allow_unbounded) {
  const RunConfig cfg = load_config(args);
  const bool noiseless = !cfg.round.privacy.enabled || cfg.round.privacy.noise_sigma == 0.0;
  if (noiseless && !allow_unbounded) {
    std::cerr << "error: noise_sigma is 0 (or privacy disabled), so epsilon is unbounded and no "
                 "privacy guarantee exists.\n"
                 "Pass --allow-unbounded to acknowledge and print the report anyway.\n";
    return 1;
  }

  std::printf("dp_delta=%s\n", format_double(cfg.dp_delta).c_str());
  if (noiseless) {
    std::printf("delta_source=none (no noise released)\n");
    std::printf("epsilon_total=inf rounds=%zu composition=linear\n", cfg.round.rounds);
    return 0;
  }

  if (cfg.round.privacy.clip_norm) {
    // Clipping pins the sensitivity, so the report is analytic.
    const double clip = *cfg.round.privacy.clip_norm;
    const double eps = epsilon_for(clip, cfg.round.privacy.noise_sigma);
    std::printf("delta_source=clip_bound clip_norm=%s\n", format_double(clip).c_str());
    double total = 0.0;
    for (std::size_t r = 1; r <= cfg.round.rounds; ++r) {
      total += eps;
      std::printf("round=%zu delta=%s epsilon_round=%s epsilon_total=%s\n", r,
                  format_double(clip).c_str(), format_double(eps).c_str(),
                  format_double(total).c_str());
    }
    std::printf("rounds_composed=%zu epsilon_total=%s composition=linear\n", cfg.round.rounds,
                format_double(total).c_str());
    return 0;
  }

  // Without clipping the sensitivity is only observable, so run the training
  // and report the measured update norms.
  std::printf("delta_source=empirical (max observed update norm per round; not a guarantee)\n");
  const PreparedExperiment exp = prepare_experiment(cfg);
  const ParamVector theta0 = init_params(exp.arch, cfg.round.master_seed);
  PrivacyReport report;
  report.dp_delta = cfg.dp_delta;
  run_training(exp.arch, theta0, exp.clients, cfg.round, exp.test, report, {}, args.parallel);
  for (const PrivacyRoundRecord& r : report.rounds) {
    std::printf("round=%zu delta=%s epsilon_round=%s epsilon_total=%s\n", r.round,
                format_double(r.delta_sensitivity).c_str(), format_double(r.epsilon_round).c_str(),
                format_double(r.epsilon_total).c_str());
  }
  std::printf("rounds_composed=%zu epsilon_total=%s composition=linear\n", report.rounds_composed,
              format_double(report.epsilon_total).c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& model_path) {
  const RunConfig cfg = load_config(args);
  const auto [arch, params] = load_model(model_path);
  const PreparedExperiment exp = prepare_experiment(cfg);
  if (arch.input_dim != exp.test.input_dim) {
    throw std::invalid_argument("model input dimension does not match the configured dataset");
  }
  const EvalResult r = evaluate(arch, params, exp.test);
  std::printf("accuracy=%s macro_f1=%s mean_loss=%s\n", format_double(r.accuracy).c_str(),
              format_double(r.macro_f1).c_str(), format_double(r.mean_loss).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training of sine-activation networks with evolutionary client updates"};
  app.require_subcommand(1);

  CommonArgs args;
  double inject_error = 0.0;
  bool allow_unbounded = false;
  bool export_data = false;
  std::string model_path;

  const auto add_common = [&args](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "configuration file (key = value lines)");
    cmd->add_option("--seed", args.seed, "override master_seed");
    cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
    cmd->add_flag("--parallel", args.parallel, "run client rounds concurrently");
  };

  CLI::App* train = app.add_subcommand("train", "run federated training and write artifacts");
  add_common(train);
  train->add_flag("--export-data", export_data,
                  "also write the train/test examples as CSV (features + label)");

  CLI::App* table =
      app.add_subcommand("reproduce-table1", "accuracy table of 10 mutated fine-tuned variants");
  add_common(table);

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
  add_common(gradcheck);
  gradcheck->add_option("--inject-error", inject_error, "corrupt one gradient entry (self-test)")
      ->group("");

  CLI::App* privacy = app.add_subcommand("privacy-report", "per-round epsilon accounting");
  add_common(privacy);
  privacy->add_flag("--allow-unbounded", allow_unbounded,
                    "acknowledge noise_sigma = 0 (unbounded epsilon)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved model on the configured test set");
  add_common(eval);
  eval->add_option("--model", model_path, "model file (QEFLMDL1)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(args, export_data);
    }
    if (table->parsed()) {
      return cmd_reproduce_table1(args);
    }
    if (gradcheck->parsed()) {
      return cmd_gradcheck(args, inject_error);
    }
    if (privacy->parsed()) {
      return cmd_privacy_report(args, allow_unbounded);
    }
    if (eval->parsed()) {
      return cmd_eval(args, model_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

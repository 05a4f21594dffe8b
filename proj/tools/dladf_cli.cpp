// dladf: generate synthetic delayed-conversion data, train the CVR models,
// and run the experiment grid.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dladf/errors.hpp"
#include "dladf/eval.hpp"
#include "dladf/io.hpp"
#include "dladf/losses.hpp"
#include "dladf/synthgen.hpp"
#include "dladf/trainers.hpp"

namespace fs = std::filesystem;
using namespace dladf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string method;
  std::string test_out;
  std::vector<std::string> models;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 0;
  bool verbose = false;
};

RunConfig load_config(const Options& opt) {
  RunConfig rc = opt.config.empty() ? RunConfig{} : load_run_config(opt.config);
  if (opt.seed) {
    rc.synth.seed = *opt.seed;
    rc.train.seed = *opt.seed;
    for (auto& [_, t] : rc.train_overrides) t.seed = *opt.seed;
    rc.seeds = {*opt.seed};
  }
  if (opt.jobs) rc.jobs = opt.jobs;
  return rc;
}

void kv(const std::string& key, const std::string& value) {
  std::cout << key << "=" << value << "\n";
}

void kv(const std::string& key, double value) { kv(key, format_real(value, 10)); }

SyntheticDataset load_dataset(const std::string& path) {
  return dataset_from_jsonl(read_file(path));
}

int cmd_generate(const Options& opt) {
  const RunConfig rc = load_config(opt);
  rc.synth.validate();
  const SyntheticDataset data = generate(rc.synth);
  atomic_write_file(opt.out, dataset_to_jsonl(data));
  if (!opt.test_out.empty()) {
    atomic_write_file(opt.test_out,
                      dataset_to_jsonl(generate_test_set(rc.synth, data.coefficients)));
  }
  double observed = 0.0, converted = 0.0;
  for (const auto& s : data.samples) {
    observed += *s.y_obs;
    converted += *s.y_true;
  }
  const auto n = static_cast<double>(data.size());
  kv("n", std::to_string(data.size()));
  kv("mean_propensity", mean_propensity(data));
  kv("positive_rate", observed / n);
  kv("true_positive_rate", converted / n);
  std::cout << "wrote " << data.size() << " samples to " << opt.out << "\n";
  return kExitOk;
}

int cmd_train(const Options& opt) {
  const RunConfig rc = load_config(opt);
  const MethodId method = parse_method(opt.method);
  const TrainConfig config = rc.train_for(method);
  const SyntheticDataset data = load_dataset(opt.data);
  config.validate(data.size());

  const std::string prefix = opt.out;
  TrainReport report;
  switch (method) {
    case MethodId::oracle:
    case MethodId::naive: {
      const ModelFit fit =
          method == MethodId::oracle ? train_oracle(data, config) : train_naive(data, config);
      atomic_write_file(prefix + ".model.json", model_to_json(fit.model) + "\n");
      report = fit.report;
      break;
    }
    case MethodId::dfm: {
      const DfmFit fit = train_dfm(data, config);
      atomic_write_file(prefix + ".model.json", dfm_model_to_json(fit.model) + "\n");
      report = fit.report;
      break;
    }
    case MethodId::dla:
    case MethodId::nn_dla: {
      const DlaFit fit = train_dla(data, config);
      atomic_write_file(prefix + ".f.json", model_to_json(fit.cvr_model) + "\n");
      atomic_write_file(prefix + ".g.json", model_to_json(fit.propensity_model) + "\n");
      report = fit.report;
      break;
    }
  }
  atomic_write_file(prefix + ".report.json", report_to_json(report) + "\n");
  if (opt.verbose) atomic_write_file(prefix + ".loss.csv", loss_curve_csv(report));
  kv("method", to_string(method));
  kv("epochs_run", std::to_string(report.epochs_run));
  kv("final_loss", report.final_loss);
  kv("converged", report.converged ? "true" : "false");
  kv("clip_activations", std::to_string(report.clip_activations));
  return kExitOk;
}

int cmd_evaluate(const Options& opt) {
  if (opt.models.size() != 1) throw ConfigError("evaluate takes exactly one --model");
  const std::string model_text = read_file(opt.models[0]);
  const SyntheticDataset data = load_dataset(opt.data);
  Vector preds;
  std::vector<Label> labels;
  const bool is_dfm = model_text.find("\"conversion\"") != std::string::npos;
  const DfmModel dfm = is_dfm ? dfm_model_from_json(model_text) : DfmModel{};
  const LinearSigmoidModel model = is_dfm ? LinearSigmoidModel{} : model_from_json(model_text);
  if (!is_dfm && model.augmented_with_elapsed) {
    throw ConfigError("evaluate needs a conversion-rate model, got a propensity model");
  }
  for (const auto& s : data.samples) {
    if (!s.y_true) throw MissingField("y_true");
    preds.push_back(is_dfm ? dfm.conversion_probability(s.x) : predict_cvr(model, s.x));
    labels.push_back(*s.y_true);
  }
  kv("n", std::to_string(data.size()));
  kv("log_loss", log_loss(preds, labels));
  return kExitOk;
}

int cmd_experiment(const Options& opt) {
  const RunConfig rc = load_config(opt);
  const ExperimentGrid grid = rc.grid();
  grid.validate();
  const fs::path out_dir = opt.out.empty() ? fs::path("results") : fs::path(opt.out);
  fs::create_directories(out_dir);

  const ResultsTable table = run_experiment(grid, [](const CellResult& c) {
    std::cout << "cell method=" << to_string(c.method) << " L=" << format_real(c.L, 10)
              << " seed=" << c.seed << " test_log_loss=" << format_real(c.test_log_loss, 10)
              << " relative_log_loss=" << format_real(c.relative_log_loss, 10)
              << " status=" << (c.failed ? "failed" : "ok") << "\n";
    if (c.failed) std::cerr << "cell failed: " << c.error << "\n";
    std::cout.flush();
  });
  atomic_write_file(out_dir / "results.csv", results_csv(table));
  atomic_write_file(out_dir / "aggregates.csv", aggregates_csv(table));

  std::cout << "\nmethod      L   mean_rel_ll  std_rel_ll  n\n";
  for (const auto& a : table.aggregates) {
    std::printf("%-8s %4s  %11.5f  %10.5f  %zu\n", to_string(a.method).c_str(),
                format_real(a.L, 4).c_str(), a.mean_rel_ll, a.std_rel_ll, a.n_seeds);
  }
  kv("cells", std::to_string(table.cells.size()));
  kv("failed_cells", std::to_string(table.failed_cells()));
  return table.failed_cells() == 0 ? kExitOk : kExitRuntime;
}

int cmd_variance_report(const Options& opt) {
  if (opt.models.empty() || opt.models.size() > 2) {
    throw ConfigError("variance-report takes --model <f.json> [--model <g.json>]");
  }
  const RunConfig rc = load_config(opt);
  const ClipPolicy clip = rc.train.clip;
  const LinearSigmoidModel f = model_from_json(read_file(opt.models[0]));
  std::optional<LinearSigmoidModel> g;
  if (opt.models.size() == 2) g = model_from_json(read_file(opt.models[1]));
  const SyntheticDataset data = load_dataset(opt.data);

  Vector gammas, thetas;
  std::vector<DeltaPair> deltas_f, deltas_g;
  std::size_t theta_clips = 0, gamma_clips = 0;
  for (const auto& s : data.samples) {
    if (!s.gamma_true) throw MissingField("gamma_true");
    if (!s.theta_true) throw MissingField("theta_true");
    double theta = *s.theta_true, gamma = *s.gamma_true;
    if (clip.enabled() && theta < clip.epsilon) ++theta_clips, theta = clip.epsilon;
    if (clip.enabled() && gamma < clip.epsilon) ++gamma_clips, gamma = clip.epsilon;
    gammas.push_back(gamma);
    thetas.push_back(theta);
    deltas_f.push_back(cross_entropy_deltas(predict_cvr(f, s.x)));
    if (g) {
      if (!s.elapsed) throw MissingField("e");
      deltas_g.push_back(cross_entropy_deltas(predict_propensity(*g, s.x, *s.elapsed)));
    }
  }
  kv("n", std::to_string(data.size()));
  kv("ips_variance", ips_variance(gammas, thetas, deltas_f));
  if (g) kv("icvr_variance", icvr_variance(thetas, gammas, deltas_g));
  kv("clip_epsilon", clip.epsilon);
  kv("theta_clip_activations", std::to_string(theta_clips));
  kv("gamma_clip_activations", std::to_string(gamma_clips));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delayed-feedback conversion-rate toolkit"};
  app.require_subcommand(1);
  Options opt;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", opt.seed, "Override the seed from the config");
  };

  auto* gen = app.add_subcommand("generate", "Generate a synthetic training set");
  gen->add_option("--config", opt.config, "Run configuration JSON");
  gen->add_option("--out", opt.out, "Output JSONL path")->required();
  gen->add_option("--test-out", opt.test_out, "Also write the held-out test set here");
  add_seed(gen);

  auto* train = app.add_subcommand("train", "Train one method on a dataset file");
  train->add_option("--config", opt.config, "Run configuration JSON");
  train->add_option("--data", opt.data, "Training dataset JSONL")->required();
  train->add_option("--method", opt.method, "oracle|naive|dfm|dla|nn-dla")->required();
  train->add_option("--out", opt.out, "Output path prefix")->required();
  train->add_flag("--verbose", opt.verbose, "Also write the per-epoch loss curve CSV");
  add_seed(train);

  auto* evaluate = app.add_subcommand("evaluate", "Test log-loss of a saved model");
  evaluate->add_option("--data", opt.data, "Dataset JSONL with y_true")->required();
  evaluate->add_option("--model", opt.models, "Model JSON")->required();

  auto* experiment = app.add_subcommand("experiment", "Run the (method, L, seed) grid");
  experiment->add_option("--config", opt.config, "Run configuration JSON");
  experiment->add_option("--out", opt.out, "Output directory");
  experiment->add_option("--jobs", opt.jobs, "Worker threads (default: logical cores)");
  add_seed(experiment);

  auto* variance = app.add_subcommand("variance-report", "Estimator variance diagnostics");
  variance->add_option("--config", opt.config, "Run configuration JSON (clip epsilon)");
  variance->add_option("--data", opt.data, "Dataset JSONL with gamma_true/theta_true")->required();
  variance->add_option("--model", opt.models, "CVR model JSON, then optional propensity model")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(opt);
    if (*train) return cmd_train(opt);
    if (*evaluate) return cmd_evaluate(opt);
    if (*experiment) return cmd_experiment(opt);
    if (*variance) return cmd_variance_report(opt);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

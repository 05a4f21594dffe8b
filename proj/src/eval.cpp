#include "dladf/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "dladf/errors.hpp"

namespace dladf {
namespace {

constexpr int kCsvDigits = 10;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vector predict_all(const SyntheticDataset& test, const std::function<double(const Vector&)>& f) {
  Vector preds;
  preds.reserve(test.size());
  for (const auto& s : test.samples) preds.push_back(f(s.x));
  return preds;
}

std::vector<Label> true_labels(const SyntheticDataset& test) {
  std::vector<Label> y;
  y.reserve(test.size());
  for (const auto& s : test.samples) {
    if (!s.y_true) throw MissingField("y_true");
    y.push_back(*s.y_true);
  }
  return y;
}

}  // namespace

std::string to_string(MethodId method) {
  switch (method) {
    case MethodId::oracle: return "oracle";
    case MethodId::naive: return "naive";
    case MethodId::dfm: return "dfm";
    case MethodId::dla: return "dla";
    case MethodId::nn_dla: return "nn-dla";
  }
  return "?";
}

MethodId parse_method(std::string_view text) {
  for (MethodId m : all_methods()) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown method '" + std::string(text) +
                    "' (expected oracle, naive, dfm, dla or nn-dla)");
}

const std::vector<MethodId>& all_methods() {
  static const std::vector<MethodId> methods{MethodId::oracle, MethodId::naive, MethodId::dfm,
                                             MethodId::dla, MethodId::nn_dla};
  return methods;
}

double log_loss(std::span<const double> preds, std::span<const Label> y_true) {
  if (preds.empty()) throw InvalidInput("log_loss of empty input");
  if (preds.size() != y_true.size()) throw InvalidInput("log_loss: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = std::clamp(preds[i], kProbabilityFloor, 1.0 - kProbabilityFloor);
    acc += y_true[i] ? -std::log(p) : -std::log1p(-p);
  }
  return acc / static_cast<double>(preds.size());
}

double relative_log_loss(double method_ll, double oracle_ll) {
  if (!(oracle_ll > 0.0)) throw InvalidInput("oracle log-loss must be positive");
  return method_ll / oracle_ll;
}

double mean_propensity(const SyntheticDataset& data) {
  if (data.samples.empty()) throw InvalidInput("mean_propensity of empty dataset");
  double acc = 0.0;
  for (const auto& s : data.samples) {
    if (!s.theta_true) throw MissingField("theta_true");
    acc += *s.theta_true;
  }
  return acc / static_cast<double>(data.size());
}

double sample_mean(std::span<const double> values) {
  if (values.empty()) return kNaN;
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return kNaN;
  const double mean = sample_mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

std::size_t ResultsTable::failed_cells() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return c.failed; }));
}

const AggregateResult* ResultsTable::find(MethodId method, double L) const {
  for (const auto& a : aggregates) {
    if (a.method == method && a.L == L) return &a;
  }
  return nullptr;
}

TrainConfig ExperimentGrid::train_config_for(MethodId method, std::uint64_t seed) const {
  auto it = train_overrides.find(method);
  TrainConfig config = it == train_overrides.end() ? train : it->second;
  if (method == MethodId::dla) config.loss_variant = LossVariant::ips;
  if (method == MethodId::nn_dla) config.loss_variant = LossVariant::nonneg;
  config.seed = seed;
  return config;
}

void ExperimentGrid::validate() const {
  if (L_values.empty() || seeds.empty() || methods.empty()) {
    throw ConfigError("experiment grid needs at least one L, seed and method");
  }
  if (std::find(methods.begin(), methods.end(), MethodId::oracle) == methods.end()) {
    throw ConfigError("experiment methods must include oracle (relative log-loss baseline)");
  }
  for (double L : L_values) {
    if (!(L > 0.0)) throw ConfigError("experiment L values must be > 0");
  }
  synth.validate();
  for (MethodId m : methods) train_config_for(m, 1).validate(synth.n);
}

std::vector<CellResult> run_cell(const ExperimentGrid& grid, double L, std::uint64_t seed) {
  SynthConfig synth = grid.synth;
  synth.training_period = L;
  synth.seed = seed;
  const SyntheticDataset train = generate(synth);
  const SyntheticDataset test = generate_test_set(synth, train.coefficients);
  const std::vector<Label> y_test = true_labels(test);
  const double propensity = mean_propensity(train);

  std::vector<CellResult> out;
  for (MethodId method : grid.methods) {
    CellResult cell;
    cell.method = method;
    cell.L = L;
    cell.seed = seed;
    cell.mean_propensity = propensity;
    try {
      const TrainConfig config = grid.train_config_for(method, seed);
      Vector preds;
      switch (method) {
        case MethodId::oracle:
        case MethodId::naive: {
          const ModelFit fit =
              method == MethodId::oracle ? train_oracle(train, config) : train_naive(train, config);
          preds = predict_all(test, [&](const Vector& x) { return predict_cvr(fit.model, x); });
          cell.converged = fit.report.converged;
          break;
        }
        case MethodId::dfm: {
          const DfmFit fit = train_dfm(train, config);
          preds = predict_all(test,
                              [&](const Vector& x) { return fit.model.conversion_probability(x); });
          cell.converged = fit.report.converged;
          break;
        }
        case MethodId::dla:
        case MethodId::nn_dla: {
          const DlaFit fit = train_dla(train, config);
          preds = predict_all(test, [&](const Vector& x) { return predict_cvr(fit.cvr_model, x); });
          cell.converged = fit.report.converged;
          break;
        }
      }
      cell.test_log_loss = log_loss(preds, y_test);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
      cell.test_log_loss = kNaN;
    }
    out.push_back(std::move(cell));
  }

  const auto oracle = std::find_if(out.begin(), out.end(),
                                   [](const CellResult& c) { return c.method == MethodId::oracle; });
  for (auto& cell : out) {
    if (cell.failed || oracle == out.end() || oracle->failed) {
      cell.relative_log_loss = kNaN;
      if (!cell.failed && oracle != out.end() && oracle->failed) {
        cell.failed = true;
        cell.error = "oracle failed in this cell";
      }
      continue;
    }
    cell.relative_log_loss = relative_log_loss(cell.test_log_loss, oracle->test_log_loss);
  }
  return out;
}

ResultsTable run_experiment(const ExperimentGrid& grid, const CellCallback& on_cell) {
  grid.validate();
  struct WorkItem {
    std::size_t L_index;
    std::size_t seed_index;
  };
  std::vector<WorkItem> items;
  for (std::size_t li = 0; li < grid.L_values.size(); ++li) {
    for (std::size_t si = 0; si < grid.seeds.size(); ++si) items.push_back({li, si});
  }
  std::vector<std::vector<CellResult>> results(items.size());

  std::size_t workers = grid.jobs == 0 ? std::thread::hardware_concurrency() : grid.jobs;
  workers = std::clamp<std::size_t>(workers, 1, items.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < items.size(); k = next++) {
      const WorkItem& item = items[k];
      results[k] = run_cell(grid, grid.L_values[item.L_index], grid.seeds[item.seed_index]);
      if (on_cell) {
        std::lock_guard lock(callback_mutex);
        for (const auto& c : results[k]) on_cell(c);
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ResultsTable table;
  for (std::size_t mi = 0; mi < grid.methods.size(); ++mi) {
    for (std::size_t li = 0; li < grid.L_values.size(); ++li) {
      Vector rel;
      for (std::size_t si = 0; si < grid.seeds.size(); ++si) {
        const CellResult& cell = results[li * grid.seeds.size() + si][mi];
        table.cells.push_back(cell);
        if (!cell.failed) rel.push_back(cell.relative_log_loss);
      }
      table.aggregates.push_back(AggregateResult{grid.methods[mi], grid.L_values[li],
                                                 sample_mean(rel), sample_std(rel), rel.size()});
    }
  }
  return table;
}

std::string results_csv(const ResultsTable& table) {
  std::string out = "method,L,seed,test_log_loss,relative_log_loss,mean_propensity,converged\n";
  for (const auto& c : table.cells) {
    out += to_string(c.method) + "," + format_real(c.L, kCsvDigits) + "," +
           std::to_string(c.seed) + "," + format_real(c.test_log_loss, kCsvDigits) + "," +
           format_real(c.relative_log_loss, kCsvDigits) + "," +
           format_real(c.mean_propensity, kCsvDigits) + "," + (c.converged ? "true" : "false") +
           "\n";
  }
  return out;
}

std::string aggregates_csv(const ResultsTable& table) {
  std::string out = "method,L,mean_rel_ll,std_rel_ll,n_seeds\n";
  for (const auto& a : table.aggregates) {
    out += to_string(a.method) + "," + format_real(a.L, kCsvDigits) + "," +
           format_real(a.mean_rel_ll, kCsvDigits) + "," + format_real(a.std_rel_ll, kCsvDigits) +
           "," + std::to_string(a.n_seeds) + "\n";
  }
  return out;
}

}  // namespace dladf

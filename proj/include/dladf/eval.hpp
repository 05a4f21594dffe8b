#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dladf/synthgen.hpp"
#include "dladf/trainers.hpp"

namespace dladf {

enum class MethodId { oracle, naive, dfm, dla, nn_dla };

std::string to_string(MethodId method);
MethodId parse_method(std::string_view text);
const std::vector<MethodId>& all_methods();

// Mean binary cross entropy, predictions clamped to [1e-12, 1 - 1e-12].
double log_loss(std::span<const double> preds, std::span<const Label> y_true);
double relative_log_loss(double method_ll, double oracle_ll);
// Mean theta_true over the training samples.
double mean_propensity(const SyntheticDataset& data);

double sample_mean(std::span<const double> values);
// Divisor n - 1; NaN for fewer than two values.
double sample_std(std::span<const double> values);

struct CellResult {
  MethodId method = MethodId::oracle;
  double L = 0.0;
  std::uint64_t seed = 0;
  double test_log_loss = 0.0;
  double relative_log_loss = 0.0;
  double mean_propensity = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct AggregateResult {
  MethodId method = MethodId::oracle;
  double L = 0.0;
  double mean_rel_ll = 0.0;
  double std_rel_ll = 0.0;
  std::size_t n_seeds = 0;
};

struct ResultsTable {
  // Ordered by (method in grid order, L in grid order, seed in grid order).
  std::vector<CellResult> cells;
  std::vector<AggregateResult> aggregates;

  std::size_t failed_cells() const;
  const AggregateResult* find(MethodId method, double L) const;
};

struct ExperimentGrid {
  std::vector<double> L_values{0.5, 1.0, 2.0, 4.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<MethodId> methods = all_methods();
  // n, p, sigma_x, sigma_w, delay family ...; L and seed are set per cell.
  SynthConfig synth;
  TrainConfig train;
  std::map<MethodId, TrainConfig> train_overrides;
  // Worker threads; 0 means hardware concurrency.
  std::size_t jobs = 0;

  // Per-method training config. dla forces loss_variant = ips and nn-dla
  // forces nonneg; the training seed is the cell seed.
  TrainConfig train_config_for(MethodId method, std::uint64_t seed) const;
  void validate() const;
};

// Test-set log-loss of every method on one (L, seed) cell. Methods that throw
// are reported as failed cells.
std::vector<CellResult> run_cell(const ExperimentGrid& grid, double L, std::uint64_t seed);

using CellCallback = std::function<void(const CellResult&)>;

// Runs every (L, seed) cell on a worker pool; results do not depend on the
// number of workers.
ResultsTable run_experiment(const ExperimentGrid& grid, const CellCallback& on_cell = {});

// method,L,seed,test_log_loss,relative_log_loss,mean_propensity,converged
std::string results_csv(const ResultsTable& table);
// method,L,mean_rel_ll,std_rel_ll,n_seeds
std::string aggregates_csv(const ResultsTable& table);

}  // namespace dladf

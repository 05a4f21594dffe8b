#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dladf/eval.hpp"
#include "dladf/synthgen.hpp"
#include "dladf/trainers.hpp"

namespace dladf {

// Writes via a sibling temporary file and rename, so readers never observe a
// partially written file.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// JSON Lines. First line: {"config": {...}, "coefficients": {"w_cvr": [...],
// "w_expo": [...]}}. Then one line per sample with keys
// x, ts_click, d, e, gamma_true, theta_true, y_true, o_true, y_obs; absent
// fields are omitted. Reals use 17 significant digits.
std::string dataset_to_jsonl(const SyntheticDataset& data);
SyntheticDataset dataset_from_jsonl(const std::string& text);

std::string synth_config_to_json(const SynthConfig& config);

std::string dfm_model_to_json(const DfmModel& model);
DfmModel dfm_model_from_json(const std::string& text);

std::string report_to_json(const TrainReport& report);
// epoch,loss[,propensity_loss]
std::string loss_curve_csv(const TrainReport& report);

// Run configuration file:
//   {
//     "synth": {"n", "p", "sigma_x", "sigma_w", "L", "delay_family",
//               "normal_delay_std", "observation_rule", "seed", "test_n"},
//     "train": {<TrainConfig fields>, "overrides": {"<method>": {<fields>}}},
//     "experiment": {"L": [...], "seeds": k | [...], "methods": [...], "jobs"}
//   }
// Every section and key is optional; unknown keys are a ConfigError.
// TrainConfig fields: batch_size, learning_rate, optimizer, beta1, beta2,
// adam_epsilon, max_epochs, convergence_tol, clip_epsilon, loss_variant,
// init, init_sigma, seed.
struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  std::map<MethodId, TrainConfig> train_overrides;
  std::vector<double> L_values{0.5, 1.0, 2.0, 4.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<MethodId> methods = all_methods();
  std::size_t jobs = 0;

  TrainConfig train_for(MethodId method) const;
  ExperimentGrid grid() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace dladf

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dladf/losses.hpp"
#include "dladf/model.hpp"
#include "dladf/rng.hpp"

namespace dladf {

enum class DelayFamily { exponential, normal };
// elapsed: O = 1 iff D <= E.  literal: O = 1 iff D <= L.
enum class ObservationRule { elapsed, literal };

std::string to_string(DelayFamily family);
std::string to_string(ObservationRule rule);
DelayFamily parse_delay_family(std::string_view text);
ObservationRule parse_observation_rule(std::string_view text);

// Time unit is days throughout.
struct SynthConfig {
  std::size_t n = 100000;
  std::size_t p = 30;
  double sigma_x = 0.5;
  double sigma_w = 1.0;
  double training_period = 1.0;  // L
  DelayFamily delay_family = DelayFamily::exponential;
  double normal_delay_std = 1.0;
  ObservationRule observation_rule = ObservationRule::elapsed;
  std::uint64_t seed = 1;
  // Held-out set size; 0 means "same as n".
  std::size_t test_n = 0;

  std::size_t effective_test_n() const { return test_n == 0 ? n : test_n; }
  // Throws ConfigError.
  void validate() const;
};

struct Coefficients {
  Vector w_cvr;
  Vector w_expo;
};

// Fields other than x are optional: test sets carry only x, gamma_true and
// y_true, and files read from disk may omit anything.
struct SyntheticSample {
  Vector x;
  std::optional<double> ts_click;
  std::optional<double> delay;
  std::optional<double> elapsed;
  std::optional<double> gamma_true;
  std::optional<double> theta_true;
  std::optional<Label> y_true;
  std::optional<Label> o_true;
  std::optional<Label> y_obs;
};

struct SyntheticDataset {
  SynthConfig config;
  Coefficients coefficients;
  std::vector<SyntheticSample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t feature_dim() const { return samples.empty() ? config.p : samples[0].x.size(); }
};

Coefficients sample_coefficients(std::size_t p, double sigma_w, Rng& rng);

// sigmoid(w_cvr . x), no intercept.
double true_cvr(std::span<const double> x, std::span<const double> w_cvr);

// Mean delay exp(w_expo . x) in days.
double mean_delay(std::span<const double> x, std::span<const double> w_expo);

// Exponential with the given mean, or Normal(mean, normal_std) conditioned on
// D >= 0 (rejection).
double sample_delay(std::span<const double> x, std::span<const double> w_expo, DelayFamily family,
                    double normal_std, Rng& rng);

// P(D <= e | x) under the delay family.
double delay_cdf(double e, double mean, DelayFamily family, double normal_std);
double true_propensity(std::span<const double> x, double e, const Coefficients& coefficients,
                       DelayFamily family, double normal_std);

// Training data. Coefficients come from stream (seed, "coefficients") and
// samples from (seed, "train"); per sample the draws are, in order,
// x, ts_click, D, Y. Datasets that differ only in L therefore share x, D and
// Y and have ts_click scaled by L.
SyntheticDataset generate(const SynthConfig& config);

// Held-out set from stream (seed, "test"): fresh x, gamma_true and
// y_true ~ Bernoulli(gamma_true). Nothing time-related is populated.
SyntheticDataset generate_test_set(const SynthConfig& config, const Coefficients& coefficients);

// Throws MissingField(name) unless every sample carries the field. Names are
// the dataset-file keys: x, ts_click, d, e, gamma_true, theta_true, y_true,
// o_true, y_obs.
void require_field(const SyntheticDataset& data, std::string_view name);

// Gather samples into a loss batch. Optional label lists are attached only if
// every selected sample has them. Absent elapsed times become NaN and absent
// y_obs become 0; trainers check the fields they need before calling this.
LabeledBatch make_batch(const SyntheticDataset& data, std::span<const std::size_t> indices);
LabeledBatch make_batch(const SyntheticDataset& data);

}  // namespace dladf

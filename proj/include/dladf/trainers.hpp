#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "dladf/losses.hpp"
#include "dladf/model.hpp"
#include "dladf/synthgen.hpp"

namespace dladf {

enum class LossVariant { ips, nonneg };

std::string to_string(LossVariant variant);
LossVariant parse_loss_variant(std::string_view text);
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct TrainConfig {
  std::size_t batch_size = 1024;
  double learning_rate = 0.01;
  OptimizerSettings optimizer;
  std::size_t max_epochs = 200;
  // Stop once |loss_t - loss_{t-1}| / |loss_{t-1}| drops below this.
  double convergence_tol = 1e-5;
  ClipPolicy clip;
  LossVariant loss_variant = LossVariant::nonneg;
  InitPolicy init = InitPolicy::zeros;
  double init_sigma = 0.01;
  std::uint64_t seed = 1;

  // Throws ConfigError. A batch larger than the dataset is rejected.
  void validate(std::size_t dataset_size) const;
};

struct TrainReport {
  std::size_t epochs_run = 0;
  double final_loss = 0.0;
  std::size_t clip_activations = 0;
  bool converged = false;
  // Sample-weighted mean of the pre-update mini-batch losses, per epoch. For
  // the dual trainer this is the conversion-rate loss.
  Vector loss_curve;
  // Dual trainer only: the propensity loss per epoch.
  Vector propensity_loss_curve;
};

struct ModelFit {
  LinearSigmoidModel model;
  TrainReport report;
};

struct DlaFit {
  LinearSigmoidModel cvr_model;
  LinearSigmoidModel propensity_model;
  TrainReport report;
};

// Where the dual trainer gets the propensities that weight the CVR loss.
// ground_truth reads theta_true from the data and leaves g untouched; it exists
// to isolate the CVR half of the algorithm in experiments and tests.
enum class PropensitySource { learned, ground_truth };

struct DlaOptions {
  PropensitySource propensity = PropensitySource::learned;
};

// Alternating mini-batch training of the CVR predictor f and the propensity
// estimator g. Each iteration draws one mini-batch, steps f on the IPS (or
// non-negative IPS) loss with g's propensities held fixed, then steps g on the
// ICVR (or non-negative ICVR) loss with the just-updated f held fixed.
DlaFit train_dla(const SyntheticDataset& data, const TrainConfig& config,
                 const DlaOptions& options = {});

// Logistic regression on y_obs.
ModelFit train_naive(const SyntheticDataset& data, const TrainConfig& config);
// Logistic regression on y_true. Throws MissingField("y_true").
ModelFit train_oracle(const SyntheticDataset& data, const TrainConfig& config);

// Delayed feedback model: conversion probability p(x) = sigmoid(a . x + a0)
// and exponential delay with hazard lambda(x) = exp(c . x + c0), fitted
// jointly by maximum likelihood on (y_obs, d, e).
struct DfmModel {
  LinearSigmoidModel conversion;
  // weights/bias of the log-hazard; the sigmoid of this model is unused.
  LinearSigmoidModel log_hazard;

  static DfmModel zeros(std::size_t p);
  double conversion_probability(std::span<const double> x) const;
  double hazard(std::span<const double> x) const;
  std::size_t num_parameters() const {
    return conversion.num_parameters() + log_hazard.num_parameters();
  }
};

// Mean over the batch of
//   y_obs = 1:  -[log p(x) + log lambda(x) - lambda(x) d]
//   y_obs = 0:  -log[1 - p(x) + p(x) exp(-lambda(x) e)]
// Throws MissingField("d") if an observed conversion has no delay.
double dfm_negative_log_likelihood(const DfmModel& model, const LabeledBatch& batch);
// Gradient layout: [conversion weights, conversion bias, hazard weights, hazard bias].
LossAndGradient dfm_loss_and_gradient(const DfmModel& model, const LabeledBatch& batch);

struct DfmFit {
  DfmModel model;
  TrainReport report;
};

DfmFit train_dfm(const SyntheticDataset& data, const TrainConfig& config);

}  // namespace dladf

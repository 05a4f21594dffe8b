#pragma once

// Loss estimators for learning from delayed conversions.
//
// Every estimator here is a sample mean of a reweighted binary cross entropy
//
//     l_i = w_i * delta1(pred_i) + (1 - w_i) * delta0(pred_i),
//     w_i = y_obs_i / clamp(denominator_i)
//
// For the conversion-rate predictor f the denominator is the propensity
// theta(x, e) (IPS estimator); for the propensity estimator g it is the
// conversion rate gamma(x) (ICVR estimator). Both are unbiased for the
// corresponding full-information loss. The non-negative variant clamps each
// l_i at zero before averaging.
//
// Reductions run left to right in sample order so results do not depend on
// how a caller partitions work.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dladf/model.hpp"

namespace dladf {

using Label = std::uint8_t;

// Row-major feature rows of equal length.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t dim) : dim_(dim) {}

  std::size_t rows() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * dim_, dim_);
  }
  std::span<const double> operator[](std::size_t i) const { return row(i); }
  // The first row fixes the dimension; later rows must match it.
  void push_back(std::span<const double> row);
  void reserve(std::size_t rows) { values_.reserve(rows * dim_); }

 private:
  std::size_t dim_ = 0;
  Vector values_;
};

struct LabeledBatch {
  FeatureMatrix features;
  Vector elapsed;
  std::vector<Label> y_obs;
  std::optional<std::vector<Label>> y_true;
  std::optional<std::vector<Label>> o_true;
  // Delay of each sample in days; read only for observed conversions (DFM).
  std::optional<Vector> delay;

  std::size_t size() const { return y_obs.size(); }
  // Throws InvalidInput on ragged lists or y_obs = 1 with y_true/o_true = 0.
  void validate() const;
};

// Score of sample i under a model; appends elapsed[i] when the model is a
// propensity model.
double model_score(const LinearSigmoidModel& model, const LabeledBatch& batch, std::size_t i);
Vector model_predictions(const LinearSigmoidModel& model, const LabeledBatch& batch);

struct DeltaPair {
  double delta1 = 0.0;  // -log(pred)
  double delta0 = 0.0;  // -log(1 - pred)
};

// Predictions are clamped to [kProbabilityFloor, 1 - kProbabilityFloor]
// before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

DeltaPair cross_entropy_deltas(double pred);

struct ClipPolicy {
  // Denominators are clamped to [epsilon, 1] before inversion. Zero disables
  // the lower clamp.
  double epsilon = 0.01;

  static ClipPolicy disabled() { return ClipPolicy{0.0}; }
  bool enabled() const { return epsilon > 0.0; }
  void validate() const;
};

// Filled when passed to a loss: number of denominators the clip moved, and
// every denominator actually used.
struct ClipStats {
  std::size_t activations = 0;
  Vector denominators;
};

double ideal_loss(std::span<const double> preds, std::span<const Label> y_true);
// Throws MissingField("y_true") when the batch carries no ground truth.
double ideal_loss(std::span<const double> preds, const LabeledBatch& batch);

// Per-sample reweighted cross entropy l_i.
Vector reweighted_terms(std::span<const double> preds, std::span<const Label> y_obs,
                        std::span<const double> denominators, const ClipPolicy& clip,
                        ClipStats* stats = nullptr);

double ips_loss(std::span<const double> preds, std::span<const Label> y_obs,
                std::span<const double> propensities, const ClipPolicy& clip,
                ClipStats* stats = nullptr);
double icvr_loss(std::span<const double> preds_g, std::span<const Label> y_obs,
                 std::span<const double> cvrs, const ClipPolicy& clip,
                 ClipStats* stats = nullptr);
// mean_i max(l_i, 0)
double nonneg_loss(std::span<const double> per_sample);

// Exact variance of the IPS estimator under known gamma and theta:
// (1/N^2) sum gamma (1/theta - gamma) (delta1 - delta0)^2.
double ips_variance(std::span<const double> gammas, std::span<const double> thetas,
                    std::span<const DeltaPair> deltas);
// Same formula with the roles of gamma and theta swapped.
double icvr_variance(std::span<const double> thetas, std::span<const double> gammas,
                     std::span<const DeltaPair> deltas_g);

// Gradients w.r.t. [weights..., bias]. The model's augmented_with_elapsed flag
// decides whether elapsed time is part of the input. Denominators are
// constants.
Vector grad_ips(const LinearSigmoidModel& model, const LabeledBatch& batch,
                std::span<const double> propensities, const ClipPolicy& clip);
Vector grad_icvr(const LinearSigmoidModel& model, const LabeledBatch& batch,
                 std::span<const double> cvrs, const ClipPolicy& clip);
// Subgradient of the non-negative loss: samples with l_i < 0 contribute
// nothing, samples with l_i >= 0 contribute their full gradient.
Vector grad_nonneg(const LinearSigmoidModel& model, const LabeledBatch& batch,
                   std::span<const double> denominators, const ClipPolicy& clip);

// Loss and gradient in one pass, used by the trainers.
struct LossAndGradient {
  double loss = 0.0;
  Vector gradient;
  std::size_t clip_activations = 0;
};
LossAndGradient reweighted_loss_and_gradient(const LinearSigmoidModel& model,
                                             const LabeledBatch& batch,
                                             std::span<const double> denominators,
                                             const ClipPolicy& clip, bool nonnegative);

// Plain cross entropy against given labels, with gradient.
LossAndGradient cross_entropy_loss_and_gradient(const LinearSigmoidModel& model,
                                                const LabeledBatch& batch,
                                                std::span<const Label> labels);

}  // namespace dladf

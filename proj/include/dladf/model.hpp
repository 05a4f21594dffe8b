#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dladf {

using Vector = std::vector<double>;

// 1 / (1 + exp(-z)), branched on the sign of z so exp never overflows.
double sigmoid(double z);
// log(sigmoid(z)) without cancellation for large |z|.
double log_sigmoid(double z);
double logit(double p);

double dot(std::span<const double> a, std::span<const double> b);

// sigmoid(weights . x + bias).
//
// The same type holds both the conversion-rate predictor f (input x) and the
// propensity estimator g (input [x; e], augmented_with_elapsed = true).
// Gradients and optimizer state use the flat layout [weights..., bias].
struct LinearSigmoidModel {
  Vector weights;
  double bias = 0.0;
  bool augmented_with_elapsed = false;

  static LinearSigmoidModel zeros(std::size_t input_dim, bool augmented = false);

  std::size_t input_dim() const { return weights.size(); }
  std::size_t num_parameters() const { return weights.size() + 1; }
  // Raw score on a full input vector (already augmented if applicable).
  double score(std::span<const double> input) const;

  bool operator==(const LinearSigmoidModel&) const = default;
};

double predict_cvr(const LinearSigmoidModel& model, std::span<const double> x);
double predict_propensity(const LinearSigmoidModel& model, std::span<const double> x,
                          double elapsed);

enum class InitPolicy { zeros, gaussian };

// Zero init, or N(0, sigma^2) per parameter drawn from a seeded stream.
LinearSigmoidModel init_model(std::size_t input_dim, bool augmented, InitPolicy policy,
                              std::uint64_t seed, double sigma = 0.01);

enum class OptimizerKind { sgd, adam };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_parameters(std::size_t n);
};

// One descent step on [weights..., bias]. Throws TrainingDiverged (epoch 0)
// on a non-finite gradient and InvalidInput on a size mismatch.
void apply_gradient_step(LinearSigmoidModel& model, OptimizerState& state,
                         std::span<const double> grad, double lr,
                         const OptimizerSettings& settings);

// {"weights": [...], "bias": x, "augmented_with_elapsed": bool}, reals at
// 17 significant digits.
std::string model_to_json(const LinearSigmoidModel& model);
LinearSigmoidModel model_from_json(const std::string& text);

std::string format_real(double value, int significant_digits);

}  // namespace dladf

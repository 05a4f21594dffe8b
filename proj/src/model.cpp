#include "dladf/model.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "dladf/errors.hpp"
#include "dladf/rng.hpp"

namespace dladf {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

double log_sigmoid(double z) {
  if (z >= 0.0) {
    return -std::log1p(std::exp(-z));
  }
  return z - std::log1p(std::exp(z));
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidInput("dot: dimension mismatch " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

LinearSigmoidModel LinearSigmoidModel::zeros(std::size_t input_dim, bool augmented) {
  return LinearSigmoidModel{Vector(input_dim, 0.0), 0.0, augmented};
}

double LinearSigmoidModel::score(std::span<const double> input) const {
  if (input.size() != weights.size()) {
    throw InvalidInput("model expects " + std::to_string(weights.size()) +
                       " inputs, got " + std::to_string(input.size()));
  }
  double z = bias;
  for (std::size_t j = 0; j < input.size(); ++j) z += weights[j] * input[j];
  return z;
}

double predict_cvr(const LinearSigmoidModel& model, std::span<const double> x) {
  return sigmoid(model.score(x));
}

double predict_propensity(const LinearSigmoidModel& model, std::span<const double> x,
                          double elapsed) {
  if (!(elapsed >= 0.0)) {
    throw InvalidInput("elapsed time must be non-negative");
  }
  if (x.size() + 1 != model.weights.size()) {
    throw InvalidInput("propensity model expects " + std::to_string(model.weights.size() - 1) +
                       " features, got " + std::to_string(x.size()));
  }
  double z = model.bias + model.weights.back() * elapsed;
  for (std::size_t j = 0; j < x.size(); ++j) z += model.weights[j] * x[j];
  return sigmoid(z);
}

LinearSigmoidModel init_model(std::size_t input_dim, bool augmented, InitPolicy policy,
                              std::uint64_t seed, double sigma) {
  auto model = LinearSigmoidModel::zeros(input_dim, augmented);
  if (policy == InitPolicy::gaussian) {
    auto rng = Rng::for_stream(seed, augmented ? "init/propensity" : "init/cvr");
    for (double& w : model.weights) w = rng.normal(0.0, sigma);
    model.bias = rng.normal(0.0, sigma);
  }
  return model;
}

OptimizerState OptimizerState::for_parameters(std::size_t n) {
  return OptimizerState{Vector(n, 0.0), Vector(n, 0.0), 0};
}

void apply_gradient_step(LinearSigmoidModel& model, OptimizerState& state,
                         std::span<const double> grad, double lr,
                         const OptimizerSettings& settings) {
  const std::size_t n = model.num_parameters();
  if (grad.size() != n) {
    throw InvalidInput("gradient has " + std::to_string(grad.size()) + " entries, model has " +
                       std::to_string(n) + " parameters");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw TrainingDiverged("non-finite gradient", 0);
  }
  if (state.first_moment.size() != n) state = OptimizerState::for_parameters(n);
  ++state.step;

  auto param = [&](std::size_t k) -> double& {
    return k + 1 == n ? model.bias : model.weights[k];
  };

  if (settings.kind == OptimizerKind::sgd) {
    for (std::size_t k = 0; k < n; ++k) param(k) -= lr * grad[k];
    return;
  }

  const auto t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(settings.beta1, t);
  const double bias2 = 1.0 - std::pow(settings.beta2, t);
  for (std::size_t k = 0; k < n; ++k) {
    state.first_moment[k] = settings.beta1 * state.first_moment[k] + (1.0 - settings.beta1) * grad[k];
    state.second_moment[k] =
        settings.beta2 * state.second_moment[k] + (1.0 - settings.beta2) * grad[k] * grad[k];
    const double m_hat = state.first_moment[k] / bias1;
    const double v_hat = state.second_moment[k] / bias2;
    param(k) -= lr * m_hat / (std::sqrt(v_hat) + settings.epsilon);
  }
}

std::string format_real(double value, int significant_digits) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
  return buf;
}

std::string model_to_json(const LinearSigmoidModel& model) {
  std::string out = "{\"weights\": [";
  for (std::size_t j = 0; j < model.weights.size(); ++j) {
    if (j) out += ", ";
    out += format_real(model.weights[j], 17);
  }
  out += "], \"bias\": " + format_real(model.bias, 17);
  out += ", \"augmented_with_elapsed\": ";
  out += model.augmented_with_elapsed ? "true" : "false";
  out += "}";
  return out;
}

LinearSigmoidModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("model JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("weights") || !j.contains("bias")) {
    throw InvalidInput("model JSON must have 'weights' and 'bias'");
  }
  LinearSigmoidModel model;
  model.weights = j.at("weights").get<Vector>();
  model.bias = j.at("bias").get<double>();
  model.augmented_with_elapsed = j.value("augmented_with_elapsed", false);
  return model;
}

}  // namespace dladf

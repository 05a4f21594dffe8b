#include "dladf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dladf/errors.hpp"

namespace dladf {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidInput(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                       std::to_string(b));
  }
}

double mean_of(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("mean of empty sample");
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

// Inverse weight y_obs / clamp(denominator).
double observation_weight(Label y_obs, double denominator, const ClipPolicy& clip,
                          ClipStats* stats) {
  if (!(denominator >= 0.0) || denominator > 1.0 + 1e-12) {
    if (!clip.enabled() || std::isnan(denominator)) {
      throw InvalidInput("denominator outside [0, 1]: " + std::to_string(denominator));
    }
  }
  double used = std::min(denominator, 1.0);
  if (clip.enabled() && used < clip.epsilon) {
    used = clip.epsilon;
    if (stats) ++stats->activations;
  }
  if (stats) stats->denominators.push_back(used);
  if (y_obs == 0) return 0.0;
  if (used <= 0.0) throw DivisionGuard("zero denominator on an observed conversion");
  return 1.0 / used;
}

struct ScoreDeltas {
  double pred;
  double delta1;
  double delta0;
};

ScoreDeltas deltas_from_score(double z) {
  return ScoreDeltas{sigmoid(z), -log_sigmoid(z), -log_sigmoid(-z)};
}

void accumulate_input(Vector& grad, const LinearSigmoidModel& model, const LabeledBatch& batch,
                      std::size_t i, double scale) {
  const auto x = batch.features.row(i);
  for (std::size_t j = 0; j < x.size(); ++j) grad[j] += scale * x[j];
  if (model.augmented_with_elapsed) grad[x.size()] += scale * batch.elapsed[i];
  grad.back() += scale;
}

void check_model_fits(const LinearSigmoidModel& model, const LabeledBatch& batch) {
  if (batch.size() == 0) throw InvalidInput("empty batch");
  const std::size_t expected = batch.features.dim() + (model.augmented_with_elapsed ? 1 : 0);
  if (model.input_dim() != expected) {
    throw InvalidInput("model input dimension " + std::to_string(model.input_dim()) +
                       " does not match batch (" + std::to_string(expected) + ")");
  }
}

}  // namespace

void FeatureMatrix::push_back(std::span<const double> row) {
  if (dim_ == 0 && values_.empty()) dim_ = row.size();
  if (row.size() != dim_) {
    throw InvalidInput("feature row has " + std::to_string(row.size()) + " entries, expected " +
                       std::to_string(dim_));
  }
  values_.insert(values_.end(), row.begin(), row.end());
}

void LabeledBatch::validate() const {
  const std::size_t n = y_obs.size();
  require_same_length(features.rows(), n, "features");
  require_same_length(elapsed.size(), n, "elapsed");
  if (y_true) require_same_length(y_true->size(), n, "y_true");
  if (o_true) require_same_length(o_true->size(), n, "o_true");
  if (delay) require_same_length(delay->size(), n, "delay");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(elapsed[i] >= 0.0)) throw InvalidInput("negative elapsed time");
    if (y_obs[i] == 1) {
      if ((y_true && (*y_true)[i] != 1) || (o_true && (*o_true)[i] != 1)) {
        throw InvalidInput("y_obs = 1 requires y_true = 1 and o_true = 1");
      }
    }
  }
}

double model_score(const LinearSigmoidModel& model, const LabeledBatch& batch, std::size_t i) {
  const auto x = batch.features.row(i);
  if (!model.augmented_with_elapsed) return model.score(x);
  if (x.size() + 1 != model.weights.size()) {
    throw InvalidInput("propensity model input dimension mismatch");
  }
  double z = model.bias + model.weights.back() * batch.elapsed[i];
  for (std::size_t j = 0; j < x.size(); ++j) z += model.weights[j] * x[j];
  return z;
}

Vector model_predictions(const LinearSigmoidModel& model, const LabeledBatch& batch) {
  Vector out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = sigmoid(model_score(model, batch, i));
  return out;
}

DeltaPair cross_entropy_deltas(double pred) {
  if (!(pred >= 0.0 && pred <= 1.0)) {
    throw InvalidInput("prediction outside [0, 1]: " + std::to_string(pred));
  }
  const double p = std::clamp(pred, kProbabilityFloor, 1.0 - kProbabilityFloor);
  return DeltaPair{-std::log(p), -std::log1p(-p)};
}

void ClipPolicy::validate() const {
  if (!(epsilon == 0.0 || (epsilon > 0.0 && epsilon < 0.5))) {
    throw ConfigError("clip epsilon must be 0 (disabled) or in (0, 0.5)");
  }
}

double ideal_loss(std::span<const double> preds, std::span<const Label> y_true) {
  require_same_length(preds.size(), y_true.size(), "ideal_loss");
  Vector terms(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const DeltaPair d = cross_entropy_deltas(preds[i]);
    terms[i] = y_true[i] ? d.delta1 : d.delta0;
  }
  return mean_of(terms);
}

double ideal_loss(std::span<const double> preds, const LabeledBatch& batch) {
  if (!batch.y_true) throw MissingField("y_true");
  return ideal_loss(preds, *batch.y_true);
}

Vector reweighted_terms(std::span<const double> preds, std::span<const Label> y_obs,
                        std::span<const double> denominators, const ClipPolicy& clip,
                        ClipStats* stats) {
  require_same_length(preds.size(), y_obs.size(), "labels");
  require_same_length(preds.size(), denominators.size(), "denominators");
  Vector terms(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double w = observation_weight(y_obs[i], denominators[i], clip, stats);
    const DeltaPair d = cross_entropy_deltas(preds[i]);
    terms[i] = w * d.delta1 + (1.0 - w) * d.delta0;
  }
  return terms;
}

double ips_loss(std::span<const double> preds, std::span<const Label> y_obs,
                std::span<const double> propensities, const ClipPolicy& clip, ClipStats* stats) {
  return mean_of(reweighted_terms(preds, y_obs, propensities, clip, stats));
}

double icvr_loss(std::span<const double> preds_g, std::span<const Label> y_obs,
                 std::span<const double> cvrs, const ClipPolicy& clip, ClipStats* stats) {
  return mean_of(reweighted_terms(preds_g, y_obs, cvrs, clip, stats));
}

double nonneg_loss(std::span<const double> per_sample) {
  if (per_sample.empty()) throw InvalidInput("mean of empty sample");
  double acc = 0.0;
  for (double l : per_sample) acc += std::max(l, 0.0);
  return acc / static_cast<double>(per_sample.size());
}

double ips_variance(std::span<const double> gammas, std::span<const double> thetas,
                    std::span<const DeltaPair> deltas) {
  require_same_length(gammas.size(), thetas.size(), "ips_variance");
  require_same_length(gammas.size(), deltas.size(), "ips_variance");
  if (gammas.empty()) throw InvalidInput("ips_variance of empty sample");
  double acc = 0.0;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (thetas[i] <= 0.0) throw DivisionGuard("ips_variance: zero propensity");
    const double diff = deltas[i].delta1 - deltas[i].delta0;
    acc += gammas[i] * (1.0 / thetas[i] - gammas[i]) * diff * diff;
  }
  const auto n = static_cast<double>(gammas.size());
  return acc / (n * n);
}

double icvr_variance(std::span<const double> thetas, std::span<const double> gammas,
                     std::span<const DeltaPair> deltas_g) {
  for (double g : gammas) {
    if (g <= 0.0) throw DivisionGuard("icvr_variance: zero conversion rate");
  }
  return ips_variance(thetas, gammas, deltas_g);
}

LossAndGradient reweighted_loss_and_gradient(const LinearSigmoidModel& model,
                                             const LabeledBatch& batch,
                                             std::span<const double> denominators,
                                             const ClipPolicy& clip, bool nonnegative) {
  check_model_fits(model, batch);
  require_same_length(batch.size(), denominators.size(), "denominators");
  ClipStats stats;
  LossAndGradient out;
  out.gradient.assign(model.num_parameters(), 0.0);
  const auto n = static_cast<double>(batch.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double w = observation_weight(batch.y_obs[i], denominators[i], clip, &stats);
    const ScoreDeltas s = deltas_from_score(model_score(model, batch, i));
    const double term = w * s.delta1 + (1.0 - w) * s.delta0;
    if (nonnegative && term < 0.0) continue;
    acc += term;
    // d term / d score = w (pred - 1) + (1 - w) pred = pred - w
    accumulate_input(out.gradient, model, batch, i, (s.pred - w) / n);
  }
  out.loss = acc / n;
  out.clip_activations = stats.activations;
  return out;
}

LossAndGradient cross_entropy_loss_and_gradient(const LinearSigmoidModel& model,
                                                const LabeledBatch& batch,
                                                std::span<const Label> labels) {
  check_model_fits(model, batch);
  require_same_length(batch.size(), labels.size(), "labels");
  LossAndGradient out;
  out.gradient.assign(model.num_parameters(), 0.0);
  const auto n = static_cast<double>(batch.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ScoreDeltas s = deltas_from_score(model_score(model, batch, i));
    const double y = labels[i] ? 1.0 : 0.0;
    acc += labels[i] ? s.delta1 : s.delta0;
    accumulate_input(out.gradient, model, batch, i, (s.pred - y) / n);
  }
  out.loss = acc / n;
  return out;
}

Vector grad_ips(const LinearSigmoidModel& model, const LabeledBatch& batch,
                std::span<const double> propensities, const ClipPolicy& clip) {
  return reweighted_loss_and_gradient(model, batch, propensities, clip, false).gradient;
}

Vector grad_icvr(const LinearSigmoidModel& model, const LabeledBatch& batch,
                 std::span<const double> cvrs, const ClipPolicy& clip) {
  return reweighted_loss_and_gradient(model, batch, cvrs, clip, false).gradient;
}

Vector grad_nonneg(const LinearSigmoidModel& model, const LabeledBatch& batch,
                   std::span<const double> denominators, const ClipPolicy& clip) {
  return reweighted_loss_and_gradient(model, batch, denominators, clip, true).gradient;
}

}  // namespace dladf

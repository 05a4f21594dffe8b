#include "dladf/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "dladf/errors.hpp"
#include "dladf/rng.hpp"

namespace dladf {
namespace {

// Gathers rows of a pre-built full batch.
LabeledBatch gather(const LabeledBatch& full, std::span<const std::size_t> rows) {
  LabeledBatch b;
  b.features = FeatureMatrix(full.features.dim());
  b.features.reserve(rows.size());
  b.elapsed.reserve(rows.size());
  b.y_obs.reserve(rows.size());
  for (std::size_t r : rows) {
    b.features.push_back(full.features[r]);
    b.elapsed.push_back(full.elapsed[r]);
    b.y_obs.push_back(full.y_obs[r]);
  }
  auto pick_labels = [&](const std::optional<std::vector<Label>>& src) {
    std::optional<std::vector<Label>> out;
    if (src) {
      out.emplace();
      out->reserve(rows.size());
      for (std::size_t r : rows) out->push_back((*src)[r]);
    }
    return out;
  };
  b.y_true = pick_labels(full.y_true);
  b.o_true = pick_labels(full.o_true);
  if (full.delay) {
    b.delay.emplace();
    b.delay->reserve(rows.size());
    for (std::size_t r : rows) b.delay->push_back((*full.delay)[r]);
  }
  return b;
}

// Seeded Fisher-Yates; std::shuffle's algorithm is unspecified.
void shuffle_in_place(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.index(i));
    std::swap(order[i - 1], order[j]);
  }
}

struct StepResult {
  double loss = 0.0;
  double secondary_loss = 0.0;
  std::size_t clip_activations = 0;
};

// Epoch-shuffled mini-batch loop with the relative-change stopping rule.
TrainReport run_epochs(const LabeledBatch& full, const TrainConfig& config,
                       const std::function<StepResult(const LabeledBatch&, std::span<const std::size_t>)>& step,
                       bool track_secondary) {
  const std::size_t n = full.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = Rng::for_stream(config.seed, "shuffle");

  TrainReport report;
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_in_place(order, rng);
    double epoch_loss = 0.0;
    double epoch_secondary = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const auto rows = std::span<const std::size_t>(order).subspan(start, stop - start);
      const LabeledBatch batch = gather(full, rows);
      StepResult r;
      try {
        r = step(batch, rows);
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged("training diverged: non-finite gradient", epoch);
      }
      const double share = static_cast<double>(stop - start) / static_cast<double>(n);
      epoch_loss += share * r.loss;
      epoch_secondary += share * r.secondary_loss;
      report.clip_activations += r.clip_activations;
    }
    if (!std::isfinite(epoch_loss) || (track_secondary && !std::isfinite(epoch_secondary))) {
      throw TrainingDiverged("training diverged: non-finite loss", epoch);
    }
    report.loss_curve.push_back(epoch_loss);
    if (track_secondary) report.propensity_loss_curve.push_back(epoch_secondary);
    report.epochs_run = epoch;
    report.final_loss = epoch_loss;
    if (epoch > 1) {
      const double scale = std::max(std::abs(previous), std::numeric_limits<double>::min());
      if (std::abs(epoch_loss - previous) / scale < config.convergence_tol) {
        report.converged = true;
        break;
      }
    }
    previous = epoch_loss;
  }
  return report;
}

ModelFit train_logistic(const LabeledBatch& full, std::size_t p, const TrainConfig& config,
                        bool use_true_labels) {
  ModelFit fit;
  fit.model = init_model(p, false, config.init, config.seed, config.init_sigma);
  auto state = OptimizerState::for_parameters(fit.model.num_parameters());
  fit.report = run_epochs(
      full, config,
      [&](const LabeledBatch& batch, std::span<const std::size_t>) {
        const auto& labels = use_true_labels ? *batch.y_true : batch.y_obs;
        const LossAndGradient lg = cross_entropy_loss_and_gradient(fit.model, batch, labels);
        apply_gradient_step(fit.model, state, lg.gradient, config.learning_rate, config.optimizer);
        return StepResult{lg.loss, 0.0, 0};
      },
      false);
  return fit;
}

LabeledBatch training_batch(const SyntheticDataset& data, const TrainConfig& config) {
  config.validate(data.size());
  return make_batch(data);
}

}  // namespace

std::string to_string(LossVariant variant) {
  return variant == LossVariant::ips ? "ips" : "nonneg";
}

LossVariant parse_loss_variant(std::string_view text) {
  if (text == "ips") return LossVariant::ips;
  if (text == "nonneg") return LossVariant::nonneg;
  throw ConfigError("unknown loss variant '" + std::string(text) + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

void TrainConfig::validate(std::size_t dataset_size) const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (batch_size > dataset_size) {
    throw ConfigError("train.batch_size " + std::to_string(batch_size) +
                      " exceeds dataset size " + std::to_string(dataset_size));
  }
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (!(convergence_tol > 0.0)) throw ConfigError("train.convergence_tol must be > 0");
  if (!(init_sigma >= 0.0)) throw ConfigError("train.init_sigma must be >= 0");
  clip.validate();
}

DlaFit train_dla(const SyntheticDataset& data, const TrainConfig& config,
                 const DlaOptions& options) {
  require_field(data, "y_obs");
  require_field(data, "e");
  const LabeledBatch full = training_batch(data, config);
  Vector true_theta;
  if (options.propensity == PropensitySource::ground_truth) {
    true_theta.reserve(data.size());
    for (const auto& s : data.samples) {
      if (!s.theta_true) throw MissingField("theta_true");
      true_theta.push_back(*s.theta_true);
    }
  }
  const std::size_t p = data.feature_dim();
  DlaFit fit;
  fit.cvr_model = init_model(p, false, config.init, config.seed, config.init_sigma);
  fit.propensity_model = init_model(p + 1, true, config.init, config.seed, config.init_sigma);
  auto f_state = OptimizerState::for_parameters(fit.cvr_model.num_parameters());
  auto g_state = OptimizerState::for_parameters(fit.propensity_model.num_parameters());
  const bool nonneg = config.loss_variant == LossVariant::nonneg;

  fit.report = run_epochs(
      full, config,
      [&](const LabeledBatch& batch, std::span<const std::size_t> rows) {
        Vector propensities;
        if (options.propensity == PropensitySource::ground_truth) {
          for (std::size_t r : rows) propensities.push_back(true_theta[r]);
        } else {
          propensities = model_predictions(fit.propensity_model, batch);
        }
        const LossAndGradient f_step =
            reweighted_loss_and_gradient(fit.cvr_model, batch, propensities, config.clip, nonneg);
        apply_gradient_step(fit.cvr_model, f_state, f_step.gradient, config.learning_rate,
                            config.optimizer);
        if (options.propensity == PropensitySource::ground_truth) {
          return StepResult{f_step.loss, 0.0, f_step.clip_activations};
        }
        const Vector cvrs = model_predictions(fit.cvr_model, batch);
        const LossAndGradient g_step =
            reweighted_loss_and_gradient(fit.propensity_model, batch, cvrs, config.clip, nonneg);
        apply_gradient_step(fit.propensity_model, g_state, g_step.gradient, config.learning_rate,
                            config.optimizer);
        return StepResult{f_step.loss, g_step.loss,
                          f_step.clip_activations + g_step.clip_activations};
      },
      options.propensity == PropensitySource::learned);
  return fit;
}

ModelFit train_naive(const SyntheticDataset& data, const TrainConfig& config) {
  require_field(data, "y_obs");
  return train_logistic(training_batch(data, config), data.feature_dim(), config, false);
}

ModelFit train_oracle(const SyntheticDataset& data, const TrainConfig& config) {
  require_field(data, "y_true");
  return train_logistic(training_batch(data, config), data.feature_dim(), config, true);
}

DfmModel DfmModel::zeros(std::size_t p) {
  return DfmModel{LinearSigmoidModel::zeros(p), LinearSigmoidModel::zeros(p)};
}

double DfmModel::conversion_probability(std::span<const double> x) const {
  return sigmoid(conversion.score(x));
}

double DfmModel::hazard(std::span<const double> x) const { return std::exp(log_hazard.score(x)); }

LossAndGradient dfm_loss_and_gradient(const DfmModel& model, const LabeledBatch& batch) {
  if (batch.size() == 0) throw InvalidInput("empty batch");
  const std::size_t pc = model.conversion.num_parameters();
  const std::size_t ph = model.log_hazard.num_parameters();
  LossAndGradient out;
  out.gradient.assign(pc + ph, 0.0);
  const auto n = static_cast<double>(batch.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = batch.features.row(i);
    const double zc = model.conversion.score(x);
    const double zh = model.log_hazard.score(x);
    const double p = sigmoid(zc);
    const double lambda = std::exp(zh);
    double dzc, dzh;
    if (batch.y_obs[i] == 1) {
      if (!batch.delay || std::isnan((*batch.delay)[i])) throw MissingField("d");
      const double d = (*batch.delay)[i];
      acc += -log_sigmoid(zc) - zh + lambda * d;
      dzc = p - 1.0;
      dzh = lambda * d - 1.0;
    } else {
      const double e = batch.elapsed[i];
      const double survive = std::exp(-lambda * e);
      const double converted_by_e = -std::expm1(-lambda * e);
      // q = 1 - p + p exp(-lambda e) = P(no conversion observed by e)
      const double q = 1.0 - p * converted_by_e;
      acc += -std::log1p(-p * converted_by_e);
      dzc = p * (1.0 - p) * converted_by_e / q;
      dzh = p * survive * lambda * e / q;
    }
    dzc /= n;
    dzh /= n;
    for (std::size_t j = 0; j < x.size(); ++j) {
      out.gradient[j] += dzc * x[j];
      out.gradient[pc + j] += dzh * x[j];
    }
    out.gradient[pc - 1] += dzc;
    out.gradient[pc + ph - 1] += dzh;
  }
  out.loss = acc / n;
  return out;
}

double dfm_negative_log_likelihood(const DfmModel& model, const LabeledBatch& batch) {
  return dfm_loss_and_gradient(model, batch).loss;
}

DfmFit train_dfm(const SyntheticDataset& data, const TrainConfig& config) {
  require_field(data, "y_obs");
  require_field(data, "e");
  const bool any_delay = std::any_of(data.samples.begin(), data.samples.end(),
                                     [](const SyntheticSample& s) { return s.delay.has_value(); });
  const LabeledBatch full = training_batch(data, config);
  if (!full.delay || !any_delay) throw MissingField("d");
  const std::size_t p = data.feature_dim();
  DfmFit fit;
  fit.model.conversion = init_model(p, false, config.init, config.seed, config.init_sigma);
  fit.model.log_hazard = init_model(p, false, config.init, config.seed ^ 0x5a5a5a5aULL,
                                    config.init_sigma);
  auto c_state = OptimizerState::for_parameters(fit.model.conversion.num_parameters());
  auto h_state = OptimizerState::for_parameters(fit.model.log_hazard.num_parameters());
  const std::size_t pc = fit.model.conversion.num_parameters();
  fit.report = run_epochs(
      full, config,
      [&](const LabeledBatch& batch, std::span<const std::size_t>) {
        const LossAndGradient lg = dfm_loss_and_gradient(fit.model, batch);
        const std::span<const double> g(lg.gradient);
        apply_gradient_step(fit.model.conversion, c_state, g.first(pc), config.learning_rate,
                            config.optimizer);
        apply_gradient_step(fit.model.log_hazard, h_state, g.subspan(pc), config.learning_rate,
                            config.optimizer);
        return StepResult{lg.loss, 0.0, 0};
      },
      false);
  return fit;
}

}  // namespace dladf

#include "dladf/synthgen.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "dladf/errors.hpp"

namespace dladf {
namespace {

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Vector sample_gaussian_vector(std::size_t p, double sigma, Rng& rng) {
  Vector v(p);
  for (double& x : v) x = rng.normal(0.0, sigma);
  return v;
}

}  // namespace

std::string to_string(DelayFamily family) {
  return family == DelayFamily::exponential ? "exponential" : "normal";
}

std::string to_string(ObservationRule rule) {
  return rule == ObservationRule::elapsed ? "elapsed" : "literal";
}

DelayFamily parse_delay_family(std::string_view text) {
  if (text == "exponential") return DelayFamily::exponential;
  if (text == "normal") return DelayFamily::normal;
  throw ConfigError("unknown delay family '" + std::string(text) + "'");
}

ObservationRule parse_observation_rule(std::string_view text) {
  if (text == "elapsed") return ObservationRule::elapsed;
  if (text == "literal") return ObservationRule::literal;
  throw ConfigError("unknown observation rule '" + std::string(text) + "'");
}

void SynthConfig::validate() const {
  if (n < 1) throw ConfigError("synth.n must be >= 1");
  if (p < 1) throw ConfigError("synth.p must be >= 1");
  if (!(sigma_x > 0.0)) throw ConfigError("synth.sigma_x must be > 0");
  if (!(sigma_w >= 0.0)) throw ConfigError("synth.sigma_w must be >= 0");
  if (!(training_period > 0.0)) throw ConfigError("synth.L must be > 0");
  if (!(normal_delay_std > 0.0)) throw ConfigError("synth.normal_delay_std must be > 0");
}

Coefficients sample_coefficients(std::size_t p, double sigma_w, Rng& rng) {
  if (p < 1) throw InvalidInput("p must be >= 1");
  Coefficients c;
  c.w_cvr = sample_gaussian_vector(p, sigma_w, rng);
  c.w_expo = sample_gaussian_vector(p, sigma_w, rng);
  return c;
}

double true_cvr(std::span<const double> x, std::span<const double> w_cvr) {
  return sigmoid(dot(w_cvr, x));
}

double mean_delay(std::span<const double> x, std::span<const double> w_expo) {
  return std::exp(dot(w_expo, x));
}

double sample_delay(std::span<const double> x, std::span<const double> w_expo, DelayFamily family,
                    double normal_std, Rng& rng) {
  const double mu = mean_delay(x, w_expo);
  if (family == DelayFamily::exponential) return rng.exponential(mu);
  double d;
  do {
    d = rng.normal(mu, normal_std);
  } while (d < 0.0);
  return d;
}

double delay_cdf(double e, double mean, DelayFamily family, double normal_std) {
  if (!(e >= 0.0)) throw InvalidInput("elapsed time must be non-negative");
  if (family == DelayFamily::exponential) {
    if (std::isinf(e)) return 1.0;
    return -std::expm1(-e / mean);
  }
  // Normal(mean, s) truncated to [0, inf).
  const double lower = standard_normal_cdf(-mean / normal_std);
  const double mass = standard_normal_cdf(mean / normal_std);
  return (standard_normal_cdf((e - mean) / normal_std) - lower) / mass;
}

double true_propensity(std::span<const double> x, double e, const Coefficients& coefficients,
                       DelayFamily family, double normal_std) {
  return delay_cdf(e, mean_delay(x, coefficients.w_expo), family, normal_std);
}

SyntheticDataset generate(const SynthConfig& config) {
  config.validate();
  SyntheticDataset data;
  data.config = config;
  auto coef_rng = Rng::for_stream(config.seed, "coefficients");
  data.coefficients = sample_coefficients(config.p, config.sigma_w, coef_rng);

  const double L = config.training_period;
  auto rng = Rng::for_stream(config.seed, "train");
  data.samples.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    SyntheticSample s;
    s.x = sample_gaussian_vector(config.p, config.sigma_x, rng);
    const double gamma = true_cvr(s.x, data.coefficients.w_cvr);
    const double ts = rng.uniform(0.0, L);
    const double mu = mean_delay(s.x, data.coefficients.w_expo);
    const double d = sample_delay(s.x, data.coefficients.w_expo, config.delay_family,
                                  config.normal_delay_std, rng);
    const double e = L - ts;
    const double horizon = config.observation_rule == ObservationRule::elapsed ? e : L;
    const Label o = d <= horizon ? 1 : 0;
    const Label y = rng.bernoulli(gamma) ? 1 : 0;

    s.ts_click = ts;
    s.delay = d;
    s.elapsed = e;
    s.gamma_true = gamma;
    s.theta_true = delay_cdf(horizon, mu, config.delay_family, config.normal_delay_std);
    s.y_true = y;
    s.o_true = o;
    s.y_obs = static_cast<Label>(o * y);
    data.samples.push_back(std::move(s));
  }
  return data;
}

SyntheticDataset generate_test_set(const SynthConfig& config, const Coefficients& coefficients) {
  config.validate();
  if (coefficients.w_cvr.size() != config.p) {
    throw InvalidInput("coefficients do not match config.p");
  }
  SyntheticDataset data;
  data.config = config;
  data.coefficients = coefficients;
  auto rng = Rng::for_stream(config.seed, "test");
  const std::size_t n = config.effective_test_n();
  data.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticSample s;
    s.x = sample_gaussian_vector(config.p, config.sigma_x, rng);
    const double gamma = true_cvr(s.x, coefficients.w_cvr);
    s.gamma_true = gamma;
    s.y_true = rng.bernoulli(gamma) ? 1 : 0;
    data.samples.push_back(std::move(s));
  }
  return data;
}

void require_field(const SyntheticDataset& data, std::string_view name) {
  auto has = [&](const SyntheticSample& s) -> bool {
    if (name == "x") return true;
    if (name == "ts_click") return s.ts_click.has_value();
    if (name == "d") return s.delay.has_value();
    if (name == "e") return s.elapsed.has_value();
    if (name == "gamma_true") return s.gamma_true.has_value();
    if (name == "theta_true") return s.theta_true.has_value();
    if (name == "y_true") return s.y_true.has_value();
    if (name == "o_true") return s.o_true.has_value();
    if (name == "y_obs") return s.y_obs.has_value();
    throw InvalidInput("unknown dataset field '" + std::string(name) + "'");
  };
  for (const auto& s : data.samples) {
    if (!has(s)) throw MissingField(std::string(name));
  }
}

LabeledBatch make_batch(const SyntheticDataset& data, std::span<const std::size_t> indices) {
  LabeledBatch batch;
  batch.features = FeatureMatrix(data.feature_dim());
  batch.features.reserve(indices.size());
  batch.elapsed.reserve(indices.size());
  batch.y_obs.reserve(indices.size());
  std::vector<Label> y_true, o_true;
  Vector delay;
  bool has_y_true = true, has_o_true = true, has_delay = true;
  for (std::size_t idx : indices) {
    const SyntheticSample& s = data.samples.at(idx);
    batch.features.push_back(s.x);
    batch.elapsed.push_back(s.elapsed.value_or(std::numeric_limits<double>::quiet_NaN()));
    batch.y_obs.push_back(s.y_obs.value_or(0));
    if (has_y_true && s.y_true) y_true.push_back(*s.y_true); else has_y_true = false;
    if (has_o_true && s.o_true) o_true.push_back(*s.o_true); else has_o_true = false;
    // Delays of unobserved samples are never read; NaN stands in when absent.
    if (s.delay) delay.push_back(*s.delay);
    else if (s.y_obs.value_or(0) == 0) delay.push_back(std::numeric_limits<double>::quiet_NaN());
    else has_delay = false;
  }
  if (has_y_true) batch.y_true = std::move(y_true);
  if (has_o_true) batch.o_true = std::move(o_true);
  if (has_delay) batch.delay = std::move(delay);
  return batch;
}

LabeledBatch make_batch(const SyntheticDataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch(data, all);
}

}  // namespace dladf

#include "dladf/io.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <json.hpp>

#include "dladf/errors.hpp"

namespace dladf {
namespace {

using nlohmann::json;

std::string real(double v) { return format_real(v, 17); }

std::string real_array(const Vector& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += real(values[i]);
  }
  return out + "]";
}

void reject_unknown_keys(const json& object, const std::set<std::string>& allowed,
                         const std::string& section) {
  if (!object.is_object()) throw ConfigError("'" + section + "' must be a JSON object");
  for (const auto& [key, _] : object.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in '" + section + "'");
    }
  }
}

template <typename T>
void read_key(const json& object, const char* key, T& target, const std::string& section) {
  if (!object.contains(key)) return;
  try {
    target = object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + section + "." + key + "'");
  }
}

std::size_t read_count(const json& object, const char* key, std::size_t fallback,
                       const std::string& section) {
  if (!object.contains(key)) return fallback;
  const json& v = object.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("'" + section + "." + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

const std::set<std::string> kTrainKeys{
    "batch_size", "learning_rate", "optimizer",  "beta1",        "beta2",
    "adam_epsilon", "max_epochs",  "convergence_tol", "clip_epsilon", "loss_variant",
    "init",       "init_sigma",    "seed"};

TrainConfig apply_train_fields(const json& object, TrainConfig config, const std::string& section) {
  std::set<std::string> allowed = kTrainKeys;
  if (section == "train") allowed.insert("overrides");
  reject_unknown_keys(object, allowed, section);
  config.batch_size = read_count(object, "batch_size", config.batch_size, section);
  read_key(object, "learning_rate", config.learning_rate, section);
  if (object.contains("optimizer")) {
    config.optimizer.kind = parse_optimizer(object.at("optimizer").get<std::string>());
  }
  read_key(object, "beta1", config.optimizer.beta1, section);
  read_key(object, "beta2", config.optimizer.beta2, section);
  read_key(object, "adam_epsilon", config.optimizer.epsilon, section);
  config.max_epochs = read_count(object, "max_epochs", config.max_epochs, section);
  read_key(object, "convergence_tol", config.convergence_tol, section);
  read_key(object, "clip_epsilon", config.clip.epsilon, section);
  if (object.contains("loss_variant")) {
    config.loss_variant = parse_loss_variant(object.at("loss_variant").get<std::string>());
  }
  if (object.contains("init")) {
    const auto init = object.at("init").get<std::string>();
    if (init == "zeros") config.init = InitPolicy::zeros;
    else if (init == "gaussian") config.init = InitPolicy::gaussian;
    else throw ConfigError("unknown init policy '" + init + "'");
  }
  read_key(object, "init_sigma", config.init_sigma, section);
  read_key(object, "seed", config.seed, section);
  return config;
}

SynthConfig parse_synth(const json& object) {
  reject_unknown_keys(object,
                      {"n", "p", "sigma_x", "sigma_w", "L", "delay_family", "normal_delay_std",
                       "observation_rule", "seed", "test_n"},
                      "synth");
  SynthConfig c;
  c.n = read_count(object, "n", c.n, "synth");
  c.p = read_count(object, "p", c.p, "synth");
  read_key(object, "sigma_x", c.sigma_x, "synth");
  read_key(object, "sigma_w", c.sigma_w, "synth");
  read_key(object, "L", c.training_period, "synth");
  if (object.contains("delay_family")) {
    c.delay_family = parse_delay_family(object.at("delay_family").get<std::string>());
  }
  read_key(object, "normal_delay_std", c.normal_delay_std, "synth");
  if (object.contains("observation_rule")) {
    c.observation_rule = parse_observation_rule(object.at("observation_rule").get<std::string>());
  }
  read_key(object, "seed", c.seed, "synth");
  c.test_n = read_count(object, "test_n", c.test_n, "synth");
  return c;
}

std::optional<double> opt_real(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::optional<Label> opt_label(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const int v = j.at(key).get<int>();
  if (v != 0 && v != 1) throw InvalidInput(std::string("label '") + key + "' must be 0 or 1");
  return static_cast<Label>(v);
}

}  // namespace

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move into place " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string synth_config_to_json(const SynthConfig& c) {
  return "{\"n\":" + std::to_string(c.n) + ",\"p\":" + std::to_string(c.p) +
         ",\"sigma_x\":" + real(c.sigma_x) + ",\"sigma_w\":" + real(c.sigma_w) +
         ",\"L\":" + real(c.training_period) + ",\"delay_family\":\"" +
         to_string(c.delay_family) + "\",\"normal_delay_std\":" + real(c.normal_delay_std) +
         ",\"observation_rule\":\"" + to_string(c.observation_rule) +
         "\",\"seed\":" + std::to_string(c.seed) + ",\"test_n\":" + std::to_string(c.test_n) +
         "}";
}

std::string dataset_to_jsonl(const SyntheticDataset& data) {
  std::string out = "{\"config\":" + synth_config_to_json(data.config) +
                    ",\"coefficients\":{\"w_cvr\":" + real_array(data.coefficients.w_cvr) +
                    ",\"w_expo\":" + real_array(data.coefficients.w_expo) + "}}\n";
  for (const auto& s : data.samples) {
    out += "{\"x\":" + real_array(s.x);
    auto put_real = [&](const char* key, const std::optional<double>& v) {
      if (v) out += std::string(",\"") + key + "\":" + real(*v);
    };
    auto put_label = [&](const char* key, const std::optional<Label>& v) {
      if (v) out += std::string(",\"") + key + "\":" + (*v ? "1" : "0");
    };
    put_real("ts_click", s.ts_click);
    put_real("d", s.delay);
    put_real("e", s.elapsed);
    put_real("gamma_true", s.gamma_true);
    put_real("theta_true", s.theta_true);
    put_label("y_true", s.y_true);
    put_label("o_true", s.o_true);
    put_label("y_obs", s.y_obs);
    out += "}\n";
  }
  return out;
}

SyntheticDataset dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  SyntheticDataset data;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InvalidInput("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!header_seen) {
      if (!j.contains("config")) throw InvalidInput("dataset header record missing 'config'");
      data.config = parse_synth(j.at("config"));
      if (j.contains("coefficients")) {
        const json& c = j.at("coefficients");
        data.coefficients.w_cvr = c.value("w_cvr", Vector{});
        data.coefficients.w_expo = c.value("w_expo", Vector{});
      }
      header_seen = true;
      continue;
    }
    SyntheticSample s;
    if (!j.contains("x")) throw InvalidInput("dataset line " + std::to_string(line_no) + ": no x");
    s.x = j.at("x").get<Vector>();
    if (s.x.size() != data.config.p) {
      throw InvalidInput("dataset line " + std::to_string(line_no) + ": x has wrong length");
    }
    s.ts_click = opt_real(j, "ts_click");
    s.delay = opt_real(j, "d");
    s.elapsed = opt_real(j, "e");
    s.gamma_true = opt_real(j, "gamma_true");
    s.theta_true = opt_real(j, "theta_true");
    s.y_true = opt_label(j, "y_true");
    s.o_true = opt_label(j, "o_true");
    s.y_obs = opt_label(j, "y_obs");
    data.samples.push_back(std::move(s));
  }
  if (!header_seen) throw InvalidInput("empty dataset file");
  return data;
}

std::string dfm_model_to_json(const DfmModel& model) {
  return "{\"conversion\": " + model_to_json(model.conversion) +
         ", \"log_hazard\": " + model_to_json(model.log_hazard) + "}";
}

DfmModel dfm_model_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (!j.contains("conversion") || !j.contains("log_hazard")) {
    throw InvalidInput("DFM JSON needs 'conversion' and 'log_hazard'");
  }
  return DfmModel{model_from_json(j.at("conversion").dump()),
                  model_from_json(j.at("log_hazard").dump())};
}

std::string report_to_json(const TrainReport& r) {
  std::string out = "{\"epochs_run\": " + std::to_string(r.epochs_run) +
                    ", \"final_loss\": " + real(r.final_loss) +
                    ", \"clip_activations\": " + std::to_string(r.clip_activations) +
                    ", \"converged\": " + (r.converged ? "true" : "false") +
                    ", \"loss_curve\": " + real_array(r.loss_curve);
  if (!r.propensity_loss_curve.empty()) {
    out += ", \"propensity_loss_curve\": " + real_array(r.propensity_loss_curve);
  }
  return out + "}";
}

std::string loss_curve_csv(const TrainReport& r) {
  const bool dual = !r.propensity_loss_curve.empty();
  std::string out = dual ? "epoch,loss,propensity_loss\n" : "epoch,loss\n";
  for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_real(r.loss_curve[i], 10);
    if (dual) out += "," + format_real(r.propensity_loss_curve[i], 10);
    out += "\n";
  }
  return out;
}

TrainConfig RunConfig::train_for(MethodId method) const {
  auto it = train_overrides.find(method);
  TrainConfig config = it == train_overrides.end() ? train : it->second;
  if (method == MethodId::dla) config.loss_variant = LossVariant::ips;
  if (method == MethodId::nn_dla) config.loss_variant = LossVariant::nonneg;
  return config;
}

ExperimentGrid RunConfig::grid() const {
  ExperimentGrid g;
  g.L_values = L_values;
  g.seeds = seeds;
  g.methods = methods;
  g.synth = synth;
  g.train = train;
  g.train_overrides = train_overrides;
  g.jobs = jobs;
  return g;
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(root, {"synth", "train", "experiment"}, "config");
  RunConfig rc;
  try {
    if (root.contains("synth")) rc.synth = parse_synth(root.at("synth"));
    if (root.contains("train")) {
      const json& t = root.at("train");
      rc.train = apply_train_fields(t, rc.train, "train");
      if (t.contains("overrides")) {
        const json& ov = t.at("overrides");
        if (!ov.is_object()) throw ConfigError("'train.overrides' must be an object");
        for (const auto& [name, fields] : ov.items()) {
          const MethodId m = parse_method(name);
          rc.train_overrides[m] = apply_train_fields(fields, rc.train, "train.overrides." + name);
        }
      }
    }
    if (root.contains("experiment")) {
      const json& e = root.at("experiment");
      reject_unknown_keys(e, {"L", "seeds", "methods", "jobs"}, "experiment");
      read_key(e, "L", rc.L_values, "experiment");
      if (e.contains("seeds")) {
        const json& s = e.at("seeds");
        if (s.is_number_integer()) {
          const auto k = s.get<long long>();
          if (k < 1) throw ConfigError("'experiment.seeds' must be >= 1");
          rc.seeds.clear();
          for (long long i = 1; i <= k; ++i) rc.seeds.push_back(static_cast<std::uint64_t>(i));
        } else {
          read_key(e, "seeds", rc.seeds, "experiment");
        }
      }
      if (e.contains("methods")) {
        rc.methods.clear();
        for (const auto& m : e.at("methods")) rc.methods.push_back(parse_method(m.get<std::string>()));
      }
      rc.jobs = read_count(e, "jobs", rc.jobs, "experiment");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  rc.synth.validate();
  rc.train.clip.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text);
}

}  // namespace dladf

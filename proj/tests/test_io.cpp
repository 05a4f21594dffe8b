#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "dladf/errors.hpp"
#include "dladf/io.hpp"

using namespace dladf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dladf_io_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

bool same_optional_fields(const SyntheticSample& a, const SyntheticSample& b) {
  return a.x == b.x && a.ts_click == b.ts_click && a.delay == b.delay && a.elapsed == b.elapsed &&
         a.gamma_true == b.gamma_true && a.theta_true == b.theta_true && a.y_true == b.y_true &&
         a.o_true == b.o_true && a.y_obs == b.y_obs;
}

}  // namespace

TEST_CASE("dataset JSONL round-trips exactly") {
  SynthConfig c;
  c.n = 300;
  c.p = 4;
  c.delay_family = DelayFamily::normal;
  c.normal_delay_std = 0.75;
  c.training_period = 2.5;
  c.seed = 77;
  const auto data = generate(c);
  const std::string text = dataset_to_jsonl(data);
  const auto back = dataset_from_jsonl(text);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(same_optional_fields(back.samples[i], data.samples[i]));
  CHECK(back.coefficients.w_cvr == data.coefficients.w_cvr);
  CHECK(back.coefficients.w_expo == data.coefficients.w_expo);
  CHECK(back.config.delay_family == DelayFamily::normal);
  CHECK(back.config.normal_delay_std == 0.75);
  CHECK(back.config.training_period == 2.5);
  CHECK(back.config.seed == 77);
  CHECK(dataset_to_jsonl(back) == text);

  const auto test = generate_test_set(c, data.coefficients);
  const auto test_back = dataset_from_jsonl(dataset_to_jsonl(test));
  CHECK_FALSE(test_back.samples[0].elapsed.has_value());
  CHECK_FALSE(test_back.samples[0].y_obs.has_value());
  CHECK(test_back.samples[0].y_true == test.samples[0].y_true);
  CHECK(dataset_to_jsonl(test).find("\"e\"") == std::string::npos);
}

TEST_CASE("dataset parsing errors") {
  CHECK_THROWS_AS(dataset_from_jsonl("{\"x\": [1.0]}\n"), InvalidInput);
  CHECK_THROWS(dataset_from_jsonl("{\"config\": {}}\n{\"x\": [1.0], \"e\": \n"));
}

TEST_CASE("dfm model JSON") {
  DfmModel m = DfmModel::zeros(3);
  m.conversion.weights = {0.1, -1.0 / 3.0, 2e-9};
  m.log_hazard.bias = -7.25;
  const auto back = dfm_model_from_json(dfm_model_to_json(m));
  CHECK(back.conversion == m.conversion);
  CHECK(back.log_hazard == m.log_hazard);
  CHECK_THROWS_AS(dfm_model_from_json("{\"conversion\": {}}"), InvalidInput);
}

TEST_CASE("report and loss curve") {
  TrainReport r;
  r.epochs_run = 2;
  r.final_loss = 0.25;
  r.loss_curve = {0.5, 0.25};
  r.propensity_loss_curve = {0.7, 0.6};
  CHECK(loss_curve_csv(r) == "epoch,loss,propensity_loss\n1,0.5,0.7\n2,0.25,0.6\n");
  r.propensity_loss_curve.clear();
  CHECK(loss_curve_csv(r) == "epoch,loss\n1,0.5\n2,0.25\n");
  const std::string json = report_to_json(r);
  CHECK(json.find("\"epochs_run\": 2") != std::string::npos);
  CHECK(json.find("\"converged\": false") != std::string::npos);
}

TEST_CASE("atomic write") {
  TempDir dir;
  const fs::path target = dir.path / "out.csv";
  atomic_write_file(target, "first\n");
  CHECK(read_file(target) == "first\n");
  atomic_write_file(target, "second\n");
  CHECK(read_file(target) == "second\n");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++entries;
  CHECK(entries == 1);
  CHECK_THROWS(atomic_write_file(dir.path / "missing" / "x.csv", "x"));
  CHECK_THROWS(read_file(dir.path / "nope"));
}

TEST_CASE("run config defaults") {
  const RunConfig rc = parse_run_config("{}");
  CHECK(rc.synth.n == 100000);
  CHECK(rc.synth.p == 30);
  CHECK(rc.train.batch_size == 1024);
  CHECK(rc.train.learning_rate == 0.01);
  CHECK(rc.train.clip.epsilon == 0.01);
  CHECK(rc.L_values == std::vector<double>{0.5, 1.0, 2.0, 4.0});
  CHECK(rc.seeds.size() == 10);
  CHECK(rc.methods.size() == 5);
}

TEST_CASE("run config fields") {
  const RunConfig rc = parse_run_config(R"({
    "synth": {"n": 5000, "p": 8, "L": 2, "delay_family": "normal", "normal_delay_std": 0.5,
              "observation_rule": "literal", "seed": 3, "test_n": 100},
    "train": {"batch_size": 64, "learning_rate": 0.05, "optimizer": "sgd", "max_epochs": 7,
              "clip_epsilon": 0, "loss_variant": "ips", "init": "gaussian", "seed": 9,
              "overrides": {"dfm": {"learning_rate": 0.001}}},
    "experiment": {"L": [1, 3], "seeds": 3, "methods": ["oracle", "nn-dla"], "jobs": 2}
  })");
  CHECK(rc.synth.n == 5000);
  CHECK(rc.synth.training_period == 2.0);
  CHECK(rc.synth.delay_family == DelayFamily::normal);
  CHECK(rc.synth.observation_rule == ObservationRule::literal);
  CHECK(rc.synth.test_n == 100);
  CHECK(rc.train.batch_size == 64);
  CHECK(rc.train.optimizer.kind == OptimizerKind::sgd);
  CHECK_FALSE(rc.train.clip.enabled());
  CHECK(rc.train.init == InitPolicy::gaussian);
  CHECK(rc.L_values == std::vector<double>{1.0, 3.0});
  CHECK(rc.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(rc.methods == std::vector<MethodId>{MethodId::oracle, MethodId::nn_dla});
  CHECK(rc.jobs == 2);

  const TrainConfig dfm = rc.train_for(MethodId::dfm);
  CHECK(dfm.learning_rate == 0.001);
  CHECK(dfm.batch_size == 64);
  CHECK(rc.train_for(MethodId::nn_dla).loss_variant == LossVariant::nonneg);
  CHECK(rc.train_for(MethodId::naive).learning_rate == 0.05);

  const auto seeds = parse_run_config(R"({"experiment": {"seeds": [4, 8]}})");
  CHECK(seeds.seeds == std::vector<std::uint64_t>{4, 8});
}

TEST_CASE("run config is strict") {
  CHECK_THROWS_AS(parse_run_config(R"({"synth": {"nn": 5}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"trian": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"lr": 0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"overrides": {"dfm": {"momentum": 1}}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"overrides": {"svm": {}}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"experiment": {"L": [1], "out": "x"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"synth": {"n": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"synth": {"n": -3}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"synth": {"L": "long"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"synth": {"delay_family": "gamma"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"clip_epsilon": 0.7}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"experiment": {"seeds": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[]"), ConfigError);
}

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dladf/errors.hpp"
#include "dladf/eval.hpp"

using namespace dladf;

namespace {

ExperimentGrid tiny_grid() {
  ExperimentGrid g;
  g.synth.n = 600;
  g.synth.p = 5;
  g.train.max_epochs = 5;
  g.train.batch_size = 128;
  g.L_values = {0.5, 2.0};
  g.seeds = {1, 2};
  g.jobs = 1;
  return g;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("log loss") {
  CHECK(log_loss(Vector{0.5, 0.5}, std::vector<Label>{1, 0}) == doctest::Approx(std::log(2.0)));
  CHECK(log_loss(Vector{0.9, 0.1}, std::vector<Label>{1, 0}) ==
        doctest::Approx(-std::log(0.9)).epsilon(1e-14));
  CHECK(log_loss(Vector{0.9, 0.1}, std::vector<Label>{1, 0}) == doctest::Approx(0.105361).epsilon(1e-5));
  CHECK(log_loss(Vector{1.0, 0.0}, std::vector<Label>{1, 0}) <= 1e-11);
  CHECK(std::isfinite(log_loss(Vector{0.0}, std::vector<Label>{1})));
  CHECK_THROWS_AS(log_loss(Vector{}, std::vector<Label>{}), InvalidInput);
}

TEST_CASE("relative log loss") {
  CHECK(relative_log_loss(0.37, 0.37) == 1.0);
  CHECK(relative_log_loss(0.8, 0.5) == doctest::Approx(1.6).epsilon(1e-15));
  CHECK_THROWS_AS(relative_log_loss(0.8, 0.0), InvalidInput);
  CHECK_THROWS_AS(relative_log_loss(0.8, -1.0), InvalidInput);
}

TEST_CASE("mean propensity") {
  SynthConfig c;
  c.n = 200;
  c.p = 3;
  auto data = generate(c);
  for (auto& s : data.samples) s.theta_true = 0.3;
  CHECK(mean_propensity(data) == doctest::Approx(0.3).epsilon(1e-14));

  auto fresh = generate(c);
  auto reversed = fresh;
  std::reverse(reversed.samples.begin(), reversed.samples.end());
  CHECK(mean_propensity(reversed) == doctest::Approx(mean_propensity(fresh)).epsilon(1e-14));

  fresh.samples[10].theta_true.reset();
  CHECK_THROWS_AS(mean_propensity(fresh), MissingField);
}

TEST_CASE("sample statistics") {
  const Vector v{1.0, 2.0, 4.0};
  CHECK(sample_mean(v) == doctest::Approx(7.0 / 3.0));
  // Deviations -4/3, -1/3, 5/3: squares sum to 42/9, over n - 1 = 2.
  CHECK(sample_std(v) == doctest::Approx(std::sqrt(7.0 / 3.0)).epsilon(1e-15));
  CHECK(std::isnan(sample_std(Vector{3.0})));
}

TEST_CASE("method names") {
  for (MethodId m : all_methods()) CHECK(parse_method(to_string(m)) == m);
  CHECK(to_string(MethodId::nn_dla) == "nn-dla");
  CHECK_THROWS_AS(parse_method("svm"), ConfigError);
}

TEST_CASE("oracle-only grid is exactly one everywhere") {
  ExperimentGrid g = tiny_grid();
  g.methods = {MethodId::oracle};
  const auto table = run_experiment(g);
  REQUIRE(table.cells.size() == 4);
  for (const auto& c : table.cells) CHECK(c.relative_log_loss == 1.0);
  for (const auto& a : table.aggregates) {
    CHECK(a.mean_rel_ll == 1.0);
    CHECK(a.std_rel_ll == 0.0);
    CHECK(a.n_seeds == 2);
  }
}

TEST_CASE("experiment table layout and determinism") {
  ExperimentGrid g = tiny_grid();
  std::size_t callbacks = 0;
  const auto table = run_experiment(g, [&](const CellResult&) { ++callbacks; });
  CHECK(callbacks == 20);
  REQUIRE(table.cells.size() == 20);
  CHECK(table.failed_cells() == 0);
  CHECK(table.aggregates.size() == 10);

  // Canonical order: method, then L, then seed.
  std::size_t k = 0;
  for (MethodId m : all_methods())
    for (double L : g.L_values)
      for (std::uint64_t s : g.seeds) {
        CHECK(table.cells[k].method == m);
        CHECK(table.cells[k].L == L);
        CHECK(table.cells[k].seed == s);
        ++k;
      }

  const auto* agg = table.find(MethodId::naive, 2.0);
  REQUIRE(agg != nullptr);
  const Vector rel{table.cells[6].relative_log_loss, table.cells[7].relative_log_loss};
  CHECK(agg->mean_rel_ll == sample_mean(rel));
  CHECK(agg->std_rel_ll == sample_std(rel));
  CHECK(table.find(MethodId::naive, 3.0) == nullptr);

  const auto csv = lines(results_csv(table));
  REQUIRE(csv.size() == 21);
  CHECK(csv[0] == "method,L,seed,test_log_loss,relative_log_loss,mean_propensity,converged");
  CHECK(csv[1].rfind("oracle,0.5,1,", 0) == 0);
  CHECK(csv[1].find(",1,") != std::string::npos);
  const auto agg_csv = lines(aggregates_csv(table));
  REQUIRE(agg_csv.size() == 11);
  CHECK(agg_csv[0] == "method,L,mean_rel_ll,std_rel_ll,n_seeds");
  CHECK(agg_csv[1] == "oracle,0.5,1,0,2");

  ExperimentGrid parallel = g;
  parallel.jobs = 3;
  const auto again = run_experiment(parallel);
  CHECK(results_csv(again) == results_csv(table));
  CHECK(aggregates_csv(again) == aggregates_csv(table));
}

TEST_CASE("dla variants are forced per method") {
  ExperimentGrid g = tiny_grid();
  g.train.loss_variant = LossVariant::nonneg;
  CHECK(g.train_config_for(MethodId::dla, 4).loss_variant == LossVariant::ips);
  g.train.loss_variant = LossVariant::ips;
  CHECK(g.train_config_for(MethodId::nn_dla, 4).loss_variant == LossVariant::nonneg);
  CHECK(g.train_config_for(MethodId::naive, 4).seed == 4);
}

TEST_CASE("failed cells are flagged and left out of aggregates") {
  ExperimentGrid g = tiny_grid();
  g.methods = {MethodId::oracle, MethodId::naive};
  TrainConfig broken = g.train;
  broken.learning_rate = 1e308;
  broken.optimizer.kind = OptimizerKind::sgd;
  g.train_overrides[MethodId::naive] = broken;
  const auto table = run_experiment(g);
  CHECK(table.failed_cells() == 4);
  const auto* naive = table.find(MethodId::naive, 0.5);
  CHECK((naive == nullptr || naive->n_seeds == 0));
  for (const auto& c : table.cells) {
    if (c.method != MethodId::naive) continue;
    CHECK(c.failed);
    CHECK_FALSE(c.error.empty());
    CHECK(std::isnan(c.relative_log_loss));
  }
  CHECK(results_csv(table).find("nan") != std::string::npos);

  g.train_overrides.clear();
  g.train_overrides[MethodId::oracle] = broken;
  CHECK(run_experiment(g).failed_cells() == 8);
}

TEST_CASE("grid validation") {
  ExperimentGrid g = tiny_grid();
  g.methods = {MethodId::naive};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = tiny_grid();
  g.L_values.clear();
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

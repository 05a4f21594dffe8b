#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "dladf/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("dladf_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  fs::path file(const std::string& name) const { return dir / name; }

  void write(const std::string& name, const std::string& text) const {
    dladf::atomic_write_file(file(name), text);
  }

  Result run(const std::string& args) const {
    const auto out = file("stdout.txt"), err = file("stderr.txt");
    const std::string cmd = std::string(DLADF_CLI) + " " + args + " >" + out.string() + " 2>" +
                            err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = dladf::read_file(out);
    r.err = dladf::read_file(err);
    return r;
  }
};

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.find(' ') == std::string::npos)
      kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const char* kSmall = R"({
  "synth": {"n": 800, "p": 6, "L": 1},
  "train": {"batch_size": 128, "max_epochs": 4},
  "experiment": {"L": [1], "seeds": 1, "methods": ["oracle"]}
})";

}  // namespace

TEST_CASE("generate") {
  Sandbox sb;
  sb.write("cfg.json", kSmall);
  const auto r = sb.run("generate --config " + sb.file("cfg.json").string() + " --out " +
                        sb.file("a.jsonl").string() + " --test-out " + sb.file("t.jsonl").string());
  REQUIRE(r.code == 0);
  const auto kv = key_values(r.out);
  CHECK(kv.at("n") == "800");
  CHECK(kv.count("mean_propensity") == 1);
  CHECK(kv.count("positive_rate") == 1);
  CHECK(dladf::dataset_from_jsonl(dladf::read_file(sb.file("a.jsonl"))).size() == 800);
  CHECK(fs::exists(sb.file("t.jsonl")));

  sb.run("generate --config " + sb.file("cfg.json").string() + " --out " + sb.file("b.jsonl").string());
  CHECK(dladf::read_file(sb.file("a.jsonl")) == dladf::read_file(sb.file("b.jsonl")));

  sb.run("generate --config " + sb.file("cfg.json").string() + " --seed 5 --out " +
         sb.file("c.jsonl").string());
  CHECK(dladf::read_file(sb.file("a.jsonl")) != dladf::read_file(sb.file("c.jsonl")));
}

TEST_CASE("configuration errors exit 1 without writing") {
  Sandbox sb;
  sb.write("zero.json", R"({"synth": {"n": 0}})");
  auto r = sb.run("generate --config " + sb.file("zero.json").string() + " --out " +
                  sb.file("z.jsonl").string());
  CHECK(r.code == 1);
  CHECK_FALSE(fs::exists(sb.file("z.jsonl")));

  sb.write("typo.json", R"({"synth": {"sigmax": 0.5}})");
  r = sb.run("generate --config " + sb.file("typo.json").string() + " --out " +
             sb.file("z.jsonl").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("sigmax") != std::string::npos);
  CHECK_FALSE(fs::exists(sb.file("z.jsonl")));

  CHECK(sb.run("generate").code == 1);
  CHECK(sb.run("").code == 1);
  CHECK(sb.run("frobnicate").code == 1);
}

TEST_CASE("train, evaluate and variance report") {
  Sandbox sb;
  sb.write("cfg.json", kSmall);
  const std::string cfg = " --config " + sb.file("cfg.json").string();
  REQUIRE(sb.run("generate" + cfg + " --out " + sb.file("d.jsonl").string() + " --test-out " +
                 sb.file("t.jsonl").string())
              .code == 0);
  const std::string data = " --data " + sb.file("d.jsonl").string();

  auto r = sb.run("train" + cfg + data + " --method nn-dla --verbose --out " + sb.file("nn").string());
  REQUIRE(r.code == 0);
  CHECK(key_values(r.out).at("method") == "nn-dla");
  CHECK(fs::exists(sb.file("nn.f.json")));
  CHECK(fs::exists(sb.file("nn.g.json")));
  CHECK(fs::exists(sb.file("nn.report.json")));
  CHECK(dladf::read_file(sb.file("nn.loss.csv")).rfind("epoch,loss,propensity_loss\n", 0) == 0);

  REQUIRE(sb.run("train" + cfg + data + " --method nn-dla --out " + sb.file("nn2").string()).code == 0);
  CHECK(dladf::read_file(sb.file("nn.f.json")) == dladf::read_file(sb.file("nn2.f.json")));
  CHECK(dladf::read_file(sb.file("nn.g.json")) == dladf::read_file(sb.file("nn2.g.json")));

  REQUIRE(sb.run("train" + cfg + data + " --method dfm --out " + sb.file("dfm").string()).code == 0);
  r = sb.run("evaluate --data " + sb.file("t.jsonl").string() + " --model " +
             sb.file("dfm.model.json").string());
  REQUIRE(r.code == 0);
  CHECK(std::stod(key_values(r.out).at("log_loss")) > 0.0);

  r = sb.run("evaluate --data " + sb.file("t.jsonl").string() + " --model " + sb.file("nn.f.json").string());
  CHECK(r.code == 0);

  r = sb.run("train" + cfg + " --data " + sb.file("t.jsonl").string() + " --method dfm --out " +
             sb.file("bad").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("y_obs") != std::string::npos);
  CHECK(sb.run("train" + cfg + data + " --method svm --out " + sb.file("x").string()).code == 1);

  r = sb.run("variance-report" + cfg + data + " --model " + sb.file("nn.f.json").string() +
             " --model " + sb.file("nn.g.json").string());
  REQUIRE(r.code == 0);
  const auto kv = key_values(r.out);
  CHECK(kv.count("ips_variance") == 1);
  CHECK(kv.count("icvr_variance") == 1);
  CHECK(kv.count("theta_clip_activations") == 1);
  CHECK(sb.run("variance-report" + cfg + " --data " + sb.file("t.jsonl").string() + " --model " +
               sb.file("nn.f.json").string())
            .code == 2);
}

TEST_CASE("variance report on a constant model and across periods") {
  Sandbox sb;
  sb.write("half.json", R"({"weights": [0, 0, 0, 0, 0, 0], "bias": 0, "augmented_with_elapsed": false})");
  sb.write("half_g.json",
           R"({"weights": [0, 0, 0, 0, 0, 0, 0], "bias": 0, "augmented_with_elapsed": true})");
  sb.write("tilted.json",
           R"({"weights": [0.5, -0.3, 0.2, 0.1, -0.4, 0.6], "bias": 0.2, "augmented_with_elapsed": false})");
  double previous = -1.0;
  for (const std::string L : {"4", "0.5"}) {
    sb.write("cfg" + L + ".json", std::string(R"({"synth": {"n": 3000, "p": 6, "L": )") + L + "}}");
    const std::string cfg = " --config " + sb.file("cfg" + L + ".json").string();
    const std::string data = " --data " + sb.file("d" + L + ".jsonl").string();
    REQUIRE(sb.run("generate" + cfg + " --out " + sb.file("d" + L + ".jsonl").string()).code == 0);

    auto r = sb.run("variance-report" + cfg + data + " --model " + sb.file("half.json").string() +
                    " --model " + sb.file("half_g.json").string());
    REQUIRE(r.code == 0);
    auto kv = key_values(r.out);
    CHECK(std::stod(kv.at("ips_variance")) == 0.0);
    CHECK(std::stod(kv.at("icvr_variance")) == 0.0);

    r = sb.run("variance-report" + cfg + data + " --model " + sb.file("tilted.json").string());
    REQUIRE(r.code == 0);
    const double v = std::stod(key_values(r.out).at("ips_variance"));
    CHECK(v > previous);
    previous = v;
    CHECK(r.out == sb.run("variance-report" + cfg + data + " --model " + sb.file("tilted.json").string()).out);
  }
}

TEST_CASE("experiment") {
  Sandbox sb;
  sb.write("cfg.json", kSmall);
  const std::string base = "experiment --config " + sb.file("cfg.json").string() + " --jobs 1 --out ";
  auto r = sb.run(base + sb.file("r1").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("cell method=oracle") != std::string::npos);
  const std::string results = dladf::read_file(sb.file("r1") / "results.csv");
  std::size_t rows = 0;
  for (char ch : results) rows += ch == '\n';
  CHECK(rows == 2);
  CHECK(results.rfind("method,L,seed,test_log_loss,relative_log_loss,mean_propensity,converged\n", 0) == 0);

  REQUIRE(sb.run(base + sb.file("r2").string()).code == 0);
  CHECK(dladf::read_file(sb.file("r2") / "results.csv") == results);
  CHECK(dladf::read_file(sb.file("r2") / "aggregates.csv") ==
        dladf::read_file(sb.file("r1") / "aggregates.csv"));

  sb.write("broken.json", R"({
    "synth": {"n": 400, "p": 4},
    "train": {"batch_size": 64, "max_epochs": 3,
              "overrides": {"naive": {"optimizer": "sgd", "learning_rate": 1e308}}},
    "experiment": {"L": [1], "seeds": 1, "methods": ["oracle", "naive"]}
  })");
  r = sb.run("experiment --config " + sb.file("broken.json").string() + " --out " + sb.file("r3").string());
  CHECK(r.code == 2);
  CHECK(key_values(r.out).at("failed_cells") == "1");
  CHECK(fs::exists(sb.file("r3") / "results.csv"));
}

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "temposurv/temposurv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string bin() {
  const char* env = std::getenv("TEMPOSURV_BIN");
  return env != nullptr && *env != '\0' ? env : "build/tools/temposurv";
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  static int call = 0;
  const fs::path dir = fs::temp_directory_path() / "temposurv_cli_io";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(call));
  const fs::path err = dir / ("err" + std::to_string(call));
  ++call;
  const std::string cmd =
      env_prefix + bin() + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string fresh_dir(const std::string& hint) {
  static int counter = 0;
  const fs::path p = fs::temp_directory_path() /
                     ("temposurv_cli_" + hint + "_" + std::to_string(counter++));
  fs::remove_all(p);
  return p.string();
}

const std::string kModelFlags =
    " --set model.d_c=6 --set model.d_s=4 --set model.d=8 --set model.heads=2"
    " --set model.layers=1 --set model.head_hidden=[8] --set model.d_proj=6";

const std::string kSimFlags =
    " --seed 7 --set synthetic.n_patients=120 --set synthetic.base_hazard=0.1"
    " --set synthetic.censoring_rate=0.4";

// Simulated data plus a short training run, shared across the cases below.
struct Fixture {
  std::string sim_dir;
  std::string run_dir;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture fx;
    fx.sim_dir = fresh_dir("fixture_sim");
    fx.run_dir = fresh_dir("fixture_run");
    RunResult sim = run_cli("simulate --out " + fx.sim_dir + kSimFlags);
    if (sim.code != 0) throw std::runtime_error("fixture simulate failed: " + sim.err);
    RunResult train = run_cli("train --out " + fx.run_dir + " --seed 7 --dataset " +
                              fx.sim_dir + "/dataset.jsonl" + kModelFlags +
                              " --set train.warmup_epochs=2 --set train.contrast_epochs=2");
    if (train.code != 0) throw std::runtime_error("fixture train failed: " + train.err);
    return fx;
  }();
  return f;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

bool has_partial_files(const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().string().ends_with(".partial")) return true;
  return false;
}

std::vector<double> parse_csv_row(const std::string& line, std::size_t skip) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  std::size_t i = 0;
  while (std::getline(ss, cell, ','))
    if (i++ >= skip) out.push_back(std::stod(cell));
  return out;
}

std::vector<double> curve_values(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "t,value");
  std::vector<double> out;
  int expect_t = 1;
  while (std::getline(in, line)) {
    const std::vector<double> row = parse_csv_row(line, 0);
    REQUIRE(row.size() == 2);
    REQUIRE(static_cast<int>(row[0]) == expect_t++);
    out.push_back(row[1]);
  }
  return out;
}

}  // namespace

TEST_CASE("simulate writes a deterministic dataset with a consistent summary", "[cli]") {
  const Fixture& fx = fixture();
  for (const char* name :
       {"dataset.jsonl", "sidecar.jsonl", "summary.json", "km.csv", "config.json"})
    REQUIRE(fs::exists(fs::path(fx.sim_dir) / name));
  REQUIRE_FALSE(has_partial_files(fx.sim_dir));

  REQUIRE(line_count(fs::path(fx.sim_dir) / "dataset.jsonl") == 120);
  REQUIRE(line_count(fs::path(fx.sim_dir) / "sidecar.jsonl") == 120);

  const json summary = json::parse(slurp(fs::path(fx.sim_dir) / "summary.json"));
  REQUIRE(summary.at("n").get<int>() == 120);
  const int observed = summary.at("n_observed").get<int>();
  const int censored = summary.at("n_censored").get<int>();
  REQUIRE(observed + censored == 120);
  REQUIRE_THAT(summary.at("censoring_rate").get<double>(),
               Catch::Matchers::WithinAbs(censored / 120.0, 1e-15));
  REQUIRE_THAT(summary.at("censoring_rate").get<double>(),
               Catch::Matchers::WithinAbs(0.4, 0.15));

  const json echoed = json::parse(slurp(fs::path(fx.sim_dir) / "config.json"));
  REQUIRE(echoed.at("seed").get<int>() == 7);
  REQUIRE(echoed.at("synthetic").at("n_patients").get<int>() == 120);

  const std::vector<double> km = curve_values(fs::path(fx.sim_dir) / "km.csv");
  REQUIRE(km.size() == 9);
  for (std::size_t i = 1; i < km.size(); ++i) REQUIRE(km[i] <= km[i - 1]);

  const std::string rerun_dir = fresh_dir("sim_rerun");
  REQUIRE(run_cli("simulate --out " + rerun_dir + kSimFlags).code == 0);
  REQUIRE(slurp(fs::path(rerun_dir) / "dataset.jsonl") ==
          slurp(fs::path(fx.sim_dir) / "dataset.jsonl"));
  REQUIRE(slurp(fs::path(rerun_dir) / "sidecar.jsonl") ==
          slurp(fs::path(fx.sim_dir) / "sidecar.jsonl"));
}

TEST_CASE("simulate into an unwritable path exits with the io code", "[cli]") {
  const std::string blocker = fresh_dir("blocker");
  fs::create_directories(blocker);
  std::ofstream(fs::path(blocker) / "file").put('x');
  const RunResult r = run_cli("simulate --out " + blocker + "/file/out" + kSimFlags);
  REQUIRE(r.code == 4);
  REQUIRE(r.err.find("error:") != std::string::npos);
}

TEST_CASE("train writes a checkpoint, a metrics log, and the effective config", "[cli]") {
  const Fixture& fx = fixture();
  REQUIRE_FALSE(has_partial_files(fx.run_dir));

  const std::string metrics = slurp(fs::path(fx.run_dir) / "metrics.csv");
  REQUIRE(metrics.rfind("epoch,phase,loglik,ranking,supwcon,mse,total,val_ctd,val_mae\n", 0) ==
          0);
  REQUIRE(line_count(fs::path(fx.run_dir) / "metrics.csv") == 5);
  REQUIRE(metrics.find(",warmup,") != std::string::npos);
  REQUIRE(metrics.find(",contrastive,") != std::string::npos);

  const json ckpt = json::parse(slurp(fs::path(fx.run_dir) / "checkpoint.json"));
  REQUIRE(ckpt.at("format_version").get<int>() == 1);
  REQUIRE_FALSE(ckpt.at("tensors").contains("projection.w1"));

  const json echoed = json::parse(slurp(fs::path(fx.run_dir) / "config.json"));
  const temposurv::RunConfig cfg = temposurv::RunConfig::from_json(echoed);
  REQUIRE(ckpt.at("config_hash").get<std::string>() == cfg.hash());
  REQUIRE(cfg.warmup_epochs == 2);
  REQUIRE(cfg.dims.D == 8);
}

TEST_CASE("train is deterministic and honors a zero-epoch schedule", "[cli]") {
  const Fixture& fx = fixture();
  const std::string again = fresh_dir("train_again");
  REQUIRE(run_cli("train --out " + again + " --seed 7 --dataset " + fx.sim_dir +
                  "/dataset.jsonl" + kModelFlags +
                  " --set train.warmup_epochs=2 --set train.contrast_epochs=2")
              .code == 0);
  REQUIRE(slurp(fs::path(again) / "metrics.csv") ==
          slurp(fs::path(fx.run_dir) / "metrics.csv"));
  // the embedded config differs in paths.out_dir; the learned state must not
  const json ckpt_a = json::parse(slurp(fs::path(again) / "checkpoint.json"));
  const json ckpt_b = json::parse(slurp(fs::path(fx.run_dir) / "checkpoint.json"));
  REQUIRE(ckpt_a.at("tensors") == ckpt_b.at("tensors"));

  const std::string zero = fresh_dir("train_zero");
  REQUIRE(run_cli("train --out " + zero + " --seed 7 --dataset " + fx.sim_dir +
                  "/dataset.jsonl" + kModelFlags +
                  " --set train.warmup_epochs=0 --set train.contrast_epochs=0")
              .code == 0);
  REQUIRE(slurp(fs::path(zero) / "metrics.csv") ==
          "epoch,phase,loglik,ranking,supwcon,mse,total,val_ctd,val_mae\n");
  REQUIRE(json::parse(slurp(fs::path(zero) / "checkpoint.json")).contains("tensors"));
}

TEST_CASE("evaluate writes a report and monotone curve files", "[cli]") {
  const Fixture& fx = fixture();
  const std::string out = fresh_dir("eval");
  const RunResult r =
      run_cli("evaluate --out " + out + " --seed 7 --dataset " + fx.sim_dir +
              "/dataset.jsonl --checkpoint " + fx.run_dir + "/checkpoint.json --split all" +
              kModelFlags);
  REQUIRE(r.code == 0);

  const json report = json::parse(slurp(fs::path(out) / "report.json"));
  REQUIRE(report.at("n").get<int>() == 120);
  REQUIRE(report.at("n_observed").get<int>() >= 1);
  const double ctd = report.at("ctd").get<double>();
  REQUIRE((ctd >= 0.0 && ctd <= 1.0));
  REQUIRE(report.at("mae").get<double>() >= 0.0);

  for (const char* name : {"km_all.csv", "km_observed.csv", "mean_surv_all.csv",
                           "mean_surv_observed.csv"}) {
    const std::vector<double> values = curve_values(fs::path(out) / name);
    REQUIRE(values.size() == 9);
    REQUIRE(values[0] <= 1.0);
    for (std::size_t i = 1; i < values.size(); ++i) REQUIRE(values[i] <= values[i - 1]);
    for (double v : values) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("evaluate with the oracle sidecar reproduces the library oracle", "[cli]") {
  const Fixture& fx = fixture();
  const std::string out = fresh_dir("eval_oracle");
  const RunResult r = run_cli("evaluate --out " + out + " --dataset " + fx.sim_dir +
                              "/dataset.jsonl --sidecar " + fx.sim_dir +
                              "/sidecar.jsonl --oracle --split all");
  REQUIRE(r.code == 0);

  const temposurv::OntologyDag dag = temposurv::OntologyDag::load("data/toy_ontology.json");
  const auto records =
      temposurv::load_dataset(fx.sim_dir + "/dataset.jsonl", dag, 9);
  const auto sidecar = temposurv::load_sidecar(fx.sim_dir + "/sidecar.jsonl");
  const double expected = temposurv::oracle_ctd(sidecar, records);

  const json report = json::parse(slurp(fs::path(out) / "report.json"));
  REQUIRE(report.at("ctd").get<double>() == expected);
  REQUIRE(report.at("n").get<int>() == 120);
}

TEST_CASE("evaluate rejects an incompatible checkpoint naming both configs", "[cli]") {
  const Fixture& fx = fixture();
  const RunResult r = run_cli("evaluate --out " + fresh_dir("eval_bad") + " --dataset " +
                              fx.sim_dir + "/dataset.jsonl --checkpoint " + fx.run_dir +
                              "/checkpoint.json");
  REQUIRE(r.code == 2);
  REQUIRE(r.err.find("incompatible") != std::string::npos);
  REQUIRE(r.err.find("\"d\":8") != std::string::npos);
  REQUIRE(r.err.find("\"d\":32") != std::string::npos);
}

TEST_CASE("predict emits one row per patient with intact survival algebra", "[cli]") {
  const Fixture& fx = fixture();
  const std::string out = fresh_dir("pred");
  REQUIRE(run_cli("predict --out " + out + " --dataset " + fx.sim_dir +
                  "/dataset.jsonl --checkpoint " + fx.run_dir + "/checkpoint.json" +
                  kModelFlags)
              .code == 0);

  const fs::path csv = fs::path(out) / "predictions.csv";
  REQUIRE(line_count(csv) == 121);

  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  REQUIRE(header ==
          "patient_id,r1,r2,r3,r4,r5,r6,r7,r8,r9,S1,S2,S3,S4,S5,S6,S7,S8,S9,mu");

  std::string line;
  std::getline(in, line);
  REQUIRE(line.rfind("syn0,", 0) == 0);
  const std::vector<double> row = parse_csv_row(line, 1);
  REQUIRE(row.size() == 19);
  double prod = 1.0;
  double sum = 0.0;
  for (int t = 0; t < 9; ++t) {
    prod *= row[t];
    REQUIRE_THAT(row[9 + t], Catch::Matchers::WithinAbs(prod, 1e-12));
    sum += row[9 + t];
  }
  REQUIRE_THAT(row[18], Catch::Matchers::WithinAbs(sum, 1e-12));
}

TEST_CASE("explain exports attention weights that sum to one", "[cli]") {
  const Fixture& fx = fixture();
  const std::string out = fresh_dir("expl");
  REQUIRE(run_cli("explain --out " + out + " --dataset " + fx.sim_dir +
                  "/dataset.jsonl --checkpoint " + fx.run_dir +
                  "/checkpoint.json --patient syn3" + kModelFlags)
              .code == 0);

  const json doc = json::parse(slurp(fs::path(out) / "explain.json"));
  REQUIRE(doc.at("patient_id").get<std::string>() == "syn3");

  double visit_sum = 0.0;
  for (const json& visit : doc.at("visits")) {
    visit_sum += visit.at("weight").get<double>();
    double code_sum = 0.0;
    for (const json& code : visit.at("codes")) code_sum += code.at("weight").get<double>();
    REQUIRE_THAT(code_sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
  REQUIRE_THAT(visit_sum, Catch::Matchers::WithinAbs(1.0, 1e-9));

  REQUIRE_FALSE(doc.at("ancestors").empty());
  for (const auto& [code, list] : doc.at("ancestors").items()) {
    double sum = 0.0;
    for (const json& entry : list) sum += entry.at("weight").get<double>();
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }

  const RunResult missing = run_cli("explain --out " + fresh_dir("expl_missing") +
                                    " --dataset " + fx.sim_dir +
                                    "/dataset.jsonl --checkpoint " + fx.run_dir +
                                    "/checkpoint.json --patient nobody" + kModelFlags);
  REQUIRE(missing.code == 2);
  REQUIRE(missing.err.find("nobody") != std::string::npos);
}

TEST_CASE("config file, environment default, and flag overrides layer correctly", "[cli]") {
  const std::string dir = fresh_dir("cfg");
  fs::create_directories(dir);
  const fs::path cfg_path = fs::path(dir) / "base.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"seed": 123,
               "synthetic": {"n_patients": 50, "censoring_rate": 0.4, "base_hazard": 0.1}})";
  }

  const std::string out_a = fresh_dir("cfg_a");
  REQUIRE(run_cli("simulate --config " + cfg_path.string() + " --out " + out_a +
                  " --set synthetic.n_patients=60")
              .code == 0);
  const json a = json::parse(slurp(fs::path(out_a) / "config.json"));
  REQUIRE(a.at("seed").get<int>() == 123);
  REQUIRE(a.at("synthetic").at("n_patients").get<int>() == 60);

  const std::string out_b = fresh_dir("cfg_b");
  REQUIRE(run_cli("simulate --out " + out_b,
                  "TEMPOSURV_CONFIG=" + cfg_path.string() + " ")
              .code == 0);
  const json b = json::parse(slurp(fs::path(out_b) / "config.json"));
  REQUIRE(b.at("seed").get<int>() == 123);
  REQUIRE(b.at("synthetic").at("n_patients").get<int>() == 50);

  const RunResult bad = run_cli("simulate --out " + fresh_dir("cfg_bad") +
                                " --set train.bogus=1");
  REQUIRE(bad.code == 2);
  REQUIRE(bad.err.find("train.bogus") != std::string::npos);
}

TEST_CASE("bad invocations exit with the config code and help exits clean", "[cli]") {
  REQUIRE(run_cli("").code == 2);
  REQUIRE(run_cli("frobnicate").code == 2);
  REQUIRE(run_cli("evaluate --out " + fresh_dir("noinput")).code == 2);
  const RunResult help = run_cli("--help");
  REQUIRE(help.code == 0);
  REQUIRE(help.out.find("simulate") != std::string::npos);
}

// Command-line front end: simulate | train | evaluate | predict | explain.
// Exit codes: 0 success, 2 config/validation, 3 numeric divergence, 4 I/O.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "temposurv/temposurv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace temposurv;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string dataset;
  std::string sidecar;
  std::string ontology;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path,
                  "JSON config file ($TEMPOSURV_CONFIG when omitted)");
  cmd->add_option("--set", o.sets, "override a config key: dotted.path=value")->type_size(1);
  cmd->add_option("--seed", o.seed, "override the run seed");
  cmd->add_option("--out", o.out_dir, "override paths.out_dir");
  cmd->add_option("--dataset", o.dataset, "override paths.dataset");
  cmd->add_option("--sidecar", o.sidecar, "override paths.sidecar");
  cmd->add_option("--ontology", o.ontology, "override paths.ontology");
}

void apply_override(json& doc, const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects dotted.path=value, got '" + kv + "'");
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // bare words stay strings

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("--set path '" + path + "' has an empty segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    json& child = (*node)[key];
    if (!child.is_object()) {
      if (!child.is_null())
        throw ConfigError("--set path '" + path + "' descends into a non-object");
      child = json::object();
    }
    node = &child;
    start = dot + 1;
  }
}

RunConfig build_config(const CommonOpts& o) {
  std::string path = o.config_path;
  if (path.empty()) {
    const char* env = std::getenv("TEMPOSURV_CONFIG");
    if (env != nullptr && *env != '\0') path = env;
  }
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    if (!doc.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
  }
  for (const std::string& kv : o.sets) apply_override(doc, kv);
  if (o.seed) doc["seed"] = *o.seed;
  if (!o.out_dir.empty()) doc["paths"]["out_dir"] = o.out_dir;
  if (!o.dataset.empty()) doc["paths"]["dataset"] = o.dataset;
  if (!o.sidecar.empty()) doc["paths"]["sidecar"] = o.sidecar;
  if (!o.ontology.empty()) doc["paths"]["ontology"] = o.ontology;
  return RunConfig::from_json(doc);
}

// Writes to "<target>.partial" first; the final name appears only complete.
template <typename WriteFn>
void atomic_write(const fs::path& target, WriteFn fn) {
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec)
      throw IoError("cannot create directory '" + target.parent_path().string() +
                    "': " + ec.message());
  }
  const fs::path tmp = target.string() + ".partial";
  fn(tmp.string());
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

void write_text(const fs::path& target, const std::string& content) {
  atomic_write(target, [&](const std::string& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw IoError("failed while writing '" + tmp + "'");
  });
}

void echo_config(const RunConfig& cfg) {
  write_text(fs::path(cfg.out_dir) / "config.json", cfg.to_json().dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// one row per interval t = 1..t_max, columns t,value
std::string curve_csv(const std::vector<double>& values) {
  std::string out = "t,value\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    out += std::to_string(i + 1) + "," + fmt(values[i]) + "\n";
  return out;
}

std::string km_csv(const KmCurve& curve, int t_max) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(t_max));
  for (int t = 1; t <= t_max; ++t) values.push_back(curve.at(t));
  return curve_csv(values);
}

void note(const fs::path& p) { std::cout << "wrote " << p.string() << "\n"; }

int cmd_simulate(const RunConfig& cfg) {
  const OntologyDag dag = OntologyDag::load(cfg.ontology_path);
  const SyntheticDataset data = generate_synthetic(cfg.synthetic, dag);
  const fs::path out(cfg.out_dir);

  echo_config(cfg);
  atomic_write(out / "dataset.jsonl",
               [&](const std::string& tmp) { save_dataset(tmp, data.records); });
  note(out / "dataset.jsonl");
  atomic_write(out / "sidecar.jsonl",
               [&](const std::string& tmp) { save_sidecar(tmp, data.hazards); });
  note(out / "sidecar.jsonl");

  std::size_t observed = 0;
  std::vector<std::pair<int, int>> times;
  times.reserve(data.records.size());
  for (const PatientRecord& r : data.records) {
    observed += static_cast<std::size_t>(r.k);
    times.emplace_back(r.t, r.k);
  }
  const std::size_t n = data.records.size();
  const json summary{{"n", n},
                     {"n_observed", observed},
                     {"n_censored", n - observed},
                     {"censoring_rate", static_cast<double>(n - observed) / static_cast<double>(n)},
                     {"censor_prob", data.censor_prob}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  note(out / "summary.json");
  write_text(out / "km.csv", km_csv(kaplan_meier(times), cfg.t_max));
  note(out / "km.csv");
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.dataset_path.empty()) throw ConfigError("train requires paths.dataset");
  const OntologyDag dag = OntologyDag::load(cfg.ontology_path);
  const std::vector<PatientRecord> records = load_dataset(cfg.dataset_path, dag, cfg.t_max);
  SplitResult split = split_dataset(records, cfg.split, cfg.seed);
  const std::vector<PatientRecord> balanced = balance_train(split.train);

  const TrainResult result = train(cfg, dag, balanced, split.val);

  const fs::path out(cfg.out_dir);
  echo_config(cfg);
  write_text(out / "checkpoint.json", result.best_checkpoint.dump() + "\n");
  note(out / "checkpoint.json");
  write_text(out / "metrics.csv", metrics_csv(result.log));
  note(out / "metrics.csv");
  std::cout << "best epoch " << result.best_epoch << " val_ctd " << fmt(result.best_val_ctd)
            << "\n";
  return 0;
}

ModelParams load_checkpoint(const std::string& path, const OntologyDag& dag,
                            const RunConfig& run_cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ValidationError("checkpoint '" + path + "' is not valid JSON");
  RunConfig ckpt_cfg;
  ModelParams model = checkpoint_from_json(doc, dag, &ckpt_cfg);
  const json a = ckpt_cfg.to_json();
  const json b = run_cfg.to_json();
  if (a.at("t_max") != b.at("t_max") || a.at("model") != b.at("model"))
    throw ConfigError("checkpoint incompatible with run config: checkpoint has t_max " +
                      a.at("t_max").dump() + ", model " + a.at("model").dump() +
                      "; run has t_max " + b.at("t_max").dump() + ", model " +
                      b.at("model").dump());
  return model;
}

std::vector<PatientRecord> select_split(const std::vector<PatientRecord>& records,
                                        const RunConfig& cfg, const std::string& which) {
  if (which == "all") return records;
  SplitResult split = split_dataset(records, cfg.split, cfg.seed);
  if (which == "train") return split.train;
  if (which == "val") return split.val;
  return split.test;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path, bool oracle,
                 const std::string& which) {
  if (cfg.dataset_path.empty()) throw ConfigError("evaluate requires paths.dataset");
  const OntologyDag dag = OntologyDag::load(cfg.ontology_path);
  const std::vector<PatientRecord> records = load_dataset(cfg.dataset_path, dag, cfg.t_max);
  const std::vector<PatientRecord> subset = select_split(records, cfg, which);

  std::vector<EvalRecord> evals;
  if (oracle) {
    if (cfg.sidecar_path.empty())
      throw ConfigError("evaluate --oracle requires paths.sidecar");
    evals = oracle_eval_records(load_sidecar(cfg.sidecar_path), subset);
  } else {
    if (checkpoint_path.empty())
      throw ConfigError("evaluate requires --checkpoint (or --oracle with a sidecar)");
    const ModelParams model = load_checkpoint(checkpoint_path, dag, cfg);
    evals = eval_records(model, dag, subset);
  }

  std::size_t observed = 0;
  std::vector<std::pair<int, int>> times_all;
  std::vector<std::pair<int, int>> times_obs;
  for (const EvalRecord& e : evals) {
    times_all.emplace_back(e.t, e.k);
    if (e.k == 1) {
      ++observed;
      times_obs.emplace_back(e.t, 1);
    }
  }

  const double ctd = c_td(evals);
  const double mae = mae_observed(evals);
  const fs::path out(cfg.out_dir);
  echo_config(cfg);
  const json report{{"ctd", ctd}, {"mae", mae}, {"n", evals.size()}, {"n_observed", observed}};
  write_text(out / "report.json", report.dump(2) + "\n");
  note(out / "report.json");
  write_text(out / "km_all.csv", km_csv(kaplan_meier(times_all), cfg.t_max));
  write_text(out / "km_observed.csv", km_csv(kaplan_meier(times_obs), cfg.t_max));
  write_text(out / "mean_surv_all.csv",
             curve_csv(mean_survival_curve(evals, CurveSubset::All)));
  write_text(out / "mean_surv_observed.csv",
             curve_csv(mean_survival_curve(evals, CurveSubset::ObservedOnly)));
  note(out / "km_all.csv");
  note(out / "km_observed.csv");
  note(out / "mean_surv_all.csv");
  note(out / "mean_surv_observed.csv");
  std::cout << "ctd " << fmt(ctd) << " mae " << fmt(mae) << " n " << evals.size() << "\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& checkpoint_path) {
  if (cfg.dataset_path.empty()) throw ConfigError("predict requires paths.dataset");
  const OntologyDag dag = OntologyDag::load(cfg.ontology_path);
  const std::vector<PatientRecord> records = load_dataset(cfg.dataset_path, dag, cfg.t_max);
  const ModelParams model = load_checkpoint(checkpoint_path, dag, cfg);

  std::string csv = "patient_id";
  for (int t = 1; t <= cfg.t_max; ++t) csv += ",r" + std::to_string(t);
  for (int t = 1; t <= cfg.t_max; ++t) csv += ",S" + std::to_string(t);
  csv += ",mu\n";

  ad::Graph g;
  g.set_recording(false);
  CodeCache cache;
  for (const PatientRecord& r : records) {
    const PatientForward fwd = forward_patient(g, model, dag, r, cache);
    csv += r.id;
    for (double v : fwd.out.r.values()) csv += "," + fmt(v);
    for (double v : fwd.out.s.values()) csv += "," + fmt(v);
    csv += "," + fmt(fwd.out.mu.item()) + "\n";
  }

  const fs::path out(cfg.out_dir);
  echo_config(cfg);
  write_text(out / "predictions.csv", csv);
  note(out / "predictions.csv");
  return 0;
}

int cmd_explain(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::string& patient_id) {
  if (cfg.dataset_path.empty()) throw ConfigError("explain requires paths.dataset");
  const OntologyDag dag = OntologyDag::load(cfg.ontology_path);
  const std::vector<PatientRecord> records = load_dataset(cfg.dataset_path, dag, cfg.t_max);
  const ModelParams model = load_checkpoint(checkpoint_path, dag, cfg);

  const PatientRecord* found = nullptr;
  for (const PatientRecord& r : records)
    if (r.id == patient_id) {
      found = &r;
      break;
    }
  if (found == nullptr)
    throw LookupError("patient '" + patient_id + "' not found in '" + cfg.dataset_path + "'");

  const ExplainRecord rec = explain_patient(model, dag, *found);
  const fs::path out(cfg.out_dir);
  echo_config(cfg);
  write_text(out / "explain.json", explain_to_json(rec).dump(2) + "\n");
  note(out / "explain.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete-time survival modeling over coded visit sequences"};
  app.require_subcommand(1);

  CommonOpts sim_opts;
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset and sidecar");
  add_common(sim, sim_opts);

  CommonOpts train_opts;
  CLI::App* trn = app.add_subcommand("train", "fit the model, write checkpoint and metrics");
  add_common(trn, train_opts);

  CommonOpts eval_opts;
  std::string eval_checkpoint;
  std::string eval_split = "test";
  bool eval_oracle = false;
  CLI::App* evl = app.add_subcommand("evaluate", "score a checkpoint, write report and curves");
  add_common(evl, eval_opts);
  evl->add_option("--checkpoint", eval_checkpoint, "checkpoint.json to score");
  evl->add_option("--split", eval_split, "subset to score")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  evl->add_flag("--oracle", eval_oracle, "score the sidecar's true hazards instead of a model");

  CommonOpts pred_opts;
  std::string pred_checkpoint;
  CLI::App* prd = app.add_subcommand("predict", "write per-patient hazard and survival rows");
  add_common(prd, pred_opts);
  prd->add_option("--checkpoint", pred_checkpoint, "checkpoint.json to apply")->required();

  CommonOpts expl_opts;
  std::string expl_checkpoint;
  std::string expl_patient;
  CLI::App* exp = app.add_subcommand("explain", "export attention weights for one patient");
  add_common(exp, expl_opts);
  exp->add_option("--checkpoint", expl_checkpoint, "checkpoint.json to apply")->required();
  exp->add_option("--patient", expl_patient, "patient id to explain")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(build_config(sim_opts));
    if (trn->parsed()) return cmd_train(build_config(train_opts));
    if (evl->parsed())
      return cmd_evaluate(build_config(eval_opts), eval_checkpoint, eval_oracle, eval_split);
    if (prd->parsed()) return cmd_predict(build_config(pred_opts), pred_checkpoint);
    if (exp->parsed())
      return cmd_explain(build_config(expl_opts), expl_checkpoint, expl_patient);
  } catch (const temposurv::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const temposurv::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const temposurv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

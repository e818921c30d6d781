#pragma once

// Run configuration: JSON-backed, fully defaulted, validated as a whole.
// Unknown keys anywhere in the document are rejected.

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "temposurv/errors.hpp"
#include "temposurv/losses.hpp"
#include "temposurv/sequence_encoder.hpp"
#include "temposurv/synthetic.hpp"

namespace temposurv {

struct RunConfig {
  std::uint64_t seed = 1;
  int t_max = 9;

  std::string ontology_path = "data/toy_ontology.json";
  std::string dataset_path;
  std::string sidecar_path;
  std::string out_dir = "out";

  EncoderDims dims;
  std::vector<int> head_hidden{32, 16};
  int d_proj = 32;

  double window = 2.0;
  double tau_pos = 0.5;

  LossWeights weights;
  bool censored_log_variant = false;

  int warmup_epochs = 20;
  int contrast_epochs = 25;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 2e-5;
  double rho = 0.99;
  double opt_eps = 1e-8;
  double clip_norm = 5.0;
  std::array<double, 3> split{0.8, 0.1, 0.1};

  SyntheticSpec synthetic = default_synthetic();

  static SyntheticSpec default_synthetic() {
    SyntheticSpec s;
    s.n_patients = 1000;
    s.censoring_rate = 0.6;
    s.base_hazard = 0.08;
    s.risk_coefficients = {{"renal.acute.atn", 8.0}, {"cardio.ischemic.mi", 1.0}};
    s.risk_prevalence = 0.5;
    s.n_visits_max = 4;
    s.codes_per_visit_max = 3;
    return s;
  }

  void validate() const {
    auto fail = [](const std::string& why) { throw ConfigError("config: " + why); };
    if (t_max < 1) fail("t_max must be positive");
    dims.validate();
    for (int h : head_hidden)
      if (h < 1) fail("head_hidden entries must be positive");
    if (d_proj < 1) fail("d_proj must be positive");
    if (!(window > 0.0)) fail("window must be positive");
    if (!(tau_pos > 0.0)) fail("tau_pos must be positive");
    weights.validate();
    if (warmup_epochs < 0 || contrast_epochs < 0) fail("epoch counts must be non-negative");
    if (batch_size < 2) fail("batch_size must be at least 2");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (weight_decay < 0.0) fail("weight_decay must be non-negative");
    if (!(rho > 0.0 && rho < 1.0)) fail("rho must lie in (0,1)");
    if (!(opt_eps > 0.0)) fail("eps must be positive");
    if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
    double fsum = 0.0;
    for (double f : split) {
      if (f < 0.0) fail("split fractions must be non-negative");
      fsum += f;
    }
    if (std::abs(fsum - 1.0) > 1e-9) fail("split fractions must sum to 1");
    if (synthetic.n_visits_max > dims.n_max)
      fail("synthetic.n_visits_max exceeds model n_max");
    const int worst_visit =
        synthetic.codes_per_visit_max + static_cast<int>(synthetic.risk_coefficients.size());
    if (worst_visit > dims.m_max)
      fail("synthetic visits can exceed model m_max (codes_per_visit_max + risk codes)");
  }

  nlohmann::json to_json() const {
    nlohmann::json risk = nlohmann::json::object();
    for (const auto& [code, mult] : synthetic.risk_coefficients) risk[code] = mult;
    return nlohmann::json{
        {"seed", seed},
        {"t_max", t_max},
        {"paths",
         {{"ontology", ontology_path},
          {"dataset", dataset_path},
          {"sidecar", sidecar_path},
          {"out_dir", out_dir}}},
        {"model",
         {{"d_c", dims.d_c},
          {"d_s", dims.d_s},
          {"d", dims.D},
          {"heads", dims.H},
          {"layers", dims.L},
          {"n_max", dims.n_max},
          {"m_max", dims.m_max},
          {"head_hidden", head_hidden},
          {"d_proj", d_proj}}},
        {"contrast", {{"window", window}, {"tau_pos", tau_pos}}},
        {"loss",
         {{"loglik", weights.loglik},
          {"ranking", weights.ranking},
          {"supwcon", weights.supwcon},
          {"mse", weights.mse},
          {"censored_log_variant", censored_log_variant}}},
        {"train",
         {{"warmup_epochs", warmup_epochs},
          {"contrast_epochs", contrast_epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"rho", rho},
          {"eps", opt_eps},
          {"clip_norm", clip_norm},
          {"split", split}}},
        {"synthetic",
         {{"n_patients", synthetic.n_patients},
          {"censoring_rate", synthetic.censoring_rate},
          {"base_hazard", synthetic.base_hazard},
          {"risk_prevalence", synthetic.risk_prevalence},
          {"risk_coefficients", risk},
          {"n_visits_max", synthetic.n_visits_max},
          {"codes_per_visit_max", synthetic.codes_per_visit_max}}}};
  }

  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::string& path);

  // FNV-1a over the canonical dump, for checkpoint provenance
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : to_json().dump()) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <typename T>
void read_key(const nlohmann::json& obj, const char* key, T& into, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  detail::reject_unknown(
      doc, {"seed", "t_max", "paths", "model", "contrast", "loss", "train", "synthetic"}, "");
  RunConfig cfg;
  detail::read_key(doc, "seed", cfg.seed, "");
  detail::read_key(doc, "t_max", cfg.t_max, "");

  if (doc.contains("paths")) {
    const nlohmann::json& p = doc.at("paths");
    detail::reject_unknown(p, {"ontology", "dataset", "sidecar", "out_dir"}, "paths");
    detail::read_key(p, "ontology", cfg.ontology_path, "paths");
    detail::read_key(p, "dataset", cfg.dataset_path, "paths");
    detail::read_key(p, "sidecar", cfg.sidecar_path, "paths");
    detail::read_key(p, "out_dir", cfg.out_dir, "paths");
  }
  if (doc.contains("model")) {
    const nlohmann::json& m = doc.at("model");
    detail::reject_unknown(
        m, {"d_c", "d_s", "d", "heads", "layers", "n_max", "m_max", "head_hidden", "d_proj"},
        "model");
    detail::read_key(m, "d_c", cfg.dims.d_c, "model");
    detail::read_key(m, "d_s", cfg.dims.d_s, "model");
    detail::read_key(m, "d", cfg.dims.D, "model");
    detail::read_key(m, "heads", cfg.dims.H, "model");
    detail::read_key(m, "layers", cfg.dims.L, "model");
    detail::read_key(m, "n_max", cfg.dims.n_max, "model");
    detail::read_key(m, "m_max", cfg.dims.m_max, "model");
    detail::read_key(m, "head_hidden", cfg.head_hidden, "model");
    detail::read_key(m, "d_proj", cfg.d_proj, "model");
  }
  if (doc.contains("contrast")) {
    const nlohmann::json& c = doc.at("contrast");
    detail::reject_unknown(c, {"window", "tau_pos"}, "contrast");
    detail::read_key(c, "window", cfg.window, "contrast");
    detail::read_key(c, "tau_pos", cfg.tau_pos, "contrast");
  }
  if (doc.contains("loss")) {
    const nlohmann::json& l = doc.at("loss");
    detail::reject_unknown(l, {"loglik", "ranking", "supwcon", "mse", "censored_log_variant"},
                           "loss");
    detail::read_key(l, "loglik", cfg.weights.loglik, "loss");
    detail::read_key(l, "ranking", cfg.weights.ranking, "loss");
    detail::read_key(l, "supwcon", cfg.weights.supwcon, "loss");
    detail::read_key(l, "mse", cfg.weights.mse, "loss");
    detail::read_key(l, "censored_log_variant", cfg.censored_log_variant, "loss");
  }
  if (doc.contains("train")) {
    const nlohmann::json& t = doc.at("train");
    detail::reject_unknown(t,
                           {"warmup_epochs", "contrast_epochs", "batch_size", "lr",
                            "weight_decay", "rho", "eps", "clip_norm", "split"},
                           "train");
    detail::read_key(t, "warmup_epochs", cfg.warmup_epochs, "train");
    detail::read_key(t, "contrast_epochs", cfg.contrast_epochs, "train");
    detail::read_key(t, "batch_size", cfg.batch_size, "train");
    detail::read_key(t, "lr", cfg.lr, "train");
    detail::read_key(t, "weight_decay", cfg.weight_decay, "train");
    detail::read_key(t, "rho", cfg.rho, "train");
    detail::read_key(t, "eps", cfg.opt_eps, "train");
    detail::read_key(t, "clip_norm", cfg.clip_norm, "train");
    detail::read_key(t, "split", cfg.split, "train");
  }
  if (doc.contains("synthetic")) {
    const nlohmann::json& s = doc.at("synthetic");
    detail::reject_unknown(s,
                           {"n_patients", "censoring_rate", "base_hazard", "risk_prevalence",
                            "risk_coefficients", "n_visits_max", "codes_per_visit_max"},
                           "synthetic");
    detail::read_key(s, "n_patients", cfg.synthetic.n_patients, "synthetic");
    detail::read_key(s, "censoring_rate", cfg.synthetic.censoring_rate, "synthetic");
    detail::read_key(s, "base_hazard", cfg.synthetic.base_hazard, "synthetic");
    detail::read_key(s, "risk_prevalence", cfg.synthetic.risk_prevalence, "synthetic");
    detail::read_key(s, "risk_coefficients", cfg.synthetic.risk_coefficients, "synthetic");
    detail::read_key(s, "n_visits_max", cfg.synthetic.n_visits_max, "synthetic");
    detail::read_key(s, "codes_per_visit_max", cfg.synthetic.codes_per_visit_max, "synthetic");
  }

  // the generator inherits the run-wide clock and shapes
  cfg.synthetic.seed = cfg.seed;
  cfg.synthetic.t_max = cfg.t_max;
  cfg.synthetic.demo_dim = cfg.dims.d_s;
  cfg.validate();
  return cfg;
}

inline RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
  return from_json(doc);
}

}  // namespace temposurv

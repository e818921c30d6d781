#pragma once

// Whole-model composition: ontology-attentive code embeddings feed visit
// pooling, the masked transformer, instance pooling, and the survival head;
// a projection head rides along for contrastive training only.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "temposurv/config.hpp"
#include "temposurv/contrastive.hpp"
#include "temposurv/data.hpp"
#include "temposurv/metrics.hpp"
#include "temposurv/ontology.hpp"
#include "temposurv/ontology_encoder.hpp"
#include "temposurv/sequence_encoder.hpp"
#include "temposurv/survival.hpp"

namespace temposurv {

using ad::Shape;

inline constexpr int kCheckpointVersion = 1;

struct ModelParams {
  EncoderDims dims;
  int t_max = 0;
  CodeEmbeddingTable table;
  EncoderParams encoder;
  SurvivalHeadParams head;
  ProjectionHead projection;
  bool has_projection = false;

  static ModelParams init(const RunConfig& cfg, const OntologyDag& dag, Rng& rng) {
    cfg.validate();
    ModelParams m;
    m.dims = cfg.dims;
    m.t_max = cfg.t_max;
    Rng table_rng = rng.fork(1), enc_rng = rng.fork(2), head_rng = rng.fork(3),
        proj_rng = rng.fork(4);
    m.table = CodeEmbeddingTable::init(dag, cfg.dims.d_c, table_rng);
    m.encoder = EncoderParams::init(cfg.dims, enc_rng);
    m.head = SurvivalHeadParams::init(cfg.dims.D, cfg.head_hidden, cfg.t_max, head_rng);
    m.projection = ProjectionHead::init(cfg.dims.D, cfg.d_proj, proj_rng);
    m.has_projection = true;
    return m;
  }

  std::vector<std::pair<std::string, Tensor>> named_params(bool include_projection) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [id, h] : table.base) out.emplace_back("embed." + id, h);
    out.emplace_back("ontology.w_alpha", table.w_alpha);
    out.emplace_back("ontology.b_alpha", table.b_alpha);
    out.emplace_back("ontology.omega_alpha", table.omega_alpha);
    encoder.named_params(out, "encoder");
    head.named_params(out, "head");
    if (include_projection && has_projection) projection.named_params(out, "projection");
    return out;
  }

  void zero_grads() const {
    for (auto [name, p] : named_params(true)) p.zero_grad();
  }
};

// per-graph memo so each distinct code is encoded once per batch
struct CodeCache {
  std::map<std::string, CodeEncoding> memo;

  const CodeEncoding& get(Graph& g, const ModelParams& m, const OntologyDag& dag,
                          const std::string& code) {
    auto it = memo.find(code);
    if (it == memo.end())
      it = memo.emplace(code, encode_code_full(g, m.table, dag, code)).first;
    return it->second;
  }
};

struct PatientForward {
  Tensor u;                          // [D]
  SurvivalOutput out;
  Tensor visit_weights;              // [n], instance-level attention
  std::vector<Tensor> code_weights;  // per visit: [m], visit-level attention
};

inline void check_record_dims(const PatientRecord& r, const EncoderDims& dims) {
  const int n = static_cast<int>(r.visits.size());
  if (n < 1) throw ValidationError("patient '" + r.id + "' has no visits");
  if (n > dims.n_max)
    throw ValidationError("patient '" + r.id + "' has " + std::to_string(n) +
                          " visits, model caps at " + std::to_string(dims.n_max));
  if (static_cast<int>(r.demo.size()) != dims.d_s)
    throw ValidationError("patient '" + r.id + "' has " + std::to_string(r.demo.size()) +
                          " demographics, model expects " + std::to_string(dims.d_s));
  for (const auto& visit : r.visits) {
    const int codes = static_cast<int>(visit.size());
    if (codes < 1) throw ValidationError("patient '" + r.id + "' has an empty visit");
    if (codes > dims.m_max)
      throw ValidationError("patient '" + r.id + "' has a visit with " + std::to_string(codes) +
                            " codes, model caps at " + std::to_string(dims.m_max));
  }
}

inline PatientForward forward_patient(Graph& g, const ModelParams& m, const OntologyDag& dag,
                                      const PatientRecord& r, CodeCache& cache,
                                      bool with_survival = true) {
  check_record_dims(r, m.dims);

  PatientForward fwd;
  std::vector<Tensor> visit_rows;
  for (const auto& visit : r.visits) {
    std::vector<Tensor> embeds;
    embeds.reserve(visit.size());
    for (const std::string& code : visit) embeds.push_back(cache.get(g, m, dag, code).q);
    Mask code_mask(visit.size(), 1);
    auto [pooled, alpha] = pool_visit(g, g.stack_rows(embeds), code_mask, m.encoder);
    visit_rows.push_back(pooled);
    fwd.code_weights.push_back(alpha);
  }

  Tensor p = g.stack_rows(visit_rows);
  Tensor s;
  if (m.dims.d_s > 0) s = g.constant({m.dims.d_s}, r.demo);
  Tensor f = integrate_demographics(g, p, s);
  Mask visit_mask(r.visits.size(), 1);
  Tensor u_rows = encode_sequence(g, f, visit_mask, m.encoder);
  auto [u, weights] = pool_instance(g, u_rows, visit_mask, m.encoder);
  fwd.u = u;
  fwd.visit_weights = weights;
  if (with_survival) fwd.out = predict(g, u, m.head);
  return fwd;
}

inline std::vector<EvalRecord> eval_records(const ModelParams& m, const OntologyDag& dag,
                                            const std::vector<PatientRecord>& records) {
  Graph g;
  g.set_recording(false);
  CodeCache cache;
  std::vector<EvalRecord> out;
  out.reserve(records.size());
  for (const PatientRecord& r : records) {
    PatientForward fwd = forward_patient(g, m, dag, r, cache);
    EvalRecord e;
    e.id = r.id;
    e.t = r.t;
    e.k = r.k;
    e.s = fwd.out.s.values();
    e.mu = fwd.out.mu.item();
    out.push_back(std::move(e));
  }
  return out;
}

struct ExplainRecord {
  std::string patient_id;
  std::vector<double> visit_weights;
  std::vector<std::vector<std::pair<std::string, double>>> code_weights;
  std::map<std::string, std::vector<std::pair<std::string, double>>> ancestor_weights;
};

inline ExplainRecord explain_patient(const ModelParams& m, const OntologyDag& dag,
                                     const PatientRecord& r) {
  Graph g;
  g.set_recording(false);
  CodeCache cache;
  PatientForward fwd = forward_patient(g, m, dag, r, cache, false);
  ExplainRecord rec;
  rec.patient_id = r.id;
  rec.visit_weights = fwd.visit_weights.values();
  for (std::size_t v = 0; v < r.visits.size(); ++v) {
    std::vector<std::pair<std::string, double>> row;
    for (std::size_t c = 0; c < r.visits[v].size(); ++c)
      row.emplace_back(r.visits[v][c], fwd.code_weights[v][c]);
    rec.code_weights.push_back(std::move(row));
    for (const std::string& code : r.visits[v])
      if (!rec.ancestor_weights.count(code))
        rec.ancestor_weights[code] = export_code_attention(m.table, dag, code);
  }
  return rec;
}

inline nlohmann::json explain_to_json(const ExplainRecord& rec) {
  nlohmann::json visits = nlohmann::json::array();
  for (std::size_t v = 0; v < rec.code_weights.size(); ++v) {
    nlohmann::json codes = nlohmann::json::array();
    for (const auto& [code, w] : rec.code_weights[v])
      codes.push_back({{"code", code}, {"weight", w}});
    visits.push_back({{"visit", v + 1}, {"weight", rec.visit_weights[v]}, {"codes", codes}});
  }
  nlohmann::json ancestors = nlohmann::json::object();
  for (const auto& [code, pairs] : rec.ancestor_weights) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [ancestor, w] : pairs)
      list.push_back({{"ancestor", ancestor}, {"weight", w}});
    ancestors[code] = list;
  }
  return nlohmann::json{
      {"patient_id", rec.patient_id}, {"visits", visits}, {"ancestors", ancestors}};
}

inline nlohmann::json checkpoint_to_json(const ModelParams& m, const RunConfig& cfg,
                                         bool include_projection) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : m.named_params(include_projection))
    tensors[name] = {{"shape", t.shape()}, {"values", t.values()}};
  return nlohmann::json{{"format_version", kCheckpointVersion},
                        {"config_hash", cfg.hash()},
                        {"config", cfg.to_json()},
                        {"tensors", tensors}};
}

inline ModelParams checkpoint_from_json(const nlohmann::json& doc, const OntologyDag& dag,
                                        RunConfig* cfg_out = nullptr) {
  if (!doc.is_object() || !doc.contains("format_version"))
    throw ValidationError("checkpoint: missing format_version");
  const int version = doc.at("format_version").get<int>();
  if (version != kCheckpointVersion)
    throw ConfigError("checkpoint format_version " + std::to_string(version) +
                      " unsupported, expected " + std::to_string(kCheckpointVersion));
  const RunConfig cfg = RunConfig::from_json(doc.at("config"));
  if (cfg_out) *cfg_out = cfg;

  Rng rng(0);
  ModelParams m = ModelParams::init(cfg, dag, rng);
  const nlohmann::json& tensors = doc.at("tensors");
  m.has_projection = tensors.contains("projection.w1");

  for (auto [name, t] : m.named_params(true)) {
    if (!m.has_projection && name.rfind("projection.", 0) == 0) continue;
    if (!tensors.contains(name))
      throw ValidationError("checkpoint: missing tensor '" + name + "'");
    const nlohmann::json& entry = tensors.at(name);
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != t.shape())
      throw DimensionError("checkpoint: tensor '" + name + "' has an incompatible shape");
    t.values() = entry.at("values").get<std::vector<double>>();
  }
  std::size_t expected = m.named_params(m.has_projection).size();
  if (tensors.size() != expected)
    throw ValidationError("checkpoint: unexpected tensor entries (" +
                          std::to_string(tensors.size()) + " found, " +
                          std::to_string(expected) + " expected)");
  return m;
}

}  // namespace temposurv

#pragma once

// Attention over each code's ancestor closure: a leaf's embedding is a
// convex combination of its own and its ancestors' base embeddings, with
// weights from a small MLP scored on child-ancestor concatenations.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "temposurv/autodiff.hpp"
#include "temposurv/ontology.hpp"
#include "temposurv/rng.hpp"

namespace temposurv {

using ad::Graph;
using ad::Tensor;

struct CodeEmbeddingTable {
  int d_c = 0;
  std::map<std::string, Tensor> base;  // node-id -> [d_c]
  Tensor w_alpha;                      // [2*d_c x d_c]
  Tensor b_alpha;                      // [d_c]
  Tensor omega_alpha;                  // [d_c]

  static CodeEmbeddingTable init(const OntologyDag& dag, int d_c, Rng& rng) {
    if (d_c <= 0) throw ConfigError("code embedding dimension must be positive");
    CodeEmbeddingTable t;
    t.d_c = d_c;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_c));
    for (const auto& [id, node] : dag.nodes()) {
      Tensor h = Tensor::zeros({d_c}, true);
      for (auto& v : h.values()) v = rng.uniform(-bound, bound);
      t.base.emplace(id, h);
    }
    const double wb = 1.0 / std::sqrt(2.0 * d_c);
    t.w_alpha = Tensor::zeros({2 * d_c, d_c}, true);
    for (auto& v : t.w_alpha.values()) v = rng.uniform(-wb, wb);
    t.b_alpha = Tensor::zeros({d_c}, true);
    t.omega_alpha = Tensor::zeros({d_c}, true);
    for (auto& v : t.omega_alpha.values()) v = rng.uniform(-bound, bound);
    return t;
  }

  const Tensor& embedding(const std::string& id) const {
    auto it = base.find(id);
    if (it == base.end()) throw LookupError("no base embedding for code '" + id + "'");
    return it->second;
  }
};

struct CodeEncoding {
  Tensor q;                           // [d_c]
  std::vector<std::string> closure;   // ancestor_closure order
  Tensor alpha;                       // [|closure|], sums to 1
};

inline CodeEncoding encode_code_full(Graph& g, const CodeEmbeddingTable& table,
                                     const OntologyDag& dag, const std::string& code) {
  CodeEncoding enc;
  enc.closure = dag.ancestor_closure(code);
  const Tensor& h_i = table.embedding(code);

  std::vector<Tensor> scores;
  std::vector<Tensor> ancestors;
  scores.reserve(enc.closure.size());
  ancestors.reserve(enc.closure.size());
  for (const std::string& j : enc.closure) {
    const Tensor& h_j = table.embedding(j);
    Tensor x = g.concat(h_i, h_j);
    Tensor hidden = g.tanh(g.add(g.vecmat(x, table.w_alpha), table.b_alpha));
    scores.push_back(g.dot(hidden, table.omega_alpha));
    ancestors.push_back(h_j);
  }
  enc.alpha = g.softmax(g.stack_scalars(scores));
  enc.q = g.vecmat(enc.alpha, g.stack_rows(ancestors));
  return enc;
}

inline Tensor encode_code(Graph& g, const CodeEmbeddingTable& table, const OntologyDag& dag,
                          const std::string& code) {
  return encode_code_full(g, table, dag, code).q;
}

inline std::vector<std::pair<std::string, double>> export_code_attention(
    const CodeEmbeddingTable& table, const OntologyDag& dag, const std::string& code) {
  Graph g;
  g.set_recording(false);
  CodeEncoding enc = encode_code_full(g, table, dag, code);
  std::vector<std::pair<std::string, double>> out;
  out.reserve(enc.closure.size());
  for (std::size_t i = 0; i < enc.closure.size(); ++i)
    out.emplace_back(enc.closure[i], enc.alpha[i]);
  return out;
}

}  // namespace temposurv

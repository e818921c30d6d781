#pragma once

// Medical-concept DAG: loading, validation, and ancestor closures.

#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "temposurv/errors.hpp"

namespace temposurv {

struct OntologyNode {
  std::string id;
  std::string label;
};

class OntologyDag {
 public:
  static OntologyDag from_json(const nlohmann::json& doc) {
    OntologyDag dag;
    if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges"))
      throw ValidationError("ontology: expected object with 'nodes' and 'edges'");
    for (const auto& n : doc.at("nodes")) {
      if (!n.contains("id") || !n.at("id").is_string())
        throw ValidationError("ontology: node without string 'id'");
      OntologyNode node;
      node.id = n.at("id").get<std::string>();
      if (n.contains("label")) node.label = n.at("label").get<std::string>();
      if (dag.nodes_.count(node.id))
        throw ValidationError("ontology: duplicate node id '" + node.id + "'");
      dag.nodes_.emplace(node.id, node);
      dag.parents_[node.id];
    }
    for (const auto& e : doc.at("edges")) {
      if (!e.contains("child") || !e.contains("parent"))
        throw ValidationError("ontology: edge without 'child'/'parent'");
      const std::string child = e.at("child").get<std::string>();
      const std::string parent = e.at("parent").get<std::string>();
      if (!dag.nodes_.count(child))
        throw ValidationError("ontology: edge references unknown child '" + child + "'");
      if (!dag.nodes_.count(parent))
        throw ValidationError("ontology: edge references unknown parent '" + parent + "'");
      if (child == parent)
        throw ValidationError("ontology: self-loop at '" + child + "'");
      dag.parents_[child].insert(parent);
      dag.has_children_.insert(parent);
    }
    dag.check_acyclic();
    for (const auto& [id, node] : dag.nodes_)
      if (!dag.has_children_.count(id)) dag.leaf_set_.insert(id);
    return dag;
  }

  static OntologyDag load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ontology file: " + path);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("ontology: invalid JSON in " + path + ": " + e.what());
    }
    return from_json(doc);
  }

  bool contains(const std::string& id) const { return nodes_.count(id) > 0; }
  bool is_leaf(const std::string& id) const { return leaf_set_.count(id) > 0; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::map<std::string, OntologyNode>& nodes() const { return nodes_; }
  const std::set<std::string>& leaf_set() const { return leaf_set_; }

  const std::set<std::string>& parents_of(const std::string& id) const {
    auto it = parents_.find(id);
    if (it == parents_.end()) throw LookupError("unknown ontology code '" + id + "'");
    return it->second;
  }

  // the code itself plus all transitive parents, children before parents,
  // ties broken by id
  std::vector<std::string> ancestor_closure(const std::string& code) const {
    if (!nodes_.count(code)) throw LookupError("unknown ontology code '" + code + "'");

    std::set<std::string> closure{code};
    std::queue<std::string> frontier;
    frontier.push(code);
    while (!frontier.empty()) {
      const std::string cur = frontier.front();
      frontier.pop();
      for (const std::string& p : parents_.at(cur))
        if (closure.insert(p).second) frontier.push(p);
    }

    std::map<std::string, int> pending;  // children inside the closure not yet emitted
    for (const std::string& id : closure) pending[id] = 0;
    for (const std::string& id : closure)
      for (const std::string& p : parents_.at(id))
        if (closure.count(p)) ++pending[p];

    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [id, n] : pending)
      if (n == 0) ready.push(id);

    std::vector<std::string> order;
    order.reserve(closure.size());
    while (!ready.empty()) {
      const std::string id = ready.top();
      ready.pop();
      order.push_back(id);
      for (const std::string& p : parents_.at(id))
        if (closure.count(p) && --pending[p] == 0) ready.push(p);
    }
    return order;
  }

 private:
  void check_acyclic() const {
    // Kahn's algorithm over child->parent edges; leftovers witness a cycle
    std::map<std::string, int> indeg;
    for (const auto& [id, node] : nodes_) indeg[id] = 0;
    for (const auto& [child, ps] : parents_)
      for (const std::string& p : ps) ++indeg[p];
    std::queue<std::string> q;
    for (const auto& [id, d] : indeg)
      if (d == 0) q.push(id);
    std::size_t seen = 0;
    while (!q.empty()) {
      const std::string id = q.front();
      q.pop();
      ++seen;
      for (const std::string& p : parents_.at(id))
        if (--indeg.at(p) == 0) q.push(p);
    }
    if (seen != nodes_.size()) {
      std::string witness;
      for (const auto& [id, d] : indeg)
        if (d > 0) {
          witness = witness.empty() ? id : witness + ", " + id;
        }
      throw ValidationError("ontology: cycle detected involving {" + witness + "}");
    }
  }

  std::map<std::string, OntologyNode> nodes_;
  std::map<std::string, std::set<std::string>> parents_;
  std::set<std::string> has_children_;
  std::set<std::string> leaf_set_;
};

}  // namespace temposurv

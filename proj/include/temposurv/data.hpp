#pragma once

// Patient records, JSONL ingestion, stratified splitting, observed
// oversampling, and batch index generation.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "temposurv/errors.hpp"
#include "temposurv/ontology.hpp"
#include "temposurv/rng.hpp"

namespace temposurv {

struct PatientRecord {
  std::string id;
  std::vector<std::vector<std::string>> visits;
  std::vector<double> demo;
  int t = 0;  // observed: day before the event; censored: day of censoring
  int k = 0;

  bool operator==(const PatientRecord&) const = default;
};

inline void validate_record(const PatientRecord& r, const OntologyDag& dag, int t_max) {
  auto fail = [&](const std::string& why) {
    throw ValidationError("record '" + r.id + "': " + why);
  };
  if (r.id.empty()) fail("empty id");
  if (r.t < 1 || r.t > t_max)
    fail("duration " + std::to_string(r.t) + " outside [1, " + std::to_string(t_max) + "]");
  if (r.k != 0 && r.k != 1) fail("event flag must be 0 or 1");
  if (r.visits.empty()) fail("no visits");
  const std::set<std::string>& leaves = dag.leaf_set();
  for (const auto& visit : r.visits) {
    if (visit.empty()) fail("empty visit");
    for (const std::string& code : visit)
      if (!leaves.count(code)) fail("unknown leaf code '" + code + "'");
  }
}

namespace detail {

inline nlohmann::json parse_line(const std::string& line, const std::string& path, long line_no) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ValidationError(path + ":" + std::to_string(line_no) + ": not a JSON object");
  return j;
}

}  // namespace detail

inline std::vector<PatientRecord> load_dataset(const std::string& path, const OntologyDag& dag,
                                               int t_max) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  std::vector<PatientRecord> records;
  std::set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const nlohmann::json j = detail::parse_line(line, path, line_no);
    auto where = [&] { return path + ":" + std::to_string(line_no) + ": "; };
    try {
      PatientRecord r;
      r.id = j.at("id").get<std::string>();
      r.visits = j.at("visits").get<std::vector<std::vector<std::string>>>();
      if (j.contains("demo")) r.demo = j.at("demo").get<std::vector<double>>();
      r.t = j.at("t").get<int>();
      r.k = j.at("k").get<int>();
      if (!seen.insert(r.id).second)
        throw ValidationError(where() + "duplicate id '" + r.id + "'");
      validate_record(r, dag, t_max);
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where() + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where() + e.what());
    }
  }
  return records;
}

inline void save_dataset(const std::string& path, const std::vector<PatientRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  for (const PatientRecord& r : records) {
    nlohmann::json j{{"id", r.id}, {"visits", r.visits}, {"demo", r.demo},
                     {"t", r.t},   {"k", r.k}};
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed while writing '" + path + "'");
}

// sidecar of ground-truth per-interval hazards, keyed by record id
inline std::map<std::string, std::vector<double>> load_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sidecar '" + path + "'");
  std::map<std::string, std::vector<double>> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const nlohmann::json j = detail::parse_line(line, path, line_no);
    try {
      const std::string id = j.at("id").get<std::string>();
      if (out.count(id))
        throw ValidationError("duplicate id '" + id + "'");
      out[id] = j.at("true_hazard").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void save_sidecar(const std::string& path,
                         const std::map<std::string, std::vector<double>>& sidecar) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write sidecar '" + path + "'");
  for (const auto& [id, hazard] : sidecar)
    out << nlohmann::json{{"id", id}, {"true_hazard", hazard}}.dump() << "\n";
  if (!out) throw IoError("failed while writing '" + path + "'");
}

struct SplitResult {
  std::vector<PatientRecord> train, val, test;
};

// Stratified by event flag: within each stratum the records are shuffled and
// apportioned by largest remainder, so every split's stratum count is within
// one record of the exact proportion.
inline SplitResult split_dataset(const std::vector<PatientRecord>& records,
                                 const std::array<double, 3>& fractions, std::uint64_t seed) {
  double sum = 0.0;
  int active = 0;
  for (double f : fractions) {
    if (f < 0.0) throw ValidationError("split fractions must be non-negative");
    if (f > 0.0) ++active;
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  if (static_cast<int>(records.size()) < active)
    throw ValidationError("fewer records than requested splits");

  Rng rng(seed);
  SplitResult result;
  std::vector<PatientRecord>* const dests[3] = {&result.train, &result.val, &result.test};
  for (int flag : {1, 0}) {
    std::vector<int> stratum;
    for (int i = 0; i < static_cast<int>(records.size()); ++i)
      if (records[i].k == flag) stratum.push_back(i);
    Rng stream = rng.fork(flag);
    stream.shuffle(stratum);

    const int n = static_cast<int>(stratum.size());
    std::array<int, 3> counts{};
    std::array<double, 3> remainders{};
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = fractions[s] * n;
      counts[s] = static_cast<int>(std::floor(exact));
      remainders[s] = exact - counts[s];
      assigned += counts[s];
    }
    while (assigned < n) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (remainders[s] > remainders[best]) best = s;
      ++counts[best];
      remainders[best] = -1.0;
      ++assigned;
    }
    int cursor = 0;
    for (int s = 0; s < 3; ++s)
      for (int c = 0; c < counts[s]; ++c) dests[s]->push_back(records[stratum[cursor++]]);
  }
  return result;
}

// Round-robin duplication of the smaller class until the two event-flag
// counts differ by at most one. Training data only; validation and test
// sets are never passed through here.
inline std::vector<PatientRecord> balance_train(const std::vector<PatientRecord>& train) {
  std::vector<int> observed, censored;
  for (int i = 0; i < static_cast<int>(train.size()); ++i)
    (train[i].k == 1 ? observed : censored).push_back(i);
  if (observed.empty() || censored.empty())
    throw ValidationError("balance_train: need at least one observed and one censored record");
  std::vector<PatientRecord> out = train;
  const std::vector<int>& minority = observed.size() < censored.size() ? observed : censored;
  long deficit = std::labs(static_cast<long>(observed.size()) -
                           static_cast<long>(censored.size()));
  for (long d = 0; d < deficit; ++d)
    out.push_back(train[minority[d % minority.size()]]);
  return out;
}

inline std::vector<std::vector<int>> make_batches(int n_records, int batch_size, Rng& rng) {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (n_records < 0) throw ValidationError("negative record count");
  std::vector<int> order(n_records);
  for (int i = 0; i < n_records; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n_records; start += batch_size) {
    const int stop = std::min(n_records, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

}  // namespace temposurv

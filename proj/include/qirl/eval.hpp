#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qirl/gate.hpp"
#include "qirl/matching.hpp"
#include "qirl/vqa.hpp"
#include "qirl/world.hpp"

namespace qirl {

// Standard soft accuracy: min(1, votes / 3); abstaining scores 0.
double acc(const std::string& answer, const std::vector<std::string>& annotations);
// Specialized accuracy: abstaining scores 1, otherwise as acc.
double acc_spe(const std::string& answer, const std::vector<std::string>& annotations);

struct TypeMetrics {
  std::size_t count = 0;
  double acc = 0.0;
  double acc_spe = 0.0;
  double abstention_rate = 0.0;
  bool operator==(const TypeMetrics&) const = default;
};

// Answer probabilities of one pair, in answer-vocabulary order.
struct AnswerSeries {
  std::string pair_id;
  std::vector<std::string> answers;
  std::vector<double> probabilities;
  bool operator==(const AnswerSeries&) const = default;
};

struct EvalReport {
  std::string system;
  std::string split;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, TypeMetrics> per_type;  // keyed by question type name
  TypeMetrics overall;
  std::vector<AnswerSeries> series;
  void validate() const;  // finite, rates in [0, 1], acc_spe >= acc
  bool operator==(const EvalReport&) const = default;
};

// A VQA model with an optional relevance gate in front of it.
struct System {
  std::string name;
  const World* world = nullptr;
  const VQAClassifier* vqa = nullptr;
  const MatchingModel* matcher = nullptr;  // both null: never abstain
  const CalibratedGate* gate = nullptr;
};

// The VQA answer if the gate lets the pair through, else kAbstain.
std::string selective_answer(const CalibratedGate& gate, const MatchingModel& matcher, const VQAClassifier& vqa,
                             const World& world, const QIPair& pair);

// Aggregates already computed answers (one per pair).
EvalReport summarize(const std::string& system, const std::string& split, const std::vector<QIPair>& pairs,
                     const std::vector<std::string>& answers);

EvalReport evaluate_split(const System& system, const std::string& split_name, const std::vector<QIPair>& pairs,
                          std::size_t series_pairs = 3);

std::string report_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);
EvalReport parse_report(const std::string& json_text);
// Refuses invalid reports before touching either file.
void emit_report(const EvalReport& report, const std::string& json_path, const std::string& csv_path);

}  // namespace qirl

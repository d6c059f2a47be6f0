#pragma once

#include <string>
#include <vector>

namespace qirl {

inline constexpr const char* kAbstain = "abstain";
inline constexpr double kDefaultGamma = 0.71;

enum class GatePolicy { EqualError, Fixed };
const char* to_string(GatePolicy p);
GatePolicy gate_policy_from_string(const std::string& s);

// Fixed-width histogram over [0, 1].
struct ScoreHistogram {
  std::vector<int> bins;
  bool operator==(const ScoreHistogram&) const = default;
};
ScoreHistogram histogram01(const std::vector<double>& scores, int n_bins = 20);

struct CalibrationReport {
  ScoreHistogram relevant, irrelevant;
  double false_reject = 0.0;  // relevant scores below gamma
  double false_accept = 0.0;  // irrelevant scores at or above gamma
  bool operator==(const CalibrationReport&) const = default;
};

struct CalibratedGate {
  double gamma = kDefaultGamma;
  GatePolicy policy = GatePolicy::Fixed;
  CalibrationReport report;
  void validate() const;
  bool operator==(const CalibratedGate&) const = default;
};

enum class GateAction { Answer, Abstain };

struct GateDecision {
  GateAction action = GateAction::Answer;
  double score = 0.0;
};

// EqualError sweeps the midpoints of the merged sorted scores (plus both
// ends) and keeps the first threshold minimizing |FRR - FAR|. Fixed uses
// `fixed_gamma`.
CalibratedGate calibrate(const std::vector<double>& rel_scores, const std::vector<double>& irr_scores,
                         GatePolicy policy = GatePolicy::EqualError, double fixed_gamma = kDefaultGamma);

// Answer iff score >= gamma.
GateDecision decide(const CalibratedGate& gate, double score01);

}  // namespace qirl

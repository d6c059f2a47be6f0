#include "qirl/gate.hpp"

#include <algorithm>
#include <cmath>

#include "qirl/errors.hpp"

namespace qirl {

const char* to_string(GatePolicy p) { return p == GatePolicy::EqualError ? "equal_error" : "fixed"; }

GatePolicy gate_policy_from_string(const std::string& s) {
  if (s == "equal_error") return GatePolicy::EqualError;
  if (s == "fixed") return GatePolicy::Fixed;
  throw ConfigError("gate.policy", "unknown gate policy '" + s + "'");
}

ScoreHistogram histogram01(const std::vector<double>& scores, int n_bins) {
  if (n_bins < 1) throw ValidationError("histogram needs at least one bin");
  ScoreHistogram h;
  h.bins.assign(static_cast<std::size_t>(n_bins), 0);
  for (double s : scores) {
    const double c = std::clamp(s, 0.0, 1.0);
    auto b = static_cast<int>(c * n_bins);
    if (b == n_bins) b = n_bins - 1;
    ++h.bins[static_cast<std::size_t>(b)];
  }
  return h;
}

void CalibratedGate::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gate.gamma", "must lie in [0, 1]");
}

namespace {

// Sorted copy; counts below/at-or-above a threshold by binary search.
struct Sorted {
  std::vector<double> v;
  explicit Sorted(std::vector<double> x) : v(std::move(x)) { std::sort(v.begin(), v.end()); }
  double frac_below(double t) const {
    return static_cast<double>(std::lower_bound(v.begin(), v.end(), t) - v.begin()) / static_cast<double>(v.size());
  }
};

}  // namespace

CalibratedGate calibrate(const std::vector<double>& rel_scores, const std::vector<double>& irr_scores,
                         GatePolicy policy, double fixed_gamma) {
  if (rel_scores.empty() || irr_scores.empty()) throw ValidationError("calibration needs both score lists");
  for (const auto* list : {&rel_scores, &irr_scores})
    for (double s : *list)
      if (!std::isfinite(s)) throw NumericError("non-finite calibration score");

  const Sorted rel(rel_scores), irr(irr_scores);
  CalibratedGate gate;
  gate.policy = policy;
  if (policy == GatePolicy::Fixed) {
    gate.gamma = fixed_gamma;
  } else {
    std::vector<double> merged = rel.v;
    merged.insert(merged.end(), irr.v.begin(), irr.v.end());
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    std::vector<double> cands;
    cands.push_back(std::clamp(merged.front(), 0.0, 1.0));
    for (std::size_t i = 0; i + 1 < merged.size(); ++i) cands.push_back(0.5 * (merged[i] + merged[i + 1]));
    cands.push_back(std::min(1.0, std::nextafter(merged.back(), 2.0)));
    double best = 2.0;
    for (double t : cands) {
      const double frr = rel.frac_below(t);
      const double far = 1.0 - irr.frac_below(t);
      const double gap = std::abs(frr - far);
      if (gap < best) {
        best = gap;
        gate.gamma = std::clamp(t, 0.0, 1.0);
      }
    }
  }
  gate.validate();
  gate.report.relevant = histogram01(rel_scores);
  gate.report.irrelevant = histogram01(irr_scores);
  gate.report.false_reject = rel.frac_below(gate.gamma);
  gate.report.false_accept = 1.0 - irr.frac_below(gate.gamma);
  return gate;
}

GateDecision decide(const CalibratedGate& gate, double score01) {
  return {score01 >= gate.gamma ? GateAction::Answer : GateAction::Abstain, score01};
}

}  // namespace qirl

#pragma once

#include <cstdint>
#include <string>

namespace qirl {

struct GradCheckOptions {
  int instances = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  double kink_distance = 1e-6;
  std::uint64_t seed = 1;
  int max_regions = 5;  // n
  int max_words = 5;    // m
  int max_hidden = 8;   // h
};

struct GradCheckResult {
  std::string name;
  int checked = 0;
  int skipped = 0;  // kink-adjacent draws, redrawn
  double max_rel_error = 0.0;
  double seconds = 0.0;
  bool passed() const { return checked > 0 && max_rel_error < tolerance; }
  double tolerance = 1e-4;
};

// Relative error ||a - n|| / max(||a||, ||n||, 1e-8) of the analytic gradient a
// against central differences n, maximized over instances.
GradCheckResult gradcheck_triplet(const GradCheckOptions& opt = {});
GradCheckResult gradcheck_vqa(const GradCheckOptions& opt = {});

}  // namespace qirl

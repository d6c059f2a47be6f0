#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "qirl/gate.hpp"
#include "qirl/matching_trainer.hpp"
#include "qirl/revision.hpp"
#include "qirl/vqa.hpp"
#include "qirl/world.hpp"

namespace qirl {

struct SplitSizes {
  std::size_t train = 2000;
  std::size_t calibration = 300;
  std::size_t test = 500;
};

struct MatcherSettings {
  double lambda1 = 4.0;
  double lambda2 = 5.0;
  MatcherTrainConfig train;
};

struct GateSettings {
  GatePolicy policy = GatePolicy::EqualError;
  double gamma = kDefaultGamma;  // used by the fixed policy
};

// Everything a run depends on. world.seed and the trainer seeds are derived
// from `seed`, so they are not part of the file format.
struct RunConfig {
  std::uint64_t seed = 7;
  WorldConfig world;
  SplitSizes sizes;
  RevisionWeights revision;
  MatcherSettings matcher;
  VQATrainConfig vqa;
  GateSettings gate;
  NegativesSource negatives_source = NegativesSource::NIG;
  std::string output_dir = "out";

  void validate() const;
  // Pushes `seed` into the module configs.
  void apply_seed();
};

nlohmann::json to_json(const RunConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
// FNV-1a of the canonical JSON, as 16 hex digits. output_dir is excluded.
std::string config_hash(const RunConfig& cfg);

}  // namespace qirl

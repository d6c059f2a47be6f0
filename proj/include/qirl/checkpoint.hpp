#pragma once

#include <string>

#include "qirl/gate.hpp"
#include "qirl/matching.hpp"
#include "qirl/revision.hpp"
#include "qirl/vqa.hpp"
#include "qirl/world.hpp"

namespace qirl {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  std::string config_hash;
  MatchingModel matcher;
  VQAClassifier vqa;
  NGramLM lm;
  CalibratedGate gate;
  // Stage checkpoints may omit a model; absent models are empty.
  bool has_matcher() const { return matcher.w_v.size() > 0; }
  bool has_vqa() const { return !vqa.answers.empty(); }
  bool operator==(const Checkpoint&) const = default;
};

// First line "qirl-checkpoint <version> <payload bytes>", then a JSON payload.
std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointVersionError, CheckpointTruncatedError or CheckpointError.
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
// Throws CheckpointDimensionError when the present models do not fit `world`.
void check_dimensions(const Checkpoint& ckpt, const World& world);

}  // namespace qirl

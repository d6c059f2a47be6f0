#pragma once

#include <map>
#include <string>
#include <vector>

#include "qirl/checkpoint.hpp"
#include "qirl/config.hpp"
#include "qirl/eval.hpp"
#include "qirl/matching_trainer.hpp"
#include "qirl/revision.hpp"
#include "qirl/vqa.hpp"
#include "qirl/world.hpp"

namespace qirl {

// Generated data of one run. negatives[i] belong to split.pairs[i].
struct Corpus {
  World world;
  DatasetSplit train, calibration, test;
  std::vector<std::vector<QIPair>> train_nig, train_random;
  std::vector<QIPair> calibration_nig, test_nig;
};

// The three VQA variants and the gated system built on the NIG variant.
inline constexpr const char* kSystems[] = {"baseline", "random", "nig", "nig_gate"};
NegativesSource system_negatives(const std::string& system);

Reviser corpus_reviser(const RunConfig& cfg, const World& world, const DatasetSplit& train);
Corpus make_corpus(const RunConfig& cfg);

std::vector<QIPair> flatten(const std::vector<std::vector<QIPair>>& groups);
// Test pairs followed by their generated irrelevant counterparts.
std::vector<QIPair> mixed_test(const Corpus& corpus);

FitResult train_matcher(const RunConfig& cfg, const Corpus& corpus);
CalibratedGate calibrate_gate(const RunConfig& cfg, const Corpus& corpus, const MatchingModel& matcher);
VQATrainResult train_vqa(const RunConfig& cfg, const Corpus& corpus, NegativesSource source);

struct RunSummary {
  double nig_leak_rate = 0.0;
  double random_leak_rate = 0.0;
  double matcher_separation = 0.0;
  double gamma = 0.0;
  double test_relevant_abstention = 0.0;    // c = 1 test pairs
  double test_irrelevant_abstention = 0.0;  // their NIG counterparts
};

struct RunResult {
  std::vector<EvalReport> reports;  // system x {test, test_mixed}
  RunSummary summary;
  const EvalReport& report(const std::string& system, const std::string& split) const;
};

// Everything in memory: matcher, gate, three VQA trainings, evaluation.
RunResult run_in_memory(const RunConfig& cfg);

// Stage entry points on an output tree. Loading stages compare the stored
// config hash with `cfg` and refuse mismatches unless `force`.
struct OutputTree {
  std::string root;
  std::string world_dir() const { return root + "/world"; }
  std::string split_path(const std::string& name) const { return world_dir() + "/" + name + ".jsonl"; }
  std::string checkpoint_path(const std::string& name) const { return root + "/checkpoints/" + name + ".ckpt"; }
  std::string trace_path(const std::string& name) const { return root + "/traces/" + name + ".csv"; }
  std::string report_path(const std::string& system, const std::string& split, const std::string& ext) const {
    return root + "/reports/" + system + "_" + split + "." + ext;
  }
};

void stage_world_gen(const RunConfig& cfg, const OutputTree& out);
Corpus load_corpus(const RunConfig& cfg, const OutputTree& out, bool force);
void stage_train_matcher(const RunConfig& cfg, const OutputTree& out, bool force);
void stage_calibrate(const RunConfig& cfg, const OutputTree& out, bool force);
void stage_train_vqa(const RunConfig& cfg, const OutputTree& out, const std::string& system, bool force);
RunResult stage_evaluate(const RunConfig& cfg, const OutputTree& out, const std::vector<std::string>& systems,
                         bool force);
RunResult run_pipeline(const RunConfig& cfg, const OutputTree& out);

std::string trace_csv(const std::vector<double>& trace);
std::string summary_json(const RunSummary& s, const std::string& config_hash);

}  // namespace qirl

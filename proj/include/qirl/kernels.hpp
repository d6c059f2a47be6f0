#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version and a plain
// serial reference used by the tests. Parallel reductions accumulate into
// per-item buffers and sum them in index order, so results do not depend on
// the thread count.

#include <span>
#include <string>
#include <vector>

#include "qirl/linalg.hpp"
#include "qirl/matching.hpp"
#include "qirl/revision.hpp"
#include "qirl/vqa.hpp"

namespace qirl {

// In-batch triplet structure: negatives are indices into the batch.
struct TripletBatch {
  std::vector<Mat> images;                       // regions of anchor a
  std::vector<Mat> questions;                    // word embeddings of anchor a
  std::vector<std::vector<int>> neg_questions;   // for image a: questions irrelevant to it
  std::vector<std::vector<int>> neg_images;      // for question a: images irrelevant to it
  std::vector<std::vector<Mat>> generated_images;  // extra negative images for question a

  std::size_t size() const { return images.size(); }
  void validate() const;
};

struct MatchingGrad {
  Mat w_v;
  Mat w_e;
};

struct TripletEval {
  double loss = 0.0;
  MatchingGrad grad;
  std::size_t active_hinges = 0;
  double min_hinge_gap = 0.0;  // smallest |hinge argument|, for kink detection
};

struct VQAEval {
  double objective = 0.0;
  VQAParams grad;
};

namespace kernels {

std::vector<CandidateSentence> score_candidates(const std::vector<std::string>& orig,
                                                std::vector<CandidateSentence> candidates,
                                                const NGramLM& lm, const RevisionWeights& weights,
                                                const Lexicon& lexicon, const SemanticSpace& semantics);
std::vector<CandidateSentence> score_candidates_serial(const std::vector<std::string>& orig,
                                                       std::vector<CandidateSentence> candidates,
                                                       const NGramLM& lm, const RevisionWeights& weights,
                                                       const Lexicon& lexicon,
                                                       const SemanticSpace& semantics);

// S_LSE for each (regions, words) pair.
struct ScoreJob {
  const Mat* regions;
  const Mat* words;
};
std::vector<double> pair_scores(const MatchingModel& model, std::span<const ScoreJob> jobs);
std::vector<double> pair_scores_serial(const MatchingModel& model, std::span<const ScoreJob> jobs);

TripletEval triplet(const MatchingModel& model, const TripletBatch& batch, double margin, bool want_grad);
TripletEval triplet_serial(const MatchingModel& model, const TripletBatch& batch, double margin,
                           bool want_grad);

VQAEval vqa_objective(const VQAClassifier& model, std::span<const VQASample> samples,
                      const VQAObjectiveWeights& w, bool want_grad);
VQAEval vqa_objective_serial(const VQAClassifier& model, std::span<const VQASample> samples,
                             const VQAObjectiveWeights& w, bool want_grad);

}  // namespace kernels
}  // namespace qirl

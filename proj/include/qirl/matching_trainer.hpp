#pragma once

#include <cstdint>
#include <vector>

#include "qirl/kernels.hpp"
#include "qirl/matching.hpp"
#include "qirl/world.hpp"

namespace qirl {

struct MatcherTrainConfig {
  double margin = 0.2;
  double learning_rate = 0.05;
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 1;
  int hidden_dim = 16;
  double init_noise = 0.1;
  // Add each anchor's generated image to its negative image set.
  bool use_generated_negatives = true;
  void validate() const;
};

// Negatives are the other in-batch pairs whose image does not show the
// anchor's focus concept (and vice versa for questions). `generated[a]`, when
// non-null, joins the negative images of anchor a.
TripletBatch make_triplet_batch(const World& world, const std::vector<const QIPair*>& anchors,
                                const std::vector<const QIPair*>& generated = {});

double triplet_loss(const MatchingModel& model, const TripletBatch& batch, double margin);
MatchingGrad grad(const MatchingModel& model, const TripletBatch& batch, double margin);

struct FitResult {
  MatchingModel model;
  std::vector<double> loss_trace;  // mean batch loss per epoch
  double separation = 0.0;         // mean score01(c=1) - mean score01(c=0) on validation
};

// Mean score01 over relevant minus mean over irrelevant pairs.
double score_separation(const MatchingModel& model, const World& world, const std::vector<QIPair>& relevant,
                        const std::vector<QIPair>& irrelevant);

std::vector<double> score01_batch(const MatchingModel& model, const World& world,
                                  const std::vector<QIPair>& pairs);

// generated[i] (if non-empty list) is the generated negative for train[i].
// Validation pairs, when given, produce FitResult::separation.
FitResult fit(MatchingModel model, const World& world, const std::vector<QIPair>& train,
              const std::vector<QIPair>& generated, const MatcherTrainConfig& cfg,
              const std::vector<QIPair>& val_relevant = {}, const std::vector<QIPair>& val_irrelevant = {});

}  // namespace qirl

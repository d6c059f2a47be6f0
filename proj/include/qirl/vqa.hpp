#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qirl/linalg.hpp"
#include "qirl/world.hpp"

namespace qirl {

// Trainable tensors of the classifier. Also used as the gradient type.
struct VQAParams {
  Mat word_table;   // vocab x hidden
  Vec q_bias;       // hidden
  Mat region_proj;  // region_dim x hidden
  Vec v_bias;       // hidden
  Mat head_w;       // answers x hidden (W)
  Vec head_b;       // answers (b)

  VQAParams zeros_like() const;
  void axpy(double a, const VQAParams& x);
  std::size_t size() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);
  bool operator==(const VQAParams&) const = default;
};

// Mean-pooled question words and regions, fused by elementwise product,
// followed by a linear head over the answer vocabulary.
struct VQAClassifier {
  std::vector<std::string> vocabulary;
  std::vector<std::string> answers;
  VQAParams params;

  int hidden_dim() const { return static_cast<int>(params.head_w.cols()); }
  int region_dim() const { return static_cast<int>(params.region_proj.rows()); }

  static VQAClassifier init(const World& world, int hidden, double scale, std::uint64_t seed);
  void validate() const;
  std::vector<int> token_ids(const std::vector<std::string>& tokens) const;
  int answer_id(const std::string& answer) const;  // -1 if not in the vocabulary

  bool operator==(const VQAClassifier& o) const {
    return vocabulary == o.vocabulary && answers == o.answers && params == o.params;
  }
};

enum class ScoreMode { Sigmoid, Softmax };

struct Prediction {
  Vec logits;
  Vec scores;  // sigmoid or softmax, per mode
  int answer_index = 0;
  std::string answer;
};

// Forward pass intermediates, reused by the gradient kernels.
struct VQAForward {
  std::vector<int> token_ids;
  Vec mean_region;
  Vec q, v, fused, logits;
};

VQAForward vqa_forward(const VQAClassifier& model, const std::vector<std::string>& tokens,
                       const Mat& regions);
Prediction predict(const VQAClassifier& model, const QIPair& pair, ScoreMode mode = ScoreMode::Sigmoid);
Prediction prediction_from_logits(const VQAClassifier& model, const Vec& logits, ScoreMode mode);

// t_a = min(1, votes(a) / 3) over the classifier's answer vocabulary.
Vec soft_targets(const std::vector<std::string>& answers, const std::vector<std::string>& annotations);

inline constexpr double kProbClamp = 1e-12;

// -(1/N) sum log p[target]; probabilities below kProbClamp are clamped and
// counted in `clamped` when provided.
double ce_loss(std::span<const Vec> probs, std::span<const int> targets, std::size_t* clamped = nullptr);
// -(1/N) sum_i sum_a [t log sigmoid(s) + (1 - t) log(1 - sigmoid(s))]
double ml_loss(std::span<const Vec> scores, std::span<const Vec> soft_targets);
// -(1/2N) sum [c log P + phi (1 - c) log(1 - P)], P clamped to [1e-12, 1 - 1e-12].
double learn_loss(std::span<const double> relevance_probs, std::span<const int> labels, double phi);

enum class NegativesSource { None, RandomImage, NIG };
const char* to_string(NegativesSource s);
NegativesSource negatives_source_from_string(const std::string& s);

struct VQATrainConfig {
  int hidden_dim = 32;
  double init_scale = 0.1;
  double learning_rate = 0.5;
  int epochs = 60;
  int batch_size = 64;
  double phi = 3.0;
  double learn_weight = 1.0;
  int negative_ratio = 1;
  std::uint64_t seed = 1;
  void validate() const;
};

// One row of the combined objective.
struct VQASample {
  const std::vector<std::string>* tokens = nullptr;
  const Mat* regions = nullptr;
  Vec soft_target;     // used when in_ml
  int gt_answer = -1;  // index of the ground-truth answer, for P(A|I,Q)
  int relevance = 1;
  bool in_ml = true;   // originals contribute to the multi-label loss
};

struct VQAObjectiveWeights {
  double ml_norm = 1.0;     // 1 / number of originals
  double learn_norm = 0.0;  // w / number of learn-loss items (0 disables)
  double phi = 3.0;
};

std::vector<VQASample> make_vqa_samples(const VQAClassifier& model, const std::vector<QIPair>& originals,
                                        const std::vector<std::vector<QIPair>>& negatives);
VQAObjectiveWeights objective_weights(const std::vector<VQASample>& samples, const VQATrainConfig& cfg,
                                      bool with_learn);

struct VQATrainResult {
  VQAClassifier model;
  std::vector<double> trace;  // mean objective per epoch
};

// negatives[i] holds the generated (c = 0) pairs for originals[i]; empty
// lists everywhere reduce the objective to the multi-label loss alone.
VQATrainResult train_debiased(VQAClassifier model, const std::vector<QIPair>& originals,
                              const std::vector<std::vector<QIPair>>& negatives, const VQATrainConfig& cfg);

}  // namespace qirl

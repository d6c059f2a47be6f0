#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qirl/linalg.hpp"

namespace qirl {

// Three question families; the reporting categories of the metrics.
enum class QuestionType { YesNo = 0, Num = 1, Others = 2 };
inline constexpr std::array<QuestionType, 3> kQuestionTypes = {
    QuestionType::YesNo, QuestionType::Num, QuestionType::Others};
const char* to_string(QuestionType t);
QuestionType question_type_from_string(const std::string& s);

enum class SplitRole { TrainBiased, TestShifted };
const char* to_string(SplitRole r);
SplitRole split_role_from_string(const std::string& s);

struct WorldConfig {
  int concept_count = 12;
  int feature_dim = 16;
  // "color" and "count" value lists. Count values must be numerals.
  std::map<std::string, std::vector<std::string>> attributes = {
      {"color", {"black", "white", "red", "yellow", "green", "blue"}},
      {"count", {"1", "2", "3", "4"}}};
  double region_noise_sigma = 0.1;
  double annotator_accuracy = 0.9;
  double bias_strength = 0.9;
  int max_objects = 2;
  std::uint64_t seed = 7;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

struct SceneObject {
  int concept_id = 0;
  std::optional<int> color;  // index into the color list; absent after removal
  int count = 0;             // index into the count list
  auto operator<=>(const SceneObject&) const = default;
};

struct Scene {
  std::vector<SceneObject> objects;  // sorted by concept id
  bool contains(int concept_id) const;
  void canonicalize();
  bool operator==(const Scene&) const = default;
};

struct QIPair {
  std::string pair_id;
  Mat regions;  // n x d
  std::vector<std::string> question_tokens;
  QuestionType question_type = QuestionType::YesNo;
  std::vector<std::string> annotations;  // exactly 10
  std::string answer;                    // ground truth the scene was built from
  int focus_concept = 0;
  Scene scene;
  int relevance = 1;  // c
};

inline constexpr int kAnnotatorCount = 10;

struct DatasetSplit {
  SplitRole role = SplitRole::TrainBiased;
  std::vector<QIPair> pairs;
  // Per question type: the answer prior used for generation, aligned with
  // World::answers_for(type).
  std::map<QuestionType, std::vector<double>> answer_prior;
};

class World {
 public:
  const WorldConfig& config() const { return config_; }
  int dim() const { return config_.feature_dim; }

  const std::vector<std::string>& concept_names() const { return concepts_; }
  const std::vector<std::string>& colors() const { return colors_; }
  const std::vector<std::string>& counts() const { return counts_; }

  const Mat& concept_embeddings() const { return concept_emb_; }
  const Mat& color_embeddings() const { return color_emb_; }
  const Mat& count_embeddings() const { return count_emb_; }

  // Question/caption vocabulary and its d-dimensional word embeddings.
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  const Mat& word_embeddings() const { return word_emb_; }
  std::optional<int> token_index(const std::string& token) const;
  // m x d matrix for a token sequence; throws ValidationError on unknown tokens.
  Mat embed_tokens(const std::vector<std::string>& tokens) const;

  std::optional<int> concept_index(const std::string& name) const;
  std::optional<int> color_index(const std::string& name) const;
  std::optional<int> count_index(const std::string& name) const;

  // The full answer vocabulary: yes, no, counts, colors.
  const std::vector<std::string>& answers() const { return answers_; }
  const std::vector<std::string>& answers_for(QuestionType t) const;
  std::optional<int> answer_index(const std::string& a) const;

  // Dominant answer (index into answers_for(t)) under each split role.
  int dominant_answer(QuestionType t, SplitRole role) const;

 private:
  friend World build_world(const WorldConfig& config);

  WorldConfig config_;
  std::vector<std::string> concepts_, colors_, counts_;
  Mat concept_emb_, color_emb_, count_emb_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> vocab_index_;
  Mat word_emb_;
  std::vector<std::string> answers_;
  std::map<QuestionType, std::vector<std::string>> typed_answers_;
};

World build_world(const WorldConfig& config);

// Question text for a (type, focus, asked-color) triple. `asked_color` is
// used only by YesNo questions.
std::vector<std::string> question_tokens(const World& world, QuestionType type, int focus_concept,
                                         int asked_color);

DatasetSplit generate_split(const World& world, SplitRole role, std::size_t size,
                            std::uint64_t rng_seed);

// One row per object. Noise is keyed on (world seed, noise_key) so a given
// pair always renders identically.
Mat render_regions(const World& world, const Scene& scene, const std::string& noise_key);

std::vector<std::string> caption_scene(const World& world, const Scene& scene);

// Empirical per-type answer histogram of a split (from ground-truth answers).
std::map<QuestionType, std::vector<double>> empirical_prior(const World& world,
                                                            const DatasetSplit& split);
double total_variation(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace qirl

#include "qirl/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "qirl/errors.hpp"
#include "qirl/rng.hpp"

namespace qirl {
namespace {

constexpr const char* kConceptNames[] = {
    "cat",   "dog",   "banana", "apple", "car",   "bus",   "horse", "bird",
    "cup",   "chair", "ball",   "kite",  "tree",  "boat",  "clock", "bear",
    "train", "pizza", "sheep",  "cow",   "bench", "bike",  "book",  "lamp"};

constexpr const char* kFunctionWords[] = {"is", "the", "how", "many", "are",
                                          "there", "what", "color", "and"};

Mat random_unit_rows(Rng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
    m.row(i).normalize();
  }
  return m;
}

std::vector<double> answer_prior_for(const World& world, QuestionType t, SplitRole role) {
  const auto n = world.answers_for(t).size();
  const double b = world.config().bias_strength;
  std::vector<double> p(n, (1.0 - b) / static_cast<double>(n));
  p[static_cast<std::size_t>(world.dominant_answer(t, role))] += b;
  return p;
}

std::size_t sample_categorical(Rng& rng, const std::vector<double>& p) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}

}  // namespace

const char* to_string(QuestionType t) {
  switch (t) {
    case QuestionType::YesNo: return "yes/no";
    case QuestionType::Num: return "num";
    case QuestionType::Others: return "others";
  }
  return "?";
}

QuestionType question_type_from_string(const std::string& s) {
  for (auto t : kQuestionTypes)
    if (s == to_string(t)) return t;
  throw ValidationError("unknown question type '" + s + "'");
}

const char* to_string(SplitRole r) {
  return r == SplitRole::TrainBiased ? "train_biased" : "test_shifted";
}

SplitRole split_role_from_string(const std::string& s) {
  if (s == "train_biased") return SplitRole::TrainBiased;
  if (s == "test_shifted") return SplitRole::TestShifted;
  throw ValidationError("unknown split role '" + s + "'");
}

void WorldConfig::validate() const {
  if (concept_count < 4) throw ConfigError("concept_count", "must be >= 4");
  if (feature_dim < 2) throw ConfigError("feature_dim", "must be >= 2");
  if (!(region_noise_sigma >= 0.0)) throw ConfigError("region_noise_sigma", "must be >= 0");
  if (!(annotator_accuracy >= 0.0 && annotator_accuracy <= 1.0))
    throw ConfigError("annotator_accuracy", "must lie in [0, 1]");
  if (!(bias_strength >= 0.0 && bias_strength <= 1.0))
    throw ConfigError("bias_strength", "must lie in [0, 1]");
  if (max_objects < 1) throw ConfigError("max_objects", "must be >= 1");
  if (max_objects > concept_count) throw ConfigError("max_objects", "exceeds concept_count");
  for (const char* key : {"color", "count"}) {
    auto it = attributes.find(key);
    if (it == attributes.end()) throw ConfigError(std::string("attributes.") + key, "missing");
    if (it->second.size() < 2)
      throw ConfigError(std::string("attributes.") + key, "needs at least two values");
    std::set<std::string> uniq(it->second.begin(), it->second.end());
    if (uniq.size() != it->second.size())
      throw ConfigError(std::string("attributes.") + key, "duplicate values");
  }
  for (const auto& c : attributes.at("count")) {
    if (c.empty() || !std::all_of(c.begin(), c.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
      throw ConfigError("attributes.count", "values must be numerals, got '" + c + "'");
  }
  for (const auto& c : attributes.at("color")) {
    if (c.empty() || c == "yes" || c == "no" || c == "abstain")
      throw ConfigError("attributes.color", "reserved or empty value '" + c + "'");
    for (const char* fw : kFunctionWords)
      if (c == fw) throw ConfigError("attributes.color", "collides with question word '" + c + "'");
    for (const char* cn : kConceptNames)
      if (c == cn) throw ConfigError("attributes.color", "collides with concept '" + c + "'");
  }
}

bool Scene::contains(int concept_id) const {
  return std::any_of(objects.begin(), objects.end(),
                     [&](const SceneObject& o) { return o.concept_id == concept_id; });
}

void Scene::canonicalize() { std::sort(objects.begin(), objects.end()); }

std::optional<int> World::token_index(const std::string& token) const {
  auto it = vocab_index_.find(token);
  if (it == vocab_index_.end()) return std::nullopt;
  return it->second;
}

Mat World::embed_tokens(const std::vector<std::string>& tokens) const {
  Mat out(static_cast<Eigen::Index>(tokens.size()), dim());
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    auto idx = token_index(tokens[j]);
    if (!idx) throw ValidationError("unknown token '" + tokens[j] + "'");
    out.row(static_cast<Eigen::Index>(j)) = word_emb_.row(*idx);
  }
  return out;
}

static std::optional<int> find_in(const std::vector<std::string>& v, const std::string& s) {
  auto it = std::find(v.begin(), v.end(), s);
  if (it == v.end()) return std::nullopt;
  return static_cast<int>(it - v.begin());
}

std::optional<int> World::concept_index(const std::string& n) const { return find_in(concepts_, n); }
std::optional<int> World::color_index(const std::string& n) const { return find_in(colors_, n); }
std::optional<int> World::count_index(const std::string& n) const { return find_in(counts_, n); }
std::optional<int> World::answer_index(const std::string& a) const { return find_in(answers_, a); }

const std::vector<std::string>& World::answers_for(QuestionType t) const {
  return typed_answers_.at(t);
}

int World::dominant_answer(QuestionType t, SplitRole role) const {
  const bool train = role == SplitRole::TrainBiased;
  switch (t) {
    case QuestionType::YesNo:
      return train ? 0 : 1;
    case QuestionType::Num: {
      const int q = static_cast<int>(counts_.size());
      const int base = 1 % q;
      return train ? base : (base + q / 2) % q;
    }
    case QuestionType::Others: {
      const int c = static_cast<int>(colors_.size());
      const int base = color_index("yellow").value_or(0);
      return train ? base : (base + c / 2) % c;
    }
  }
  return 0;
}

World build_world(const WorldConfig& config) {
  config.validate();
  World w;
  w.config_ = config;
  const int n_named = static_cast<int>(std::size(kConceptNames));
  for (int i = 0; i < config.concept_count; ++i) {
    w.concepts_.push_back(i < n_named ? std::string(kConceptNames[i])
                                      : "thing" + std::to_string(i));
  }
  w.colors_ = config.attributes.at("color");
  w.counts_ = config.attributes.at("count");

  const int d = config.feature_dim;
  Rng concept_rng(derive_seed(config.seed, 1));
  Rng color_rng(derive_seed(config.seed, 2));
  Rng count_rng(derive_seed(config.seed, 3));
  Rng word_rng(derive_seed(config.seed, 4));
  w.concept_emb_ = random_unit_rows(concept_rng, config.concept_count, d);
  w.color_emb_ = random_unit_rows(color_rng, static_cast<int>(w.colors_.size()), d);
  w.count_emb_ = random_unit_rows(count_rng, static_cast<int>(w.counts_.size()), d);

  // Content words share the world's concept/attribute embeddings; function
  // words get their own random directions.
  std::vector<RowVec> rows;
  auto add = [&](const std::string& tok, const RowVec& v) {
    if (w.vocab_index_.count(tok)) throw ConfigError("attributes", "token '" + tok + "' is ambiguous");
    w.vocab_index_[tok] = static_cast<int>(w.vocab_.size());
    w.vocab_.push_back(tok);
    rows.push_back(v);
  };
  for (const char* fw : kFunctionWords) {
    RowVec v(d);
    for (int j = 0; j < d; ++j) v(j) = word_rng.normal();
    add(fw, v.normalized());
  }
  for (int i = 0; i < config.concept_count; ++i) add(w.concepts_[i], w.concept_emb_.row(i));
  for (std::size_t i = 0; i < w.colors_.size(); ++i)
    add(w.colors_[i], w.color_emb_.row(static_cast<Eigen::Index>(i)));
  for (std::size_t i = 0; i < w.counts_.size(); ++i)
    add(w.counts_[i], w.count_emb_.row(static_cast<Eigen::Index>(i)));
  w.word_emb_.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) w.word_emb_.row(static_cast<Eigen::Index>(i)) = rows[i];

  w.typed_answers_[QuestionType::YesNo] = {"yes", "no"};
  w.typed_answers_[QuestionType::Num] = w.counts_;
  w.typed_answers_[QuestionType::Others] = w.colors_;
  for (auto t : kQuestionTypes)
    for (const auto& a : w.typed_answers_[t]) w.answers_.push_back(a);
  return w;
}

std::vector<std::string> question_tokens(const World& world, QuestionType type, int focus,
                                         int asked_color) {
  const std::string& c = world.concept_names().at(static_cast<std::size_t>(focus));
  switch (type) {
    case QuestionType::YesNo:
      return {"is", "the", c, world.colors().at(static_cast<std::size_t>(asked_color))};
    case QuestionType::Num:
      return {"how", "many", c, "are", "there"};
    case QuestionType::Others:
      return {"what", "color", "is", "the", c};
  }
  return {};
}

DatasetSplit generate_split(const World& world, SplitRole role, std::size_t size,
                            std::uint64_t rng_seed) {
  if (size < 1) throw ValidationError("split size must be >= 1");
  const auto& cfg = world.config();
  DatasetSplit split;
  split.role = role;
  for (auto t : kQuestionTypes) split.answer_prior[t] = answer_prior_for(world, t, role);

  const int n_colors = static_cast<int>(world.colors().size());
  const int n_counts = static_cast<int>(world.counts().size());
  const char* prefix = role == SplitRole::TrainBiased ? "train" : "test";

  split.pairs.resize(size);
  // Per-index streams: shards are independent and the merge order is the index.
#pragma omp parallel for schedule(static)
  for (long long kk = 0; kk < static_cast<long long>(size); ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    Rng rng(derive_seed(rng_seed, k));
    QIPair p;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%llx-%06zu", prefix,
                  static_cast<unsigned long long>(rng_seed & 0xffffffffULL), k);
    p.pair_id = id;
    p.question_type = kQuestionTypes[rng.index(3)];
    p.focus_concept = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.concept_count)));

    const auto& prior = split.answer_prior.at(p.question_type);
    const auto answer_idx = sample_categorical(rng, prior);
    const auto& typed = world.answers_for(p.question_type);
    p.answer = typed[answer_idx];

    SceneObject focus{p.focus_concept, static_cast<int>(rng.index(static_cast<std::size_t>(n_colors))),
                      static_cast<int>(rng.index(static_cast<std::size_t>(n_counts)))};
    int asked_color = 0;
    switch (p.question_type) {
      case QuestionType::Others:
        focus.color = static_cast<int>(answer_idx);
        break;
      case QuestionType::Num:
        focus.count = static_cast<int>(answer_idx);
        break;
      case QuestionType::YesNo:
        if (p.answer == "yes") {
          asked_color = *focus.color;
        } else {
          asked_color = static_cast<int>(rng.index(static_cast<std::size_t>(n_colors - 1)));
          if (asked_color >= *focus.color) ++asked_color;
        }
        break;
    }
    p.scene.objects.push_back(focus);
    const auto n_obj = 1 + rng.index(static_cast<std::size_t>(cfg.max_objects));
    while (p.scene.objects.size() < n_obj) {
      const int c = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.concept_count)));
      if (p.scene.contains(c)) continue;
      p.scene.objects.push_back({c, static_cast<int>(rng.index(static_cast<std::size_t>(n_colors))),
                                 static_cast<int>(rng.index(static_cast<std::size_t>(n_counts)))});
    }
    p.scene.canonicalize();

    p.question_tokens = question_tokens(world, p.question_type, p.focus_concept, asked_color);
    p.annotations.reserve(kAnnotatorCount);
    for (int a = 0; a < kAnnotatorCount; ++a) {
      p.annotations.push_back(rng.bernoulli(cfg.annotator_accuracy)
                                  ? p.answer
                                  : typed[sample_categorical(rng, prior)]);
    }
    p.relevance = 1;
    p.regions = render_regions(world, p.scene, p.pair_id);
    split.pairs[k] = std::move(p);
  }
  return split;
}

Mat render_regions(const World& world, const Scene& scene, const std::string& noise_key) {
  if (scene.objects.empty()) throw ValidationError("cannot render an empty scene");
  const auto& cfg = world.config();
  Rng rng(derive_seed(cfg.seed, fnv1a(noise_key)));
  Mat out(static_cast<Eigen::Index>(scene.objects.size()), world.dim());
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    if (o.concept_id < 0 || o.concept_id >= cfg.concept_count)
      throw ValidationError("scene object concept id out of range");
    if (o.count < 0 || o.count >= static_cast<int>(world.counts().size()))
      throw ValidationError("scene object count out of range");
    RowVec row = world.concept_embeddings().row(o.concept_id) + world.count_embeddings().row(o.count);
    if (o.color) {
      if (*o.color < 0 || *o.color >= static_cast<int>(world.colors().size()))
        throw ValidationError("scene object color out of range");
      row += world.color_embeddings().row(*o.color);
    }
    if (cfg.region_noise_sigma > 0.0) {
      for (int j = 0; j < world.dim(); ++j) row(j) += cfg.region_noise_sigma * rng.normal();
    }
    out.row(static_cast<Eigen::Index>(i)) = row;
  }
  return out;
}

std::vector<std::string> caption_scene(const World& world, const Scene& scene) {
  Scene s = scene;
  s.canonicalize();
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    if (i > 0) out.emplace_back("and");
    out.push_back(world.counts().at(static_cast<std::size_t>(o.count)));
    if (o.color) out.push_back(world.colors().at(static_cast<std::size_t>(*o.color)));
    out.push_back(world.concept_names().at(static_cast<std::size_t>(o.concept_id)));
  }
  return out;
}

std::map<QuestionType, std::vector<double>> empirical_prior(const World& world,
                                                            const DatasetSplit& split) {
  std::map<QuestionType, std::vector<double>> hist;
  std::map<QuestionType, double> totals;
  for (auto t : kQuestionTypes) hist[t].assign(world.answers_for(t).size(), 0.0);
  for (const auto& p : split.pairs) {
    const auto& typed = world.answers_for(p.question_type);
    auto it = std::find(typed.begin(), typed.end(), p.answer);
    if (it == typed.end()) throw ValidationError("answer '" + p.answer + "' not valid for its type");
    hist[p.question_type][static_cast<std::size_t>(it - typed.begin())] += 1.0;
    totals[p.question_type] += 1.0;
  }
  for (auto& [t, h] : hist) {
    if (totals[t] > 0)
      for (auto& v : h) v /= totals[t];
  }
  return hist;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ValidationError("distribution sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace qirl

#include "qirl/matching_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qirl/errors.hpp"
#include "qirl/rng.hpp"

namespace qirl {

void MatcherTrainConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("matcher.margin", "must be > 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("matcher.learning_rate", "must be >= 0");
  if (epochs < 0) throw ConfigError("matcher.epochs", "must be >= 0");
  if (batch_size < 2) throw ConfigError("matcher.batch_size", "must be >= 2");
  if (hidden_dim < 1) throw ConfigError("matcher.hidden_dim", "must be >= 1");
  if (!(init_noise >= 0.0)) throw ConfigError("matcher.init_noise", "must be >= 0");
}

TripletBatch make_triplet_batch(const World& world, const std::vector<const QIPair*>& anchors,
                                const std::vector<const QIPair*>& generated) {
  if (anchors.empty()) throw ValidationError("empty triplet batch");
  if (!generated.empty() && generated.size() != anchors.size())
    throw ValidationError("generated negatives must align with anchors");
  const auto n = anchors.size();
  TripletBatch b;
  b.neg_questions.resize(n);
  b.neg_images.resize(n);
  b.generated_images.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    b.images.push_back(anchors[a]->regions);
    b.questions.push_back(world.embed_tokens(anchors[a]->question_tokens));
    if (!generated.empty() && generated[a]) b.generated_images[a].push_back(generated[a]->regions);
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t o = 0; o < n; ++o) {
      if (o == a) continue;
      if (!anchors[a]->scene.contains(anchors[o]->focus_concept)) b.neg_questions[a].push_back(static_cast<int>(o));
      if (!anchors[o]->scene.contains(anchors[a]->focus_concept)) b.neg_images[a].push_back(static_cast<int>(o));
    }
  }
  return b;
}

double triplet_loss(const MatchingModel& model, const TripletBatch& batch, double margin) {
  return kernels::triplet(model, batch, margin, false).loss;
}

MatchingGrad grad(const MatchingModel& model, const TripletBatch& batch, double margin) {
  return kernels::triplet(model, batch, margin, true).grad;
}

std::vector<double> score01_batch(const MatchingModel& model, const World& world,
                                  const std::vector<QIPair>& pairs) {
  std::vector<Mat> words;
  words.reserve(pairs.size());
  for (const auto& p : pairs) words.push_back(world.embed_tokens(p.question_tokens));
  std::vector<kernels::ScoreJob> jobs;
  for (std::size_t i = 0; i < pairs.size(); ++i) jobs.push_back({&pairs[i].regions, &words[i]});
  auto s = kernels::pair_scores(model, jobs);
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = score01(s[i], model.lambda2, static_cast<int>(pairs[i].regions.rows()));
  return s;
}

double score_separation(const MatchingModel& model, const World& world, const std::vector<QIPair>& relevant,
                        const std::vector<QIPair>& irrelevant) {
  if (relevant.empty() || irrelevant.empty()) throw ValidationError("separation needs both pair kinds");
  const auto r = score01_batch(model, world, relevant);
  const auto i = score01_batch(model, world, irrelevant);
  return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size()) -
         std::accumulate(i.begin(), i.end(), 0.0) / static_cast<double>(i.size());
}

FitResult fit(MatchingModel model, const World& world, const std::vector<QIPair>& train,
              const std::vector<QIPair>& generated, const MatcherTrainConfig& cfg,
              const std::vector<QIPair>& val_relevant, const std::vector<QIPair>& val_irrelevant) {
  cfg.validate();
  model.validate();
  if (train.size() < 2) throw ValidationError("matcher training needs at least two pairs");
  for (const auto& p : train)
    if (p.relevance != 1) throw ValidationError("matcher anchors must be relevant pairs: " + p.pair_id);
  if (!generated.empty() && generated.size() != train.size())
    throw ValidationError("generated negatives must align with training pairs");

  Rng rng(derive_seed(cfg.seed, 0x7472706cULL));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool use_gen = cfg.use_generated_negatives && !generated.empty();

  FitResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 1 < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      if (end - start < 2) break;
      std::vector<const QIPair*> anchors, gen;
      for (std::size_t k = start; k < end; ++k) {
        anchors.push_back(&train[order[k]]);
        if (use_gen) gen.push_back(&generated[order[k]]);
      }
      const auto batch = make_triplet_batch(world, anchors, gen);
      auto eval = kernels::triplet(model, batch, cfg.margin, true);
      if (!std::isfinite(eval.loss))
        throw NumericError("non-finite triplet loss at epoch " + std::to_string(epoch) + ", batch starting " +
                           std::to_string(start));
      const double scale = cfg.learning_rate / static_cast<double>(anchors.size());
      model.w_v -= scale * eval.grad.w_v;
      model.w_e -= scale * eval.grad.w_e;
      total += eval.loss / static_cast<double>(anchors.size());
      ++batches;
    }
    result.loss_trace.push_back(batches ? total / static_cast<double>(batches) : 0.0);
  }
  if (!val_relevant.empty() && !val_irrelevant.empty())
    result.separation = score_separation(model, world, val_relevant, val_irrelevant);
  result.model = std::move(model);
  return result;
}

}  // namespace qirl

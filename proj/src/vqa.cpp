#include "qirl/vqa.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qirl/errors.hpp"
#include "qirl/kernels.hpp"
#include "qirl/rng.hpp"

namespace qirl {
namespace {

template <typename F>
void for_each_tensor(VQAParams& p, F&& f) {
  f(p.word_table);
  f(p.q_bias);
  f(p.region_proj);
  f(p.v_bias);
  f(p.head_w);
  f(p.head_b);
}

template <typename F>
void for_each_tensor(const VQAParams& p, F&& f) {
  f(p.word_table);
  f(p.q_bias);
  f(p.region_proj);
  f(p.v_bias);
  f(p.head_w);
  f(p.head_b);
}

}  // namespace

VQAParams VQAParams::zeros_like() const {
  VQAParams z = *this;
  for_each_tensor(z, [](auto& t) { t.setZero(); });
  return z;
}

void VQAParams::axpy(double a, const VQAParams& x) {
  word_table += a * x.word_table;
  q_bias += a * x.q_bias;
  region_proj += a * x.region_proj;
  v_bias += a * x.v_bias;
  head_w += a * x.head_w;
  head_b += a * x.head_b;
}

std::size_t VQAParams::size() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

std::vector<double> VQAParams::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for_each_tensor(*this, [&](const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) out.push_back(t.data()[i]);
  });
  return out;
}

void VQAParams::unflatten(const std::vector<double>& flat) {
  if (flat.size() != size()) throw ValidationError("parameter vector has the wrong length");
  std::size_t k = 0;
  for_each_tensor(*this, [&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = flat[k++];
  });
}

VQAClassifier VQAClassifier::init(const World& world, int hidden, double scale, std::uint64_t seed) {
  if (hidden < 1) throw ConfigError("vqa.hidden_dim", "must be >= 1");
  Rng rng(derive_seed(seed, 0x767161ULL));
  auto gauss = [&](Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
  };
  VQAClassifier m;
  m.vocabulary = world.vocabulary();
  m.answers = world.answers();
  const auto V = static_cast<Eigen::Index>(m.vocabulary.size());
  const auto A = static_cast<Eigen::Index>(m.answers.size());
  m.params.word_table = gauss(V, hidden);
  m.params.q_bias = Vec::Zero(hidden);
  m.params.region_proj = gauss(world.dim(), hidden);
  m.params.v_bias = Vec::Zero(hidden);
  m.params.head_w = gauss(A, hidden);
  m.params.head_b = Vec::Zero(A);
  return m;
}

void VQAClassifier::validate() const {
  const auto h = params.head_w.cols();
  if (static_cast<std::size_t>(params.head_w.rows()) != answers.size() ||
      static_cast<std::size_t>(params.head_b.size()) != answers.size())
    throw ValidationError("head output dimension differs from the answer vocabulary");
  if (static_cast<std::size_t>(params.word_table.rows()) != vocabulary.size())
    throw ValidationError("word table rows differ from the vocabulary");
  if (params.word_table.cols() != h || params.q_bias.size() != h || params.region_proj.cols() != h ||
      params.v_bias.size() != h)
    throw ValidationError("inconsistent hidden sizes");
}

std::vector<int> VQAClassifier::token_ids(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = std::find(vocabulary.begin(), vocabulary.end(), t);
    if (it == vocabulary.end()) throw ValidationError("question token '" + t + "' not in vocabulary");
    ids.push_back(static_cast<int>(it - vocabulary.begin()));
  }
  return ids;
}

int VQAClassifier::answer_id(const std::string& answer) const {
  auto it = std::find(answers.begin(), answers.end(), answer);
  return it == answers.end() ? -1 : static_cast<int>(it - answers.begin());
}

VQAForward vqa_forward(const VQAClassifier& model, const std::vector<std::string>& tokens, const Mat& regions) {
  if (tokens.empty()) throw ValidationError("empty question");
  if (regions.rows() < 1) throw ValidationError("no regions");
  if (regions.cols() != model.params.region_proj.rows())
    throw ValidationError("region dimension does not match the classifier");
  const auto& P = model.params;
  VQAForward f;
  f.token_ids = model.token_ids(tokens);
  f.q = P.q_bias;
  const double inv_m = 1.0 / static_cast<double>(f.token_ids.size());
  for (int id : f.token_ids) f.q += inv_m * P.word_table.row(id).transpose();
  f.mean_region = regions.colwise().mean().transpose();
  f.v = P.region_proj.transpose() * f.mean_region + P.v_bias;
  f.fused = f.q.cwiseProduct(f.v);
  f.logits = P.head_w * f.fused + P.head_b;
  return f;
}

Prediction prediction_from_logits(const VQAClassifier& model, const Vec& logits, ScoreMode mode) {
  Prediction p;
  p.logits = logits;
  if (mode == ScoreMode::Sigmoid) {
    p.scores = logits.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
  } else {
    const double mx = logits.maxCoeff();
    p.scores = (logits.array() - mx).exp();
    p.scores /= p.scores.sum();
  }
  // First maximum wins: ties resolve to the lowest vocabulary index.
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  p.answer_index = static_cast<int>(best);
  p.answer = model.answers.at(static_cast<std::size_t>(best));
  return p;
}

Prediction predict(const VQAClassifier& model, const QIPair& pair, ScoreMode mode) {
  return prediction_from_logits(model, vqa_forward(model, pair.question_tokens, pair.regions).logits, mode);
}

Vec soft_targets(const std::vector<std::string>& answers, const std::vector<std::string>& annotations) {
  Vec t = Vec::Zero(static_cast<Eigen::Index>(answers.size()));
  for (std::size_t a = 0; a < answers.size(); ++a) {
    const auto votes = std::count(annotations.begin(), annotations.end(), answers[a]);
    t(static_cast<Eigen::Index>(a)) = std::min(1.0, static_cast<double>(votes) / 3.0);
  }
  return t;
}

double ce_loss(std::span<const Vec> probs, std::span<const int> targets, std::size_t* clamped) {
  if (probs.size() != targets.size()) throw ValidationError("ce_loss: size mismatch");
  if (probs.empty()) throw ValidationError("ce_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= probs[i].size()) throw ValidationError("ce_loss: target out of range");
    double p = probs[i](targets[i]);
    if (p < kProbClamp) {
      p = kProbClamp;
      if (clamped) ++*clamped;
    }
    sum -= std::log(p);
  }
  return sum / static_cast<double>(probs.size());
}

double ml_loss(std::span<const Vec> scores, std::span<const Vec> soft) {
  if (scores.size() != soft.size()) throw ValidationError("ml_loss: size mismatch");
  if (scores.empty()) throw ValidationError("ml_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != soft[i].size()) throw ValidationError("ml_loss: answer count mismatch");
    for (Eigen::Index a = 0; a < scores[i].size(); ++a) {
      const double s = scores[i](a);
      const double t = soft[i](a);
      const double sp = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
      sum += sp - t * s;
    }
  }
  return sum / static_cast<double>(scores.size());
}

double learn_loss(std::span<const double> probs, std::span<const int> labels, double phi) {
  if (probs.size() != labels.size()) throw ValidationError("learn_loss: size mismatch");
  if (probs.empty()) throw ValidationError("learn_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    if (labels[i] == 1)
      sum += std::log(p);
    else if (labels[i] == 0)
      sum += phi * std::log(1.0 - p);
    else
      throw ValidationError("learn_loss: labels must be 0 or 1");
  }
  return -sum / static_cast<double>(probs.size());
}

const char* to_string(NegativesSource s) {
  switch (s) {
    case NegativesSource::None: return "none";
    case NegativesSource::RandomImage: return "random";
    case NegativesSource::NIG: return "nig";
  }
  return "?";
}

NegativesSource negatives_source_from_string(const std::string& s) {
  if (s == "none") return NegativesSource::None;
  if (s == "random") return NegativesSource::RandomImage;
  if (s == "nig") return NegativesSource::NIG;
  throw ConfigError("negatives_source", "expected none|random|nig, got '" + s + "'");
}

void VQATrainConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("vqa.hidden_dim", "must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("vqa.learning_rate", "must be >= 0");
  if (epochs < 0) throw ConfigError("vqa.epochs", "must be >= 0");
  if (batch_size < 1) throw ConfigError("vqa.batch_size", "must be >= 1");
  if (!(phi >= 0.0)) throw ConfigError("vqa.phi", "must be >= 0");
  if (!(learn_weight >= 0.0)) throw ConfigError("vqa.learn_weight", "must be >= 0");
  if (negative_ratio < 0) throw ConfigError("vqa.negative_ratio", "must be >= 0");
}

std::vector<VQASample> make_vqa_samples(const VQAClassifier& model, const std::vector<QIPair>& originals,
                                        const std::vector<std::vector<QIPair>>& negatives) {
  if (!negatives.empty() && negatives.size() != originals.size())
    throw ValidationError("negatives must be grouped per original pair");
  std::vector<VQASample> out;
  auto add = [&](const QIPair& p, bool in_ml) {
    VQASample s;
    s.tokens = &p.question_tokens;
    s.regions = &p.regions;
    s.gt_answer = model.answer_id(p.answer);
    s.relevance = p.relevance;
    s.in_ml = in_ml;
    if (in_ml) s.soft_target = soft_targets(model.answers, p.annotations);
    out.push_back(std::move(s));
  };
  for (std::size_t i = 0; i < originals.size(); ++i) {
    add(originals[i], true);
    if (!negatives.empty())
      for (const auto& n : negatives[i]) add(n, false);
  }
  return out;
}

VQAObjectiveWeights objective_weights(const std::vector<VQASample>& samples, const VQATrainConfig& cfg,
                                      bool with_learn) {
  const auto n_ml = std::count_if(samples.begin(), samples.end(), [](const VQASample& s) { return s.in_ml; });
  VQAObjectiveWeights w;
  w.phi = cfg.phi;
  w.ml_norm = n_ml ? 1.0 / static_cast<double>(n_ml) : 0.0;
  w.learn_norm = with_learn && !samples.empty() ? cfg.learn_weight / static_cast<double>(samples.size()) : 0.0;
  return w;
}

VQATrainResult train_debiased(VQAClassifier model, const std::vector<QIPair>& originals,
                              const std::vector<std::vector<QIPair>>& negatives, const VQATrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (originals.empty()) throw ValidationError("no training pairs");
  const bool with_learn = std::any_of(negatives.begin(), negatives.end(), [](const auto& v) { return !v.empty(); });

  Rng rng(derive_seed(cfg.seed, 0x7472616eULL));
  std::vector<std::size_t> order(originals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  static const std::vector<std::vector<QIPair>> kNoNegatives;
  const auto all = make_vqa_samples(model, originals, with_learn ? negatives : kNoNegatives);
  std::vector<std::size_t> offset(originals.size() + 1, 0);
  for (std::size_t i = 0; i < originals.size(); ++i)
    offset[i + 1] = offset[i] + 1 + (with_learn ? negatives[i].size() : 0);

  VQATrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double epoch_obj = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<VQASample> samples;
      for (std::size_t k = start; k < end; ++k)
        samples.insert(samples.end(), all.begin() + static_cast<std::ptrdiff_t>(offset[order[k]]),
                       all.begin() + static_cast<std::ptrdiff_t>(offset[order[k] + 1]));
      const auto w = objective_weights(samples, cfg, with_learn);
      auto eval = kernels::vqa_objective(model, samples, w, true);
      if (!std::isfinite(eval.objective))
        throw NumericError("non-finite VQA objective at epoch " + std::to_string(epoch) + ", batch starting " +
                           std::to_string(start));
      model.params.axpy(-cfg.learning_rate, eval.grad);
      epoch_obj += eval.objective;
      ++batches;
    }
    result.trace.push_back(epoch_obj / static_cast<double>(batches));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace qirl

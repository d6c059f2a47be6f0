#include "qirl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qirl/errors.hpp"

namespace qirl {

void TripletBatch::validate() const {
  const auto n = images.size();
  if (n == 0) throw ValidationError("empty triplet batch");
  if (questions.size() != n || neg_questions.size() != n || neg_images.size() != n ||
      generated_images.size() != n)
    throw ValidationError("triplet batch fields have inconsistent lengths");
  for (std::size_t a = 0; a < n; ++a) {
    for (int b : neg_questions[a])
      if (b < 0 || static_cast<std::size_t>(b) >= n || static_cast<std::size_t>(b) == a)
        throw ValidationError("invalid negative question index in triplet batch");
    for (int b : neg_images[a])
      if (b < 0 || static_cast<std::size_t>(b) >= n || static_cast<std::size_t>(b) == a)
        throw ValidationError("invalid negative image index in triplet batch");
  }
}

namespace kernels {
namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Encoded {
  std::vector<Encoding> images, questions;
  std::vector<std::vector<Encoding>> generated;
};

Encoded encode_batch(const MatchingModel& model, const TripletBatch& batch, bool parallel) {
  const auto n = static_cast<long long>(batch.size());
  Encoded enc;
  enc.images.resize(batch.size());
  enc.questions.resize(batch.size());
  enc.generated.resize(batch.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (long long a = 0; a < n; ++a) {
    enc.images[a] = encode_regions(model, batch.images[a]);
    enc.questions[a] = encode_words(model, batch.questions[a]);
    for (const auto& g : batch.generated_images[a]) enc.generated[a].push_back(encode_regions(model, g));
  }
  return enc;
}

// Scores needed by the loss: the full in-batch matrix plus generated images.
struct Forward {
  std::vector<std::vector<PairTape>> tapes;      // [image][question]
  std::vector<std::vector<PairTape>> gen_tapes;  // [anchor][generated]
};

Forward forward_batch(const MatchingModel& model, const Encoded& enc, bool parallel) {
  const auto n = static_cast<long long>(enc.images.size());
  Forward f;
  f.tapes.assign(enc.images.size(), std::vector<PairTape>(enc.images.size()));
  f.gen_tapes.resize(enc.images.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (long long a = 0; a < n; ++a) {
    for (long long b = 0; b < n; ++b)
      pair_forward(enc.images[a].unit, enc.questions[b].unit, model.lambda1, model.lambda2, &f.tapes[a][b]);
    f.gen_tapes[a].resize(enc.generated[a].size());
    for (std::size_t g = 0; g < enc.generated[a].size(); ++g)
      pair_forward(enc.generated[a][g].unit, enc.questions[a].unit, model.lambda1, model.lambda2,
                   &f.gen_tapes[a][g]);
  }
  return f;
}

// Loss and dL/dS coefficients. Serial and cheap; fixed order.
struct Coefficients {
  Mat pair;                               // [image][question]
  std::vector<std::vector<double>> gen;   // [anchor][generated]
  double loss = 0.0;
  std::size_t active = 0;
  double min_gap = std::numeric_limits<double>::infinity();
};

Coefficients hinge_coefficients(const TripletBatch& batch, const Forward& f, double margin) {
  const auto n = batch.size();
  Coefficients c;
  c.pair = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  c.gen.resize(n);
  auto hinge = [&](double pos, double neg, double& g_pos, double& g_neg) {
    const double arg = margin - pos + neg;
    c.min_gap = std::min(c.min_gap, std::abs(arg));
    if (arg > 0.0) {
      c.loss += arg;
      ++c.active;
      g_pos -= 1.0;
      g_neg += 1.0;
    }
  };
  for (std::size_t a = 0; a < n; ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    const double pos = f.tapes[a][a].score;
    for (int b : batch.neg_questions[a]) hinge(pos, f.tapes[a][b].score, c.pair(ai, ai), c.pair(ai, b));
    for (int b : batch.neg_images[a]) hinge(pos, f.tapes[b][a].score, c.pair(ai, ai), c.pair(b, ai));
    c.gen[a].assign(f.gen_tapes[a].size(), 0.0);
    for (std::size_t g = 0; g < f.gen_tapes[a].size(); ++g)
      hinge(pos, f.gen_tapes[a][g].score, c.pair(ai, ai), c.gen[a][g]);
  }
  if (!std::isfinite(c.min_gap)) c.min_gap = 0.0;
  return c;
}

Mat zeros_like(const Mat& m) { return Mat::Zero(m.rows(), m.cols()); }

MatchingGrad project_back(const MatchingModel& model, const TripletBatch& batch, const Encoded& enc,
                          const std::vector<Mat>& g_img, const std::vector<Mat>& g_q,
                          const std::vector<std::vector<Mat>>& g_gen, bool parallel) {
  const auto n = static_cast<long long>(batch.size());
  std::vector<Mat> wv(batch.size()), we(batch.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (long long a = 0; a < n; ++a) {
    wv[a] = batch.images[a].transpose() * unit_rows_backward(enc.images[a], g_img[a]);
    for (std::size_t g = 0; g < g_gen[a].size(); ++g)
      wv[a] += batch.generated_images[a][g].transpose() * unit_rows_backward(enc.generated[a][g], g_gen[a][g]);
    we[a] = batch.questions[a].transpose() * unit_rows_backward(enc.questions[a], g_q[a]);
  }
  MatchingGrad grad{zeros_like(model.w_v), zeros_like(model.w_e)};
  for (std::size_t a = 0; a < batch.size(); ++a) {
    grad.w_v += wv[a];
    grad.w_e += we[a];
  }
  return grad;
}

}  // namespace

std::vector<CandidateSentence> score_candidates(const std::vector<std::string>& orig,
                                                std::vector<CandidateSentence> candidates,
                                                const NGramLM& lm, const RevisionWeights& weights,
                                                const Lexicon& lexicon, const SemanticSpace& semantics) {
  const CandidateScorer scorer(orig, lm, weights, lexicon, semantics);
  const auto n = static_cast<long long>(candidates.size());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) scorer.score(candidates[i]);
  return candidates;
}

std::vector<CandidateSentence> score_candidates_serial(const std::vector<std::string>& orig,
                                                       std::vector<CandidateSentence> candidates,
                                                       const NGramLM& lm, const RevisionWeights& weights,
                                                       const Lexicon& lexicon,
                                                       const SemanticSpace& semantics) {
  for (auto& c : candidates) c = score_candidate(orig, std::move(c), lm, weights, lexicon, semantics);
  return candidates;
}

std::vector<double> pair_scores(const MatchingModel& model, std::span<const ScoreJob> jobs) {
  std::vector<double> out(jobs.size());
  const auto n = static_cast<long long>(jobs.size());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) out[i] = similarity(model, *jobs[i].regions, *jobs[i].words);
  return out;
}

std::vector<double> pair_scores_serial(const MatchingModel& model, std::span<const ScoreJob> jobs) {
  std::vector<double> out;
  out.reserve(jobs.size());
  for (const auto& j : jobs) out.push_back(similarity(model, *j.regions, *j.words));
  return out;
}

TripletEval triplet(const MatchingModel& model, const TripletBatch& batch, double margin, bool want_grad) {
  batch.validate();
  const auto enc = encode_batch(model, batch, true);
  const auto fwd = forward_batch(model, enc, true);
  const auto coef = hinge_coefficients(batch, fwd, margin);
  TripletEval out;
  out.loss = coef.loss;
  out.active_hinges = coef.active;
  out.min_hinge_gap = coef.min_gap;
  if (!want_grad) return out;

  const auto n = batch.size();
  const auto nn = static_cast<long long>(n);
  std::vector<Mat> g_img(n);
  std::vector<std::vector<Mat>> g_gen(n);
  // q_parts[a][b]: contribution of image row a to question b.
  std::vector<std::vector<Mat>> q_parts(n, std::vector<Mat>(n));
#pragma omp parallel for schedule(dynamic, 1)
  for (long long a = 0; a < nn; ++a) {
    g_img[a] = zeros_like(enc.images[a].unit);
    for (std::size_t b = 0; b < n; ++b) {
      const double c = coef.pair(a, static_cast<Eigen::Index>(b));
      if (c == 0.0) continue;
      q_parts[a][b] = zeros_like(enc.questions[b].unit);
      pair_backward(enc.images[a].unit, enc.questions[b].unit, model.lambda1, fwd.tapes[a][b], c, g_img[a],
                    q_parts[a][b]);
    }
    g_gen[a].resize(enc.generated[a].size());
    for (std::size_t g = 0; g < enc.generated[a].size(); ++g) {
      g_gen[a][g] = zeros_like(enc.generated[a][g].unit);
      if (coef.gen[a][g] == 0.0) continue;
      if (q_parts[a][a].size() == 0) q_parts[a][a] = zeros_like(enc.questions[a].unit);
      pair_backward(enc.generated[a][g].unit, enc.questions[a].unit, model.lambda1, fwd.gen_tapes[a][g],
                    coef.gen[a][g], g_gen[a][g], q_parts[a][a]);
    }
  }
  std::vector<Mat> g_q(n);
#pragma omp parallel for schedule(static)
  for (long long b = 0; b < nn; ++b) {
    g_q[b] = zeros_like(enc.questions[b].unit);
    for (std::size_t a = 0; a < n; ++a)
      if (q_parts[a][b].size()) g_q[b] += q_parts[a][b];
  }
  out.grad = project_back(model, batch, enc, g_img, g_q, g_gen, true);
  return out;
}

TripletEval triplet_serial(const MatchingModel& model, const TripletBatch& batch, double margin,
                           bool want_grad) {
  batch.validate();
  const auto enc = encode_batch(model, batch, false);
  const auto fwd = forward_batch(model, enc, false);
  const auto coef = hinge_coefficients(batch, fwd, margin);
  TripletEval out;
  out.loss = coef.loss;
  out.active_hinges = coef.active;
  out.min_hinge_gap = coef.min_gap;
  if (!want_grad) return out;

  const auto n = batch.size();
  std::vector<Mat> g_img(n), g_q(n);
  std::vector<std::vector<Mat>> g_gen(n);
  for (std::size_t a = 0; a < n; ++a) {
    g_img[a] = zeros_like(enc.images[a].unit);
    g_q[a] = zeros_like(enc.questions[a].unit);
    for (const auto& g : enc.generated[a]) g_gen[a].push_back(zeros_like(g.unit));
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double c = coef.pair(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      if (c != 0.0)
        pair_backward(enc.images[a].unit, enc.questions[b].unit, model.lambda1, fwd.tapes[a][b], c, g_img[a],
                      g_q[b]);
    }
    for (std::size_t g = 0; g < enc.generated[a].size(); ++g) {
      if (coef.gen[a][g] != 0.0)
        pair_backward(enc.generated[a][g].unit, enc.questions[a].unit, model.lambda1, fwd.gen_tapes[a][g],
                      coef.gen[a][g], g_gen[a][g], g_q[a]);
    }
  }
  out.grad = project_back(model, batch, enc, g_img, g_q, g_gen, false);
  return out;
}

namespace {

constexpr std::size_t kVqaChunk = 32;

// Objective contribution of one sample; adds its gradient into `grad` when non-null.
double vqa_sample(const VQAClassifier& model, const VQASample& s, const VQAObjectiveWeights& w,
                  VQAParams* grad) {
  const auto f = vqa_forward(model, *s.tokens, *s.regions);
  const auto n_ans = f.logits.size();
  Vec g_z = Vec::Zero(n_ans);
  double obj = 0.0;
  if (s.in_ml) {
    for (Eigen::Index a = 0; a < n_ans; ++a) {
      const double z = f.logits(a);
      const double t = s.soft_target(a);
      obj += w.ml_norm * (softplus(z) - t * z);
      g_z(a) += w.ml_norm * (sigmoid(z) - t);
    }
  }
  if (w.learn_norm > 0.0 && s.gt_answer >= 0) {
    const double p = sigmoid(f.logits(s.gt_answer));
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    const bool clamped = pc != p;
    if (s.relevance == 1) {
      obj -= w.learn_norm * std::log(pc);
      if (!clamped) g_z(s.gt_answer) -= w.learn_norm * (1.0 - p);
    } else {
      obj -= w.learn_norm * w.phi * std::log(1.0 - pc);
      if (!clamped) g_z(s.gt_answer) += w.learn_norm * w.phi * p;
    }
  }
  if (grad) {
    const auto& P = model.params;
    grad->head_w.noalias() += g_z * f.fused.transpose();
    grad->head_b += g_z;
    const Vec g_fused = P.head_w.transpose() * g_z;
    const Vec g_q = g_fused.cwiseProduct(f.v);
    const Vec g_v = g_fused.cwiseProduct(f.q);
    const double inv_m = 1.0 / static_cast<double>(f.token_ids.size());
    for (int id : f.token_ids) grad->word_table.row(id) += inv_m * g_q.transpose();
    grad->q_bias += g_q;
    grad->region_proj.noalias() += f.mean_region * g_v.transpose();
    grad->v_bias += g_v;
  }
  return obj;
}

}  // namespace

VQAEval vqa_objective(const VQAClassifier& model, std::span<const VQASample> samples,
                      const VQAObjectiveWeights& w, bool want_grad) {
  const std::size_t n_chunks = (samples.size() + kVqaChunk - 1) / kVqaChunk;
  std::vector<double> obj(n_chunks, 0.0);
  std::vector<VQAParams> grads(want_grad ? n_chunks : 0);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long ci = 0; ci < static_cast<long long>(n_chunks); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    VQAParams* g = nullptr;
    if (want_grad) {
      grads[c] = model.params.zeros_like();
      g = &grads[c];
    }
    const std::size_t end = std::min(samples.size(), (c + 1) * kVqaChunk);
    for (std::size_t i = c * kVqaChunk; i < end; ++i) obj[c] += vqa_sample(model, samples[i], w, g);
  }
  VQAEval out;
  for (double o : obj) out.objective += o;
  if (want_grad) {
    out.grad = model.params.zeros_like();
    for (const auto& g : grads) out.grad.axpy(1.0, g);
  }
  return out;
}

VQAEval vqa_objective_serial(const VQAClassifier& model, std::span<const VQASample> samples,
                             const VQAObjectiveWeights& w, bool want_grad) {
  VQAEval out;
  if (want_grad) out.grad = model.params.zeros_like();
  for (const auto& s : samples) out.objective += vqa_sample(model, s, w, want_grad ? &out.grad : nullptr);
  return out;
}

}  // namespace kernels
}  // namespace qirl

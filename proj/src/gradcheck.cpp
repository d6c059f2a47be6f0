#include "qirl/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "qirl/kernels.hpp"
#include "qirl/rng.hpp"

namespace qirl {
namespace {

int draw(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1))); }

Mat gaussian(Rng& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

struct Block {
  double* data;
  Eigen::Index size;
};
template <class M>
Block block(M& m) {
  return {m.data(), m.size()};
}

// Central differences over every entry of the given blocks.
template <class F>
std::vector<double> numeric_grad(const std::vector<Block>& params, double h, F&& f) {
  std::vector<double> g;
  for (const auto& b : params) {
    for (Eigen::Index i = 0; i < b.size; ++i) {
      const double keep = b.data[i];
      b.data[i] = keep + h;
      const double up = f();
      b.data[i] = keep - h;
      const double down = f();
      b.data[i] = keep;
      g.push_back((up - down) / (2.0 * h));
    }
  }
  return g;
}

template <class... M>
std::vector<double> flat(const M&... ms) {
  std::vector<double> out;
  (out.insert(out.end(), ms.data(), ms.data() + ms.size()), ...);
  return out;
}

double min_abs_similarity(const MatchingModel& model, const Mat& regions, const Mat& words) {
  const auto V = encode_regions(model, regions);
  const auto E = encode_words(model, words);
  return similarity_matrix(V.unit, E.unit).raw.cwiseAbs().minCoeff();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

GradCheckResult gradcheck_triplet(const GradCheckOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckResult res;
  res.name = "triplet";
  res.tolerance = opt.tolerance;
  Rng rng(derive_seed(opt.seed, 0x7472));
  while (res.checked < opt.instances) {
    const int dr = draw(rng, 2, 6), dw = draw(rng, 2, 6), h = draw(rng, 1, opt.max_hidden);
    const int B = draw(rng, 2, 3);
    MatchingModel model;
    model.w_v = gaussian(rng, dr, h);
    model.w_e = gaussian(rng, dw, h);
    model.lambda1 = 1.0 + 5.0 * rng.uniform();
    model.lambda2 = 1.0 + 5.0 * rng.uniform();
    TripletBatch batch;
    batch.neg_questions.resize(static_cast<std::size_t>(B));
    batch.neg_images.resize(static_cast<std::size_t>(B));
    batch.generated_images.resize(static_cast<std::size_t>(B));
    for (int a = 0; a < B; ++a) {
      batch.images.push_back(gaussian(rng, draw(rng, 1, opt.max_regions), dr));
      batch.questions.push_back(gaussian(rng, draw(rng, 1, opt.max_words), dw));
      if (rng.bernoulli(0.5))
        batch.generated_images[static_cast<std::size_t>(a)].push_back(gaussian(rng, draw(rng, 1, opt.max_regions), dr));
      for (int o = 0; o < B; ++o) {
        if (o == a) continue;
        batch.neg_questions[static_cast<std::size_t>(a)].push_back(o);
        batch.neg_images[static_cast<std::size_t>(a)].push_back(o);
      }
    }
    const double margin = 0.2 + 0.8 * rng.uniform();

    const auto eval = kernels::triplet_serial(model, batch, margin, true);
    double kink = eval.min_hinge_gap;
    for (std::size_t a = 0; a < batch.size(); ++a) {
      for (std::size_t b = 0; b < batch.size(); ++b)
        kink = std::min(kink, min_abs_similarity(model, batch.images[a], batch.questions[b]));
      for (const auto& g : batch.generated_images[a])
        kink = std::min(kink, min_abs_similarity(model, g, batch.questions[a]));
    }
    if (kink < opt.kink_distance || eval.active_hinges == 0) {
      ++res.skipped;
      continue;
    }
    const auto numeric = numeric_grad({block(model.w_v), block(model.w_e)}, opt.step,
                                      [&] { return kernels::triplet_serial(model, batch, margin, false).loss; });
    res.max_rel_error = std::max(res.max_rel_error, rel_error(flat(eval.grad.w_v, eval.grad.w_e), numeric));
    ++res.checked;
  }
  res.seconds = seconds_since(t0);
  return res;
}

GradCheckResult gradcheck_vqa(const GradCheckOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckResult res;
  res.name = "vqa";
  res.tolerance = opt.tolerance;
  Rng rng(derive_seed(opt.seed, 0x7671));
  const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f"};
  const std::vector<std::string> answers = {"w", "x", "y", "z"};
  while (res.checked < opt.instances) {
    const int h = draw(rng, 1, opt.max_hidden), dr = draw(rng, 2, 5);
    VQAClassifier model;
    model.vocabulary = vocab;
    model.answers = answers;
    auto& P = model.params;
    P.word_table = gaussian(rng, static_cast<int>(vocab.size()), h, 0.7);
    P.q_bias = gaussian(rng, h, 1, 0.3).col(0);
    P.region_proj = gaussian(rng, dr, h, 0.7);
    P.v_bias = gaussian(rng, h, 1, 0.3).col(0);
    P.head_w = gaussian(rng, static_cast<int>(answers.size()), h, 0.7);
    P.head_b = gaussian(rng, static_cast<int>(answers.size()), 1, 0.3).col(0);

    const int n_orig = draw(rng, 1, 3), n_neg = draw(rng, 0, 3);
    std::vector<std::vector<std::string>> tokens;
    std::vector<Mat> regions;
    for (int i = 0; i < n_orig + n_neg; ++i) {
      std::vector<std::string> t;
      for (int k = draw(rng, 1, opt.max_words); k > 0; --k) t.push_back(vocab[rng.index(vocab.size())]);
      tokens.push_back(std::move(t));
      regions.push_back(gaussian(rng, draw(rng, 1, opt.max_regions), dr));
    }
    std::vector<VQASample> samples;
    for (int i = 0; i < n_orig + n_neg; ++i) {
      VQASample s;
      s.tokens = &tokens[static_cast<std::size_t>(i)];
      s.regions = &regions[static_cast<std::size_t>(i)];
      s.gt_answer = static_cast<int>(rng.index(answers.size()));
      s.in_ml = i < n_orig;
      s.relevance = s.in_ml ? 1 : 0;
      if (s.in_ml) {
        s.soft_target = Vec::Zero(static_cast<Eigen::Index>(answers.size()));
        for (Eigen::Index a = 0; a < s.soft_target.size(); ++a)
          s.soft_target(a) = static_cast<double>(rng.index(4)) / 3.0;
      }
      samples.push_back(std::move(s));
    }
    VQAObjectiveWeights w;
    w.ml_norm = 1.0 / n_orig;
    w.learn_norm = n_neg ? (0.5 + rng.uniform()) / static_cast<double>(samples.size()) : 0.0;
    w.phi = 3.0;

    bool near_clamp = false;
    for (const auto& s : samples) {
      const double z = vqa_forward(model, *s.tokens, *s.regions).logits(s.gt_answer);
      const double p = 1.0 / (1.0 + std::exp(-z));
      if (p < 1e3 * kProbClamp || p > 1.0 - 1e3 * kProbClamp) near_clamp = true;
    }
    if (near_clamp) {
      ++res.skipped;
      continue;
    }
    const auto eval = kernels::vqa_objective_serial(model, samples, w, true);
    const std::vector<Block> ptrs = {block(P.word_table), block(P.q_bias), block(P.region_proj),
                                     block(P.v_bias),     block(P.head_w), block(P.head_b)};
    const auto& G = eval.grad;
    const auto analytic = flat(G.word_table, G.q_bias, G.region_proj, G.v_bias, G.head_w, G.head_b);
    const auto numeric = numeric_grad(ptrs, opt.step,
                                      [&] { return kernels::vqa_objective_serial(model, samples, w, false).objective; });
    res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic, numeric));
    ++res.checked;
  }
  res.seconds = seconds_since(t0);
  return res;
}

}  // namespace qirl

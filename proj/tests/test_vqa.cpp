#include <doctest.h>

#include <array>
#include <cmath>

#include "qirl/errors.hpp"
#include "qirl/gradcheck.hpp"
#include "qirl/kernels.hpp"
#include "qirl/revision.hpp"
#include "qirl/rng.hpp"
#include "qirl/vqa.hpp"
#include "qirl/world.hpp"

using namespace qirl;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Binary cross-entropy written out term by term.
double bce_oracle(const std::vector<Vec>& scores, const std::vector<Vec>& targets) {
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (Eigen::Index a = 0; a < scores[i].size(); ++a) {
      const double p = sigmoid(scores[i](a)), t = targets[i](a);
      sum -= t * std::log(p) + (1 - t) * std::log(1 - p);
    }
  return sum / static_cast<double>(scores.size());
}

struct Setup {
  World world = build_world(WorldConfig{});
  DatasetSplit train = generate_split(world, SplitRole::TrainBiased, 120, 1);
  VQAClassifier model = VQAClassifier::init(world, 16, 0.1, 2);
};

}  // namespace

TEST_CASE("predict") {
  Setup s;
  const auto& pair = s.train.pairs[0];
  const auto soft = predict(s.model, pair, ScoreMode::Softmax);
  CHECK(std::abs(soft.scores.sum() - 1.0) < 1e-9);
  const auto sig = predict(s.model, pair, ScoreMode::Sigmoid);
  CHECK(sig.scores.minCoeff() > 0.0);
  CHECK(sig.scores.maxCoeff() < 1.0);
  CHECK(sig.answer == soft.answer);
  CHECK(sig.answer == s.model.answers[static_cast<std::size_t>(sig.answer_index)]);

  const Vec shifted = soft.logits.array() + 17.0;
  CHECK(prediction_from_logits(s.model, shifted, ScoreMode::Softmax).answer_index == soft.answer_index);
  const Vec cubed = soft.logits.array().cube() * 3.0 + 1.0;
  CHECK(prediction_from_logits(s.model, cubed, ScoreMode::Sigmoid).answer_index == soft.answer_index);
  const Vec shifted_probs = prediction_from_logits(s.model, shifted, ScoreMode::Softmax).scores;
  CHECK((shifted_probs - soft.scores).cwiseAbs().maxCoeff() < 1e-12);

  const Vec tie = Vec::Constant(soft.logits.size(), 0.25);
  CHECK(prediction_from_logits(s.model, tie, ScoreMode::Softmax).answer_index == 0);

  auto one = s.model;
  one.answers = {one.answers[3]};
  one.params.head_w = one.params.head_w.topRows(1).eval();
  one.params.head_b = one.params.head_b.head(1).eval();
  one.validate();
  for (int i = 0; i < 10; ++i) CHECK(predict(one, s.train.pairs[static_cast<std::size_t>(i)]).answer == one.answers[0]);
}

TEST_CASE("ce_loss") {
  const std::vector<Vec> exact = {vec({0, 1, 0})};
  const std::vector<int> t1 = {1};
  CHECK(ce_loss(exact, t1) == 0.0);

  const std::vector<Vec> uniform = {vec({0.25, 0.25, 0.25, 0.25})};
  const std::vector<int> t0 = {0};
  CHECK(ce_loss(uniform, t0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(ce_loss(uniform, t0) == doctest::Approx(1.3863).epsilon(1e-4));

  std::size_t clamped = 0;
  const std::vector<Vec> zero = {vec({1, 0}), vec({0.5, 0.5})};
  const std::vector<int> t = {1, 0};
  const double l = ce_loss(zero, t, &clamped);
  CHECK(clamped == 1);
  CHECK(l == doctest::Approx((-std::log(kProbClamp) + std::log(2.0)) / 2.0));

  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    Vec p(5);
    for (Eigen::Index i = 0; i < 5; ++i) p(i) = rng.uniform() + 1e-3;
    p /= p.sum();
    const std::vector<Vec> ps = {p};
    const std::vector<int> ts = {static_cast<int>(rng.index(5))};
    CHECK(ce_loss(ps, ts) >= 0.0);
  }
  CHECK_THROWS_AS(ce_loss(std::vector<Vec>{}, std::vector<int>{}), ValidationError);
}

TEST_CASE("ml_loss") {
  CHECK(ml_loss(std::vector<Vec>{vec({0.0})}, std::vector<Vec>{vec({1.0})}) ==
        doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(ml_loss(std::vector<Vec>{vec({0.0})}, std::vector<Vec>{vec({1.0})}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));

  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    std::vector<Vec> s(3, Vec(4)), t(3, Vec(4));
    for (std::size_t i = 0; i < 3; ++i)
      for (Eigen::Index a = 0; a < 4; ++a) {
        s[i](a) = 6.0 * rng.uniform() - 3.0;
        t[i](a) = static_cast<double>(rng.index(4)) / 3.0;
      }
    const double l = ml_loss(s, t);
    CHECK(l >= 0.0);
    CHECK(l == doctest::Approx(bce_oracle(s, t)).epsilon(1e-12));
    std::vector<Vec> s2 = s, t2 = t;
    for (std::size_t i = 0; i < 3; ++i) {
      s2[i] = -s[i];
      t2[i] = (1.0 - t[i].array()).matrix();
    }
    CHECK(ml_loss(s2, t2) == doctest::Approx(l).epsilon(1e-12));
  }

  // t = sigmoid(s) is the minimum and equals the binary entropy
  const double t = 0.3, s = std::log(t / (1 - t));
  const double h = -(t * std::log(t) + (1 - t) * std::log(1 - t));
  auto at = [&](double x) { return ml_loss(std::vector<Vec>{vec({x})}, std::vector<Vec>{vec({t})}); };
  CHECK(at(s) == doctest::Approx(h).epsilon(1e-12));
  CHECK(at(s + 0.1) > at(s));
  CHECK(at(s - 0.1) > at(s));
}

TEST_CASE("learn_loss") {
  const std::array<double, 1> one = {1.0};
  const std::array<int, 1> c1 = {1};
  CHECK(learn_loss(one, c1, 3.0) == doctest::Approx(0.0).epsilon(1e-12));

  const std::array<double, 2> half = {1.0, 0.5};
  const std::array<int, 2> mixed = {1, 0};
  // 3 ln 2 before the 1/2N factor
  CHECK(2.0 * learn_loss(half, mixed, 3.0) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-10));
  CHECK(2.0 * learn_loss(half, mixed, 3.0) == doctest::Approx(2.0794).epsilon(1e-4));

  const std::array<double, 2> any = {0.7, 0.99};
  CHECK(learn_loss(any, mixed, 0.0) == doctest::Approx(-std::log(0.7) / 2.0).epsilon(1e-12));

  const std::array<double, 2> extremes = {0.0, 1.0};
  CHECK(std::isfinite(learn_loss(extremes, mixed, 3.0)));
  CHECK(learn_loss(extremes, mixed, 3.0) == doctest::Approx(-(std::log(1e-12) + 3.0 * std::log(1e-12)) / 2.0));

  const std::array<int, 2> bad = {1, 2};
  CHECK_THROWS_AS(learn_loss(half, bad, 3.0), ValidationError);
}

TEST_CASE("combined objective matches its parts") {
  Setup s;
  const auto reviser = make_reviser(s.world, s.train, {});
  std::vector<QIPair> originals(s.train.pairs.begin(), s.train.pairs.begin() + 20);
  std::vector<std::vector<QIPair>> negatives;
  for (const auto& p : originals) negatives.push_back({generate_negative_pair(s.world, reviser, p)});
  const auto samples = make_vqa_samples(s.model, originals, negatives);
  VQATrainConfig cfg;
  cfg.learn_weight = 0.7;
  const auto w = objective_weights(samples, cfg, true);
  const auto eval = kernels::vqa_objective(s.model, samples, w, false);

  std::vector<Vec> scores, targets;
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& p : originals) {
    const auto logits = predict(s.model, p).logits;
    scores.push_back(logits);
    targets.push_back(soft_targets(s.model.answers, p.annotations));
  }
  for (std::size_t i = 0; i < originals.size(); ++i)
    for (const QIPair* p : {&originals[i], &negatives[i][0]}) {
      probs.push_back(predict(s.model, *p).scores(s.model.answer_id(p->answer)));
      labels.push_back(p->relevance);
    }
  const double expect = ml_loss(scores, targets) + 0.7 * learn_loss(probs, labels, cfg.phi);
  CHECK(eval.objective == doctest::Approx(expect).epsilon(1e-12));

  const auto plain = make_vqa_samples(s.model, originals, {});
  const auto ml_only = kernels::vqa_objective(s.model, plain, objective_weights(plain, cfg, false), false);
  CHECK(ml_only.objective == doctest::Approx(ml_loss(scores, targets)).epsilon(1e-12));
}

TEST_CASE("soft targets") {
  const std::vector<std::string> answers = {"a", "b", "c"};
  const std::vector<std::string> votes = {"a", "a", "a", "a", "a", "b", "b", "x", "x", "x"};
  const auto t = soft_targets(answers, votes);
  CHECK(t(0) == 1.0);
  CHECK(t(1) == doctest::Approx(2.0 / 3.0));
  CHECK(t(2) == 0.0);
}

TEST_CASE("train_debiased") {
  Setup s;
  VQATrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;

  SUBCASE("same seed gives the same trace") {
    const auto a = train_debiased(s.model, s.train.pairs, {}, cfg);
    const auto b = train_debiased(s.model, s.train.pairs, {}, cfg);
    CHECK(a.trace == b.trace);
    CHECK(a.model == b.model);
    CHECK(a.trace.back() < a.trace.front());
  }
  SUBCASE("no negatives reduces to the multi-label loss") {
    Rng rng(5);
    std::vector<std::vector<QIPair>> randoms;
    for (std::size_t i = 0; i < s.train.pairs.size(); ++i)
      randoms.push_back({random_negative_pair(s.train.pairs, i, rng)});
    const auto none = train_debiased(s.model, s.train.pairs, {}, cfg);
    auto zero_weight = cfg;
    zero_weight.learn_weight = 0.0;
    const auto weighted = train_debiased(s.model, s.train.pairs, randoms, zero_weight);
    CHECK(weighted.trace == none.trace);
    CHECK(weighted.model == none.model);
    const std::vector<std::vector<QIPair>> empties(s.train.pairs.size());
    CHECK(train_debiased(s.model, s.train.pairs, empties, cfg).model == none.model);

    // the first epoch of full-batch training starts from the plain ml loss
    auto full = cfg;
    full.epochs = 1;
    full.batch_size = static_cast<int>(s.train.pairs.size());
    std::vector<Vec> scores, targets;
    for (const auto& p : s.train.pairs) {
      scores.push_back(predict(s.model, p).logits);
      targets.push_back(soft_targets(s.model.answers, p.annotations));
    }
    CHECK(train_debiased(s.model, s.train.pairs, {}, full).trace[0] ==
          doctest::Approx(ml_loss(scores, targets)).epsilon(1e-12));
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(train_debiased(s.model, {}, {}, cfg), ValidationError);
    auto bad = cfg;
    bad.phi = -1.0;
    CHECK_THROWS_AS(train_debiased(s.model, s.train.pairs, {}, bad), ConfigError);
    auto nan_model = s.model;
    nan_model.params.head_b(0) = std::nan("");
    CHECK_THROWS_AS(train_debiased(nan_model, s.train.pairs, {}, cfg), NumericError);
  }
}

TEST_CASE("combined objective gradient matches central differences") {
  const auto r = gradcheck_vqa({});
  CHECK(r.checked >= 100);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.seconds < 30.0);
}

TEST_CASE("negatives source names") {
  for (auto src : {NegativesSource::None, NegativesSource::RandomImage, NegativesSource::NIG})
    CHECK(negatives_source_from_string(to_string(src)) == src);
  CHECK_THROWS_AS(negatives_source_from_string("diffusion"), ConfigError);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qirl/errors.hpp"
#include "qirl/matching.hpp"
#include "qirl/rng.hpp"

using namespace qirl;

namespace {

Mat gaussian(Rng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Mat unit_rows(Mat m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

}  // namespace

TEST_CASE("encode") {
  Rng rng(1);
  const auto model = MatchingModel::identity(4);
  const Mat x = unit_rows(gaussian(rng, 3, 4));
  CHECK((encode_regions(model, x).unit - x).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((encode_words(model, x).unit - x).cwiseAbs().maxCoeff() < 1e-15);

  const auto m = MatchingModel::init(6, 5, 7, 0.5, 3);
  const auto enc = encode_regions(m, gaussian(rng, 5, 6));
  CHECK(enc.unit.cols() == 7);
  for (Eigen::Index i = 0; i < enc.unit.rows(); ++i) CHECK(std::abs(enc.unit.row(i).norm() - 1.0) < 1e-9);

  Mat z = gaussian(rng, 3, 4);
  z.row(1).setZero();
  try {
    encode_regions(model, z);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("similarity_matrix") {
  Mat v(1, 2), e(2, 2);
  v << 1, 0;
  e << 1, 0, 0, 1;
  const auto s = similarity_matrix(v, e);
  CHECK(s.raw(0, 0) == doctest::Approx(1.0));
  CHECK(s.raw(0, 1) == doctest::Approx(0.0));

  Mat v1(1, 2), e1(1, 2);
  v1 << 0.6, 0.8;
  e1 << 1, 0;
  CHECK(similarity_matrix(v1, e1).normalized(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  Mat V(2, 2), E(2, 2);
  V << 1, 0, 0, 1;
  E << 1, 0, 0.6, 0.8;
  const auto s2 = similarity_matrix(V, E);
  Mat raw(2, 2);
  raw << 1, 0.6, 0, 0.8;
  CHECK((s2.raw - raw).cwiseAbs().maxCoeff() < 1e-15);
  Mat norm = raw.cwiseMax(0.0);
  for (Eigen::Index j = 0; j < 2; ++j) norm.col(j) /= norm.col(j).norm();
  CHECK((s2.normalized - norm).cwiseAbs().maxCoeff() < 1e-15);

  Mat vn(1, 2), en(1, 2);
  vn << 1, 0;
  en << -1, 0;
  const auto s3 = similarity_matrix(vn, en);
  CHECK(s3.raw(0, 0) == doctest::Approx(-1.0));
  CHECK(s3.normalized(0, 0) == 0.0);

  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto s4 = similarity_matrix(unit_rows(gaussian(rng, 4, 3)), unit_rows(gaussian(rng, 5, 3)));
    CHECK(s4.raw.maxCoeff() <= 1.0 + 1e-12);
    CHECK(s4.raw.minCoeff() >= -1.0 - 1e-12);
  }
}

TEST_CASE("attend_words") {
  Rng rng(3);
  const Mat V = unit_rows(gaussian(rng, 4, 3));
  const Mat e1 = unit_rows(gaussian(rng, 1, 3));
  for (double l1 : {0.1, 4.0, 50.0}) {
    const auto s = similarity_matrix(V, e1);
    const auto xi = attention_weights(s, l1);
    CHECK((xi.array() - 1.0).abs().maxCoeff() < 1e-15);
    const auto a = attend_words(s, e1, l1);
    for (Eigen::Index i = 0; i < a.rows(); ++i) CHECK((a.row(i) - e1.row(0)).norm() < 1e-15);
  }
  const Mat E = unit_rows(gaussian(rng, 5, 3));
  const auto s = similarity_matrix(V, E);
  const auto xi = attention_weights(s, 4.0);
  for (Eigen::Index i = 0; i < xi.rows(); ++i) CHECK(std::abs(xi.row(i).sum() - 1.0) < 1e-12);

  const auto near_zero = attend_words(s, E, 1e-6);
  const RowVec mean = E.colwise().mean();
  for (Eigen::Index i = 0; i < near_zero.rows(); ++i) CHECK((near_zero.row(i) - mean).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("region_relevance") {
  Rng rng(4);
  const Mat V = unit_rows(gaussian(rng, 3, 4));
  CHECK((region_relevance(V, V).array() - 1.0).abs().maxCoeff() < 1e-12);
  Mat perp(1, 2), v(1, 2);
  v << 1, 0;
  perp << 0, 3;
  CHECK(std::abs(region_relevance(v, perp)(0)) < 1e-15);
  const Mat A = gaussian(rng, 3, 4);
  CHECK((region_relevance(V, A) - region_relevance(V, 7.5 * A)).cwiseAbs().maxCoeff() < 1e-12);
  Mat zero = A;
  zero.row(2).setZero();
  CHECK_THROWS_AS(region_relevance(V, zero), ValidationError);
}

TEST_CASE("pooled_similarity") {
  Vec one(1);
  one << 0.5;
  CHECK(pooled_similarity(one, 5.0) == doctest::Approx(0.5).epsilon(1e-15));
  Vec two(2);
  two << 0.5, 0.5;
  CHECK(pooled_similarity(two, 5.0) == doctest::Approx(0.5 + std::log(2.0) / 5.0).epsilon(1e-15));
  CHECK(pooled_similarity(two, 5.0) == doctest::Approx(0.6386).epsilon(1e-4));

  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(rng.index(10));
    const double l2 = 0.1 + 20.0 * rng.uniform();
    Vec r(n);
    for (int i = 0; i < n; ++i) r(i) = 2.0 * rng.uniform() - 1.0;
    const double s = pooled_similarity(r, l2);
    CHECK(s >= r.maxCoeff() - 1e-9);
    CHECK(s <= r.maxCoeff() + std::log(static_cast<double>(n)) / l2 + 1e-9);
  }
  Vec big(3);
  big << 1000.0, 999.0, 998.0;
  CHECK(std::isfinite(pooled_similarity(big, 5.0)));
}

TEST_CASE("score01") {
  for (int n : {1, 2, 5}) {
    const double top = 1.0 + std::log(static_cast<double>(n)) / 5.0;
    CHECK(score01(-1.0, 5.0, n) == doctest::Approx(0.0));
    CHECK(score01(top, 5.0, n) == doctest::Approx(1.0));
    CHECK(score01(-3.0, 5.0, n) == 0.0);
    CHECK(score01(top + 1.0, 5.0, n) == 1.0);
    double prev = -1.0;
    for (double s = -0.99; s < top; s += 0.01) {
      const double v = score01(s, 5.0, n);
      CHECK(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("similarity is permutation invariant") {
  Rng rng(6);
  const auto model = MatchingModel::init(5, 4, 6, 0.3, 9);
  for (int t = 0; t < 20; ++t) {
    const Mat R = gaussian(rng, 4, 5), W = gaussian(rng, 3, 4);
    const double s = similarity(model, R, W);
    std::vector<int> pr = {0, 1, 2, 3}, pw = {0, 1, 2};
    std::rotate(pr.begin(), pr.begin() + 1 + t % 3, pr.end());
    std::reverse(pw.begin(), pw.end());
    Mat R2(4, 5), W2(3, 4);
    for (int i = 0; i < 4; ++i) R2.row(i) = R.row(pr[static_cast<std::size_t>(i)]);
    for (int j = 0; j < 3; ++j) W2.row(j) = W.row(pw[static_cast<std::size_t>(j)]);
    CHECK(similarity(model, R2, W2) == doctest::Approx(s).epsilon(1e-12));
    const double s01 = similarity01(model, R, W);
    CHECK(s01 >= 0.0);
    CHECK(s01 <= 1.0);
  }
}

#include "qirl/matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qirl/errors.hpp"
#include "qirl/rng.hpp"

namespace qirl {

void MatchingModel::validate() const {
  if (!(lambda1 > 0.0)) throw ConfigError("matching.lambda1", "must be > 0");
  if (!(lambda2 > 0.0)) throw ConfigError("matching.lambda2", "must be > 0");
  if (w_v.cols() != w_e.cols()) throw ValidationError("projection hidden sizes differ");
  if (w_v.size() == 0 || w_e.size() == 0) throw ValidationError("empty projection");
  if (!w_v.allFinite() || !w_e.allFinite()) throw NumericError("non-finite projection weights");
}

MatchingModel MatchingModel::identity(int dim, double lambda1, double lambda2) {
  return {Mat::Identity(dim, dim), Mat::Identity(dim, dim), lambda1, lambda2};
}

MatchingModel MatchingModel::init(int region_dim, int word_dim, int hidden, double noise,
                                  std::uint64_t seed, double lambda1, double lambda2) {
  Rng rng(derive_seed(seed, 0x6d61746368ULL));
  auto make = [&](int rows) {
    Mat m = Mat::Identity(rows, hidden);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) += noise * rng.normal();
    return m;
  };
  MatchingModel m;
  m.w_v = make(region_dim);
  m.w_e = make(word_dim);
  m.lambda1 = lambda1;
  m.lambda2 = lambda2;
  m.validate();
  return m;
}

Encoding encode_rows(const Mat& features, const Mat& projection, const char* what) {
  if (features.rows() < 1) throw ValidationError(std::string("no ") + what + " rows to encode");
  if (features.cols() != projection.rows())
    throw ValidationError(std::string(what) + " dimension " + std::to_string(features.cols()) +
                          " does not match projection input " +
                          std::to_string(projection.rows()));
  Encoding enc;
  enc.unit = features * projection;
  enc.norms.resize(enc.unit.rows());
  for (Eigen::Index i = 0; i < enc.unit.rows(); ++i) {
    const double n = enc.unit.row(i).norm();
    if (!(n > 0.0)) throw ValidationError(std::string(what) + " row " + std::to_string(i) +
                                          " has zero norm after projection");
    enc.norms(i) = n;
    enc.unit.row(i) /= n;
  }
  return enc;
}

Encoding encode_regions(const MatchingModel& model, const Mat& regions) {
  return encode_rows(regions, model.w_v, "region");
}

Encoding encode_words(const MatchingModel& model, const Mat& words) {
  return encode_rows(words, model.w_e, "word");
}

namespace {

void fill_similarity(const Mat& V, const Mat& E, SimilarityMatrix& s, Vec& col_norm) {
  s.raw.noalias() = V * E.transpose();
  s.normalized = s.raw.cwiseMax(0.0);
  col_norm = s.normalized.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < s.normalized.cols(); ++j)
    if (col_norm(j) > 0.0) s.normalized.col(j) /= col_norm(j);
}

void fill_attention(const SimilarityMatrix& s, double lambda1, Mat& xi) {
  xi = lambda1 * s.normalized;
  for (Eigen::Index i = 0; i < xi.rows(); ++i) {
    const double mx = xi.row(i).maxCoeff();
    xi.row(i) = (xi.row(i).array() - mx).exp();
    xi.row(i) /= xi.row(i).sum();
  }
}

}  // namespace

SimilarityMatrix similarity_matrix(const Mat& V, const Mat& E) {
  SimilarityMatrix s;
  Vec col_norm;
  fill_similarity(V, E, s, col_norm);
  return s;
}

Mat attention_weights(const SimilarityMatrix& s, double lambda1) {
  Mat xi;
  fill_attention(s, lambda1, xi);
  return xi;
}

Mat attend_words(const SimilarityMatrix& s, const Mat& E, double lambda1) {
  return attention_weights(s, lambda1) * E;
}

Vec region_relevance(const Mat& V, const Mat& attended) {
  if (V.rows() != attended.rows() || V.cols() != attended.cols())
    throw ValidationError("region/attended shapes differ");
  Vec r(V.rows());
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    const double na = attended.row(i).norm();
    const double nv = V.row(i).norm();
    if (!(na > 0.0)) throw ValidationError("attended vector " + std::to_string(i) + " is zero");
    if (!(nv > 0.0)) throw ValidationError("region vector " + std::to_string(i) + " is zero");
    r(i) = V.row(i).dot(attended.row(i)) / (na * nv);
  }
  return r;
}

double pooled_similarity(const Vec& relevance, double lambda2) {
  if (relevance.size() < 1) throw ValidationError("pooling needs at least one region");
  const double mx = relevance.maxCoeff();
  const double sum = (lambda2 * (relevance.array() - mx)).exp().sum();
  return mx + std::log(sum) / lambda2;
}

double score01(double s_lse, double lambda2, int n_regions) {
  const double lo = -1.0;
  const double hi = 1.0 + std::log(static_cast<double>(std::max(n_regions, 1))) / lambda2;
  const double t = (s_lse - lo) / (hi - lo);
  return std::clamp(t, 0.0, 1.0);
}

double pair_forward(const Mat& V, const Mat& E, double lambda1, double lambda2, PairTape* tape) {
  PairTape local;
  PairTape& t = tape ? *tape : local;
  fill_similarity(V, E, t.sim, t.col_norm);
  fill_attention(t.sim, lambda1, t.xi);
  t.attended.noalias() = t.xi * E;
  t.attended_norm = t.attended.rowwise().norm();
  t.relevance.resize(V.rows());
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    if (!(t.attended_norm(i) > 0.0)) throw ValidationError("attended vector " + std::to_string(i) + " is zero");
    t.relevance(i) = V.row(i).dot(t.attended.row(i)) / t.attended_norm(i);
  }
  t.score = pooled_similarity(t.relevance, lambda2);
  t.pool_weights = (lambda2 * (t.relevance.array() - t.score)).exp();
  return t.score;
}

void pair_backward(const Mat& V, const Mat& E, double lambda1, const PairTape& t, double g, Mat& gV,
                   Mat& gE) {
  const Eigen::Index n = V.rows();
  Mat g_att(n, V.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double gr = g * t.pool_weights(i);
    const double na = t.attended_norm(i);
    const RowVec a_hat = t.attended.row(i) / na;
    gV.row(i) += gr * a_hat;
    g_att.row(i) = gr * (V.row(i) - t.relevance(i) * a_hat) / na;
  }
  gE.noalias() += t.xi.transpose() * g_att;
  const Mat g_xi = g_att * E.transpose();

  Mat g_sbar(n, E.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dot = t.xi.row(i).dot(g_xi.row(i));
    g_sbar.row(i) = lambda1 * t.xi.row(i).array() * (g_xi.row(i).array() - dot);
  }
  Mat g_s = Mat::Zero(n, E.rows());
  for (Eigen::Index j = 0; j < E.rows(); ++j) {
    const double c = t.col_norm(j);
    if (!(c > 0.0)) continue;
    const double proj = t.sim.normalized.col(j).dot(g_sbar.col(j));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (t.sim.raw(i, j) > 0.0) g_s(i, j) = (g_sbar(i, j) - t.sim.normalized(i, j) * proj) / c;
    }
  }
  gV.noalias() += g_s * E;
  gE.noalias() += g_s.transpose() * V;
}

Mat unit_rows_backward(const Encoding& enc, const Mat& g_unit) {
  Mat g(g_unit.rows(), g_unit.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const double dot = g_unit.row(i).dot(enc.unit.row(i));
    g.row(i) = (g_unit.row(i) - dot * enc.unit.row(i)) / enc.norms(i);
  }
  return g;
}

double similarity(const MatchingModel& model, const Mat& regions, const Mat& words) {
  const auto V = encode_regions(model, regions);
  const auto E = encode_words(model, words);
  return pair_forward(V.unit, E.unit, model.lambda1, model.lambda2, nullptr);
}

double similarity01(const MatchingModel& model, const Mat& regions, const Mat& words) {
  return score01(similarity(model, regions, words), model.lambda2, static_cast<int>(regions.rows()));
}

}  // namespace qirl

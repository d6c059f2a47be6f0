#pragma once

#include <cstdint>

#include "qirl/linalg.hpp"

namespace qirl {

// Stacked cross attention scorer: regions attend to question words, region
// relevances are pooled with LogSumExp.
struct MatchingModel {
  Mat w_v;  // region_dim x hidden
  Mat w_e;  // word_dim x hidden
  double lambda1 = 4.0;
  double lambda2 = 5.0;

  int region_dim() const { return static_cast<int>(w_v.rows()); }
  int word_dim() const { return static_cast<int>(w_e.rows()); }
  int hidden_dim() const { return static_cast<int>(w_v.cols()); }

  void validate() const;

  static MatchingModel identity(int dim, double lambda1 = 4.0, double lambda2 = 5.0);
  // Identity-like (when dims agree) plus Gaussian perturbation of scale `noise`.
  static MatchingModel init(int region_dim, int word_dim, int hidden, double noise, std::uint64_t seed,
                            double lambda1 = 4.0, double lambda2 = 5.0);

  bool operator==(const MatchingModel&) const = default;
};

// Rows projected then scaled to unit length; `norms` keeps the pre-scaling
// lengths for the backward pass.
struct Encoding {
  Mat unit;
  Vec norms;
};

Encoding encode_rows(const Mat& features, const Mat& projection, const char* what);
Encoding encode_regions(const MatchingModel& model, const Mat& regions);
Encoding encode_words(const MatchingModel& model, const Mat& words);

struct SimilarityMatrix {
  Mat raw;         // s_ij, cosine between region i and word j
  Mat normalized;  // relu, then each word column l2-normalized over regions
};

SimilarityMatrix similarity_matrix(const Mat& V, const Mat& E);
// Row-wise softmax over words of lambda1 * normalized similarities.
Mat attention_weights(const SimilarityMatrix& s, double lambda1);
Mat attend_words(const SimilarityMatrix& s, const Mat& E, double lambda1);
Vec region_relevance(const Mat& V, const Mat& attended);
double pooled_similarity(const Vec& relevance, double lambda2);
// Affine map of [-1, 1 + ln(n)/lambda2] onto [0, 1], clamped.
double score01(double s_lse, double lambda2, int n_regions);

// Intermediates of one (image, question) evaluation.
struct PairTape {
  SimilarityMatrix sim;
  Vec col_norm;
  Mat xi;
  Mat attended;
  Vec attended_norm;
  Vec relevance;
  Vec pool_weights;
  double score = 0.0;
};

// S_LSE from unit-row encodings.
double pair_forward(const Mat& V, const Mat& E, double lambda1, double lambda2, PairTape* tape);
// Adds g * dS/dV and g * dS/dE into gV, gE (same shapes as V, E).
void pair_backward(const Mat& V, const Mat& E, double lambda1, const PairTape& tape, double g,
                   Mat& gV, Mat& gE);
// Gradient through the unit-length scaling: returns dL/dP for P = rows before scaling.
Mat unit_rows_backward(const Encoding& enc, const Mat& g_unit);

// Convenience: full pipeline from raw features.
double similarity(const MatchingModel& model, const Mat& regions, const Mat& words);
double similarity01(const MatchingModel& model, const Mat& regions, const Mat& words);

}  // namespace qirl

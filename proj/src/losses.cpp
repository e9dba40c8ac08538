#include "mega/losses.hpp"

#include "mega/autodiff.hpp"
#include "mega/error.hpp"

namespace mega {

namespace {

void check_square(const Tensor& m, const char* what) {
  if (m.rank() != 2 || m.rows() != m.cols())
    throw ShapeError(std::string(what) + ": needs a square matrix, got " + to_string(m.shape()));
}

void check_pairs(const FeaturePairBatch& pairs, const char* what) {
  const auto& z = pairs.original;
  const auto& za = pairs.augmented;
  if (z.rank() != 2 || z.shape() != za.shape())
    throw ShapeError(std::string(what) + ": feature matrices must share a rank-2 shape, got " +
                     to_string(z.shape()) + " and " + to_string(za.shape()));
}

void check_rows(const Tensor& z, const char* what, const char* side) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    bool zero = true;
    for (std::size_t c = 0; c < z.cols() && zero; ++c) zero = z.at(r, c) == 0.0;
    if (zero)
      throw NumericError(std::string(what) + ": " + side + " feature row " + std::to_string(r) +
                         " has zero norm");
  }
}

void check_cols(const Tensor& z, const char* what, const char* side) {
  for (std::size_t c = 0; c < z.cols(); ++c) {
    bool zero = true;
    for (std::size_t r = 0; r < z.rows() && zero; ++r) zero = z.at(r, c) == 0.0;
    if (zero)
      throw NumericError(std::string(what) + ": " + side + " feature dimension " +
                         std::to_string(c) + " has zero norm across the batch");
  }
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  return matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b)));
}

}  // namespace

Tensor trace_sum(const Tensor& m) {
  check_square(m, "trace_sum");
  return sum(mul(m, Tensor::identity(m.rows())));
}

Tensor offdiag_sum(const Tensor& m) {
  check_square(m, "offdiag_sum");
  return sub(sum(m), trace_sum(m));
}

Tensor nt_xent(const FeaturePairBatch& pairs, double tau) {
  if (!(tau > 0.0)) throw ConfigError("nt_xent: temperature must be positive");
  check_pairs(pairs, "nt_xent");
  const std::size_t n = pairs.original.rows();
  const Tensor sim = instance_corr(pairs);

  // Cosine similarities are at most 1, so shifting by 1/tau keeps exp <= 1.
  const double shift = 1.0 / tau;
  const Tensor logits = scale(sim, 1.0 / tau);
  const Tensor e = exp(sub(logits, Tensor::scalar(shift)));
  const Tensor eye = Tensor::identity(n);

  const Tensor row_total = sum_cols(e);             // sum_j exp(<z_i, z'_j>)
  const Tensor col_total = transpose(sum_rows(e));  // sum_j exp(<z_j, z'_i>)
  const Tensor positive = sum_cols(mul(e, eye));
  const Tensor denom = sub(add(row_total, col_total), positive);
  const Tensor positive_logit = sum_cols(mul(logits, eye));
  const Tensor per_anchor = sub(add(log(denom), Tensor::scalar(shift)), positive_logit);
  return mean(per_anchor);
}

Tensor instance_corr(const FeaturePairBatch& pairs) {
  check_pairs(pairs, "instance_corr");
  check_rows(pairs.original, "instance_corr", "original");
  check_rows(pairs.augmented, "instance_corr", "augmented");
  return cosine_matrix(pairs.original, pairs.augmented);
}

Tensor feature_corr(const FeaturePairBatch& pairs) {
  check_pairs(pairs, "feature_corr");
  check_cols(pairs.original, "feature_corr", "original");
  check_cols(pairs.augmented, "feature_corr", "augmented");
  return cosine_matrix(transpose(pairs.original), transpose(pairs.augmented));
}

MegaLossTerms mega_loss_terms(const Tensor& c, const Tensor& d, double lambda) {
  check_square(c, "mega_loss");
  check_square(d, "mega_loss");
  if (!(lambda >= 0.0)) throw ConfigError("mega_loss: lambda must be nonnegative");
  const Tensor tr_c = trace_sum(c);
  const Tensor de_c = offdiag_sum(c);
  const Tensor feature =
      add(trace_sum(square(sub(Tensor::identity(d.rows()), d))), offdiag_sum(square(d)));
  MegaLossTerms out;
  out.total = add(sub(tr_c, de_c), scale(feature, lambda));
  out.trace_c = tr_c.item();
  out.offdiag_c = de_c.item();
  out.feature = feature.item();
  return out;
}

Tensor mega_loss(const Tensor& c, const Tensor& d, double lambda) {
  return mega_loss_terms(c, d, lambda).total;
}

}  // namespace mega

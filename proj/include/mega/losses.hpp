#pragma once

#include "mega/tensor.hpp"

namespace mega {

// Row-aligned features of original (z) and augmented (z') graphs.
struct FeaturePairBatch {
  Tensor original;
  Tensor augmented;
};

Tensor trace_sum(const Tensor& m);
Tensor offdiag_sum(const Tensor& m);

// Normalized-temperature cross entropy with cosine similarity. For anchor i
// the positive is (z_i, z'_i); the negatives are (z_i, z'_j) and (z'_i, z_j)
// for every j != i. Returns the mean over anchors.
Tensor nt_xent(const FeaturePairBatch& pairs, double tau);

// C_ij = cos(z_i, z'_j), an N x N matrix.
Tensor instance_corr(const FeaturePairBatch& pairs);

// D_pq = sum_i z_ip z'_iq / (|z_:p| |z'_:q|), uncentered, D_z x D_z.
Tensor feature_corr(const FeaturePairBatch& pairs);

struct MegaLossTerms {
  Tensor total;
  double trace_c = 0.0;
  double offdiag_c = 0.0;
  double feature = 0.0;  // unweighted feature term
};

// [tr(C) - de(C)] + lambda [tr((I - D)^2) + de(D^2)], squares elementwise.
MegaLossTerms mega_loss_terms(const Tensor& c, const Tensor& d, double lambda);
Tensor mega_loss(const Tensor& c, const Tensor& d, double lambda);

}  // namespace mega

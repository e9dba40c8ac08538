#pragma once

#include "mega/gnn.hpp"

namespace mega {

// Learnable augmentation: every non-self directed edge (u, v) is reweighted by
// sigmoid(MLP([x_u ; x_v])) from the raw node features; each direction is
// scored on its own. Self-loop weights stay exactly 1 and off the tape.
EdgeWeightVector lga_edge_weights(const GraphBatch& batch, const AugmenterParams& sigma);

// A batch paired with the edge weights it should be encoded with.
struct AugmentedView {
  const GraphBatch* batch;
  EdgeWeightVector weights;
};

AugmentedView augment(const GraphBatch& batch, EdgeWeightVector weights);
AugmentedView original_view(const GraphBatch& batch);

// Same weights, cut from the tape.
AugmentedView detach_view(const AugmentedView& view);

Tensor encode(const AugmentedView& view, const EncoderParams& phi);

}  // namespace mega

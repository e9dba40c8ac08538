#include "mega/augmenter.hpp"

#include <numeric>

#include "mega/autodiff.hpp"
#include "mega/error.hpp"

namespace mega {

EdgeWeightVector lga_edge_weights(const GraphBatch& batch, const AugmenterParams& sigma) {
  const std::size_t f = batch.features.cols();
  const Tensor& w1 = sigma.mlp.first.weight;
  if (w1.rows() != 2 * f)
    throw ShapeError("augmenter expects 2 x " + std::to_string(w1.rows() / 2) +
                     " input features, batch has width " + std::to_string(f));

  const Tensor self_loops = Tensor::ones({batch.n_nodes, 1});
  if (batch.n_message_edges == 0) return {self_loops, false};

  // [x_u ; x_v] W1 == x_u W1[:F] + x_v W1[F:], computed per node then gathered.
  std::vector<std::size_t> top(f);
  std::vector<std::size_t> bottom(f);
  std::iota(top.begin(), top.end(), 0);
  std::iota(bottom.begin(), bottom.end(), f);
  const Tensor from_src = matmul(batch.features, gather_rows(w1, std::move(top)));
  const Tensor from_dst = matmul(batch.features, gather_rows(w1, std::move(bottom)));
  const Tensor pre = add(add(gather_rows(from_src, batch.message_src()),
                             gather_rows(from_dst, batch.message_dst())),
                         sigma.mlp.first.bias);
  const Tensor logits = linear_forward(relu(pre), sigma.mlp.second);
  const Tensor parts[] = {sigmoid(logits), self_loops};
  return {concat_rows(parts), false};
}

AugmentedView augment(const GraphBatch& batch, EdgeWeightVector weights) {
  return {&batch, std::move(weights)};
}

AugmentedView original_view(const GraphBatch& batch) { return {&batch, unit_weights(batch)}; }

AugmentedView detach_view(const AugmentedView& view) {
  return {view.batch, {detach(view.weights.values), view.weights.unit}};
}

Tensor encode(const AugmentedView& view, const EncoderParams& phi) {
  return encode(*view.batch, view.weights, phi);
}

}  // namespace mega

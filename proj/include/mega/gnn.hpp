#pragma once

#include <cstdint>
#include <vector>

#include "mega/graph_data.hpp"
#include "mega/tensor.hpp"

namespace mega {

// x W + b with W stored [in, out] and b [1, out].
struct Linear {
  Tensor weight;
  Tensor bias;
};

// Linear -> relu -> Linear.
struct Mlp2 {
  Linear first;
  Linear second;

  std::size_t in_dim() const { return first.weight.rows(); }
  std::size_t out_dim() const { return second.weight.cols(); }
};

Tensor linear_forward(const Tensor& x, const Linear& layer);
Tensor mlp_forward(const Tensor& x, const Mlp2& mlp);

// GIN layer with a fixed eps of 0.
struct GinLayerParams {
  Mlp2 mlp;
  static constexpr double eps = 0.0;
};

struct EncoderParams {
  std::vector<GinLayerParams> layers;

  std::size_t in_dim() const { return layers.front().mlp.in_dim(); }
  std::size_t out_dim() const { return layers.back().mlp.out_dim(); }
};

struct ProjectionParams {
  Mlp2 mlp;
};

struct AugmenterParams {
  Mlp2 mlp;  // [x_u ; x_v] (2F) -> hidden -> 1
};

// Per-edge weights aligned with GraphBatch::edge_src/edge_dst, shape [E, 1].
// The trailing self-loop entries are exactly 1 and are never on a tape.
// `unit` marks the all-ones vector of the original view.
struct EdgeWeightVector {
  Tensor values;
  bool unit = false;
};

EdgeWeightVector unit_weights(const GraphBatch& batch);

// For each node: MLP((1 + eps) H_v + sum over non-self edges u->v of w_uv H_u).
Tensor gin_layer_forward(const GraphBatch& batch, const Tensor& h, const EdgeWeightVector& weights,
                         const GinLayerParams& layer);

Tensor encode(const GraphBatch& batch, const EdgeWeightVector& weights, const EncoderParams& phi);

// Sum pooling per graph: [n_nodes, D] -> [n_graphs, D].
Tensor readout(const GraphBatch& batch, const Tensor& node_embeddings);

Tensor project(const Tensor& h, const ProjectionParams& psi);

struct ModelDims {
  std::size_t in_features = 0;
  std::size_t layers = 3;
  std::size_t hidden = 32;
  std::size_t embed = 32;
  std::size_t proj = 32;
  std::size_t aug_hidden = 16;
};

struct ModelParams {
  EncoderParams encoder;
  ProjectionParams projection;
  AugmenterParams augmenter;
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

// Flat views in a fixed order: layer by layer, weight then bias.
std::vector<Tensor> flatten(const EncoderParams& phi);
std::vector<Tensor> flatten(const ProjectionParams& psi);
std::vector<Tensor> flatten(const AugmenterParams& sigma);
std::vector<Tensor> flatten(const ModelParams& params);

// Inverse of flatten: rebuild with the same structure as `like`.
EncoderParams unflatten(const EncoderParams& like, std::span<const Tensor> flat);
ProjectionParams unflatten(const ProjectionParams& like, std::span<const Tensor> flat);
AugmenterParams unflatten(const AugmenterParams& like, std::span<const Tensor> flat);
ModelParams unflatten(const ModelParams& like, std::span<const Tensor> flat);

std::size_t tensor_count(const EncoderParams& phi);

// Shapes that init_params(dims, ...) produces, in flatten order.
std::vector<Shape> param_shapes(const ModelDims& dims);

}  // namespace mega

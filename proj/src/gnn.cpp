#include "mega/gnn.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "mega/autodiff.hpp"
#include "mega/error.hpp"

namespace mega {

namespace {

// Weights of the non-self edges as an [E_msg, 1] column, or nothing for the
// unit view.
std::optional<Tensor> message_weights(const GraphBatch& batch, const EdgeWeightVector& weights) {
  if (weights.values.rank() != 2 || weights.values.rows() != batch.n_edges() ||
      weights.values.cols() != 1)
    throw ShapeError("edge weights " + to_string(weights.values.shape()) + " do not align with " +
                     std::to_string(batch.n_edges()) + " batch edges");
  if (weights.unit || batch.n_message_edges == 0) return std::nullopt;
  if (batch.n_message_edges == batch.n_edges()) return weights.values;
  std::vector<std::size_t> idx(batch.n_message_edges);
  std::iota(idx.begin(), idx.end(), 0);
  return gather_rows(weights.values, std::move(idx));
}

Tensor gin_layer(const GraphBatch& batch, const Tensor& h, const std::optional<Tensor>& w,
                 const GinLayerParams& layer) {
  if (h.rank() != 2 || h.rows() != batch.n_nodes)
    throw ShapeError("node matrix " + to_string(h.shape()) + " does not match " +
                     std::to_string(batch.n_nodes) + " batch nodes");
  Tensor combined = GinLayerParams::eps == 0.0 ? h : scale(h, 1.0 + GinLayerParams::eps);
  if (batch.n_message_edges > 0) {
    Tensor messages = gather_rows(h, batch.message_src());
    if (w) messages = mul(messages, *w);
    combined = add(combined, scatter_add_rows(messages, batch.message_dst(), batch.n_nodes));
  }
  return mlp_forward(combined, layer.mlp);
}

struct Uniform {
  std::mt19937_64 engine;

  // Uniform in [-bound, bound] from the top 53 bits of the engine.
  double operator()(double bound) {
    const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    return (2.0 * u - 1.0) * bound;
  }
};

Linear init_linear(std::size_t in, std::size_t out, Uniform& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& x : w) x = rng(bound);
  return {Tensor({in, out}, std::move(w)), Tensor::zeros({1, out})};
}

Mlp2 init_mlp(std::size_t in, std::size_t hidden, std::size_t out, Uniform& rng) {
  Mlp2 m;
  m.first = init_linear(in, hidden, rng);
  m.second = init_linear(hidden, out, rng);
  return m;
}

void push_mlp(std::vector<Tensor>& out, const Mlp2& m) {
  out.push_back(m.first.weight);
  out.push_back(m.first.bias);
  out.push_back(m.second.weight);
  out.push_back(m.second.bias);
}

Mlp2 take_mlp(std::span<const Tensor> flat, std::size_t& pos) {
  if (pos + 4 > flat.size()) throw ShapeError("too few tensors to rebuild parameters");
  Mlp2 m;
  m.first = {flat[pos], flat[pos + 1]};
  m.second = {flat[pos + 2], flat[pos + 3]};
  pos += 4;
  return m;
}

void check_like(const Mlp2& like, const Mlp2& got) {
  if (like.first.weight.shape() != got.first.weight.shape() ||
      like.first.bias.shape() != got.first.bias.shape() ||
      like.second.weight.shape() != got.second.weight.shape() ||
      like.second.bias.shape() != got.second.bias.shape())
    throw ShapeError("parameter shapes differ from the model layout");
}

void mlp_shapes(std::vector<Shape>& out, std::size_t in, std::size_t hidden, std::size_t o) {
  out.push_back({in, hidden});
  out.push_back({1, hidden});
  out.push_back({hidden, o});
  out.push_back({1, o});
}

}  // namespace

Tensor linear_forward(const Tensor& x, const Linear& layer) {
  if (x.cols() != layer.weight.rows())
    throw ShapeError("linear layer expects width " + std::to_string(layer.weight.rows()) +
                     ", got input " + to_string(x.shape()));
  return add(matmul(x, layer.weight), layer.bias);
}

Tensor mlp_forward(const Tensor& x, const Mlp2& mlp) {
  return linear_forward(relu(linear_forward(x, mlp.first)), mlp.second);
}

EdgeWeightVector unit_weights(const GraphBatch& batch) {
  return {Tensor::ones({batch.n_edges(), 1}), true};
}

Tensor gin_layer_forward(const GraphBatch& batch, const Tensor& h, const EdgeWeightVector& weights,
                         const GinLayerParams& layer) {
  return gin_layer(batch, h, message_weights(batch, weights), layer);
}

Tensor encode(const GraphBatch& batch, const EdgeWeightVector& weights, const EncoderParams& phi) {
  if (phi.layers.empty()) throw ShapeError("encoder has no layers");
  const auto w = message_weights(batch, weights);
  Tensor h = batch.features;
  for (const auto& layer : phi.layers) h = gin_layer(batch, h, w, layer);
  return h;
}

Tensor readout(const GraphBatch& batch, const Tensor& node_embeddings) {
  if (node_embeddings.rank() != 2 || node_embeddings.rows() != batch.n_nodes)
    throw ShapeError("readout expects " + std::to_string(batch.n_nodes) + " node rows, got " +
                     to_string(node_embeddings.shape()));
  return scatter_add_rows(node_embeddings, batch.graph_of_node, batch.n_graphs);
}

Tensor project(const Tensor& h, const ProjectionParams& psi) { return mlp_forward(h, psi.mlp); }

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  if (dims.in_features == 0 || dims.layers == 0)
    throw ShapeError("model needs a positive input width and at least one layer");
  Uniform rng{std::mt19937_64(seed)};
  ModelParams p;
  std::size_t in = dims.in_features;
  for (std::size_t k = 0; k < dims.layers; ++k) {
    const std::size_t out = k + 1 == dims.layers ? dims.embed : dims.hidden;
    p.encoder.layers.push_back({init_mlp(in, dims.hidden, out, rng)});
    in = out;
  }
  p.projection.mlp = init_mlp(dims.embed, dims.embed, dims.proj, rng);
  p.augmenter.mlp = init_mlp(2 * dims.in_features, dims.aug_hidden, 1, rng);
  return p;
}

std::vector<Tensor> flatten(const EncoderParams& phi) {
  std::vector<Tensor> out;
  for (const auto& l : phi.layers) push_mlp(out, l.mlp);
  return out;
}

std::vector<Tensor> flatten(const ProjectionParams& psi) {
  std::vector<Tensor> out;
  push_mlp(out, psi.mlp);
  return out;
}

std::vector<Tensor> flatten(const AugmenterParams& sigma) {
  std::vector<Tensor> out;
  push_mlp(out, sigma.mlp);
  return out;
}

std::vector<Tensor> flatten(const ModelParams& params) {
  auto out = flatten(params.encoder);
  for (auto& t : flatten(params.projection)) out.push_back(std::move(t));
  for (auto& t : flatten(params.augmenter)) out.push_back(std::move(t));
  return out;
}

std::size_t tensor_count(const EncoderParams& phi) { return 4 * phi.layers.size(); }

EncoderParams unflatten(const EncoderParams& like, std::span<const Tensor> flat) {
  if (flat.size() != tensor_count(like)) throw ShapeError("encoder tensor count mismatch");
  EncoderParams out;
  std::size_t pos = 0;
  for (const auto& l : like.layers) {
    out.layers.push_back({take_mlp(flat, pos)});
    check_like(l.mlp, out.layers.back().mlp);
  }
  return out;
}

ProjectionParams unflatten(const ProjectionParams& like, std::span<const Tensor> flat) {
  if (flat.size() != 4) throw ShapeError("projection tensor count mismatch");
  std::size_t pos = 0;
  ProjectionParams out{take_mlp(flat, pos)};
  check_like(like.mlp, out.mlp);
  return out;
}

AugmenterParams unflatten(const AugmenterParams& like, std::span<const Tensor> flat) {
  if (flat.size() != 4) throw ShapeError("augmenter tensor count mismatch");
  std::size_t pos = 0;
  AugmenterParams out{take_mlp(flat, pos)};
  check_like(like.mlp, out.mlp);
  return out;
}

ModelParams unflatten(const ModelParams& like, std::span<const Tensor> flat) {
  const std::size_t ne = tensor_count(like.encoder);
  if (flat.size() != ne + 8) throw ShapeError("model tensor count mismatch");
  ModelParams out;
  out.encoder = unflatten(like.encoder, flat.subspan(0, ne));
  out.projection = unflatten(like.projection, flat.subspan(ne, 4));
  out.augmenter = unflatten(like.augmenter, flat.subspan(ne + 4, 4));
  return out;
}

std::vector<Shape> param_shapes(const ModelDims& dims) {
  std::vector<Shape> out;
  std::size_t in = dims.in_features;
  for (std::size_t k = 0; k < dims.layers; ++k) {
    const std::size_t o = k + 1 == dims.layers ? dims.embed : dims.hidden;
    mlp_shapes(out, in, dims.hidden, o);
    in = o;
  }
  mlp_shapes(out, dims.embed, dims.embed, dims.proj);
  mlp_shapes(out, 2 * dims.in_features, dims.aug_hidden, 1);
  return out;
}

}  // namespace mega

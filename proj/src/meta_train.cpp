#include "mega/meta_train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "mega/autodiff.hpp"
#include "mega/error.hpp"

namespace mega {

namespace {

std::vector<Tensor> as_leaves(Tape& tape, const std::vector<Tensor>& values) {
  std::vector<Tensor> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(tape.leaf(v));
  return out;
}

std::vector<Tensor> concat(std::vector<Tensor> a, const std::vector<Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Tensor features_of(const GraphBatch& batch, const EdgeWeightVector& weights,
                   const EncoderParams& phi, const ProjectionParams& psi) {
  return project(readout(batch, encode(batch, weights, phi)), psi);
}

bool all_finite(const std::vector<Tensor>& ts) {
  for (const auto& t : ts)
    for (double x : t.values())
      if (!std::isfinite(x)) return false;
  return true;
}

double norm(const std::vector<Tensor>& ts) {
  double s = 0.0;
  for (const auto& t : ts)
    for (double x : t.values()) s += x * x;
  return std::sqrt(s);
}

// Shared by meta_step, compute_meta_gradient and meta_objective: builds the
// virtual step and the MEGA loss on the active tape.
struct MetaForward {
  std::vector<Tensor> sigma_leaves;
  MegaLossTerms terms;
  double contrast_loss = 0.0;
};

MetaForward meta_forward(Tape& tape, const ModelParams& params, const GraphBatch& batch,
                         const Hyperparams& hp, const AugmenterParams* view_sigma = nullptr) {
  MetaForward out;
  const auto phi_leaves = as_leaves(tape, flatten(params.encoder));
  const auto psi_leaves = as_leaves(tape, flatten(params.projection));
  out.sigma_leaves = as_leaves(tape, flatten(params.augmenter));
  const EncoderParams phi = unflatten(params.encoder, phi_leaves);
  const ProjectionParams psi = unflatten(params.projection, psi_leaves);
  const AugmenterParams sigma = unflatten(params.augmenter, out.sigma_leaves);

  const EdgeWeightVector unit = unit_weights(batch);
  const EdgeWeightVector augmented = lga_edge_weights(batch, sigma);

  // Inner objective, differentiated with its graph kept so the virtual
  // parameters stay functions of sigma.
  const Tensor contrast = nt_xent({features_of(batch, unit, phi, psi),
                                   features_of(batch, augmented, phi, psi)},
                                  hp.tau);
  out.contrast_loss = contrast.item();
  const auto model_leaves = concat(phi_leaves, psi_leaves);
  const GradientMap grads = backward(contrast, model_leaves, /*create_graph=*/true);
  const auto virtual_params = sgd_virtual_step(model_leaves, grads, hp.inner_lr);

  const std::span<const Tensor> vflat(virtual_params);
  const EncoderParams phi_v = unflatten(params.encoder, vflat.subspan(0, phi_leaves.size()));
  const ProjectionParams psi_v = unflatten(params.projection, vflat.subspan(phi_leaves.size()));

  const EdgeWeightVector stopped{
      view_sigma ? lga_edge_weights(batch, *view_sigma).values.detached() : detach(augmented.values), false};
  const FeaturePairBatch meta_pairs{features_of(batch, unit, phi_v, psi_v),
                                    features_of(batch, stopped, phi_v, psi_v)};
  out.terms = mega_loss_terms(instance_corr(meta_pairs), feature_corr(meta_pairs), hp.lambda);
  return out;
}

}  // namespace

std::string_view mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Mega: return "mega";
    case TrainMode::MegaIL: return "mega-il";
    case TrainMode::Ccl: return "ccl";
    case TrainMode::GinRiu: return "gin-riu";
  }
  return "mega";
}

TrainMode parse_mode(std::string_view name) {
  if (name == "mega") return TrainMode::Mega;
  if (name == "mega-il") return TrainMode::MegaIL;
  if (name == "ccl") return TrainMode::Ccl;
  if (name == "gin-riu") return TrainMode::GinRiu;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

void validate(const Hyperparams& hp) {
  if (!(hp.tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(hp.lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(hp.inner_lr >= 0.0)) throw ConfigError("inner_lr must be nonnegative");
  if (!(hp.aug_lr > 0.0)) throw ConfigError("aug_lr must be positive");
  if (!(hp.enc_lr > 0.0)) throw ConfigError("enc_lr must be positive");
  if (hp.batch_size < 2) throw ConfigError("batch_size must be at least 2");
}

TrainState make_state(ModelParams params) {
  TrainState s;
  s.params = std::move(params);
  return s;
}

IterationRecord contrast_step(TrainState& state, const GraphBatch& batch, const Hyperparams& hp,
                              bool unit_augment) {
  Tape tape;
  TapeScope scope(tape);
  const auto phi_leaves = as_leaves(tape, flatten(state.params.encoder));
  const auto psi_leaves = as_leaves(tape, flatten(state.params.projection));
  const EncoderParams phi = unflatten(state.params.encoder, phi_leaves);
  const ProjectionParams psi = unflatten(state.params.projection, psi_leaves);

  const EdgeWeightVector unit = unit_weights(batch);
  EdgeWeightVector augmented = unit;
  if (!unit_augment) {
    // sigma enters as constants: nothing here reaches the augmenter.
    augmented = lga_edge_weights(batch, state.params.augmenter);
    augmented.values = detach(augmented.values);
  }
  const Tensor loss = nt_xent({features_of(batch, unit, phi, psi),
                               features_of(batch, augmented, phi, psi)},
                              hp.tau);
  IterationRecord rec;
  rec.iteration = state.iteration;
  rec.kind = StepKind::Contrast;
  rec.contrast_loss = loss.item();
  rec.lambda = hp.lambda;
  if (!std::isfinite(rec.contrast_loss))
    throw NumericError("contrastive loss is not finite at iteration " +
                       std::to_string(state.iteration));

  const auto leaves = concat(phi_leaves, psi_leaves);
  const GradientMap grads = backward(loss, leaves);
  const auto updated = adam_step(leaves, grads, state.model_opt, hp.enc_lr);
  const std::span<const Tensor> flat(updated);
  state.params.encoder = unflatten(state.params.encoder, flat.subspan(0, phi_leaves.size()));
  state.params.projection = unflatten(state.params.projection, flat.subspan(phi_leaves.size()));
  ++state.iteration;
  state.log.iterations.push_back(rec);
  return rec;
}

MetaGradient compute_meta_gradient(const ModelParams& params, const GraphBatch& batch,
                                   const Hyperparams& hp) {
  Tape tape;
  TapeScope scope(tape);
  MetaForward fwd = meta_forward(tape, params, batch, hp);
  const GradientMap grads = backward(fwd.terms.total, fwd.sigma_leaves);
  MetaGradient out;
  for (const auto& leaf : fwd.sigma_leaves) out.sigma_grad.push_back(grads.at(leaf));
  out.terms = fwd.terms;
  out.terms.total = out.terms.total.detached();
  out.contrast_loss = fwd.contrast_loss;
  return out;
}

MegaLossTerms meta_objective(const ModelParams& params, const GraphBatch& batch,
                             const Hyperparams& hp, const AugmenterParams& view_sigma) {
  Tape tape;
  TapeScope scope(tape);
  MegaLossTerms terms = meta_forward(tape, params, batch, hp, &view_sigma).terms;
  terms.total = terms.total.detached();
  return terms;
}

IterationRecord meta_step(TrainState& state, const GraphBatch& batch, const Hyperparams& hp) {
  Tape tape;
  TapeScope scope(tape);
  MetaForward fwd = meta_forward(tape, state.params, batch, hp);

  IterationRecord rec;
  rec.iteration = state.iteration;
  rec.kind = StepKind::Meta;
  rec.contrast_loss = fwd.contrast_loss;
  rec.mega_loss = fwd.terms.total.item();
  rec.trace_c = fwd.terms.trace_c;
  rec.offdiag_c = fwd.terms.offdiag_c;
  rec.feature_term = fwd.terms.feature;
  rec.lambda = hp.lambda;
  if (!std::isfinite(*rec.mega_loss))
    throw NumericError("MEGA loss is not finite at iteration " + std::to_string(state.iteration));

  const GradientMap grads = backward(fwd.terms.total, fwd.sigma_leaves);
  std::vector<Tensor> g;
  for (const auto& leaf : fwd.sigma_leaves) g.push_back(grads.at(leaf));
  if (!all_finite(g))
    throw NumericError("augmenter meta-gradient is not finite at iteration " +
                       std::to_string(state.iteration) + " (contrast loss " +
                       std::to_string(rec.contrast_loss) + ", MEGA loss " +
                       std::to_string(*rec.mega_loss) + ", parameter norm " +
                       std::to_string(norm(flatten(state.params.augmenter))) + ")");

  const auto updated = adam_step(fwd.sigma_leaves, grads, state.aug_opt, hp.aug_lr);
  state.params.augmenter = unflatten(state.params.augmenter, updated);
  ++state.iteration;
  state.log.iterations.push_back(rec);
  return rec;
}

TrainResult train(const Dataset& dataset, const Hyperparams& hp_in, TrainMode mode,
                  const ModelDims& dims, const IterationObserver& observer) {
  validate(hp_in);
  if (dataset.records.empty()) throw DataError("cannot train on an empty dataset");
  Hyperparams hp = hp_in;
  if (mode == TrainMode::MegaIL) hp.lambda = 0.0;

  TrainState state = make_state(init_params(dims, hp.seed));
  if (mode == TrainMode::GinRiu) return {state.params, state.log};

  std::mt19937_64 rng(hp.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.records.size());
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);

    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      if (end - start < 2) continue;
      const GraphBatch batch =
          batch_graphs(dataset, std::span<const std::size_t>(order).subspan(start, end - start));
      IterationRecord rec;
      if (mode == TrainMode::Ccl)
        rec = contrast_step(state, batch, hp, /*unit_augment=*/true);
      else if (state.iteration % 2 == 0)
        rec = contrast_step(state, batch, hp);
      else
        rec = meta_step(state, batch, hp);
      rec.epoch = epoch;
      state.log.iterations.back().epoch = epoch;
      if (observer) observer(state, rec);
    }
  }
  return {state.params, state.log};
}

}  // namespace mega

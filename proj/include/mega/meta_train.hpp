#pragma once

// Alternating bilevel training. Even iterations update the encoder and
// projection head on the contrastive loss with the augmenter frozen; odd
// iterations update only the augmenter, by differentiating the MEGA loss of a
// virtually updated encoder back through that virtual gradient step.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mega/augmenter.hpp"
#include "mega/gnn.hpp"
#include "mega/graph_data.hpp"
#include "mega/losses.hpp"
#include "mega/optim.hpp"

namespace mega {

enum class TrainMode { Mega, MegaIL, Ccl, GinRiu };

std::string_view mode_name(TrainMode mode);
TrainMode parse_mode(std::string_view name);  // throws ConfigError

struct Hyperparams {
  double tau = 0.5;
  double lambda = 0.1;
  double inner_lr = 1e-3;  // virtual step
  double aug_lr = 1e-4;    // augmenter Adam
  double enc_lr = 1e-3;    // encoder + projection Adam
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

void validate(const Hyperparams& hp);

enum class StepKind { Contrast, Meta };

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  StepKind kind = StepKind::Contrast;
  double contrast_loss = 0.0;
  // Meta steps only.
  std::optional<double> mega_loss;
  std::optional<double> trace_c;
  std::optional<double> offdiag_c;
  std::optional<double> feature_term;
  double lambda = 0.0;
};

struct MetricsLog {
  std::vector<IterationRecord> iterations;
};

struct TrainState {
  ModelParams params;
  AdamState model_opt;  // encoder + projection head
  AdamState aug_opt;    // augmenter
  std::size_t iteration = 0;
  MetricsLog log;
};

TrainState make_state(ModelParams params);

// Encoder and projection update on the contrastive loss. The augmenter's
// weights enter as constants; with `unit_augment` both views are the original
// graph (the plain contrastive baseline).
IterationRecord contrast_step(TrainState& state, const GraphBatch& batch, const Hyperparams& hp,
                              bool unit_augment = false);

// Augmenter update through the virtual encoder step.
IterationRecord meta_step(TrainState& state, const GraphBatch& batch, const Hyperparams& hp);

struct MetaGradient {
  std::vector<Tensor> sigma_grad;  // flatten(AugmenterParams) order
  MegaLossTerms terms;
  double contrast_loss = 0.0;
};

// The gradient a meta step would apply, without applying it.
MetaGradient compute_meta_gradient(const ModelParams& params, const GraphBatch& batch,
                                   const Hyperparams& hp);

// Value of the MEGA loss after the virtual step, as a function of the
// augmenter only. The stop-gradient augmented view is built from `view_sigma`
// so finite differences can hold it fixed. Used by finite-difference checks.
MegaLossTerms meta_objective(const ModelParams& params, const GraphBatch& batch,
                             const Hyperparams& hp, const AugmenterParams& view_sigma);

struct TrainResult {
  ModelParams params;
  MetricsLog log;
};

using IterationObserver = std::function<void(const TrainState&, const IterationRecord&)>;

// Full run: `epochs` passes over shuffled batches of the whole dataset. Partial
// batches with fewer than two graphs are dropped.
TrainResult train(const Dataset& dataset, const Hyperparams& hp, TrainMode mode,
                  const ModelDims& dims, const IterationObserver& observer = {});

}  // namespace mega

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mega/gnn.hpp"
#include "mega/graph_data.hpp"
#include "mega/meta_train.hpp"

namespace mega {

struct EmbeddingTable {
  Tensor rows;  // one row per graph
  std::vector<std::size_t> labels;
  std::size_t n_classes = 0;

  std::size_t size() const { return labels.size(); }
};

// Graph embeddings from the encoder alone: unit edge weights, sum readout, no
// projection head.
EmbeddingTable embed_dataset(const EncoderParams& phi, const Dataset& dataset,
                             std::size_t batch_size = 64);

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 / std; 1 for constant columns

  std::vector<double> apply(std::span<const double> row) const;
};

Standardizer fit_standardizer(const EmbeddingTable& table, std::span<const std::size_t> rows);

struct ProbeSettings {
  double lr = 0.1;
  std::size_t steps = 500;
  double l2 = 1e-3;  // penalty 0.5 * l2 * |W|^2, bias unpenalized
};

struct ProbeOutcome {
  double test_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  std::size_t best_step = 0;
};

// Softmax regression on standardized embeddings, full-batch gradient descent.
// Reports test accuracy at the step with the best validation accuracy
// (earliest on ties).
ProbeOutcome linear_probe_detailed(const EmbeddingTable& table, const Split& split,
                                   std::uint64_t seed, const ProbeSettings& settings = {});
double linear_probe(const EmbeddingTable& table, const Split& split, std::uint64_t seed,
                    const ProbeSettings& settings = {});

struct ProbeResult {
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;  // population
};

ProbeResult aggregate(std::vector<double> accuracies);

struct ProtocolOptions {
  TrainMode mode = TrainMode::Mega;
  Hyperparams hp;
  ModelDims dims;  // in_features is filled from the dataset
  std::size_t n_runs = 10;
  std::array<double, 3> fractions = {0.8, 0.1, 0.1};
  // Called once per finished run with its index and accuracy.
  std::function<void(std::size_t, double)> on_run;
};

// Run r uses seed hp.seed + r for its split, training and probe. Datasets
// without built features get the default scheme from each run's train split.
ProbeResult run_protocol(const Dataset& dataset, const ProtocolOptions& options);

// Probe protocol for a fixed encoder: n_runs seeded splits of one embedding.
ProbeResult probe_protocol(const EncoderParams& phi, const Dataset& dataset, std::size_t n_runs,
                           std::uint64_t base_seed,
                           std::array<double, 3> fractions = {0.8, 0.1, 0.1});

// 256-entry RGB ramp used by the heatmap.
const std::array<std::array<std::uint8_t, 3>, 256>& color_ramp();

// Binary PPM: one row per graph sorted by label, one column per dimension,
// values min-max normalized over the whole table.
std::vector<std::uint8_t> render_feature_heatmap(const EmbeddingTable& table);
void export_feature_heatmap(const EmbeddingTable& table, const std::filesystem::path& path);

}  // namespace mega

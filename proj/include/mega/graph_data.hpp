#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mega/tensor.hpp"

namespace mega {

// Undirected simple graph stored as directed pairs in both directions.
// Self-loops are implicit (one per node) and never stored.
struct GraphTopology {
  std::size_t n_nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // sorted, unique

  // Adds every missing reverse pair, drops self-pairs and duplicates, sorts.
  void close_undirected();
  bool is_closed() const;
  std::vector<std::size_t> degrees() const;
};

struct GraphRecord {
  GraphTopology topology;
  std::vector<long> node_labels;          // empty when the dataset has none
  std::optional<Tensor> node_attributes;  // n_nodes x A, when present
  std::optional<Tensor> features;         // n_nodes x F once built
  std::size_t label = 0;
};

struct FeatureScheme {
  enum class Kind { None, NodeLabelOneHot, DegreeOneHot };
  Kind kind = Kind::None;
  std::size_t cap = 0;                  // degree-onehot only
  std::vector<long> node_label_values;  // node-label-onehot only, sorted

  std::size_t width() const;
  std::string describe() const;
};

struct Dataset {
  std::string name;
  std::vector<GraphRecord> records;
  std::size_t n_classes = 0;
  std::vector<long> label_values;  // raw graph label of each class index, sorted
  FeatureScheme scheme;
  std::vector<std::string> warnings;

  bool has_node_labels() const;
  std::size_t feature_width() const { return scheme.width(); }
};

// Reads the TU file convention from `root_dir` (or `root_dir/name` when the
// files live in a per-dataset folder): name_A.txt, name_graph_indicator.txt,
// name_graph_labels.txt and optionally name_node_labels.txt and
// name_node_attributes.txt. Throws DataError with file and line on bad input.
Dataset parse_tu_dataset(const std::filesystem::path& root_dir, const std::string& name);

// Writes `dataset` back in the same convention into `dir`.
void write_tu_dataset(const Dataset& dataset, const std::filesystem::path& dir);

FeatureScheme node_label_onehot(const Dataset& dataset);
FeatureScheme degree_onehot(std::size_t cap);

// node-label-onehot for labelled datasets; otherwise degree-onehot capped at
// the largest degree seen in `train_indices`, clamped to [1, 64].
FeatureScheme default_feature_scheme(const Dataset& dataset,
                                     std::span<const std::size_t> train_indices);

Dataset build_node_features(Dataset dataset, const FeatureScheme& scheme);

// Block-diagonal union of several graphs. Message edges come first, in record
// order; the trailing n_nodes entries are the self-loops, node i at
// n_message_edges + i.
struct GraphBatch {
  std::size_t n_graphs = 0;
  std::size_t n_nodes = 0;
  std::vector<std::size_t> node_offsets;
  std::vector<std::size_t> graph_of_node;
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_dst;
  std::size_t n_message_edges = 0;
  Tensor features;

  std::size_t n_edges() const { return edge_src.size(); }
  std::vector<std::size_t> message_src() const;
  std::vector<std::size_t> message_dst() const;
};

GraphBatch batch_graphs(std::span<const GraphRecord> records);
GraphBatch batch_graphs(const Dataset& dataset, std::span<const std::size_t> indices);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  bool stratified = true;  // false when some class had fewer than 3 graphs
};

// Label-stratified, seeded, disjoint and exhaustive.
Split split_dataset(const Dataset& dataset, std::uint64_t seed,
                    std::array<double, 3> fractions = {0.8, 0.1, 0.1});

}  // namespace mega

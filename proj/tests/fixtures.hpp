#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>

#include "mega/graph_data.hpp"

namespace mega::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mega_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline GraphRecord make_graph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges,
                              std::vector<long> node_labels, std::size_t label) {
  GraphRecord r;
  r.topology.n_nodes = n;
  r.topology.edges = std::move(edges);
  r.topology.close_undirected();
  r.node_labels = std::move(node_labels);
  r.label = label;
  return r;
}

inline GraphRecord cycle(std::size_t n, std::size_t label, long node_label = 0) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return make_graph(n, e, std::vector<long>(n, node_label), label);
}

// Two-class molecule-like toy set: class 0 are rings with alternating node
// labels {0, 1}; class 1 are stars whose hub carries label 2 and leaves label
// 1, with a short tail. Sizes vary with the seed.
inline Dataset two_class_toy(std::size_t per_class, std::uint64_t seed, bool build_features = true) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.name = "TOY";
  for (std::size_t i = 0; i < per_class; ++i) {
    const std::size_t n = 5 + rng() % 5;
    std::vector<std::pair<std::size_t, std::size_t>> e;
    std::vector<long> labels(n);
    for (std::size_t v = 0; v < n; ++v) {
      e.emplace_back(v, (v + 1) % n);
      labels[v] = static_cast<long>(v % 2);
    }
    ds.records.push_back(make_graph(n, e, labels, 0));

    const std::size_t m = 4 + rng() % 5;
    std::vector<std::pair<std::size_t, std::size_t>> s;
    std::vector<long> slabels(m, 1);
    slabels[0] = 2;
    for (std::size_t v = 1; v + 1 < m; ++v) s.emplace_back(0, v);
    s.emplace_back(m - 2, m - 1);
    ds.records.push_back(make_graph(m, s, slabels, 1));
  }
  ds.n_classes = 2;
  ds.label_values = {0, 1};
  if (build_features) {
    const FeatureScheme scheme = node_label_onehot(ds);
    ds = build_node_features(std::move(ds), scheme);
  }
  return ds;
}

}  // namespace mega::testing

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "mega/config.hpp"
#include "mega/eval.hpp"
#include "mega/gradcheck.hpp"
#include "mega/meta_train.hpp"

namespace mega {

// Parses config.dataset under config.data_root and builds node features: node
// labels when present, otherwise degree capped by the train split of seed
// config.hp.seed.
Dataset load_featured_dataset(const RunConfig& config);

ModelDims dims_for(const RunConfig& config, const Dataset& featured);

struct TrainOutputs {
  std::filesystem::path metrics_path;  // out_dir/metrics.jsonl
  std::filesystem::path params_path;   // out_dir/params.bin
  TrainResult result;
};

// One JSON object per line: each iteration, then a summary record.
std::string iteration_json(const IterationRecord& record);
std::string summary_json(const RunConfig& config, const TrainResult& result);

TrainOutputs cmd_train(const RunConfig& config, std::ostream& log);

// With a params file: probe that frozen encoder over n_runs seeded splits.
// Without: the full protocol, training a fresh model per run.
// Writes `out` (default out_dir/eval.json).
ProbeResult cmd_eval(const RunConfig& config, const std::optional<std::filesystem::path>& params,
                     const std::optional<std::filesystem::path>& out, std::ostream& log);

struct SweepRow {
  double lambda = 0.0;
  ProbeResult result;
};

// Full protocol in mega mode per value. Writes `out` (default
// out_dir/sweep_lambda.csv) with header lambda,mean,std.
std::vector<SweepRow> cmd_sweep_lambda(const RunConfig& config, const std::vector<double>& values,
                                       const std::optional<std::filesystem::path>& out,
                                       std::ostream& log);
std::string sweep_csv(const std::vector<SweepRow>& rows);

GradcheckReport cmd_gradcheck(std::ostream& log);

void cmd_heatmap(const RunConfig& config, const std::filesystem::path& params,
                 const std::filesystem::path& out, std::ostream& log);

struct DatasetSummary {
  std::string name;
  std::size_t graphs = 0;
  std::size_t classes = 0;
  std::vector<std::size_t> class_counts;
  std::size_t node_label_values = 0;  // distinct node labels, 0 when absent
  std::size_t feature_width = 0;
  std::string feature_scheme;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;  // undirected
  std::vector<std::string> warnings;
};

DatasetSummary summarize(const Dataset& raw, const Dataset& featured);
DatasetSummary cmd_inspect_dataset(const RunConfig& config, std::ostream& log);

}  // namespace mega

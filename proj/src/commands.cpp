#include "mega/commands.hpp"

#include <charconv>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mega/error.hpp"
#include "mega/io.hpp"
#include "mega/params_io.hpp"

namespace mega {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// FNV-1a over the raw bytes of every parameter value.
std::string params_digest(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : flatten(params))
    for (double v : t.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (auto b : bytes) h = (h ^ b) * 0x100000001b3ULL;
    }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json probe_json(const RunConfig& config, const ProbeResult& r, std::string_view source) {
  return json{{"dataset", config.dataset},
              {"mode", mode_name(config.mode)},
              {"source", source},
              {"seed", config.hp.seed},
              {"n_runs", r.accuracies.size()},
              {"accuracies", r.accuracies},
              {"mean", r.mean},
              {"std", r.std}};
}

ProtocolOptions protocol_options(const RunConfig& config) {
  ProtocolOptions opts;
  opts.mode = config.mode;
  opts.hp = effective_hyperparams(config);
  opts.dims = config.dims;
  opts.n_runs = config.n_runs;
  return opts;
}

}  // namespace

Dataset load_featured_dataset(const RunConfig& config) {
  Dataset ds = parse_tu_dataset(config.data_root, config.dataset);
  const FeatureScheme scheme = default_feature_scheme(ds, split_dataset(ds, config.hp.seed).train);
  return build_node_features(std::move(ds), scheme);
}

ModelDims dims_for(const RunConfig& config, const Dataset& featured) {
  ModelDims dims = config.dims;
  dims.in_features = featured.feature_width();
  return dims;
}

std::string iteration_json(const IterationRecord& r) {
  json j{{"iteration", r.iteration},
         {"epoch", r.epoch},
         {"step", r.kind == StepKind::Meta ? "meta" : "contrast"},
         {"contrast_loss", r.contrast_loss},
         {"mega_loss", optional_number(r.mega_loss)},
         {"trace_c", optional_number(r.trace_c)},
         {"offdiag_c", optional_number(r.offdiag_c)},
         {"feature_term", optional_number(r.feature_term)},
         {"lambda", r.lambda}};
  return j.dump();
}

std::string summary_json(const RunConfig& config, const TrainResult& result) {
  const auto& its = result.log.iterations;
  std::size_t meta_steps = 0;
  for (const auto& r : its) meta_steps += r.kind == StepKind::Meta;
  json j{{"summary", true},
         {"dataset", config.dataset},
         {"mode", mode_name(config.mode)},
         {"seed", config.hp.seed},
         {"lambda", effective_hyperparams(config).lambda},
         {"iterations", its.size()},
         {"meta_steps", meta_steps},
         {"final_contrast_loss", its.empty() ? json(nullptr) : json(its.back().contrast_loss)},
         {"params_digest", params_digest(result.params)}};
  return j.dump();
}

TrainOutputs cmd_train(const RunConfig& config, std::ostream& log) {
  const Dataset ds = load_featured_dataset(config);
  const ModelDims dims = dims_for(config, ds);
  const Hyperparams hp = effective_hyperparams(config);
  std::filesystem::create_directories(config.out_dir);

  TrainOutputs out;
  out.metrics_path = config.out_dir / "metrics.jsonl";
  out.params_path = config.out_dir / "params.bin";

  AtomicFileWriter metrics(out.metrics_path);
  log << "training " << mode_name(config.mode) << " on " << ds.name << " (" << ds.records.size()
      << " graphs, " << ds.feature_width() << " features)\n";
  out.result = train(ds, hp, config.mode, dims, [&](const TrainState&, const IterationRecord& r) {
    metrics.stream() << iteration_json(r) << '\n';
  });
  metrics.stream() << summary_json(config, out.result) << '\n';
  save_params(out.params_path, out.result.params);
  write_file_atomic(config.out_dir / "config.txt", serialize_config(config));
  metrics.commit();
  log << "wrote " << out.metrics_path.string() << " and " << out.params_path.string() << '\n';
  return out;
}

ProbeResult cmd_eval(const RunConfig& config, const std::optional<std::filesystem::path>& params,
                     const std::optional<std::filesystem::path>& out, std::ostream& log) {
  const Dataset ds = load_featured_dataset(config);
  ProbeResult result;
  std::string source;
  if (params) {
    const ModelParams loaded = load_params(*params, dims_for(config, ds));
    result = probe_protocol(loaded.encoder, ds, config.n_runs, config.hp.seed);
    source = params->string();
  } else {
    ProtocolOptions opts = protocol_options(config);
    opts.on_run = [&](std::size_t run, double acc) {
      log << "run " << run << " seed " << config.hp.seed + run << " accuracy " << acc << '\n';
    };
    result = run_protocol(ds, opts);
    source = "protocol";
  }
  const auto path = out.value_or(config.out_dir / "eval.json");
  write_file_atomic(path, probe_json(config, result, source).dump(2) + "\n");
  log << std::fixed << std::setprecision(4) << "accuracy " << result.mean << " +- " << result.std
      << " over " << result.accuracies.size() << " runs -> " << path.string() << '\n'
      << std::defaultfloat;
  return result;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string csv = "lambda,mean,std\n";
  for (const auto& r : rows)
    csv += format_double(r.lambda) + "," + format_double(r.result.mean) + "," +
           format_double(r.result.std) + "\n";
  return csv;
}

std::vector<SweepRow> cmd_sweep_lambda(const RunConfig& config, const std::vector<double>& values,
                                       const std::optional<std::filesystem::path>& out,
                                       std::ostream& log) {
  if (values.empty()) throw ConfigError("sweep-lambda needs at least one value");
  for (double v : values)
    if (!(v >= 0.0)) throw ConfigError("sweep-lambda values must be nonnegative, got " + format_double(v));
  const Dataset ds = load_featured_dataset(config);
  std::vector<SweepRow> rows;
  for (double v : values) {
    RunConfig c = config;
    c.mode = TrainMode::Mega;
    c.hp.lambda = v;
    rows.push_back({v, run_protocol(ds, protocol_options(c))});
    log << "lambda " << v << ": " << rows.back().result.mean << " +- " << rows.back().result.std
        << '\n';
  }
  const auto path = out.value_or(config.out_dir / "sweep_lambda.csv");
  write_file_atomic(path, sweep_csv(rows));
  log << "wrote " << path.string() << '\n';
  return rows;
}

GradcheckReport cmd_gradcheck(std::ostream& log) {
  const GradcheckReport report = run_gradcheck();
  log << report.format();
  return report;
}

void cmd_heatmap(const RunConfig& config, const std::filesystem::path& params,
                 const std::filesystem::path& out, std::ostream& log) {
  const Dataset ds = load_featured_dataset(config);
  const ModelParams loaded = load_params(params, dims_for(config, ds));
  const EmbeddingTable table = embed_dataset(loaded.encoder, ds);
  export_feature_heatmap(table, out);
  log << "wrote " << table.rows.cols() << "x" << table.rows.rows() << " heatmap to " << out.string()
      << '\n';
}

DatasetSummary summarize(const Dataset& raw, const Dataset& featured) {
  DatasetSummary s;
  s.name = raw.name;
  s.graphs = raw.records.size();
  s.classes = raw.n_classes;
  s.class_counts.assign(raw.n_classes, 0);
  std::set<long> node_labels;
  double nodes = 0.0;
  double edges = 0.0;
  for (const auto& r : raw.records) {
    ++s.class_counts[r.label];
    node_labels.insert(r.node_labels.begin(), r.node_labels.end());
    nodes += static_cast<double>(r.topology.n_nodes);
    edges += static_cast<double>(r.topology.edges.size()) / 2.0;
  }
  s.node_label_values = node_labels.size();
  if (s.graphs > 0) {
    s.mean_nodes = nodes / static_cast<double>(s.graphs);
    s.mean_edges = edges / static_cast<double>(s.graphs);
  }
  s.feature_width = featured.feature_width();
  s.feature_scheme = featured.scheme.describe();
  s.warnings = raw.warnings;
  return s;
}

DatasetSummary cmd_inspect_dataset(const RunConfig& config, std::ostream& log) {
  const Dataset raw = parse_tu_dataset(config.data_root, config.dataset);
  const Dataset featured =
      build_node_features(raw, default_feature_scheme(raw, split_dataset(raw, config.hp.seed).train));
  const DatasetSummary s = summarize(raw, featured);
  log << "dataset        " << s.name << '\n'
      << "graphs         " << s.graphs << '\n'
      << "classes        " << s.classes << " (";
  for (std::size_t k = 0; k < s.class_counts.size(); ++k)
    log << (k ? ", " : "") << raw.label_values[k] << ": " << s.class_counts[k];
  log << ")\n"
      << "node labels    " << s.node_label_values << '\n'
      << "features       " << s.feature_width << " (" << s.feature_scheme << ")\n"
      << std::fixed << std::setprecision(2) << "mean nodes     " << s.mean_nodes << '\n'
      << "mean edges     " << s.mean_edges << '\n'
      << std::defaultfloat;
  for (const auto& w : s.warnings) log << "warning: " << w << '\n';
  return s;
}

}  // namespace mega

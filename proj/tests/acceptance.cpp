// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when any
// criterion fails. MUTAG is read from $MEGA_DATA_ROOT (default "data").

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "mega/autodiff.hpp"
#include "mega/commands.hpp"
#include "mega/error.hpp"
#include "mega/eval.hpp"
#include "mega/gradcheck.hpp"
#include "mega/losses.hpp"
#include "mega/meta_train.hpp"

using namespace mega;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradFirstTol = 1e-4;
constexpr double kGradSecondTol = 1e-3;
constexpr double kGradBudgetSeconds = 30.0;
constexpr double kMetaTol = 1e-3;
constexpr double kZeroStepNormTol = 1e-12;
constexpr double kMetaBudgetSeconds = 10.0;
constexpr double kLossIdentityTol = 1e-12;
constexpr double kBruteForceTol = 1e-12;
constexpr double kMegaMeanMin = 0.85;
constexpr double kRiuMeanMin = 0.80;
constexpr double kModeBudgetSeconds = 30.0 * 60.0;
constexpr double kPropertyTol = 1e-10;
constexpr std::size_t kMutagGraphs = 188;
constexpr std::size_t kMutagClasses = 2;
constexpr std::size_t kMutagNodeLabels = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

RunConfig mutag_config() {
  RunConfig c = default_config();
  c.dataset = "MUTAG";
  return c;
}

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

Outcome criterion_gradcheck() {
  const auto t0 = Clock::now();
  const GradcheckReport report = run_gradcheck();
  const double secs = seconds_since(t0);
  double first = 0.0, second = 0.0;
  bool ok = !report.entries.empty();
  for (const auto& e : report.entries) {
    (e.second_order ? second : first) = std::max(e.second_order ? second : first, e.max_error);
    ok &= e.max_error < (e.second_order ? kGradSecondTol : kGradFirstTol);
  }
  ok &= secs < kGradBudgetSeconds;
  return {ok, std::to_string(report.entries.size()) + " checks, first-order max rel " + fmt(first) +
                  " (< " + fmt(kGradFirstTol) + "), second-order max rel " + fmt(second) + " (< " +
                  fmt(kGradSecondTol) + "), " + fmt(secs) + " s (< " + fmt(kGradBudgetSeconds) + ")"};
}

GraphBatch two_graph_fixture() {
  Dataset ds;
  ds.records = {mega::testing::make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 1}}, {0, 1, 2, 1}, 0),
                mega::testing::make_graph(3, {{0, 1}, {1, 2}}, {2, 0, 1}, 1)};
  ds.n_classes = 2;
  ds.label_values = {0, 1};
  const FeatureScheme scheme = node_label_onehot(ds);
  ds = build_node_features(std::move(ds), scheme);
  return batch_graphs(ds.records);
}

Outcome criterion_meta_gradient() {
  const auto t0 = Clock::now();
  const GraphBatch batch = two_graph_fixture();
  ModelDims dims;
  dims.in_features = batch.features.cols();
  dims.layers = 2;
  dims.hidden = 6;
  dims.embed = 5;
  dims.proj = 4;
  dims.aug_hidden = 3;
  const ModelParams params = init_params(dims, 2);
  Hyperparams hp;
  hp.inner_lr = 0.5;
  const MetaGradient mg = compute_meta_gradient(params, batch, hp);
  const auto sigma = flatten(params.augmenter);
  double worst = 0.0;
  for (std::size_t t = 0; t < sigma.size(); ++t) {
    const Tensor numeric = finite_diff_gradient(
        [&](const Tensor& x) {
          auto copy = sigma;
          copy[t] = x;
          ModelParams p = params;
          p.augmenter = unflatten(params.augmenter, copy);
          return meta_objective(p, batch, hp, params.augmenter).total.item();
        },
        sigma[t], 1e-5);
    worst = std::max(worst, gradient_error(mg.sigma_grad[t], numeric));
  }
  Hyperparams still = hp;
  still.inner_lr = 0.0;
  double norm = 0.0;
  for (const auto& g : compute_meta_gradient(params, batch, still).sigma_grad)
    for (double x : g.values()) norm += x * x;
  norm = std::sqrt(norm);
  const double secs = seconds_since(t0);
  const bool ok = worst < kMetaTol && norm < kZeroStepNormTol && secs < kMetaBudgetSeconds;
  return {ok, "fixture 4+3 nodes, rel " + fmt(worst) + " (< " + fmt(kMetaTol) +
                  "), zero-step grad norm " + fmt(norm) + " (< " + fmt(kZeroStepNormTol) + "), " +
                  fmt(secs) + " s (< " + fmt(kMetaBudgetSeconds) + ")"};
}

Outcome criterion_loss_oracles() {
  double worst_identity = 0.0;
  for (std::size_t n : {2, 3, 5})
    for (double lambda : {0.0, 0.1, 1.0}) {
      const double v = mega_loss(Tensor::identity(n), Tensor::identity(n), lambda).item();
      worst_identity = std::max(worst_identity, std::abs(v - static_cast<double>(n)));
    }

  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 5, d = 4;
  std::vector<double> a(n * d), b(n * d);
  for (auto& x : a) x = g(rng);
  for (auto& x : b) x = g(rng);
  const FeaturePairBatch pairs{Tensor({n, d}, a), Tensor({n, d}, b)};
  const Tensor c = instance_corr(pairs);
  const Tensor dd = feature_corr(pairs);
  double worst_brute = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        dot += a[i * d + k] * b[j * d + k];
        na += a[i * d + k] * a[i * d + k];
        nb += b[j * d + k] * b[j * d + k];
      }
      worst_brute = std::max(worst_brute, std::abs(c.at(i, j) - dot / std::sqrt(na * nb)));
    }
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t q = 0; q < d; ++q) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += a[i * d + p] * b[i * d + q];
        na += a[i * d + p] * a[i * d + p];
        nb += b[i * d + q] * b[i * d + q];
      }
      worst_brute = std::max(worst_brute, std::abs(dd.at(p, q) - dot / std::sqrt(na * nb)));
    }
  const bool ok = worst_identity <= kLossIdentityTol && worst_brute <= kBruteForceTol;
  return {ok, "identity loss max |L - N| " + fmt(worst_identity) + " (<= " + fmt(kLossIdentityTol) +
                  "), correlation brute-force max diff " + fmt(worst_brute) + " (<= " +
                  fmt(kBruteForceTol) + ")"};
}

Outcome criterion_mutag_accuracy() {
  const RunConfig config = mutag_config();
  Dataset ds;
  try {
    ds = load_featured_dataset(config);
  } catch (const DataError& e) {
    return {false, std::string("MUTAG unavailable: ") + e.what()};
  }
  std::string detail;
  std::array<double, 3> means{};
  bool within_budget = true;
  const std::array<TrainMode, 3> modes = {TrainMode::Mega, TrainMode::Ccl, TrainMode::GinRiu};
  for (std::size_t m = 0; m < modes.size(); ++m) {
    ProtocolOptions opts;
    opts.mode = modes[m];
    opts.hp = effective_hyperparams(config);
    opts.dims = config.dims;
    opts.n_runs = config.n_runs;
    const auto t0 = Clock::now();
    const ProbeResult r = run_protocol(ds, opts);
    const double secs = seconds_since(t0);
    within_budget &= secs < kModeBudgetSeconds;
    means[m] = r.mean;
    detail += std::string(mode_name(modes[m])) + " " + fmt(r.mean) + "+-" + fmt(r.std) + " in " +
              fmt(secs) + " s; ";
  }
  const bool ok = means[0] >= kMegaMeanMin && means[0] >= means[1] && means[2] >= kRiuMeanMin &&
                  within_budget;
  return {ok, detail + "need mega >= " + fmt(kMegaMeanMin) + " and >= ccl, gin-riu >= " +
                  fmt(kRiuMeanMin) + ", each mode < " + fmt(kModeBudgetSeconds) + " s"};
}

Outcome criterion_sweep() {
  const RunConfig base = mutag_config();
  mega::testing::TempDir tmp("accept_sweep");
  RunConfig config = base;
  config.out_dir = tmp.path();
  const std::vector<double> values = {0.0, 0.1, 1.0};
  std::ostringstream log;
  try {
    cmd_sweep_lambda(config, values, std::nullopt, log);
  } catch (const DataError& e) {
    return {false, std::string("MUTAG unavailable: ") + e.what()};
  }
  std::ifstream in(tmp.path() / "sweep_lambda.csv");
  std::string line;
  std::getline(in, line);
  if (line != "lambda,mean,std") return {false, "bad header '" + line + "'"};
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (row >= values.size()) return {false, "extra row '" + line + "'"};
    std::istringstream cells(line);
    std::string cell;
    std::vector<double> nums;
    while (std::getline(cells, cell, ',')) {
      std::size_t used = 0;
      try {
        nums.push_back(std::stod(cell, &used));
      } catch (...) {
        return {false, "non-numeric cell '" + cell + "'"};
      }
      if (used != cell.size()) return {false, "non-numeric cell '" + cell + "'"};
    }
    if (nums.size() != 3 || nums[0] != values[row] || nums[1] < 0 || nums[1] > 1 || nums[2] < 0)
      return {false, "malformed row '" + line + "'"};
    ++row;
  }
  if (row != values.size()) return {false, "expected 3 rows, got " + std::to_string(row)};
  return {true, "3 rows for lambda in {0, 0.1, 1}"};
}

// Relabels the nodes of one graph.
GraphRecord permuted(const GraphRecord& r, const std::vector<std::size_t>& perm) {
  GraphRecord out = r;
  out.topology.edges.clear();
  for (auto [u, v] : r.topology.edges) out.topology.edges.emplace_back(perm[u], perm[v]);
  out.topology.close_undirected();
  const std::size_t f = r.features->cols();
  std::vector<double> feats(r.features->size());
  for (std::size_t v = 0; v < r.topology.n_nodes; ++v) {
    out.node_labels[perm[v]] = r.node_labels[v];
    for (std::size_t c = 0; c < f; ++c) feats[perm[v] * f + c] = r.features->at(v, c);
  }
  out.features = Tensor(r.features->shape(), feats);
  return out;
}

Outcome criterion_properties() {
  const Dataset ds = mega::testing::two_class_toy(8, 21);
  ModelDims dims;
  dims.in_features = ds.feature_width();
  dims.layers = 3;
  dims.hidden = 8;
  dims.embed = 8;
  dims.proj = 6;
  dims.aug_hidden = 4;
  const ModelParams p = init_params(dims, 17);
  std::vector<std::string> failed;

  // Permutation invariance of graph embeddings, original and augmented views.
  double perm_err = 0.0;
  std::mt19937_64 rng(5);
  for (const auto& r : ds.records) {
    std::vector<std::size_t> perm(r.topology.n_nodes);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const GraphRecord q = permuted(r, perm);
    const GraphBatch a = batch_graphs(std::span<const GraphRecord>(&r, 1));
    const GraphBatch b = batch_graphs(std::span<const GraphRecord>(&q, 1));
    perm_err = std::max(perm_err, max_diff(readout(a, encode(a, unit_weights(a), p.encoder)),
                                           readout(b, encode(b, unit_weights(b), p.encoder))));
    perm_err = std::max(perm_err,
                        max_diff(readout(a, encode(augment(a, lga_edge_weights(a, p.augmenter)), p.encoder)),
                                 readout(b, encode(augment(b, lga_edge_weights(b, p.augmenter)), p.encoder))));
  }
  if (perm_err > kPropertyTol) failed.push_back("permutation " + fmt(perm_err));

  // Batch independence.
  std::vector<std::size_t> all(ds.records.size());
  std::iota(all.begin(), all.end(), 0);
  const GraphBatch full = batch_graphs(ds, all);
  const Tensor together = readout(full, encode(full, unit_weights(full), p.encoder));
  double batch_err = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::vector<std::size_t> one = {i};
    const GraphBatch single = batch_graphs(ds, one);
    const Tensor alone = readout(single, encode(single, unit_weights(single), p.encoder));
    for (std::size_t c = 0; c < alone.cols(); ++c)
      batch_err = std::max(batch_err, std::abs(alone.at(0, c) - together.at(i, c)));
  }
  if (batch_err > kPropertyTol) failed.push_back("batch " + fmt(batch_err));

  // Self-loop weights are exactly one.
  const EdgeWeightVector w = lga_edge_weights(full, p.augmenter);
  bool loops_one = full.n_edges() > full.n_message_edges;
  for (std::size_t e = full.n_message_edges; e < full.n_edges(); ++e) loops_one &= w.values.at(e, 0) == 1.0;
  if (!loops_one) failed.push_back("self-loop weights");

  // Alternation: contrast steps leave sigma alone, meta steps leave the model alone.
  Hyperparams hp;
  hp.epochs = 3;
  hp.batch_size = 8;
  hp.seed = 9;
  auto sigma = flatten(init_params(dims, hp.seed).augmenter);
  auto model = flatten(init_params(dims, hp.seed).encoder);
  auto head = flatten(init_params(dims, hp.seed).projection);
  auto same = [](const std::vector<Tensor>& x, const std::vector<Tensor>& y) {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!x[i].bitwise_equal(y[i])) return false;
    return true;
  };
  bool alternation = true;
  std::size_t steps = 0;
  const TrainResult first = train(ds, hp, TrainMode::Mega, dims, [&](const TrainState& s, const IterationRecord& r) {
    const auto sn = flatten(s.params.augmenter), mn = flatten(s.params.encoder), hn = flatten(s.params.projection);
    const bool meta = r.iteration % 2 == 1;
    alternation &= (r.kind == StepKind::Meta) == meta;
    alternation &= meta ? (same(mn, model) && same(hn, head)) : same(sn, sigma);
    sigma = sn;
    model = mn;
    head = hn;
    ++steps;
  });
  if (!alternation || steps < 4) failed.push_back("alternation");

  // Standardization statistics come from train rows only.
  const EmbeddingTable table = embed_dataset(p.encoder, ds);
  const Split split = split_dataset(ds, 3);
  std::vector<double> mutated = table.rows.to_vector();
  for (const auto* ids : {&split.val, &split.test})
    for (auto i : *ids)
      for (std::size_t c = 0; c < table.rows.cols(); ++c) mutated[i * table.rows.cols() + c] = 1e6;
  EmbeddingTable other = table;
  other.rows = Tensor(table.rows.shape(), mutated);
  const Standardizer s1 = fit_standardizer(table, split.train);
  const Standardizer s2 = fit_standardizer(other, split.train);
  if (s1.mean != s2.mean || s1.scale != s2.scale) failed.push_back("standardization");

  // Deterministic rerun.
  const TrainResult second = train(ds, hp, TrainMode::Mega, dims);
  bool deterministic = same(flatten(first.params), flatten(second.params)) &&
                       first.log.iterations.size() == second.log.iterations.size();
  for (std::size_t i = 0; deterministic && i < first.log.iterations.size(); ++i)
    deterministic = first.log.iterations[i].contrast_loss == second.log.iterations[i].contrast_loss &&
                    first.log.iterations[i].mega_loss == second.log.iterations[i].mega_loss;
  if (!deterministic) failed.push_back("determinism");

  std::string detail = "permutation " + fmt(perm_err) + ", batch " + fmt(batch_err) + " (<= " +
                       fmt(kPropertyTol) + "), self-loops, alternation over " + std::to_string(steps) +
                       " steps, train-only standardization, rerun";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

Outcome criterion_parser() {
  std::string detail;
  bool ok = true;

  // Malformed fixtures must raise DataError naming the file (and line where it has one).
  mega::testing::TempDir tmp("accept_parse");
  struct Case {
    std::string what;
    std::string a, indicator, labels;
    bool expect_line;
  };
  const std::vector<Case> cases = {
      {"cross-graph edge", "1, 2\n2, 3\n", "1\n1\n2\n", "1\n0\n", true},
      {"node out of range", "1, 2\n2, 9\n", "1\n1\n2\n", "1\n0\n", true},
      {"non-numeric", "1, 2\nx, 1\n", "1\n1\n2\n", "1\n0\n", true},
      {"label count", "1, 2\n", "1\n1\n2\n", "1\n", false},
      {"bad graph id", "1, 2\n", "1\n0\n2\n", "1\n0\n", true},
  };
  std::size_t structured = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto dir = tmp.path() / std::to_string(i);
    mega::testing::write_text(dir / "BAD_A.txt", cases[i].a);
    mega::testing::write_text(dir / "BAD_graph_indicator.txt", cases[i].indicator);
    mega::testing::write_text(dir / "BAD_graph_labels.txt", cases[i].labels);
    try {
      parse_tu_dataset(dir, "BAD");
    } catch (const DataError& e) {
      if (!e.file().empty() && (!cases[i].expect_line || e.line() > 0)) {
        ++structured;
        continue;
      }
    } catch (...) {
    }
    ok = false;
    detail += cases[i].what + " not structured; ";
  }
  try {
    parse_tu_dataset(tmp.path() / "absent", "BAD");
    ok = false;
  } catch (const DataError& e) {
    structured += !e.file().empty();
  }
  detail += std::to_string(structured) + "/" + std::to_string(cases.size() + 1) +
            " malformed fixtures structured; ";

  const RunConfig config = mutag_config();
  try {
    const Dataset raw = parse_tu_dataset(config.data_root, config.dataset);
    const Dataset featured = build_node_features(raw, node_label_onehot(raw));
    const DatasetSummary s = summarize(raw, featured);
    ok &= s.graphs == kMutagGraphs && s.classes == kMutagClasses && s.node_label_values == kMutagNodeLabels;
    detail += "MUTAG " + std::to_string(s.graphs) + " graphs, " + std::to_string(s.classes) +
              " classes, " + std::to_string(s.node_label_values) + " node labels (need " +
              std::to_string(kMutagGraphs) + ", " + std::to_string(kMutagClasses) + ", " +
              std::to_string(kMutagNodeLabels) + ")";
  } catch (const DataError& e) {
    ok = false;
    detail += std::string("MUTAG unavailable: ") + e.what();
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 gradcheck", criterion_gradcheck},
      {"2 meta-gradient", criterion_meta_gradient},
      {"3 loss oracles", criterion_loss_oracles},
      {"4 MUTAG accuracy", criterion_mutag_accuracy},
      {"5 lambda sweep", criterion_sweep},
      {"6 properties", criterion_properties},
      {"7 parser", criterion_parser},
  };
  bool all = true;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all &= o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << ": " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}

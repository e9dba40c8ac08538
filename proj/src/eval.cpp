#include "mega/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "mega/error.hpp"
#include "mega/io.hpp"

namespace mega {

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Dense softmax regression state over standardized inputs.
struct Probe {
  std::size_t dim;
  std::size_t classes;
  std::vector<double> weight;  // dim x classes
  std::vector<double> bias;

  void logits(std::span<const double> x, std::span<double> out) const {
    for (std::size_t k = 0; k < classes; ++k) out[k] = bias[k];
    for (std::size_t d = 0; d < dim; ++d)
      for (std::size_t k = 0; k < classes; ++k) out[k] += x[d] * weight[d * classes + k];
  }

  double accuracy(const std::vector<std::vector<double>>& xs,
                  const std::vector<std::size_t>& ys) const {
    if (xs.empty()) return 0.0;
    std::vector<double> z(classes);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      logits(xs[i], z);
      hits += argmax(z) == ys[i];
    }
    return static_cast<double>(hits) / static_cast<double>(xs.size());
  }
};

}  // namespace

EmbeddingTable embed_dataset(const EncoderParams& phi, const Dataset& dataset,
                             std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  const std::size_t n = dataset.records.size();
  std::vector<double> rows;
  std::size_t width = 0;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    const GraphBatch batch =
        batch_graphs(dataset, std::span<const std::size_t>(idx).subspan(start, end - start));
    const Tensor h = readout(batch, encode(batch, unit_weights(batch), phi));
    width = h.cols();
    rows.insert(rows.end(), h.values().begin(), h.values().end());
  }
  EmbeddingTable table;
  table.rows = Tensor({n, width}, std::move(rows));
  table.n_classes = dataset.n_classes;
  for (const auto& r : dataset.records) table.labels.push_back(r.label);
  return table;
}

std::vector<double> Standardizer::apply(std::span<const double> row) const {
  std::vector<double> out(row.size());
  for (std::size_t d = 0; d < row.size(); ++d) out[d] = (row[d] - mean[d]) * scale[d];
  return out;
}

Standardizer fit_standardizer(const EmbeddingTable& table, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DataError("cannot standardize over zero rows");
  const std::size_t dim = table.rows.cols();
  Standardizer s;
  s.mean.assign(dim, 0.0);
  s.scale.assign(dim, 1.0);
  for (auto i : rows)
    for (std::size_t d = 0; d < dim; ++d) s.mean[d] += table.rows.at(i, d);
  for (auto& m : s.mean) m /= static_cast<double>(rows.size());
  std::vector<double> var(dim, 0.0);
  for (auto i : rows)
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = table.rows.at(i, d) - s.mean[d];
      var[d] += diff * diff;
    }
  for (std::size_t d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / static_cast<double>(rows.size()));
    s.scale[d] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return s;
}

ProbeOutcome linear_probe_detailed(const EmbeddingTable& table, const Split& split,
                                   std::uint64_t seed, const ProbeSettings& settings) {
  const std::size_t classes = table.n_classes;
  std::set<std::size_t> present;
  for (auto i : split.train) present.insert(table.labels.at(i));
  if (present.size() < 2) throw DataError("linear probe needs at least two classes in the train split");
  for (std::size_t k = 0; k < classes; ++k)
    if (!present.count(k))
      throw DataError("class " + std::to_string(k) + " is absent from the train split");

  const Standardizer stdz = fit_standardizer(table, split.train);
  auto gather = [&](const std::vector<std::size_t>& ids, std::vector<std::vector<double>>& xs,
                    std::vector<std::size_t>& ys) {
    for (auto i : ids) {
      xs.push_back(stdz.apply(table.rows.values().subspan(i * table.rows.cols(), table.rows.cols())));
      ys.push_back(table.labels[i]);
    }
  };
  std::vector<std::vector<double>> xtr, xva, xte;
  std::vector<std::size_t> ytr, yva, yte;
  gather(split.train, xtr, ytr);
  gather(split.val, xva, yva);
  gather(split.test, xte, yte);

  const std::size_t dim = table.rows.cols();
  Probe probe{dim, classes, std::vector<double>(dim * classes), std::vector<double>(classes, 0.0)};
  std::mt19937_64 rng(seed);
  for (auto& w : probe.weight)
    w = (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * 0.01;

  ProbeOutcome best;
  best.best_val_accuracy = -1.0;
  const double inv_n = 1.0 / static_cast<double>(xtr.size());
  std::vector<double> z(classes);
  std::vector<double> gw(dim * classes);
  std::vector<double> gb(classes);
  for (std::size_t step = 1; step <= settings.steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < xtr.size(); ++i) {
      probe.logits(xtr[i], z);
      const double hi = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (auto& v : z) total += (v = std::exp(v - hi));
      for (std::size_t k = 0; k < classes; ++k) {
        const double err = z[k] / total - (ytr[i] == k ? 1.0 : 0.0);
        gb[k] += err;
        for (std::size_t d = 0; d < dim; ++d) gw[d * classes + k] += xtr[i][d] * err;
      }
    }
    for (std::size_t j = 0; j < gw.size(); ++j)
      probe.weight[j] -= settings.lr * (gw[j] * inv_n + settings.l2 * probe.weight[j]);
    for (std::size_t k = 0; k < classes; ++k) probe.bias[k] -= settings.lr * gb[k] * inv_n;

    const double val = xva.empty() ? probe.accuracy(xtr, ytr) : probe.accuracy(xva, yva);
    if (val > best.best_val_accuracy) {
      best.best_val_accuracy = val;
      best.best_step = step;
      best.test_accuracy = probe.accuracy(xte, yte);
    }
  }
  return best;
}

double linear_probe(const EmbeddingTable& table, const Split& split, std::uint64_t seed,
                    const ProbeSettings& settings) {
  return linear_probe_detailed(table, split, seed, settings).test_accuracy;
}

ProbeResult aggregate(std::vector<double> accuracies) {
  ProbeResult r;
  r.accuracies = std::move(accuracies);
  if (r.accuracies.empty()) return r;
  const double n = static_cast<double>(r.accuracies.size());
  r.mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / n;
  double var = 0.0;
  for (double a : r.accuracies) var += (a - r.mean) * (a - r.mean);
  r.std = std::sqrt(var / n);
  return r;
}

ProbeResult run_protocol(const Dataset& dataset, const ProtocolOptions& options) {
  std::vector<double> accuracies;
  for (std::size_t run = 0; run < options.n_runs; ++run) {
    const std::uint64_t seed = options.hp.seed + run;
    const Split split = split_dataset(dataset, seed, options.fractions);
    const Dataset featured =
        dataset.scheme.kind == FeatureScheme::Kind::None
            ? build_node_features(dataset, default_feature_scheme(dataset, split.train))
            : dataset;
    Hyperparams hp = options.hp;
    hp.seed = seed;
    ModelDims dims = options.dims;
    dims.in_features = featured.feature_width();
    const TrainResult trained = train(featured, hp, options.mode, dims);
    const EmbeddingTable table = embed_dataset(trained.params.encoder, featured);
    const double acc = linear_probe(table, split, seed);
    accuracies.push_back(acc);
    if (options.on_run) options.on_run(run, acc);
  }
  return aggregate(std::move(accuracies));
}

ProbeResult probe_protocol(const EncoderParams& phi, const Dataset& dataset, std::size_t n_runs,
                           std::uint64_t base_seed, std::array<double, 3> fractions) {
  const EmbeddingTable table = embed_dataset(phi, dataset);
  std::vector<double> accuracies;
  for (std::size_t run = 0; run < n_runs; ++run) {
    const std::uint64_t seed = base_seed + run;
    accuracies.push_back(linear_probe(table, split_dataset(dataset, seed, fractions), seed));
  }
  return aggregate(std::move(accuracies));
}

const std::array<std::array<std::uint8_t, 3>, 256>& color_ramp() {
  static const auto ramp = [] {
    // Dark blue -> teal -> green -> yellow, linearly interpolated.
    constexpr std::array<std::array<double, 3>, 5> anchors{{
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    std::array<std::array<std::uint8_t, 3>, 256> out{};
    for (std::size_t i = 0; i < 256; ++i) {
      const double t = static_cast<double>(i) / 255.0 * (anchors.size() - 1);
      const auto lo = std::min<std::size_t>(static_cast<std::size_t>(t), anchors.size() - 2);
      const double frac = t - static_cast<double>(lo);
      for (std::size_t c = 0; c < 3; ++c)
        out[i][c] = static_cast<std::uint8_t>(
            std::lround(anchors[lo][c] + frac * (anchors[lo + 1][c] - anchors[lo][c])));
    }
    return out;
  }();
  return ramp;
}

std::vector<std::uint8_t> render_feature_heatmap(const EmbeddingTable& table) {
  const std::size_t h = table.rows.rows();
  const std::size_t w = table.rows.cols();
  std::vector<std::size_t> order(h);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return table.labels[a] < table.labels[b]; });

  const auto v = table.rows.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;

  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + 3 * w * h);
  const auto& ramp = color_ramp();
  for (auto r : order)
    for (std::size_t c = 0; c < w; ++c) {
      const double t = range > 0.0 ? (table.rows.at(r, c) - lo) / range : 0.0;
      const auto& rgb = ramp[static_cast<std::size_t>(std::lround(t * 255.0))];
      out.insert(out.end(), rgb.begin(), rgb.end());
    }
  return out;
}

void export_feature_heatmap(const EmbeddingTable& table, const std::filesystem::path& path) {
  const auto bytes = render_feature_heatmap(table);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace mega

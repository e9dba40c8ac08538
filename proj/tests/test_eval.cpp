#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "mega/error.hpp"
#include "mega/eval.hpp"

using namespace mega;

namespace {

EmbeddingTable table_from(std::vector<std::vector<double>> rows, std::vector<std::size_t> labels,
                          std::size_t classes) {
  std::vector<double> flat;
  for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  EmbeddingTable t;
  t.rows = Tensor({rows.size(), rows.front().size()}, flat);
  t.labels = std::move(labels);
  t.n_classes = classes;
  return t;
}

Split first_n(std::size_t n_train, std::size_t n_val, std::size_t n_total) {
  Split s;
  for (std::size_t i = 0; i < n_total; ++i)
    (i < n_train ? s.train : i < n_train + n_val ? s.val : s.test).push_back(i);
  return s;
}

// Interleaved two-class Gaussian blobs.
EmbeddingTable blobs(std::size_t n, double separation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % 2;
    rows.push_back({noise(rng) + (y ? separation : -separation), noise(rng), noise(rng)});
    labels.push_back(y);
  }
  return table_from(rows, labels, 2);
}

}  // namespace

TEST_CASE("embeddings use the encoder alone and ignore batching") {
  const Dataset ds = mega::testing::two_class_toy(5, 1);
  ModelDims d;
  d.in_features = 3;
  d.layers = 2;
  d.hidden = 8;
  d.embed = 6;
  const ModelParams p = init_params(d, 2);
  const EmbeddingTable one = embed_dataset(p.encoder, ds, 1);
  const EmbeddingTable all = embed_dataset(p.encoder, ds, 64);
  REQUIRE(one.rows.shape() == Shape{10, 6});
  for (std::size_t i = 0; i < one.rows.size(); ++i)
    CHECK(std::abs(one.rows.values()[i] - all.rows.values()[i]) <= 1e-10);
  CHECK(one.labels == all.labels);

  Dataset twins = ds;
  twins.records[1] = twins.records[0];
  const EmbeddingTable t = embed_dataset(p.encoder, twins);
  for (std::size_t c = 0; c < 6; ++c) CHECK(t.rows.at(0, c) == t.rows.at(1, c));
}

TEST_CASE("standardizer is fit on train rows only") {
  EmbeddingTable t = blobs(40, 1.0, 3);
  const Split s = first_n(30, 5, 40);
  const Standardizer a = fit_standardizer(t, s.train);
  std::vector<double> mutated = t.rows.to_vector();
  for (auto i : s.test)
    for (std::size_t c = 0; c < 3; ++c) mutated[i * 3 + c] = 1e6 * (c + 1);
  for (auto i : s.val) mutated[i * 3] = -42.0;
  EmbeddingTable m = t;
  m.rows = Tensor(t.rows.shape(), mutated);
  const Standardizer b = fit_standardizer(m, s.train);
  CHECK(a.mean == b.mean);
  CHECK(a.scale == b.scale);
  // Probe results on train/val are unaffected by test-row contents only
  // through accuracy, never through the fitted statistics.
  CHECK(linear_probe_detailed(t, s, 1).best_step == linear_probe_detailed(m, s, 1).best_step);

  const EmbeddingTable constant = table_from({{1, 2}, {1, 3}, {1, 4}}, {0, 1, 0}, 2);
  const std::vector<std::size_t> rows = {0, 1, 2};
  const Standardizer c = fit_standardizer(constant, rows);
  CHECK(c.scale[0] == 1.0);
  CHECK(c.mean[1] == doctest::Approx(3.0));
}

TEST_CASE("probe on separable and on shuffled labels") {
  const EmbeddingTable sep = blobs(100, 6.0, 4);
  const Split s = first_n(80, 10, 100);
  CHECK(linear_probe(sep, s, 1) == 1.0);
  CHECK(linear_probe(sep, s, 1) == linear_probe(sep, s, 1));

  EmbeddingTable noise = blobs(100, 6.0, 5);
  std::mt19937_64 rng(6);
  std::shuffle(noise.labels.begin(), noise.labels.end(), rng);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Split rs = split_dataset([&] {
      Dataset d;
      d.n_classes = 2;
      d.label_values = {0, 1};
      for (auto y : noise.labels) {
        GraphRecord r;
        r.label = y;
        d.records.push_back(r);
      }
      return d;
    }(), seed, {0.5, 0.1, 0.4});
    total += linear_probe(noise, rs, seed);
  }
  CHECK(std::abs(total / 10 - 0.5) <= 0.15);

  const EmbeddingTable single = table_from({{1}, {2}, {3}}, {0, 0, 1}, 2);
  CHECK_THROWS_AS(linear_probe(single, first_n(2, 0, 3), 1), DataError);
}

TEST_CASE("aggregation") {
  const ProbeResult one = aggregate({0.8});
  CHECK(one.std == 0.0);
  const ProbeResult same = aggregate({0.7, 0.7, 0.7});
  CHECK(same.mean == doctest::Approx(0.7));
  CHECK(same.std == doctest::Approx(0.0));
  const ProbeResult r = aggregate({0.6, 0.8, 0.9});
  CHECK(r.mean == doctest::Approx(2.3 / 3));
  const double m = 2.3 / 3;
  CHECK(r.std == doctest::Approx(std::sqrt(((0.6 - m) * (0.6 - m) + (0.8 - m) * (0.8 - m) +
                                            (0.9 - m) * (0.9 - m)) / 3)));
}

TEST_CASE("protocol end to end on a toy dataset") {
  const Dataset ds = mega::testing::two_class_toy(10, 7);
  ProtocolOptions opts;
  opts.mode = TrainMode::GinRiu;
  opts.dims.layers = 2;
  opts.dims.hidden = 8;
  opts.dims.embed = 8;
  opts.n_runs = 3;
  std::vector<double> seen;
  opts.on_run = [&](std::size_t, double acc) { seen.push_back(acc); };
  const ProbeResult r = run_protocol(ds, opts);
  CHECK(r.accuracies.size() == 3);
  CHECK(seen == r.accuracies);
  CHECK(r.mean > 0.8);  // rings and stars are easy to tell apart

  opts.n_runs = 1;
  CHECK(run_protocol(ds, opts).std == 0.0);
}

TEST_CASE("heatmap image") {
  const EmbeddingTable t = table_from({{0, 1, 2}, {5, 5, 5}, {3, 4, 0}, {2, 2, 2}}, {1, 0, 1, 0}, 2);
  const auto img = render_feature_heatmap(t);
  const std::string header = "P6\n3 4\n255\n";
  REQUIRE(img.size() == header.size() + 3 * 3 * 4);
  CHECK(std::string(img.begin(), img.begin() + static_cast<long>(header.size())) == header);
  const auto& ramp = color_ramp();
  auto pixel = [&](std::size_t r, std::size_t c) {
    const std::size_t at = header.size() + 3 * (r * 3 + c);
    return std::array<std::uint8_t, 3>{img[at], img[at + 1], img[at + 2]};
  };
  // Rows sorted by label (stable): 1, 3, 0, 2. Global min 0, max 5.
  CHECK(pixel(0, 0) == ramp[255]);
  CHECK(pixel(2, 0) == ramp[0]);
  CHECK(pixel(3, 2) == ramp[0]);

  const EmbeddingTable flat = table_from({{2, 2}, {2, 2}}, {0, 1}, 2);
  const auto img2 = render_feature_heatmap(flat);
  for (std::size_t i = std::string("P6\n2 2\n255\n").size(); i + 2 < img2.size(); i += 3)
    CHECK(std::array<std::uint8_t, 3>{img2[i], img2[i + 1], img2[i + 2]} == ramp[0]);

  mega::testing::TempDir tmp("ppm");
  export_feature_heatmap(t, tmp.path() / "sub" / "h.ppm");
  std::ifstream in(tmp.path() / "sub" / "h.ppm", std::ios::binary);
  const std::vector<std::uint8_t> back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(back == img);
}

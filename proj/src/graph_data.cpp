#include "mega/graph_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "mega/error.hpp"
#include "mega/io.hpp"

namespace fs = std::filesystem;

namespace mega {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view token, const std::string& file, std::size_t line) {
  T value{};
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (token.empty() || ec != std::errc() || ptr != end)
    throw DataError("non-numeric value '" + std::string(token) + "'", file, line);
  return value;
}

// One numbered, non-blank line of a data file.
struct Line {
  std::size_t number;
  std::string text;
};

std::vector<Line> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file", path.string());
  std::vector<Line> lines;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (trim(text).empty()) continue;
    lines.push_back({number, std::move(text)});
  }
  return lines;
}

fs::path locate(const fs::path& root, const std::string& name) {
  if (fs::exists(root / (name + "_A.txt"))) return root;
  if (fs::exists(root / name / (name + "_A.txt"))) return root / name;
  return root;
}

template <class T>
std::vector<T> read_column(const fs::path& path) {
  std::vector<T> values;
  for (const auto& l : read_lines(path)) {
    const auto tokens = split_commas(l.text);
    if (tokens.size() != 1)
      throw DataError("expected one value per line", path.string(), l.number);
    values.push_back(parse_number<T>(tokens[0], path.string(), l.number));
  }
  return values;
}

template <class Rng>
void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  // Fisher-Yates with an explicit draw so results do not depend on the
  // standard library's distribution implementation.
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

void GraphTopology::close_undirected() {
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (auto [u, v] : edges) {
    if (u == v) continue;
    pairs.emplace(u, v);
    pairs.emplace(v, u);
  }
  edges.assign(pairs.begin(), pairs.end());
}

bool GraphTopology::is_closed() const {
  std::set<std::pair<std::size_t, std::size_t>> pairs(edges.begin(), edges.end());
  if (pairs.size() != edges.size()) return false;
  for (auto [u, v] : edges)
    if (u == v || u >= n_nodes || v >= n_nodes || !pairs.count({v, u})) return false;
  return true;
}

std::vector<std::size_t> GraphTopology::degrees() const {
  std::vector<std::size_t> deg(n_nodes, 0);
  for (auto [u, v] : edges) ++deg[u];
  return deg;
}

std::size_t FeatureScheme::width() const {
  switch (kind) {
    case Kind::None: return 0;
    case Kind::NodeLabelOneHot: return node_label_values.size();
    case Kind::DegreeOneHot: return cap + 1;
  }
  return 0;
}

std::string FeatureScheme::describe() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::NodeLabelOneHot:
      return "node-label-onehot(" + std::to_string(node_label_values.size()) + ")";
    case Kind::DegreeOneHot: return "degree-onehot(cap=" + std::to_string(cap) + ")";
  }
  return "none";
}

bool Dataset::has_node_labels() const {
  return !records.empty() &&
         std::all_of(records.begin(), records.end(),
                     [](const GraphRecord& r) { return r.node_labels.size() == r.topology.n_nodes; });
}

Dataset parse_tu_dataset(const fs::path& root_dir, const std::string& name) {
  const fs::path dir = locate(root_dir, name);
  const fs::path a_path = dir / (name + "_A.txt");
  const fs::path indicator_path = dir / (name + "_graph_indicator.txt");
  const fs::path labels_path = dir / (name + "_graph_labels.txt");
  const fs::path node_labels_path = dir / (name + "_node_labels.txt");
  const fs::path node_attr_path = dir / (name + "_node_attributes.txt");

  for (const auto& p : {a_path, indicator_path, labels_path})
    if (!fs::exists(p)) throw DataError("missing mandatory file", p.string());

  Dataset ds;
  ds.name = name;

  // Node -> graph assignment.
  const auto indicator = read_column<long>(indicator_path);
  if (indicator.empty()) throw DataError("no nodes", indicator_path.string());
  long max_graph = 0;
  {
    const auto lines = read_lines(indicator_path);
    for (std::size_t i = 0; i < indicator.size(); ++i) {
      if (indicator[i] < 1)
        throw DataError("graph id must be >= 1", indicator_path.string(), lines[i].number);
      max_graph = std::max(max_graph, indicator[i]);
    }
  }
  const auto n_graphs = static_cast<std::size_t>(max_graph);

  const auto raw_labels = read_column<long>(labels_path);
  if (raw_labels.size() != n_graphs)
    throw DataError("expected " + std::to_string(n_graphs) + " graph labels, found " +
                        std::to_string(raw_labels.size()),
                    labels_path.string());

  std::vector<std::size_t> local_index(indicator.size());
  ds.records.resize(n_graphs);
  for (std::size_t v = 0; v < indicator.size(); ++v) {
    auto& rec = ds.records[static_cast<std::size_t>(indicator[v] - 1)];
    local_index[v] = rec.topology.n_nodes++;
  }
  for (std::size_t g = 0; g < n_graphs; ++g)
    if (ds.records[g].topology.n_nodes == 0)
      throw DataError("graph " + std::to_string(g + 1) + " has no nodes", indicator_path.string());

  for (const auto& l : read_lines(a_path)) {
    const auto tokens = split_commas(l.text);
    if (tokens.size() != 2) throw DataError("expected 'u, v'", a_path.string(), l.number);
    const auto u = parse_number<long>(tokens[0], a_path.string(), l.number);
    const auto v = parse_number<long>(tokens[1], a_path.string(), l.number);
    for (long node : {u, v})
      if (node < 1 || static_cast<std::size_t>(node) > indicator.size())
        throw DataError("node index " + std::to_string(node) + " exceeds the " +
                            std::to_string(indicator.size()) + " nodes of the graph indicator",
                        a_path.string(), l.number);
    const auto gu = indicator[static_cast<std::size_t>(u - 1)];
    const auto gv = indicator[static_cast<std::size_t>(v - 1)];
    if (gu != gv)
      throw DataError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                          ") crosses graphs " + std::to_string(gu) + " and " + std::to_string(gv),
                      a_path.string(), l.number);
    if (u == v) {
      if (ds.warnings.empty() || ds.warnings.back() != "self-loop pairs in A ignored")
        ds.warnings.emplace_back("self-loop pairs in A ignored");
      continue;
    }
    auto& topo = ds.records[static_cast<std::size_t>(gu - 1)].topology;
    topo.edges.emplace_back(local_index[static_cast<std::size_t>(u - 1)],
                            local_index[static_cast<std::size_t>(v - 1)]);
  }
  for (auto& rec : ds.records) rec.topology.close_undirected();

  if (fs::exists(node_labels_path)) {
    const auto node_labels = read_column<long>(node_labels_path);
    if (node_labels.size() != indicator.size())
      throw DataError("expected " + std::to_string(indicator.size()) + " node labels, found " +
                          std::to_string(node_labels.size()),
                      node_labels_path.string());
    for (auto& rec : ds.records) rec.node_labels.reserve(rec.topology.n_nodes);
    for (std::size_t v = 0; v < indicator.size(); ++v)
      ds.records[static_cast<std::size_t>(indicator[v] - 1)].node_labels.push_back(node_labels[v]);
  }

  if (fs::exists(node_attr_path)) {
    const auto lines = read_lines(node_attr_path);
    if (lines.size() != indicator.size())
      throw DataError("expected " + std::to_string(indicator.size()) + " attribute rows, found " +
                          std::to_string(lines.size()),
                      node_attr_path.string());
    std::vector<std::vector<double>> per_graph(n_graphs);
    std::size_t width = 0;
    for (std::size_t v = 0; v < lines.size(); ++v) {
      const auto tokens = split_commas(lines[v].text);
      if (v == 0) width = tokens.size();
      if (tokens.size() != width)
        throw DataError("attribute row width differs", node_attr_path.string(), lines[v].number);
      auto& row = per_graph[static_cast<std::size_t>(indicator[v] - 1)];
      for (auto t : tokens) row.push_back(parse_number<double>(t, node_attr_path.string(), lines[v].number));
    }
    for (std::size_t g = 0; g < n_graphs; ++g)
      ds.records[g].node_attributes =
          Tensor({ds.records[g].topology.n_nodes, width}, std::move(per_graph[g]));
  }

  for (const char* ignored : {"_edge_labels.txt", "_edge_attributes.txt"})
    if (fs::exists(dir / (name + ignored)))
      ds.warnings.push_back(std::string(name + ignored) + " present but ignored");

  std::set<long> distinct(raw_labels.begin(), raw_labels.end());
  ds.label_values.assign(distinct.begin(), distinct.end());
  ds.n_classes = ds.label_values.size();
  for (std::size_t g = 0; g < n_graphs; ++g) {
    const auto it = std::lower_bound(ds.label_values.begin(), ds.label_values.end(), raw_labels[g]);
    ds.records[g].label = static_cast<std::size_t>(it - ds.label_values.begin());
  }
  return ds;
}

void write_tu_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream a, indicator, labels, node_labels, attrs;
  attrs.precision(17);
  const bool with_node_labels = ds.has_node_labels();
  const bool with_attrs = !ds.records.empty() && ds.records.front().node_attributes.has_value();

  std::size_t offset = 1;
  for (std::size_t g = 0; g < ds.records.size(); ++g) {
    const auto& rec = ds.records[g];
    for (auto [u, v] : rec.topology.edges) a << (u + offset) << ", " << (v + offset) << '\n';
    for (std::size_t i = 0; i < rec.topology.n_nodes; ++i) {
      indicator << (g + 1) << '\n';
      if (with_node_labels) node_labels << rec.node_labels[i] << '\n';
      if (with_attrs) {
        const Tensor& x = *rec.node_attributes;
        for (std::size_t c = 0; c < x.cols(); ++c) attrs << (c ? ", " : "") << x.at(i, c);
        attrs << '\n';
      }
    }
    labels << ds.label_values.at(rec.label) << '\n';
    offset += rec.topology.n_nodes;
  }
  write_file_atomic(dir / (ds.name + "_A.txt"), a.str());
  write_file_atomic(dir / (ds.name + "_graph_indicator.txt"), indicator.str());
  write_file_atomic(dir / (ds.name + "_graph_labels.txt"), labels.str());
  if (with_node_labels) write_file_atomic(dir / (ds.name + "_node_labels.txt"), node_labels.str());
  if (with_attrs) write_file_atomic(dir / (ds.name + "_node_attributes.txt"), attrs.str());
}

FeatureScheme node_label_onehot(const Dataset& ds) {
  if (!ds.has_node_labels())
    throw DataError("node-label-onehot needs node labels, which " + ds.name + " lacks");
  std::set<long> values;
  for (const auto& rec : ds.records) values.insert(rec.node_labels.begin(), rec.node_labels.end());
  FeatureScheme s;
  s.kind = FeatureScheme::Kind::NodeLabelOneHot;
  s.node_label_values.assign(values.begin(), values.end());
  return s;
}

FeatureScheme degree_onehot(std::size_t cap) {
  if (cap < 1) throw DataError("degree-onehot cap must be >= 1");
  FeatureScheme s;
  s.kind = FeatureScheme::Kind::DegreeOneHot;
  s.cap = cap;
  return s;
}

FeatureScheme default_feature_scheme(const Dataset& ds, std::span<const std::size_t> train_indices) {
  if (ds.has_node_labels()) return node_label_onehot(ds);
  std::size_t max_degree = 1;
  for (auto i : train_indices) {
    const auto deg = ds.records.at(i).topology.degrees();
    if (!deg.empty()) max_degree = std::max(max_degree, *std::max_element(deg.begin(), deg.end()));
  }
  return degree_onehot(std::min<std::size_t>(max_degree, 64));
}

Dataset build_node_features(Dataset ds, const FeatureScheme& scheme) {
  const std::size_t width = scheme.width();
  switch (scheme.kind) {
    case FeatureScheme::Kind::None:
      throw DataError("no feature scheme given");
    case FeatureScheme::Kind::NodeLabelOneHot:
      if (!ds.has_node_labels())
        throw DataError("node-label-onehot needs node labels, which " + ds.name + " lacks");
      for (auto& rec : ds.records) {
        std::vector<double> x(rec.topology.n_nodes * width, 0.0);
        for (std::size_t v = 0; v < rec.topology.n_nodes; ++v) {
          const auto& vals = scheme.node_label_values;
          const auto it = std::lower_bound(vals.begin(), vals.end(), rec.node_labels[v]);
          if (it == vals.end() || *it != rec.node_labels[v])
            throw DataError("node label " + std::to_string(rec.node_labels[v]) +
                            " is not in the feature scheme");
          x[v * width + static_cast<std::size_t>(it - vals.begin())] = 1.0;
        }
        rec.features = Tensor({rec.topology.n_nodes, width}, std::move(x));
      }
      break;
    case FeatureScheme::Kind::DegreeOneHot:
      if (scheme.cap < 1) throw DataError("degree-onehot cap must be >= 1");
      for (auto& rec : ds.records) {
        const auto deg = rec.topology.degrees();
        std::vector<double> x(rec.topology.n_nodes * width, 0.0);
        for (std::size_t v = 0; v < rec.topology.n_nodes; ++v)
          x[v * width + std::min(deg[v], scheme.cap)] = 1.0;
        rec.features = Tensor({rec.topology.n_nodes, width}, std::move(x));
      }
      break;
  }
  ds.scheme = scheme;
  return ds;
}

std::vector<std::size_t> GraphBatch::message_src() const {
  return {edge_src.begin(), edge_src.begin() + static_cast<std::ptrdiff_t>(n_message_edges)};
}

std::vector<std::size_t> GraphBatch::message_dst() const {
  return {edge_dst.begin(), edge_dst.begin() + static_cast<std::ptrdiff_t>(n_message_edges)};
}

namespace {

template <class Get>
GraphBatch batch_impl(std::size_t count, Get get) {
  if (count == 0) throw DataError("cannot batch an empty list of graphs");
  GraphBatch b;
  b.n_graphs = count;
  std::size_t width = 0;
  std::vector<double> features;
  for (std::size_t g = 0; g < count; ++g) {
    const GraphRecord& rec = get(g);
    if (!rec.features) throw DataError("graph " + std::to_string(g) + " has no features built");
    if (g == 0) width = rec.features->cols();
    if (rec.features->cols() != width)
      throw ShapeError("feature width " + std::to_string(rec.features->cols()) + " of graph " +
                       std::to_string(g) + " differs from " + std::to_string(width));
    const std::size_t offset = b.n_nodes;
    b.node_offsets.push_back(offset);
    for (auto [u, v] : rec.topology.edges) {
      b.edge_src.push_back(u + offset);
      b.edge_dst.push_back(v + offset);
    }
    b.graph_of_node.insert(b.graph_of_node.end(), rec.topology.n_nodes, g);
    b.n_nodes += rec.topology.n_nodes;
    features.insert(features.end(), rec.features->values().begin(), rec.features->values().end());
  }
  b.n_message_edges = b.edge_src.size();
  for (std::size_t v = 0; v < b.n_nodes; ++v) {
    b.edge_src.push_back(v);
    b.edge_dst.push_back(v);
  }
  b.features = Tensor({b.n_nodes, width}, std::move(features));
  return b;
}

}  // namespace

GraphBatch batch_graphs(std::span<const GraphRecord> records) {
  return batch_impl(records.size(), [&](std::size_t g) -> const GraphRecord& { return records[g]; });
}

GraphBatch batch_graphs(const Dataset& ds, std::span<const std::size_t> indices) {
  return batch_impl(indices.size(),
                    [&](std::size_t g) -> const GraphRecord& { return ds.records.at(indices[g]); });
}

Split split_dataset(const Dataset& ds, std::uint64_t seed, std::array<double, 3> fractions) {
  for (double f : fractions)
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  const std::size_t n = ds.records.size();
  if (n == 0) throw DataError("cannot split an empty dataset");

  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n))));
  const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));

  std::mt19937_64 rng(seed);
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[ds.records[i].label].push_back(i);

  Split split;
  split.stratified = std::all_of(by_class.begin(), by_class.end(),
                                 [](const auto& kv) { return kv.second.size() >= 3; });

  std::vector<std::size_t> order;
  if (split.stratified) {
    // Systematic interleave: item k of a class of size m sits at (k + 0.5) / m.
    // Any prefix of the merged order then holds each class within one graph
    // of its proportional share.
    struct Keyed {
      double key;
      std::size_t cls;
      std::size_t index;
    };
    std::vector<Keyed> keyed;
    for (auto& [cls, members] : by_class) {
      shuffle_indices(members, rng);
      const double m = static_cast<double>(members.size());
      for (std::size_t k = 0; k < members.size(); ++k)
        keyed.push_back({(static_cast<double>(k) + 0.5) / m, cls, members[k]});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
      return a.key != b.key ? a.key < b.key : a.cls < b.cls;
    });
    for (const auto& k : keyed) order.push_back(k.index);
  } else {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_indices(order, rng);
  }

  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return split;
}

}  // namespace mega

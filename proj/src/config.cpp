#include "mega/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mega/error.hpp"

namespace mega {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_value(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (value.empty() || ec != std::errc() || ptr != end)
    throw ConfigError("bad value '" + std::string(value) + "' for key '" + std::string(key) + "'");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  if (const char* root = std::getenv("MEGA_DATA_ROOT"); root && *root) c.data_root = root;
  return c;
}

std::vector<std::string> config_keys() {
  return {"dataset", "data_root", "mode",    "tau",    "lambda",     "inner_lr",
          "aug_lr",  "enc_lr",    "epochs",  "batch_size", "seed",   "layers",
          "hidden",  "embed_dim", "proj_dim", "aug_hidden", "n_runs", "out_dir"};
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "dataset") {
    if (value.empty()) throw ConfigError("empty value for key 'dataset'");
    c.dataset = value;
  } else if (key == "data_root") {
    c.data_root = std::string(value);
  } else if (key == "out_dir") {
    c.out_dir = std::string(value);
  } else if (key == "mode") {
    c.mode = parse_mode(value);
  } else if (key == "tau") {
    c.hp.tau = parse_value<double>(key, value);
  } else if (key == "lambda") {
    c.hp.lambda = parse_value<double>(key, value);
  } else if (key == "inner_lr") {
    c.hp.inner_lr = parse_value<double>(key, value);
  } else if (key == "aug_lr") {
    c.hp.aug_lr = parse_value<double>(key, value);
  } else if (key == "enc_lr") {
    c.hp.enc_lr = parse_value<double>(key, value);
  } else if (key == "epochs") {
    c.hp.epochs = parse_value<std::size_t>(key, value);
  } else if (key == "batch_size") {
    c.hp.batch_size = parse_value<std::size_t>(key, value);
  } else if (key == "seed") {
    c.hp.seed = parse_value<std::uint64_t>(key, value);
  } else if (key == "layers") {
    c.dims.layers = parse_value<std::size_t>(key, value);
  } else if (key == "hidden") {
    c.dims.hidden = parse_value<std::size_t>(key, value);
  } else if (key == "embed_dim") {
    c.dims.embed = parse_value<std::size_t>(key, value);
  } else if (key == "proj_dim") {
    c.dims.proj = parse_value<std::size_t>(key, value);
  } else if (key == "aug_hidden") {
    c.dims.aug_hidden = parse_value<std::size_t>(key, value);
  } else if (key == "n_runs") {
    c.n_runs = parse_value<std::size_t>(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  if (base.mode == TrainMode::MegaIL) base.hp.lambda = 0.0;
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  out << "dataset = " << c.dataset << '\n'
      << "data_root = " << c.data_root.string() << '\n'
      << "mode = " << mode_name(c.mode) << '\n'
      << "tau = " << format_double(c.hp.tau) << '\n'
      << "lambda = " << format_double(c.hp.lambda) << '\n'
      << "inner_lr = " << format_double(c.hp.inner_lr) << '\n'
      << "aug_lr = " << format_double(c.hp.aug_lr) << '\n'
      << "enc_lr = " << format_double(c.hp.enc_lr) << '\n'
      << "epochs = " << c.hp.epochs << '\n'
      << "batch_size = " << c.hp.batch_size << '\n'
      << "seed = " << c.hp.seed << '\n'
      << "layers = " << c.dims.layers << '\n'
      << "hidden = " << c.dims.hidden << '\n'
      << "embed_dim = " << c.dims.embed << '\n'
      << "proj_dim = " << c.dims.proj << '\n'
      << "aug_hidden = " << c.dims.aug_hidden << '\n'
      << "n_runs = " << c.n_runs << '\n'
      << "out_dir = " << c.out_dir.string() << '\n';
  return out.str();
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.dataset == b.dataset && a.data_root == b.data_root && a.mode == b.mode &&
         a.hp.tau == b.hp.tau && a.hp.lambda == b.hp.lambda && a.hp.inner_lr == b.hp.inner_lr &&
         a.hp.aug_lr == b.hp.aug_lr && a.hp.enc_lr == b.hp.enc_lr && a.hp.epochs == b.hp.epochs &&
         a.hp.batch_size == b.hp.batch_size && a.hp.seed == b.hp.seed &&
         a.dims.layers == b.dims.layers && a.dims.hidden == b.dims.hidden &&
         a.dims.embed == b.dims.embed && a.dims.proj == b.dims.proj &&
         a.dims.aug_hidden == b.dims.aug_hidden && a.n_runs == b.n_runs && a.out_dir == b.out_dir;
}

Hyperparams effective_hyperparams(const RunConfig& config) {
  Hyperparams hp = config.hp;
  if (config.mode == TrainMode::MegaIL) hp.lambda = 0.0;
  return hp;
}

}  // namespace mega

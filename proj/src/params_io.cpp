#include "mega/params_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "mega/error.hpp"
#include "mega/io.hpp"

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");

namespace mega {

namespace {

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  auto name = path.filename().string();
  return path.parent_path() / ("." + name + ".tmp" + std::to_string(rng() & 0xffffff));
}

constexpr char kMagic[5] = {'M', 'E', 'G', 'A', '1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  const std::string& bytes;
  std::string path;
  std::size_t pos = 0;

  template <class T>
  T get() {
    if (bytes.size() - pos < sizeof(T)) throw DataError("truncated parameter file", path, 0);
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  AtomicFileWriter w(path);
  w.stream().write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  w.commit();
}

AtomicFileWriter::AtomicFileWriter(std::filesystem::path path)
    : path_(std::move(path)), tmp_(temp_sibling(path_)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(tmp_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot open " + tmp_.string() + " for writing");
}

AtomicFileWriter::~AtomicFileWriter() {
  if (committed_) return;
  out_.close();
  std::error_code ec;
  std::filesystem::remove(tmp_, ec);
}

void AtomicFileWriter::commit() {
  out_.flush();
  if (!out_) throw Error("write failed for " + tmp_.string());
  out_.close();
  std::filesystem::rename(tmp_, path_);
  committed_ = true;
}

void save_params(const std::filesystem::path& path, const ModelParams& params) {
  const auto tensors = flatten(params);
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
  }
  for (const auto& t : tensors)
    for (double v : t.values()) put<double>(out, v);
  write_file_atomic(path, out);
}

ModelParams load_params(const std::filesystem::path& path, const ModelDims& dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open parameter file", path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  Reader r{bytes, path.string()};
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a MEGA1 parameter file (bad magic)", path.string(), 0);
  r.pos = sizeof(kMagic);

  const auto expected = param_shapes(dims);
  const auto count = r.get<std::uint32_t>();
  if (count != expected.size())
    throw DataError("parameter file holds " + std::to_string(count) + " tensors, config expects " +
                        std::to_string(expected.size()),
                    path.string(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != expected[i])
      throw DataError("tensor " + std::to_string(i) + " has shape " + to_string(shape) +
                          ", config expects " + to_string(expected[i]),
                      path.string(), 0);
  }
  std::vector<Tensor> tensors;
  for (const auto& shape : expected) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<double>();
    tensors.emplace_back(shape, std::move(values));
  }
  if (r.pos != bytes.size()) throw DataError("trailing bytes after parameter values", path.string(), 0);
  return unflatten(init_params(dims, 0), tensors);
}

}  // namespace mega

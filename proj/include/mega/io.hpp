#pragma once

#include <filesystem>
#include <fstream>
#include <string_view>

namespace mega {

// Writes through a sibling temporary file and renames it into place, so the
// target is either absent, the old file, or the complete new file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Streaming variant: write to stream(), then commit(). Destroying an
// uncommitted writer removes the temporary file.
class AtomicFileWriter {
 public:
  explicit AtomicFileWriter(std::filesystem::path path);
  AtomicFileWriter(const AtomicFileWriter&) = delete;
  AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;
  ~AtomicFileWriter();

  std::ofstream& stream() { return out_; }
  void commit();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

}  // namespace mega

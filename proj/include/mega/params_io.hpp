#pragma once

#include <filesystem>

#include "mega/gnn.hpp"

namespace mega {

// Flat binary parameter file, little-endian:
//   "MEGA1"
//   u32 tensor count
//   per tensor: u32 rank, then rank x u64 extents
//   all tensor values as f64, row-major, in header order
// Tensors are flatten(ModelParams) order: encoder, projection, augmenter.
void save_params(const std::filesystem::path& path, const ModelParams& params);

// Throws DataError on bad magic or truncation, and when the header does not
// match the layout that `dims` implies.
ModelParams load_params(const std::filesystem::path& path, const ModelDims& dims);

}  // namespace mega

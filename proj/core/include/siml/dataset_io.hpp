#pragma once

#include <filesystem>

#include "siml/synthdata.hpp"

namespace siml::dataset_io {

/// On-disk dataset layout under `dir`:
///   manifest.json      counts, generator settings, eval-only identity map
///   scenes_index.json  per-scene geometry and byte offsets into the two blobs
///   scenes.bin         concatenated rasters, row-major h*w*3 little-endian doubles
///   masks.bin          concatenated per-person masks, row-major h*w bytes
///
/// Identity labels appear only in the manifest's eval_only block; the scene
/// index carries geometry alone.
void save_dataset(const synthdata::Dataset& dataset, const std::filesystem::path& dir);

synthdata::Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace siml::dataset_io

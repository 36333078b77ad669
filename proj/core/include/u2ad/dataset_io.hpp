#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "u2ad/phantom.hpp"

namespace u2ad {

/// Raster files carry a 16-byte header: "U2AD", u32 dtype (1 = float32, 2 = uint8),
/// u32 height, u32 width; then row-major little-endian pixels.
void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);
Mask read_mask(const std::filesystem::path& path);

/// Case directory: image.f32, roi.u8, tissue.u8, segments.u8, optional anomaly.u8, meta.json.
void save_case(const std::filesystem::path& dir, const CaseRecord& record);
CaseRecord load_case(const std::filesystem::path& dir);

struct IndexEntry {
  std::string id;
  std::string split;  ///< "healthy" or "target"
  std::string path;   ///< relative to the index file's directory
  std::uint64_t seed = 0;
  bool is_anomalous = false;
  std::vector<int> ground_truth_segments;
};

struct CorpusIndex {
  std::vector<IndexEntry> entries;
  double prevalence = 0.0;  ///< anomalous fraction of the target split

  std::vector<IndexEntry> split(const std::string& name) const;
};

void write_index(const std::filesystem::path& path, const CorpusIndex& index);
CorpusIndex read_index(const std::filesystem::path& path);

/// Writes `text` to `path` through a temporary file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace u2ad

#include "u2ad/dataset_io.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "u2ad/errors.hpp"

namespace u2ad {

namespace fs = std::filesystem;

namespace {

constexpr char kRasterMagic[4] = {'U', '2', 'A', 'D'};

template <class Pixel>
void write_raster(const fs::path& path, const Raster<Pixel>& raster, std::uint32_t dtype) {
  std::vector<char> bytes(16);
  const std::uint32_t h = static_cast<std::uint32_t>(raster.height());
  const std::uint32_t w = static_cast<std::uint32_t>(raster.width());
  std::memcpy(bytes.data(), kRasterMagic, 4);
  std::memcpy(bytes.data() + 4, &dtype, 4);
  std::memcpy(bytes.data() + 8, &h, 4);
  std::memcpy(bytes.data() + 12, &w, 4);
  if (dtype == 1) {
    for (std::size_t i = 0; i < raster.size(); ++i) {
      const auto v = static_cast<float>(raster[i]);
      const char* p = reinterpret_cast<const char*>(&v);
      bytes.insert(bytes.end(), p, p + sizeof v);
    }
  } else {
    for (std::size_t i = 0; i < raster.size(); ++i) bytes.push_back(static_cast<char>(raster[i]));
  }
  write_text_file(path, std::string(bytes.begin(), bytes.end()));
}

std::string read_raster_bytes(const fs::path& path, std::uint32_t dtype, int& h, int& w) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kRasterMagic, 4) != 0) {
    throw IoError("not a raster file: " + path.string());
  }
  std::uint32_t t = 0, uh = 0, uw = 0;
  std::memcpy(&t, bytes.data() + 4, 4);
  std::memcpy(&uh, bytes.data() + 8, 4);
  std::memcpy(&uw, bytes.data() + 12, 4);
  if (t != dtype) throw IoError("unexpected raster type in " + path.string());
  const std::size_t px = (dtype == 1) ? 4 : 1;
  if (bytes.size() != 16 + static_cast<std::size_t>(uh) * uw * px) throw IoError("truncated raster: " + path.string());
  h = static_cast<int>(uh);
  w = static_cast<int>(uw);
  return bytes.substr(16);
}

}  // namespace

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_image(const fs::path& path, const Image& image) { write_raster(path, image, 1); }

Image read_image(const fs::path& path) {
  int h = 0, w = 0;
  const std::string data = read_raster_bytes(path, 1, h, w);
  Image out(h, w, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    float v;
    std::memcpy(&v, data.data() + 4 * i, 4);
    out[i] = v;
  }
  return out;
}

void write_mask(const fs::path& path, const Mask& mask) { write_raster(path, mask, 2); }

Mask read_mask(const fs::path& path) {
  int h = 0, w = 0;
  const std::string data = read_raster_bytes(path, 2, h, w);
  Mask out(h, w, 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(data[i]);
  return out;
}

void save_case(const fs::path& dir, const CaseRecord& record) {
  fs::create_directories(dir);
  write_image(dir / "image.f32", record.image);
  write_mask(dir / "roi.u8", record.roi_mask);
  write_mask(dir / "tissue.u8", record.tissue_labels);
  write_mask(dir / "segments.u8", record.segment_labels);
  if (record.anomaly_mask) write_mask(dir / "anomaly.u8", *record.anomaly_mask);
  nlohmann::json meta = {{"seed", record.seed},
                         {"is_anomalous", record.is_anomalous},
                         {"anomaly_segments", record.anomaly_segments},
                         {"anomalies", nlohmann::json::array()}};
  for (const auto& a : record.anomalies) {
    meta["anomalies"].push_back({{"center_row", a.center_row},
                                 {"center_col", a.center_col},
                                 {"ellipse_width", a.ellipse_width},
                                 {"ellipse_length", a.ellipse_length},
                                 {"signal_mean", a.signal_mean},
                                 {"signal_var", a.signal_var}});
  }
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

CaseRecord load_case(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw PreconditionError("missing case directory " + dir.string());
  CaseRecord rec;
  rec.image = read_image(dir / "image.f32");
  rec.roi_mask = read_mask(dir / "roi.u8");
  rec.tissue_labels = read_mask(dir / "tissue.u8");
  rec.segment_labels = read_mask(dir / "segments.u8");
  if (fs::exists(dir / "anomaly.u8")) rec.anomaly_mask = read_mask(dir / "anomaly.u8");
  try {
    const auto meta = nlohmann::json::parse(read_text_file(dir / "meta.json"));
    rec.seed = meta.at("seed").get<std::uint64_t>();
    rec.is_anomalous = meta.at("is_anomalous").get<bool>();
    rec.anomaly_segments = meta.at("anomaly_segments").get<std::vector<int>>();
    for (const auto& a : meta.at("anomalies")) {
      rec.anomalies.push_back({a.at("center_row").get<int>(), a.at("center_col").get<int>(),
                               a.at("ellipse_width").get<double>(), a.at("ellipse_length").get<double>(),
                               a.at("signal_mean").get<double>(), a.at("signal_var").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt meta.json in " + dir.string() + ": " + e.what());
  }
  return rec;
}

std::vector<IndexEntry> CorpusIndex::split(const std::string& name) const {
  std::vector<IndexEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

void write_index(const fs::path& path, const CorpusIndex& index) {
  nlohmann::json j = {{"prevalence", index.prevalence}, {"cases", nlohmann::json::array()}};
  for (const auto& e : index.entries) {
    j["cases"].push_back({{"id", e.id},
                          {"split", e.split},
                          {"path", e.path},
                          {"seed", e.seed},
                          {"is_anomalous", e.is_anomalous},
                          {"ground_truth_segments", e.ground_truth_segments}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

CorpusIndex read_index(const fs::path& path) {
  if (!fs::exists(path)) throw PreconditionError("missing corpus index " + path.string() + " (run gen-data)");
  CorpusIndex index;
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    index.prevalence = j.at("prevalence").get<double>();
    for (const auto& c : j.at("cases")) {
      index.entries.push_back({c.at("id").get<std::string>(), c.at("split").get<std::string>(),
                               c.at("path").get<std::string>(), c.at("seed").get<std::uint64_t>(),
                               c.at("is_anomalous").get<bool>(),
                               c.at("ground_truth_segments").get<std::vector<int>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt corpus index " + path.string() + ": " + e.what());
  }
  return index;
}

}  // namespace u2ad

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hdmap/bevnet.hpp"
#include "hdmap/geometry.hpp"
#include "hdmap/grid.hpp"
#include "hdmap/pillars.hpp"
#include "hdmap/synth.hpp"
#include "hdmap/vector_map.hpp"

namespace hdmap {

/// Malformed or truncated input. `offset` is the byte position where decoding
/// failed, or npos when the problem is structural (then `where` holds a JSON
/// pointer).
class FormatError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  FormatError(std::string source, std::size_t offset, const std::string& what, std::string where = {});

  const std::string& source() const { return source_; }
  std::size_t offset() const { return offset_; }
  const std::string& where() const { return where_; }

 private:
  std::string source_;
  std::size_t offset_;
  std::string where_;
};

std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: truncate, write, check.
void write_file(const std::filesystem::path& path, std::string_view bytes);

// BVG1: "BVG1", u32 height, u32 width, u32 channels, float32 data (LE).
std::string encode_bvg(const Grid2D& grid);
Grid2D decode_bvg(std::string_view bytes, const std::string& source = "<bvg>");
Grid2D read_bvg(const std::filesystem::path& path);
void write_bvg(const std::filesystem::path& path, const Grid2D& grid);

// BVP1: "BVP1", u32 N, u32 K, N records of (3 + K) float32 (LE).
std::string encode_bvp(const PointCloud& cloud);
PointCloud decode_bvp(std::string_view bytes, const std::string& source = "<bvp>");
PointCloud read_bvp(const std::filesystem::path& path);
void write_bvp(const std::filesystem::path& path, const PointCloud& cloud);

// VectorMap JSON with fixed 6-decimal numbers.
std::string encode_vector_map(const VectorMap& vm);
VectorMap decode_vector_map(std::string_view text, const std::string& source = "<json>");
VectorMap read_vector_map(const std::filesystem::path& path);
void write_vector_map(const std::filesystem::path& path, const VectorMap& vm);

/// Parses JSON text, turning parse errors into FormatError with a byte offset.
nlohmann::json parse_json(std::string_view text, const std::string& source);

nlohmann::json bev_to_json(const BevConfig& bev);
BevConfig bev_from_json(const nlohmann::json& j, const std::string& source);
BevConfig read_bev(const std::filesystem::path& path);

nlohmann::json camera_to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j, const std::string& source,
                             const std::string& where);
/// Accepts either {"cameras": [...]} or a bare array.
std::vector<CameraModel> rig_from_json(const nlohmann::json& j, const std::string& source);
nlohmann::json rig_to_json(const std::vector<CameraModel>& rig);
std::vector<CameraModel> read_rig(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Labels on disk: channel 0 class id, 1 instance id, 2 lower direction bin or
// -1 where no direction is labelled.
// ---------------------------------------------------------------------------

Grid2D pack_labels(const LabelPack& labels);
LabelPack unpack_labels(const Grid2D& packed, std::size_t num_directions);

// ---------------------------------------------------------------------------
// Parameter bundles: a directory of BVG1 grids plus manifest.json.
// ---------------------------------------------------------------------------

struct NamedGrid {
  std::string name;
  Grid2D grid;
};

struct Bundle {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<NamedGrid> tensors;

  const Grid2D& get(const std::string& name) const;
};

void write_bundle(const std::filesystem::path& dir, const Bundle& bundle);
Bundle read_bundle(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Datasets: <root>/manifest.json and scene_%05d/ folders.
// ---------------------------------------------------------------------------

struct DatasetManifest {
  std::size_t scenes = 0;
  std::uint64_t seed = 0;
  BevConfig bev;
  std::vector<CameraModel> rig;
  SceneSpec spec;
  RasterStyle style;
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const DatasetManifest& m);

std::filesystem::path scene_dir(const std::filesystem::path& root, std::size_t index);

struct SceneFiles {
  VectorMap map;
  LabelPack labels;
  std::vector<Grid2D> cameras;  // rig order
  PointCloud points;
  nlohmann::json meta;
};

void write_scene(const std::filesystem::path& root, std::size_t index, const Scene& scene,
                 const DatasetManifest& manifest, std::uint64_t scene_seed);
/// Generates `count` scenes with seeds derived from `seed` and writes them
/// plus the manifest under `root`.
DatasetManifest generate_dataset(const std::filesystem::path& root, std::size_t count,
                                 std::uint64_t seed, const BevConfig& bev,
                                 const std::vector<CameraModel>& rig, const SceneSpec& spec = {},
                                 const RasterStyle& style = {});

SceneFiles read_scene(const std::filesystem::path& root, std::size_t index,
                      const DatasetManifest& manifest);

}  // namespace hdmap

#include "hdmap/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hdmap {

namespace fs = std::filesystem;
using nlohmann::json;

FormatError::FormatError(std::string source, std::size_t offset, const std::string& what,
                         std::string where)
    : std::runtime_error(source + (offset != npos ? ": byte " + std::to_string(offset) : std::string()) +
                         (where.empty() ? std::string() : ": at " + where) + ": " + what),
      source_(std::move(source)),
      offset_(offset),
      where_(std::move(where)) {}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// Binary helpers
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

std::uint32_t get_u32(std::string_view b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + i])) << (8 * i);
  return v;
}

double get_f32(std::string_view b, std::size_t off) {
  return static_cast<double>(std::bit_cast<float>(get_u32(b, off)));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument(std::string(what) + " exceeds the u32 range of the format");
  }
  return static_cast<std::uint32_t>(v);
}

void check_magic(std::string_view bytes, std::string_view magic, const std::string& source) {
  if (bytes.size() < magic.size()) throw FormatError(source, bytes.size(), "truncated before magic");
  if (bytes.substr(0, magic.size()) != magic) {
    throw FormatError(source, 0, "bad magic, expected " + std::string(magic));
  }
}

// Validates that exactly `count` float32 values follow `header` bytes.
void check_payload(std::string_view bytes, std::size_t header, std::uint64_t count,
                   const std::string& source) {
  const std::uint64_t expected = header + 4 * count;
  if (count > (std::numeric_limits<std::uint64_t>::max() - header) / 4 || bytes.size() < expected) {
    throw FormatError(source, bytes.size(),
                      "truncated payload, expected " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) throw FormatError(source, static_cast<std::size_t>(expected), "trailing bytes");
}

}  // namespace

std::string encode_bvg(const Grid2D& grid) {
  std::string out = "BVG1";
  out.reserve(16 + 4 * grid.size());
  put_u32(out, checked_u32(grid.height(), "grid height"));
  put_u32(out, checked_u32(grid.width(), "grid width"));
  put_u32(out, checked_u32(grid.channels(), "grid channels"));
  for (double v : grid.data()) put_f32(out, v);
  return out;
}

Grid2D decode_bvg(std::string_view bytes, const std::string& source) {
  check_magic(bytes, "BVG1", source);
  if (bytes.size() < 16) throw FormatError(source, bytes.size(), "truncated header");
  const std::uint64_t h = get_u32(bytes, 4), w = get_u32(bytes, 8), c = get_u32(bytes, 12);
  const std::uint64_t count = h * w * c;  // each factor < 2^32; product checked against size below
  if (h != 0 && w != 0 && c != 0 && (count / h / w != c)) throw FormatError(source, 4, "shape overflows");
  check_payload(bytes, 16, count, source);
  std::vector<double> data(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = get_f32(bytes, 16 + 4 * i);
    if (!std::isfinite(data[i])) throw FormatError(source, 16 + 4 * i, "non-finite value");
  }
  return Grid2D(static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(c),
                std::move(data));
}

Grid2D read_bvg(const fs::path& path) { return decode_bvg(read_file(path), path.string()); }
void write_bvg(const fs::path& path, const Grid2D& grid) { write_file(path, encode_bvg(grid)); }

std::string encode_bvp(const PointCloud& cloud) {
  std::string out = "BVP1";
  out.reserve(12 + 4 * cloud.values().size());
  put_u32(out, checked_u32(cloud.size(), "point count"));
  put_u32(out, checked_u32(cloud.extra(), "feature count"));
  for (double v : cloud.values()) put_f32(out, v);
  return out;
}

PointCloud decode_bvp(std::string_view bytes, const std::string& source) {
  check_magic(bytes, "BVP1", source);
  if (bytes.size() < 12) throw FormatError(source, bytes.size(), "truncated header");
  const std::uint64_t n = get_u32(bytes, 4), k = get_u32(bytes, 8);
  check_payload(bytes, 12, n * (3 + k), source);
  std::vector<double> values(static_cast<std::size_t>(n * (3 + k)));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = get_f32(bytes, 12 + 4 * i);
    if (!std::isfinite(values[i])) throw FormatError(source, 12 + 4 * i, "non-finite value");
  }
  return PointCloud(static_cast<std::size_t>(k), std::move(values));
}

PointCloud read_bvp(const fs::path& path) { return decode_bvp(read_file(path), path.string()); }
void write_bvp(const fs::path& path, const PointCloud& cloud) { write_file(path, encode_bvp(cloud)); }

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // nlohmann reports the 1-based count of bytes read; point at the byte.
    const std::size_t off = e.byte > 0 ? e.byte - 1 : 0;
    std::string msg = e.what();
    const auto pos = msg.find(": ", msg.find("parse error"));
    throw FormatError(source, off, pos != std::string::npos ? msg.substr(pos + 2) : msg);
  }
}

namespace {

[[noreturn]] void schema_error(const std::string& source, const std::string& where, const std::string& what) {
  throw FormatError(source, FormatError::npos, what, where);
}

const json& field(const json& obj, const char* key, const std::string& source, const std::string& where) {
  if (!obj.is_object()) schema_error(source, where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) schema_error(source, where + "/" + key, "missing field");
  return *it;
}

double number(const json& j, const std::string& source, const std::string& where) {
  if (!j.is_number()) schema_error(source, where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(source, where, "non-finite number");
  return v;
}

double number_field(const json& obj, const char* key, const std::string& source, const std::string& where) {
  return number(field(obj, key, source, where), source, where + "/" + key);
}

std::size_t size_field(const json& obj, const char* key, const std::string& source, const std::string& where) {
  const json& v = field(obj, key, source, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    schema_error(source, where + "/" + key, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

void fmt6(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  out += buf;
}

}  // namespace

json bev_to_json(const BevConfig& bev) {
  json j;
  j["x_min"] = bev.x_min;
  j["x_max"] = bev.x_max;
  j["y_min"] = bev.y_min;
  j["y_max"] = bev.y_max;
  j["pitch"] = bev.pitch;
  return j;
}

BevConfig bev_from_json(const json& j, const std::string& source) {
  return [&] {
    BevConfig b;
    b.x_min = number_field(j, "x_min", source, "");
    b.x_max = number_field(j, "x_max", source, "");
    b.y_min = number_field(j, "y_min", source, "");
    b.y_max = number_field(j, "y_max", source, "");
    b.pitch = number_field(j, "pitch", source, "");
    try {
      b.validate();
    } catch (const std::invalid_argument& e) {
      schema_error(source, "/", e.what());
    }
    return b;
  }();
}

BevConfig read_bev(const fs::path& path) {
  return bev_from_json(parse_json(read_file(path), path.string()), path.string());
}

std::string encode_vector_map(const VectorMap& vm) {
  vm.bev.validate();
  std::string out = "{\"bev\":{\"x_min\":";
  fmt6(out, vm.bev.x_min);
  out += ",\"x_max\":";
  fmt6(out, vm.bev.x_max);
  out += ",\"y_min\":";
  fmt6(out, vm.bev.y_min);
  out += ",\"y_max\":";
  fmt6(out, vm.bev.y_max);
  out += ",\"pitch\":";
  fmt6(out, vm.bev.pitch);
  out += "},\"elements\":[";
  for (std::size_t e = 0; e < vm.elements.size(); ++e) {
    const Polyline& p = vm.elements[e];
    p.validate();
    if (!std::isfinite(p.confidence)) throw std::invalid_argument("encode_vector_map: non-finite confidence");
    out += e == 0 ? "\n" : ",\n";
    out += "{\"class\":\"";
    out += class_name(p.cls);
    out += "\",\"confidence\":";
    fmt6(out, p.confidence);
    out += ",\"points\":[";
    for (std::size_t i = 0; i < p.points.size(); ++i) {
      if (i > 0) out += ",";
      out += "[";
      fmt6(out, p.points[i].x());
      out += ",";
      fmt6(out, p.points[i].y());
      out += "]";
    }
    out += "]}";
  }
  out += vm.elements.empty() ? "]}\n" : "\n]}\n";
  return out;
}

VectorMap decode_vector_map(std::string_view text, const std::string& source) {
  const json j = parse_json(text, source);
  VectorMap vm;
  vm.bev = bev_from_json(field(j, "bev", source, ""), source);
  const json& elements = field(j, "elements", source, "");
  if (!elements.is_array()) schema_error(source, "/elements", "expected an array");
  for (std::size_t e = 0; e < elements.size(); ++e) {
    const std::string where = "/elements/" + std::to_string(e);
    const json& el = elements[e];
    const json& cls = field(el, "class", source, where);
    if (!cls.is_string()) schema_error(source, where + "/class", "expected a string");
    const auto parsed = parse_class(cls.get<std::string>());
    if (!parsed) schema_error(source, where + "/class", "unknown class '" + cls.get<std::string>() + "'");
    Polyline p;
    p.cls = *parsed;
    p.confidence = number_field(el, "confidence", source, where);
    const json& pts = field(el, "points", source, where);
    if (!pts.is_array()) schema_error(source, where + "/points", "expected an array");
    if (pts.size() < 2) schema_error(source, where + "/points", "a polyline needs at least 2 points");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string pw = where + "/points/" + std::to_string(i);
      if (!pts[i].is_array() || pts[i].size() != 2) schema_error(source, pw, "expected [x, y]");
      p.points.emplace_back(number(pts[i][0], source, pw + "/0"), number(pts[i][1], source, pw + "/1"));
    }
    try {
      p.validate();
    } catch (const std::invalid_argument& err) {
      schema_error(source, where, err.what());
    }
    vm.elements.push_back(std::move(p));
  }
  return vm;
}

VectorMap read_vector_map(const fs::path& path) { return decode_vector_map(read_file(path), path.string()); }
void write_vector_map(const fs::path& path, const VectorMap& vm) { write_file(path, encode_vector_map(vm)); }

json camera_to_json(const CameraModel& cam) {
  json j;
  j["name"] = cam.name;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  json r = json::array();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) r.push_back(cam.rotation(a, b));
  }
  j["rotation"] = r;
  j["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
  j["width"] = cam.image_width();
  j["height"] = cam.image_height();
  return j;
}

CameraModel camera_from_json(const json& j, const std::string& source, const std::string& where) {
  CameraModel cam;
  const json& name = field(j, "name", source, where);
  if (!name.is_string()) schema_error(source, where + "/name", "expected a string");
  cam.name = name.get<std::string>();
  cam.fx = number_field(j, "fx", source, where);
  cam.fy = number_field(j, "fy", source, where);
  cam.cx = number_field(j, "cx", source, where);
  cam.cy = number_field(j, "cy", source, where);
  const json& r = field(j, "rotation", source, where);
  if (!r.is_array() || r.size() != 9) schema_error(source, where + "/rotation", "expected 9 numbers");
  for (int k = 0; k < 9; ++k) cam.rotation(k / 3, k % 3) = number(r[k], source, where + "/rotation/" + std::to_string(k));
  const json& t = field(j, "translation", source, where);
  if (!t.is_array() || t.size() != 3) schema_error(source, where + "/translation", "expected 3 numbers");
  for (int k = 0; k < 3; ++k) cam.translation(k) = number(t[k], source, where + "/translation/" + std::to_string(k));
  if (j.contains("width")) cam.width = size_field(j, "width", source, where);
  if (j.contains("height")) cam.height = size_field(j, "height", source, where);
  try {
    cam.validate();
  } catch (const std::invalid_argument& e) {
    schema_error(source, where, e.what());
  }
  return cam;
}

std::vector<CameraModel> rig_from_json(const json& j, const std::string& source) {
  const json* list = &j;
  std::string base;
  if (j.is_object()) {
    list = &field(j, "cameras", source, "");
    base = "/cameras";
  }
  if (!list->is_array() || list->empty()) schema_error(source, base.empty() ? "/" : base, "expected a non-empty camera list");
  std::vector<CameraModel> rig;
  for (std::size_t i = 0; i < list->size(); ++i) {
    rig.push_back(camera_from_json((*list)[i], source, base + "/" + std::to_string(i)));
    for (std::size_t k = 0; k + 1 < rig.size(); ++k) {
      if (rig[k].name == rig.back().name) {
        schema_error(source, base + "/" + std::to_string(i) + "/name", "duplicate camera name");
      }
    }
  }
  return rig;
}

json rig_to_json(const std::vector<CameraModel>& rig) {
  json list = json::array();
  for (const auto& c : rig) list.push_back(camera_to_json(c));
  return json{{"cameras", list}};
}

std::vector<CameraModel> read_rig(const fs::path& path) {
  return rig_from_json(parse_json(read_file(path), path.string()), path.string());
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

Grid2D pack_labels(const LabelPack& labels) {
  labels.validate();
  Grid2D out(labels.rows(), labels.cols(), 3);
  for (std::size_t i = 0; i < labels.semantic.cells(); ++i) {
    const auto s = labels.semantic.cell(i);
    const auto d = labels.direction.cell(i);
    auto o = out.cell(i);
    o[0] = static_cast<double>(std::max_element(s.begin(), s.end()) - s.begin());
    o[1] = static_cast<double>(labels.instance[i]);
    o[2] = -1.0;
    for (std::size_t b = 0; b < d.size(); ++b) {
      if (d[b] == 1.0) {
        o[2] = static_cast<double>(b);
        break;
      }
    }
  }
  return out;
}

LabelPack unpack_labels(const Grid2D& packed, std::size_t num_directions) {
  if (packed.channels() != 3) throw std::invalid_argument("labels grid must have 3 channels");
  if (num_directions == 0 || num_directions % 2 != 0) {
    throw std::invalid_argument("labels: direction count must be even and non-zero");
  }
  LabelPack pack;
  pack.semantic = Grid2D(packed.height(), packed.width(), kNumClasses + 1);
  pack.instance.assign(packed.cells(), 0);
  pack.direction = Grid2D(packed.height(), packed.width(), num_directions);
  for (std::size_t i = 0; i < packed.cells(); ++i) {
    const auto o = packed.cell(i);
    const double cls = o[0], inst = o[1], dir = o[2];
    if (cls < 0 || cls > kNumClasses || cls != std::floor(cls)) {
      throw std::invalid_argument("labels: bad class id at cell " + std::to_string(i));
    }
    if (inst < 0 || inst != std::floor(inst) || inst > 16777216.0) {
      throw std::invalid_argument("labels: bad instance id at cell " + std::to_string(i));
    }
    pack.semantic.cell(i)[static_cast<std::size_t>(cls)] = 1.0;
    pack.instance[i] = static_cast<std::uint32_t>(inst);
    if (dir != -1.0) {
      if (dir < 0 || dir >= static_cast<double>(num_directions / 2) || dir != std::floor(dir)) {
        throw std::invalid_argument("labels: bad direction bin at cell " + std::to_string(i));
      }
      const auto b = static_cast<std::size_t>(dir);
      pack.direction.cell(i)[b] = 1.0;
      pack.direction.cell(i)[b + num_directions / 2] = 1.0;
    }
  }
  pack.validate();
  return pack;
}

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

const Grid2D& Bundle::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.grid;
  }
  throw std::invalid_argument("bundle has no tensor '" + name + "'");
}

void write_bundle(const fs::path& dir, const Bundle& bundle) {
  fs::create_directories(dir);
  json layers = json::array();
  for (const auto& t : bundle.tensors) {
    const std::string file = t.name + ".bvg";
    write_bvg(dir / file, t.grid);
    layers.push_back({{"name", t.name},
                      {"file", file},
                      {"shape", {t.grid.height(), t.grid.width(), t.grid.channels()}}});
  }
  json manifest;
  manifest["format"] = "hdmap-bundle-1";
  manifest["seed"] = bundle.seed;
  manifest["config"] = bundle.config;
  manifest["layers"] = layers;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Bundle read_bundle(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const std::string source = mpath.string();
  const json m = parse_json(read_file(mpath), source);
  const json& format = field(m, "format", source, "");
  if (format != "hdmap-bundle-1") schema_error(source, "/format", "unsupported bundle format");
  Bundle b;
  const json& seed = field(m, "seed", source, "");
  if (!seed.is_number_unsigned()) schema_error(source, "/seed", "expected an unsigned integer");
  b.seed = seed.get<std::uint64_t>();
  b.config = field(m, "config", source, "");
  const json& layers = field(m, "layers", source, "");
  if (!layers.is_array()) schema_error(source, "/layers", "expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "/layers/" + std::to_string(i);
    const json& name = field(layers[i], "name", source, where);
    const json& file = field(layers[i], "file", source, where);
    const json& shape = field(layers[i], "shape", source, where);
    if (!name.is_string() || !file.is_string()) schema_error(source, where, "name and file must be strings");
    Grid2D g = read_bvg(dir / file.get<std::string>());
    if (!shape.is_array() || shape.size() != 3 || shape[0] != g.height() || shape[1] != g.width() ||
        shape[2] != g.channels()) {
      schema_error(source, where + "/shape", "does not match " + file.get<std::string>());
    }
    b.tensors.push_back({name.get<std::string>(), std::move(g)});
  }
  return b;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

namespace {

json spec_to_json(const SceneSpec& s) {
  json j;
  j["lanes_min"] = s.lanes_min;
  j["lanes_max"] = s.lanes_max;
  j["curvature_max"] = s.curvature_max;
  j["lane_width"] = s.lane_width;
  j["crossing_probability"] = s.crossing_probability;
  j["point_density"] = s.point_density;
  j["boundary_bump"] = s.boundary_bump;
  j["lateral_jitter"] = s.lateral_jitter;
  j["heading_jitter"] = s.heading_jitter;
  j["point_noise"] = s.point_noise;
  j["image_noise"] = s.image_noise;
  j["point_features"] = s.point_features;
  return j;
}

SceneSpec spec_from_json(const json& j, const std::string& source) {
  const std::string w = "/spec";
  SceneSpec s;
  s.lanes_min = size_field(j, "lanes_min", source, w);
  s.lanes_max = size_field(j, "lanes_max", source, w);
  s.curvature_max = number_field(j, "curvature_max", source, w);
  s.lane_width = number_field(j, "lane_width", source, w);
  s.crossing_probability = number_field(j, "crossing_probability", source, w);
  s.point_density = number_field(j, "point_density", source, w);
  s.boundary_bump = number_field(j, "boundary_bump", source, w);
  s.lateral_jitter = number_field(j, "lateral_jitter", source, w);
  s.heading_jitter = number_field(j, "heading_jitter", source, w);
  s.point_noise = number_field(j, "point_noise", source, w);
  s.image_noise = number_field(j, "image_noise", source, w);
  s.point_features = size_field(j, "point_features", source, w);
  return s;
}

}  // namespace

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format"] = "hdmap-dataset-1";
  j["scenes"] = m.scenes;
  j["seed"] = m.seed;
  j["bev"] = bev_to_json(m.bev);
  j["rig"] = rig_to_json(m.rig)["cameras"];
  j["spec"] = spec_to_json(m.spec);
  j["style"] = {{"thickness", m.style.thickness},
                {"num_directions", m.style.num_directions},
                {"direction_step", m.style.direction_step}};
  return j;
}

void write_manifest(const fs::path& root, const DatasetManifest& m) {
  write_file(root / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  const std::string source = path.string();
  const json j = parse_json(read_file(path), source);
  if (field(j, "format", source, "") != "hdmap-dataset-1") schema_error(source, "/format", "unsupported dataset format");
  DatasetManifest m;
  m.scenes = size_field(j, "scenes", source, "");
  const json& seed = field(j, "seed", source, "");
  if (!seed.is_number_unsigned()) schema_error(source, "/seed", "expected an unsigned integer");
  m.seed = seed.get<std::uint64_t>();
  m.bev = bev_from_json(field(j, "bev", source, ""), source);
  m.rig = rig_from_json(field(j, "rig", source, ""), source);
  m.spec = spec_from_json(field(j, "spec", source, ""), source);
  const json& style = field(j, "style", source, "");
  const json& th = field(style, "thickness", source, "/style");
  if (!th.is_array() || th.size() != kNumClasses) schema_error(source, "/style/thickness", "expected one value per class");
  for (std::size_t i = 0; i < kNumClasses; ++i) m.style.thickness[i] = th[i].get<std::size_t>();
  m.style.num_directions = size_field(style, "num_directions", source, "/style");
  m.style.direction_step = number_field(style, "direction_step", source, "/style");
  return m;
}

fs::path scene_dir(const fs::path& root, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu", index);
  return root / buf;
}

void write_scene(const fs::path& root, std::size_t index, const Scene& scene,
                 const DatasetManifest& manifest, std::uint64_t scene_seed) {
  const fs::path dir = scene_dir(root, index);
  fs::create_directories(dir);
  write_vector_map(dir / "map.json", scene.map);
  write_bvg(dir / "labels.bvg", pack_labels(scene.labels));
  for (std::size_t c = 0; c < manifest.rig.size(); ++c) {
    write_bvg(dir / ("cam_" + manifest.rig[c].name + ".bvg"), scene.cameras.at(c));
  }
  write_bvp(dir / "points.bvp", scene.points);
  json meta;
  meta["index"] = index;
  meta["seed"] = scene_seed;
  meta["bev"] = bev_to_json(manifest.bev);
  json cams = json::array();
  for (const auto& c : manifest.rig) cams.push_back(c.name);
  meta["cameras"] = cams;
  meta["elements"] = scene.map.elements.size();
  meta["points"] = scene.points.size();
  meta["point_features"] = scene.points.extra();
  meta["num_directions"] = manifest.style.num_directions;
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

DatasetManifest generate_dataset(const fs::path& root, std::size_t count, std::uint64_t seed,
                                 const BevConfig& bev, const std::vector<CameraModel>& rig,
                                 const SceneSpec& spec, const RasterStyle& style) {
  DatasetManifest m;
  m.scenes = count;
  m.seed = seed;
  m.bev = bev;
  m.rig = rig;
  m.spec = spec;
  m.style = style;
  fs::create_directories(root);
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec s = spec;
    s.seed = scene_seed(seed, i);
    write_scene(root, i, gen_scene(s, bev, rig, style), m, s.seed);
  }
  write_manifest(root, m);
  return m;
}

SceneFiles read_scene(const fs::path& root, std::size_t index, const DatasetManifest& manifest) {
  const fs::path dir = scene_dir(root, index);
  SceneFiles s;
  s.map = read_vector_map(dir / "map.json");
  const fs::path lpath = dir / "labels.bvg";
  const Grid2D packed = read_bvg(lpath);
  if (packed.height() != manifest.bev.rows() || packed.width() != manifest.bev.cols()) {
    throw FormatError(lpath.string(), FormatError::npos, "label raster does not match the dataset BEV");
  }
  try {
    s.labels = unpack_labels(packed, manifest.style.num_directions);
  } catch (const std::invalid_argument& e) {
    throw FormatError(lpath.string(), FormatError::npos, e.what());
  }
  for (const auto& cam : manifest.rig) {
    const fs::path cpath = dir / ("cam_" + cam.name + ".bvg");
    Grid2D img = read_bvg(cpath);
    if (img.height() != cam.image_height() || img.width() != cam.image_width()) {
      throw FormatError(cpath.string(), FormatError::npos, "image size does not match the rig");
    }
    s.cameras.push_back(std::move(img));
  }
  s.points = read_bvp(dir / "points.bvp");
  const fs::path mpath = dir / "meta.json";
  s.meta = parse_json(read_file(mpath), mpath.string());
  return s;
}

}  // namespace hdmap

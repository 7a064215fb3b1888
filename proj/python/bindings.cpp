#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hdmap/bevnet.hpp"
#include "hdmap/geometry.hpp"
#include "hdmap/io.hpp"
#include "hdmap/metrics.hpp"
#include "hdmap/pillars.hpp"
#include "hdmap/synth.hpp"
#include "hdmap/training.hpp"
#include "hdmap/vectorize.hpp"

namespace py = pybind11;
using namespace hdmap;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W, C) or (H, W) array to Grid2D.
Grid2D to_grid(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("expected a 2-D or 3-D array");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  const auto c = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
  return Grid2D(h, w, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_grid(const Grid2D& g) {
  Array out({g.height(), g.width(), g.channels()});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

std::vector<std::uint32_t> to_ids(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(a.size()));
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] < 0) throw std::invalid_argument("instance ids must be non-negative");
    out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(a.data()[i]);
  }
  return out;
}

PointSet to_points(const Array& a) {
  if (a.size() == 0) return {};
  if (a.ndim() != 2 || a.shape(1) != 2) throw std::invalid_argument("expected an (N, 2) array");
  PointSet out;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out.emplace_back(a.at(i, 0), a.at(i, 1));
  return out;
}

Array from_points(const PointSet& pts) {
  Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.mutable_at(static_cast<py::ssize_t>(i), 0) = pts[i].x();
    out.mutable_at(static_cast<py::ssize_t>(i), 1) = pts[i].y();
  }
  return out;
}

PointCloud to_cloud(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) < 3) throw std::invalid_argument("expected an (N, 3 + K) array");
  return PointCloud(static_cast<std::size_t>(a.shape(1)) - 3, std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict labels_dict(const LabelPack& l) {
  py::dict d;
  d["semantic"] = from_grid(l.semantic);
  py::array_t<std::uint32_t> ids({l.rows(), l.cols()});
  std::copy(l.instance.begin(), l.instance.end(), ids.mutable_data());
  d["instance"] = ids;
  d["direction"] = from_grid(l.direction);
  return d;
}

}  // namespace

PYBIND11_MODULE(_hdmap, m) {
  m.doc() = "HD map learning toolkit: geometry, losses, vectorization and metrics";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::enum_<ElementClass>(m, "ElementClass")
      .value("divider", ElementClass::kDivider)
      .value("ped_crossing", ElementClass::kPedCrossing)
      .value("boundary", ElementClass::kBoundary);

  py::class_<BevConfig>(m, "BevConfig")
      .def(py::init<>())
      .def(py::init([](double x_min, double x_max, double y_min, double y_max, double pitch) {
             BevConfig b{x_min, x_max, y_min, y_max, pitch};
             b.validate();
             return b;
           }),
           py::arg("x_min"), py::arg("x_max"), py::arg("y_min"), py::arg("y_max"), py::arg("pitch"))
      .def_readwrite("x_min", &BevConfig::x_min)
      .def_readwrite("x_max", &BevConfig::x_max)
      .def_readwrite("y_min", &BevConfig::y_min)
      .def_readwrite("y_max", &BevConfig::y_max)
      .def_readwrite("pitch", &BevConfig::pitch)
      .def_property_readonly("rows", &BevConfig::rows)
      .def_property_readonly("cols", &BevConfig::cols)
      .def("cell_center", &BevConfig::cell_center)
      .def("__eq__", [](const BevConfig& a, const BevConfig& b) { return a == b; })
      .def("__repr__", [](const BevConfig& b) {
        return "BevConfig(" + std::to_string(b.x_min) + ", " + std::to_string(b.x_max) + ", " +
               std::to_string(b.y_min) + ", " + std::to_string(b.y_max) + ", " + std::to_string(b.pitch) + ")";
      });

  py::class_<CameraModel>(m, "CameraModel")
      .def(py::init<>())
      .def_readwrite("name", &CameraModel::name)
      .def_readwrite("fx", &CameraModel::fx)
      .def_readwrite("fy", &CameraModel::fy)
      .def_readwrite("cx", &CameraModel::cx)
      .def_readwrite("cy", &CameraModel::cy)
      .def_readwrite("rotation", &CameraModel::rotation)
      .def_readwrite("translation", &CameraModel::translation)
      .def_readwrite("width", &CameraModel::width)
      .def_readwrite("height", &CameraModel::height)
      .def("validate", &CameraModel::validate);

  m.def("camera_rotation", &camera_rotation, py::arg("yaw"), py::arg("pitch_down"));
  m.def("default_rig", &default_rig);
  m.def(
      "project",
      [](const CameraModel& cam, const Eigen::Vector3d& p) -> std::optional<Eigen::Vector2d> {
        const PixelProjection px = project_ego_to_pixel(cam, p);
        if (!px.in_front) return std::nullopt;
        return Eigen::Vector2d(px.u, px.v);
      },
      py::arg("camera"), py::arg("point"), "Pixel (u, v) of an ego point, or None behind the camera.");
  m.def("ipm", &ipm_pixel_to_ground, py::arg("camera"), py::arg("u"), py::arg("v"),
        "Ground point (x, y) seen at a pixel, or None above the horizon.");
  m.def(
      "ipm_warp",
      [](const CameraModel& cam, const Array& image, const BevConfig& bev) {
        const MaskedGrid w = ipm_warp_grid(cam, to_grid(image), bev);
        py::array_t<std::uint8_t> valid({bev.rows(), bev.cols()});
        std::copy(w.valid.begin(), w.valid.end(), valid.mutable_data());
        return py::make_tuple(from_grid(w.grid), valid);
      },
      py::arg("camera"), py::arg("image"), py::arg("bev"));

  m.def(
      "pillar_features",
      [](const Array& points, const BevConfig& bev, std::size_t width, std::uint64_t seed) {
        const PointCloud cloud = to_cloud(points);
        std::mt19937_64 rng(seed);
        const std::size_t sizes[2] = {pillar_input_size(cloud.extra()), width};
        const Activation acts[1] = {Activation::kRelu};
        const DenseNet pn = make_dense_net(sizes, acts, rng);
        return from_grid(aggregate_pillars(voxelize_dynamic(cloud, bev), cloud, pn));
      },
      py::arg("points"), py::arg("bev"), py::arg("width") = 16, py::arg("seed") = 0,
      "Max-pooled pillar features from a seeded point net.");

  m.def(
      "discriminative_loss",
      [](const Array& emb, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& ids,
         double alpha, double beta, double delta_v, double delta_d) {
        const LossWeights w{alpha, beta, delta_v, delta_d};
        w.validate();
        const DiscriminativeTerms t = discriminative_loss(to_grid(emb), to_ids(ids), w);
        py::dict d;
        d["total"] = t.total;
        d["variance"] = t.variance;
        d["distance"] = t.distance;
        d["gradient"] = from_grid(t.gradient);
        return d;
      },
      py::arg("embeddings"), py::arg("instance"), py::arg("alpha") = 1.0, py::arg("beta") = 1.0,
      py::arg("delta_v") = 0.5, py::arg("delta_d") = 3.0);
  m.def(
      "direction_loss",
      [](const Array& logits, const Array& labels) {
        const LossResult r = direction_loss(to_grid(logits), to_grid(labels));
        return py::make_tuple(r.loss, from_grid(r.gradient));
      },
      py::arg("logits"), py::arg("labels"));
  m.def("direction_bin", &direction_bin, py::arg("theta"), py::arg("num_dirs"));

  m.def(
      "vectorize",
      [](const Array& seg, const Array& emb, const Array& dir, const BevConfig& bev, double threshold, double eps,
         std::size_t min_pts) {
        VectorizeParams p;
        p.foreground_threshold = threshold;
        p.eps = eps;
        p.min_pts = min_pts;
        return encode_vector_map(vectorize(to_grid(seg), to_grid(emb), to_grid(dir), bev, p));
      },
      py::arg("seg"), py::arg("embedding"), py::arg("direction"), py::arg("bev"), py::arg("threshold") = 0.5,
      py::arg("eps") = 1.0, py::arg("min_pts") = 3, "Dense grids to a VectorMap JSON document.");

  m.def(
      "iou", [](const Array& pred, const Array& gt) { return iou(to_grid(pred), to_grid(gt)); }, py::arg("pred"),
      py::arg("gt"));
  m.def(
      "chamfer_directed",
      [](const Array& a, const Array& b, double cap) { return chamfer_directed(to_points(a), to_points(b), cap); },
      py::arg("a"), py::arg("b"), py::arg("cap"));
  m.def(
      "chamfer",
      [](const Array& a, const Array& b, double cap) {
        const Chamfer c = chamfer(to_points(a), to_points(b), cap);
        return py::make_tuple(c.average, c.sum);
      },
      py::arg("a"), py::arg("b"), py::arg("cap"), "(average, sum) of the two directed distances.");
  m.def(
      "sample_polyline",
      [](const Array& pts, double spacing) {
        return from_points(sample_polyline(Polyline{ElementClass::kDivider, to_points(pts), 1.0}, spacing));
      },
      py::arg("points"), py::arg("spacing"));
  m.def(
      "average_precision",
      [](const std::string& pred_json, const std::string& gt_json, const std::string& cls, double threshold,
         double spacing) {
        const auto c = parse_class(cls);
        if (!c) throw std::invalid_argument("unknown class '" + cls + "'");
        std::vector<Polyline> p, g;
        for (auto& e : decode_vector_map(pred_json).elements) {
          if (e.cls == *c) p.push_back(e);
        }
        for (auto& e : decode_vector_map(gt_json).elements) {
          if (e.cls == *c) g.push_back(e);
        }
        const ApResult r = average_precision(p, g, threshold, spacing);
        return py::make_tuple(r.ap, r.no_gt);
      },
      py::arg("pred"), py::arg("gt"), py::arg("cls"), py::arg("threshold"), py::arg("spacing") = 0.15,
      "AP of one class between two VectorMap JSON documents; returns (ap, no_gt).");
  m.def(
      "evaluate",
      [](const std::string& pred_json, const std::string& gt_json, std::vector<double> thresholds) {
        EvalOptions o;
        o.thresholds = std::move(thresholds);
        return report_to_json(evaluate(decode_vector_map(pred_json), decode_vector_map(gt_json), o));
      },
      py::arg("pred"), py::arg("gt"), py::arg("thresholds") = std::vector<double>{0.2, 0.5, 1.0},
      "Metrics report JSON for one scene.");

  m.def(
      "gen_scene",
      [](std::uint64_t seed, const BevConfig& bev, bool cameras) {
        SceneSpec spec;
        spec.seed = seed;
        const auto rig = cameras ? default_rig() : std::vector<CameraModel>{};
        const Scene s = gen_scene(spec, bev, rig);
        py::dict d;
        d["map"] = encode_vector_map(s.map);
        d["labels"] = labels_dict(s.labels);
        Array pts({static_cast<py::ssize_t>(s.points.size()), static_cast<py::ssize_t>(s.points.stride())});
        std::copy(s.points.values().begin(), s.points.values().end(), pts.mutable_data());
        d["points"] = pts;
        py::list cams;
        for (const auto& c : s.cameras) cams.append(from_grid(c));
        d["cameras"] = cams;
        return d;
      },
      py::arg("seed"), py::arg("bev") = BevConfig{}, py::arg("cameras") = true);
  m.def(
      "ideal_grids",
      [](const std::string& map_json, const BevConfig& bev, std::size_t embedding_dim, double delta_d) {
        VectorMap vm = decode_vector_map(map_json);
        const IdealGrids g = ideal_grids(rasterize_vector_map(vm, bev), embedding_dim, delta_d);
        return py::make_tuple(from_grid(g.seg), from_grid(g.embedding), from_grid(g.direction));
      },
      py::arg("map"), py::arg("bev"), py::arg("embedding_dim") = 16, py::arg("delta_d") = 3.0,
      "(seg, embedding, direction) grids a perfect network would output for a map.");

  m.def(
      "encode_bvg", [](const Array& a) { return py::bytes(encode_bvg(to_grid(a))); }, py::arg("grid"));
  m.def(
      "decode_bvg", [](const py::bytes& b) { return from_grid(decode_bvg(std::string(b))); }, py::arg("data"));
  m.def(
      "encode_bvp", [](const Array& a) { return py::bytes(encode_bvp(to_cloud(a))); }, py::arg("points"));
  m.def(
      "decode_bvp",
      [](const py::bytes& b) {
        const PointCloud pc = decode_bvp(std::string(b));
        Array out({static_cast<py::ssize_t>(pc.size()), static_cast<py::ssize_t>(pc.stride())});
        std::copy(pc.values().begin(), pc.values().end(), out.mutable_data());
        return out;
      },
      py::arg("data"));

  m.def(
      "train_toy",
      [](const std::filesystem::path& dataset, std::uint64_t seed, std::size_t steps, const std::string& vt_init) {
        TrainConfig c;
        c.seed = seed;
        c.steps = steps;
        c.model.vt_init = vt_init;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_toy(dataset, c);
        }
        py::dict d;
        d["initial_loss"] = r.initial_loss;
        d["final_loss"] = r.final_loss;
        std::vector<double> trace;
        for (const auto& rec : r.trace) trace.push_back(rec.loss.total);
        d["trace"] = trace;
        return d;
      },
      py::arg("dataset"), py::arg("seed") = 0, py::arg("steps") = 2000, py::arg("vt_init") = "random",
      "Trains the toy model on a synthetic dataset directory and returns its loss trace.");
  m.def(
      "generate_dataset",
      [](const std::filesystem::path& root, std::size_t count, std::uint64_t seed, const BevConfig& bev) {
        generate_dataset(root, count, seed, bev, default_rig());
      },
      py::arg("root"), py::arg("count"), py::arg("seed"), py::arg("bev") = BevConfig{});
}

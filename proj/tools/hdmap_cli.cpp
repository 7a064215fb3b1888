// hdmap: command-line front end for the map learning toolkit.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hdmap/geometry.hpp"
#include "hdmap/io.hpp"
#include "hdmap/metrics.hpp"
#include "hdmap/svg.hpp"
#include "hdmap/synth.hpp"
#include "hdmap/training.hpp"
#include "hdmap/vectorize.hpp"

namespace fs = std::filesystem;
using namespace hdmap;

namespace {

struct Globals {
  std::string bev;
  std::string rig;
  std::optional<std::uint64_t> seed;
  std::string out;
};

BevConfig bev_or_default(const Globals& g, BevConfig fallback = {}) {
  return g.bev.empty() ? fallback : read_bev(g.bev);
}

std::vector<CameraModel> rig_or_default(const Globals& g) {
  return g.rig.empty() ? default_rig() : read_rig(g.rig);
}

fs::path require_out(const Globals& g, const char* cmd) {
  if (g.out.empty()) throw CLI::ValidationError(std::string(cmd) + ": --out is required");
  return g.out;
}

std::uint64_t require_seed(const Globals& g, const char* cmd) {
  if (!g.seed) throw CLI::ValidationError(std::string(cmd) + ": --seed is required");
  return *g.seed;
}

// Scenes under a dataset-like directory, in index order.
std::vector<fs::path> scene_dirs(const fs::path& root) {
  std::vector<fs::path> out;
  for (std::size_t i = 0;; ++i) {
    const fs::path d = scene_dir(root, i);
    if (!fs::is_directory(d)) break;
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Globals& g, std::size_t n, const SceneSpec& spec_in) {
  const fs::path out = require_out(g, "synth");
  SceneSpec spec = spec_in;
  spec.seed = require_seed(g, "synth");
  fs::create_directories(out);
  const DatasetManifest m = generate_dataset(out, n, spec.seed, bev_or_default(g), rig_or_default(g), spec);
  std::size_t elements = 0;
  for (std::size_t i = 0; i < n; ++i) elements += read_vector_map(scene_dir(out, i) / "map.json").elements.size();
  std::printf("synth: %zu scene(s), %zu element(s), %zu camera(s), BEV %zux%zu -> %s\n", m.scenes, elements,
              m.rig.size(), m.bev.rows(), m.bev.cols(), out.string().c_str());
  return 0;
}

int cmd_train(const Globals& g, const fs::path& data, TrainConfig cfg, const std::string& holdout) {
  const fs::path out = require_out(g, "train");
  cfg.seed = require_seed(g, "train");
  if (!g.bev.empty()) cfg.model.bev = read_bev(g.bev);
  fs::create_directories(out);
  const TrainResult r = train_toy(data, cfg, [&](const LossRecord& rec) {
    if (cfg.log_every > 0 && (rec.step % cfg.log_every == 0 || rec.step + 1 == cfg.steps)) {
      std::printf("step %5zu  loss %.5f  (seg %.5f  emb %.5f  dir %.5f)\n", rec.step, rec.loss.total, rec.loss.seg,
                  rec.loss.embedding, rec.loss.direction);
      std::fflush(stdout);
    }
  });
  save_model(out / "model", r.model, cfg.seed);
  write_file(out / "loss.csv", loss_trace_csv(r.trace));
  nlohmann::ordered_json summary;
  summary["steps"] = cfg.steps;
  summary["seed"] = cfg.seed;
  summary["lr"] = cfg.lr;
  summary["initial_loss"] = r.initial_loss;
  summary["final_loss"] = r.final_loss;
  if (!holdout.empty()) {
    const auto samples = load_samples(holdout, r.model);
    const auto ious = segmentation_iou(r.model, samples);
    nlohmann::ordered_json j;
    for (ElementClass cls : kAllClasses) j[std::string(class_name(cls))] = ious[class_index(cls)];
    summary["holdout_iou"] = j;
    std::printf("held-out IoU: divider %.4f  ped_crossing %.4f  boundary %.4f\n", ious[0], ious[1], ious[2]);
  }
  write_file(out / "train.json", summary.dump(2) + "\n");
  std::printf("train: loss %.5f -> %.5f, model written to %s\n", r.initial_loss, r.final_loss,
              (out / "model").string().c_str());
  return 0;
}

int cmd_infer(const Globals& g, const fs::path& model_dir, const fs::path& data) {
  const fs::path out = require_out(g, "infer");
  const Model model = load_model(model_dir);
  const DatasetManifest manifest = read_manifest(data);
  fs::create_directories(out);
  for (std::size_t i = 0; i < manifest.scenes; ++i) {
    const SceneFiles s = read_scene(data, i, manifest);
    const Prediction p = predict(model, make_input(model, s.cameras, s.points));
    const fs::path d = scene_dir(out, i);
    fs::create_directories(d);
    write_bvg(d / "seg.bvg", p.seg);
    write_bvg(d / "emb.bvg", p.embedding);
    write_bvg(d / "dir.bvg", p.direction);
    write_file(d / "bev.json", bev_to_json(model.config.bev).dump(2) + "\n");
  }
  std::printf("infer: %zu scene(s) -> %s\n", manifest.scenes, out.string().c_str());
  return 0;
}

// Vectorizes one folder of grids (seg/emb/dir.bvg) or, with `ideal`, the
// ideal grids derived from a scene's labels.
void vectorize_one(const Globals& g, const fs::path& in, const fs::path& out, bool ideal,
                   const VectorizeParams& params, std::size_t emb_dim, double delta_d) {
  Grid2D seg, emb, dir;
  BevConfig bev;
  std::optional<VectorMap> reference;
  if (ideal) {
    const nlohmann::json meta = parse_json(read_file(in / "meta.json"), (in / "meta.json").string());
    bev = bev_from_json(meta.at("bev"), (in / "meta.json").string());
    const LabelPack labels = unpack_labels(read_bvg(in / "labels.bvg"), meta.at("num_directions").get<std::size_t>());
    const IdealGrids ig = ideal_grids(labels, emb_dim, delta_d);
    seg = ig.seg;
    emb = ig.embedding;
    dir = ig.direction;
    reference = read_vector_map(in / "map.json");
  } else {
    bev = !g.bev.empty() ? read_bev(g.bev) : read_bev(in / "bev.json");
    seg = read_bvg(in / "seg.bvg");
    emb = read_bvg(in / "emb.bvg");
    dir = read_bvg(in / "dir.bvg");
  }
  VectorizeStats stats;
  const VectorMap vm = vectorize(seg, emb, dir, bev, params, &stats);
  fs::create_directories(out);
  write_vector_map(out / "map.json", vm);
  write_file(out / "map.svg", render_svg(vm, reference ? &*reference : nullptr));
  std::printf("vectorize: %s -> %zu element(s) (%zu cluster(s), %zu noise point(s), %zu dropped)\n",
              in.string().c_str(), vm.elements.size(), stats.clusters, stats.noise_points, stats.dropped);
}

int cmd_vectorize(const Globals& g, const fs::path& in, bool ideal, const VectorizeParams& params,
                  std::size_t emb_dim, double delta_d) {
  const fs::path out = require_out(g, "vectorize");
  const auto scenes = scene_dirs(in);
  if (scenes.empty()) {
    vectorize_one(g, in, out, ideal, params, emb_dim, delta_d);
    return 0;
  }
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    vectorize_one(g, scenes[i], scene_dir(out, i), ideal, params, emb_dim, delta_d);
  }
  return 0;
}

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw CLI::ValidationError("--thresholds: cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--thresholds: empty list");
  return out;
}

int cmd_eval(const Globals& g, const fs::path& pred, const fs::path& gt, const std::string& thresholds) {
  EvalOptions opts;
  opts.thresholds = parse_thresholds(thresholds);
  Evaluator ev(opts);
  auto map_file = [](const fs::path& p) { return fs::is_directory(p) ? p / "map.json" : p; };
  const auto gt_scenes = fs::is_directory(gt) ? scene_dirs(gt) : std::vector<fs::path>{};
  if (gt_scenes.empty()) {
    VectorMap p = read_vector_map(map_file(pred));
    const VectorMap t = read_vector_map(map_file(gt));
    ev.add_scene(p, t);
  } else {
    for (std::size_t i = 0; i < gt_scenes.size(); ++i) {
      const fs::path pfile = scene_dir(pred, i) / "map.json";
      if (!fs::exists(pfile)) throw std::runtime_error(pfile.string() + ": missing prediction for scene");
      const VectorMap t = read_vector_map(gt_scenes[i] / "map.json");
      VectorMap p = read_vector_map(pfile);
      // Predictions on a coarser raster are compared in metres against the
      // labels' extent.
      if (!(p.bev == t.bev)) {
        if (p.bev.x_min != t.bev.x_min || p.bev.x_max != t.bev.x_max || p.bev.y_min != t.bev.y_min ||
            p.bev.y_max != t.bev.y_max) {
          throw std::runtime_error(pfile.string() + ": BEV extent differs from the labels");
        }
        p.bev = t.bev;
      }
      ev.add_scene(p, t);
    }
  }
  const MetricsReport r = ev.report();
  std::cout << report_to_text(r);
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    write_file(fs::path(g.out) / "report.json", report_to_json(r));
    write_file(fs::path(g.out) / "report.txt", report_to_text(r));
  }
  return 0;
}

int cmd_ipm(const Globals& g, const fs::path& scene) {
  const fs::path out = require_out(g, "ipm");
  const BevConfig bev = bev_or_default(g);
  const auto rig = rig_or_default(g);
  fs::create_directories(out);
  std::vector<MaskedGrid> views;
  for (const auto& cam : rig) {
    const Grid2D img = read_bvg(scene / ("cam_" + cam.name + ".bvg"));
    views.push_back(ipm_warp_grid(cam, img, bev));
    write_bvg(out / ("ipm_" + cam.name + ".bvg"), views.back().grid);
  }
  write_bvg(out / "ipm.bvg", fuse_cameras(views));
  std::printf("ipm: fused %zu camera(s) onto a %zux%zu BEV -> %s\n", rig.size(), bev.rows(), bev.cols(),
              out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HD map learning toolkit: synthetic data, training, vectorization and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--bev", g.bev, "BEV config JSON {x_min, x_max, y_min, y_max, pitch}");
  app.add_option("--rig", g.rig, "camera rig JSON");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--out", g.out, "output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::size_t n = 1;
  SceneSpec spec;
  synth->add_option("--n", n, "number of scenes")->capture_default_str();
  synth->add_option("--lanes-min", spec.lanes_min)->capture_default_str();
  synth->add_option("--lanes-max", spec.lanes_max)->capture_default_str();
  synth->add_option("--crossing-prob", spec.crossing_probability)->capture_default_str();
  synth->add_option("--curvature-max", spec.curvature_max)->capture_default_str();
  synth->add_option("--point-density", spec.point_density)->capture_default_str();

  auto* train = app.add_subcommand("train", "train the toy model on a dataset");
  std::string data, holdout;
  TrainConfig tcfg;
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--steps", tcfg.steps)->capture_default_str();
  train->add_option("--lr", tcfg.lr)->capture_default_str();
  train->add_option("--vt-init", tcfg.model.vt_init, "view transformer init: random or ipm")->capture_default_str();
  train->add_option("--holdout", holdout, "dataset used to report held-out IoU");
  train->add_option("--log-every", tcfg.log_every)->capture_default_str();
  bool no_camera = false, no_lidar = false;
  train->add_flag("--no-camera", no_camera, "disable the camera branch");
  train->add_flag("--no-lidar", no_lidar, "disable the point cloud branch");
  bool joint_encoder = false, shared_trunk = false;
  train->add_flag("--joint-encoder", joint_encoder, "let every head's loss train the view transformer and pillar net");
  train->add_flag("--shared-trunk", shared_trunk, "one decoder trunk for all heads (implies --joint-encoder)");

  auto* infer = app.add_subcommand("infer", "run a trained model over a dataset");
  std::string model_dir, infer_data;
  infer->add_option("--model", model_dir, "model bundle directory")->required();
  infer->add_option("--data", infer_data, "dataset directory")->required();

  auto* vec = app.add_subcommand("vectorize", "turn dense predictions into polylines");
  std::string vec_in;
  bool ideal = false;
  VectorizeParams vparams;
  std::size_t emb_dim = 16;
  double delta_d = 3.0;
  vec->add_option("--in", vec_in, "grid folder, scene folder or dataset")->required();
  vec->add_flag("--ideal", ideal, "use ideal grids derived from scene labels");
  vec->add_option("--eps", vparams.eps)->capture_default_str();
  vec->add_option("--min-pts", vparams.min_pts)->capture_default_str();
  vec->add_option("--step", vparams.step, "connection step in pixels")->capture_default_str();
  vec->add_option("--threshold", vparams.foreground_threshold)->capture_default_str();

  auto* eval = app.add_subcommand("eval", "evaluate predicted maps against labels");
  std::string pred, gt, thresholds = "0.2,0.5,1.0";
  eval->add_option("--pred", pred, "prediction map.json or folder")->required();
  eval->add_option("--gt", gt, "label map.json or folder")->required();
  eval->add_option("--thresholds", thresholds, "comma separated CD thresholds in metres")->capture_default_str();

  auto* ipm = app.add_subcommand("ipm", "IPM baseline: warp camera renders onto the ground plane");
  std::string ipm_scene;
  ipm->add_option("--scene", ipm_scene, "scene folder with cam_<name>.bvg files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*synth) return cmd_synth(g, n, spec);
    if (*train) {
      tcfg.model.use_camera = !no_camera;
      tcfg.model.use_lidar = !no_lidar;
      if (shared_trunk) tcfg.model.decoder_branches = 1;
      tcfg.encoder_from_segmentation = !(joint_encoder || shared_trunk);
      return cmd_train(g, data, tcfg, holdout);
    }
    if (*infer) return cmd_infer(g, model_dir, infer_data);
    if (*vec) return cmd_vectorize(g, vec_in, ideal, vparams, emb_dim, delta_d);
    if (*eval) return cmd_eval(g, pred, gt, thresholds);
    if (*ipm) return cmd_ipm(g, ipm_scene);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "hdmap: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "hdmap: malformed input: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hdmap: %s\n", e.what());
    return 1;
  }
  return 0;
}

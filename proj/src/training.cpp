#include "hdmap/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "hdmap/metrics.hpp"
#include "hdmap/synth.hpp"

namespace hdmap {

namespace fs = std::filesystem;
using nlohmann::json;

void ModelConfig::validate() const {
  bev.validate();
  if (encoder_factor == 0) throw std::invalid_argument("model: encoder_factor must be >= 1");
  if (vt_init != "random" && vt_init != "ipm") throw std::invalid_argument("model: vt_init must be 'random' or 'ipm'");
  if (vt_init == "random" && vt_hidden == 0) throw std::invalid_argument("model: vt_hidden must be >= 1");
  if (pillar_width == 0 || decoder_width == 0 || embedding_dim == 0) {
    throw std::invalid_argument("model: layer widths must be >= 1");
  }
  if (decoder_branches != 1 && decoder_branches != 3) throw std::invalid_argument("model: decoder_branches must be 1 or 3");
  if (num_directions < 2 || num_directions % 2 != 0) {
    throw std::invalid_argument("model: num_directions must be even and >= 2");
  }
  if (!(direction_step > 0.0)) throw std::invalid_argument("model: direction_step must be positive");
  if (!use_camera && !use_lidar) throw std::invalid_argument("model: enable at least one of camera, lidar");
  (void)topdown.rows();
}

std::size_t ModelConfig::decoder_inputs() const {
  return (use_camera ? image_channels() : 0) + (use_lidar ? pillar_width : 0);
}

json model_config_to_json(const ModelConfig& c) {
  json j;
  j["bev"] = bev_to_json(c.bev);
  j["topdown"] = {{"forward_min", c.topdown.forward_min}, {"forward_max", c.topdown.forward_max},
                  {"left_min", c.topdown.left_min},       {"left_max", c.topdown.left_max},
                  {"pitch", c.topdown.pitch}};
  j["encoder_factor"] = c.encoder_factor;
  j["vt_hidden"] = c.vt_hidden;
  j["vt_init"] = c.vt_init;
  j["pillar_width"] = c.pillar_width;
  j["point_features"] = c.point_features;
  j["decoder_width"] = c.decoder_width;
  j["decoder_depth"] = c.decoder_depth;
  j["decoder_branches"] = c.decoder_branches;
  j["embedding_dim"] = c.embedding_dim;
  j["num_directions"] = c.num_directions;
  j["direction_step"] = c.direction_step;
  j["use_camera"] = c.use_camera;
  j["use_lidar"] = c.use_lidar;
  return j;
}

ModelConfig model_config_from_json(const json& j, const std::string& source) {
  ModelConfig c;
  try {
    c.bev = bev_from_json(j.at("bev"), source);
    const json& t = j.at("topdown");
    c.topdown.forward_min = t.at("forward_min").get<double>();
    c.topdown.forward_max = t.at("forward_max").get<double>();
    c.topdown.left_min = t.at("left_min").get<double>();
    c.topdown.left_max = t.at("left_max").get<double>();
    c.topdown.pitch = t.at("pitch").get<double>();
    c.encoder_factor = j.at("encoder_factor").get<std::size_t>();
    c.vt_hidden = j.at("vt_hidden").get<std::size_t>();
    c.vt_init = j.at("vt_init").get<std::string>();
    c.pillar_width = j.at("pillar_width").get<std::size_t>();
    c.point_features = j.at("point_features").get<std::size_t>();
    c.decoder_width = j.at("decoder_width").get<std::size_t>();
    c.decoder_depth = j.at("decoder_depth").get<std::size_t>();
    c.decoder_branches = j.at("decoder_branches").get<std::size_t>();
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    c.num_directions = j.at("num_directions").get<std::size_t>();
    c.direction_step = j.at("direction_step").get<double>();
    c.use_camera = j.at("use_camera").get<bool>();
    c.use_lidar = j.at("use_lidar").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(source, FormatError::npos, std::string("model config: ") + e.what(), "/config");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(source, FormatError::npos, e.what(), "/config");
  }
  return c;
}

// ---------------------------------------------------------------------------

namespace {

// Channel planes as batch rows: (channels x cells).
Eigen::MatrixXd planes_of(const Grid2D& g) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(g.channels()), static_cast<Eigen::Index>(g.cells()));
  for (std::size_t i = 0; i < g.cells(); ++i) {
    const auto c = g.cell(i);
    for (std::size_t ch = 0; ch < c.size(); ++ch) m(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(i)) = c[ch];
  }
  return m;
}

Grid2D grid_of_planes(const Eigen::MatrixXd& m, std::size_t rows, std::size_t cols) {
  Grid2D g(rows, cols, static_cast<std::size_t>(m.rows()));
  for (std::size_t i = 0; i < g.cells(); ++i) {
    auto c = g.cell(i);
    for (std::size_t ch = 0; ch < c.size(); ++ch) c[ch] = m(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(i));
  }
  return g;
}

// Replaces a camera's transform with a two-layer net whose hidden layer
// copies the perspective plane and whose output layer bilinearly samples it
// at the projection of every top-down cell centre.
DenseNet ipm_view_net(const CameraModel& cam, const ModelConfig& c, std::size_t pv_rows, std::size_t pv_cols) {
  const PlanarFrame frame = camera_ground_frame(cam, c.topdown);
  const auto n_pv = static_cast<Eigen::Index>(pv_rows * pv_cols);
  const auto n_td = static_cast<Eigen::Index>(frame.rows * frame.cols);
  DenseNet net;
  net.layers.push_back({Eigen::MatrixXd::Identity(n_pv, n_pv), Eigen::VectorXd::Zero(n_pv), Activation::kRelu});
  DenseLayer out{Eigen::MatrixXd::Zero(n_td, n_pv), Eigen::VectorXd::Zero(n_td), Activation::kIdentity};
  const double f = static_cast<double>(c.encoder_factor);
  for (std::size_t r = 0; r < frame.rows; ++r) {
    for (std::size_t col = 0; col < frame.cols; ++col) {
      const Eigen::Vector2d g = frame.to_ego(static_cast<double>(r), static_cast<double>(col));
      const PixelProjection p = project_ego_to_pixel(cam, {g.x(), g.y(), 0.0});
      if (!p.in_front) continue;
      const double fr = (p.v + 0.5) / f - 0.5;
      const double fc = (p.u + 0.5) / f - 0.5;
      if (fr < 0.0 || fc < 0.0 || fr > static_cast<double>(pv_rows - 1) || fc > static_cast<double>(pv_cols - 1)) continue;
      const auto r0 = static_cast<std::size_t>(std::floor(fr));
      const auto c0 = static_cast<std::size_t>(std::floor(fc));
      const std::size_t r1 = std::min(r0 + 1, pv_rows - 1);
      const std::size_t c1 = std::min(c0 + 1, pv_cols - 1);
      const double a = fr - static_cast<double>(r0);
      const double b = fc - static_cast<double>(c0);
      const auto dst = static_cast<Eigen::Index>(r * frame.cols + col);
      auto tap = [&](std::size_t rr, std::size_t cc, double w) {
        out.weight(dst, static_cast<Eigen::Index>(rr * pv_cols + cc)) += w;
      };
      tap(r0, c0, (1 - a) * (1 - b));
      tap(r0, c1, (1 - a) * b);
      tap(r1, c0, a * (1 - b));
      tap(r1, c1, a * b);
    }
  }
  net.layers.push_back(std::move(out));
  return net;
}

}  // namespace

void Model::prepare() {
  config.validate();
  warps.clear();
  if (!config.use_camera) return;
  const PlanarFrame dst = bev_frame(config.bev);
  for (const auto& cam : rig) {
    warps.push_back(make_frame_resampler(camera_ground_frame(cam, config.topdown), dst));
  }
}

Model make_model(const ModelConfig& config, const std::vector<CameraModel>& rig, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  m.rig = rig;
  std::mt19937_64 rng(seed);
  if (config.use_camera) {
    if (rig.empty()) throw std::invalid_argument("model: camera branch needs a rig");
    const std::size_t pv_rows = rig.front().image_height() / config.encoder_factor;
    const std::size_t pv_cols = rig.front().image_width() / config.encoder_factor;
    for (const auto& cam : rig) {
      if (cam.image_height() / config.encoder_factor != pv_rows || cam.image_width() / config.encoder_factor != pv_cols) {
        throw std::invalid_argument("model: all rig cameras must share one encoded image size");
      }
    }
    if (pv_rows == 0 || pv_cols == 0) throw std::invalid_argument("model: images smaller than the encoder factor");
    m.vt = make_view_transform(rig.size(), pv_rows, pv_cols, config.topdown.rows(), config.topdown.cols(),
                               config.vt_init == "ipm" ? 1 : config.vt_hidden, rng);
    if (config.vt_init == "ipm") {
      for (std::size_t k = 0; k < rig.size(); ++k) m.vt.cameras[k] = ipm_view_net(rig[k], config, pv_rows, pv_cols);
    }
  }
  if (config.use_lidar) {
    const std::size_t sizes[2] = {pillar_input_size(config.point_features), config.pillar_width};
    const Activation acts[1] = {Activation::kRelu};
    m.pn = make_dense_net(sizes, acts, rng);
  }
  m.decoder = make_decoder(config.decoder_inputs(), config.decoder_width, config.decoder_depth,
                           kNumClasses + 1, config.embedding_dim, config.num_directions, rng,
                           config.decoder_branches);
  m.prepare();
  return m;
}

ModelInput make_input(const Model& model, const std::vector<Grid2D>& images, const PointCloud& points) {
  ModelInput in;
  if (model.config.use_camera) {
    if (images.size() != model.rig.size()) {
      throw std::invalid_argument("model input: expected " + std::to_string(model.rig.size()) + " camera images");
    }
    for (std::size_t k = 0; k < images.size(); ++k) {
      if (images[k].channels() != model.config.image_channels()) {
        throw std::invalid_argument("model input: camera images need " +
                                    std::to_string(model.config.image_channels()) + " channels");
      }
      in.perspective.push_back(encode_perspective(images[k], model.config.encoder_factor));
    }
  }
  if (model.config.use_lidar) {
    if (points.extra() != model.config.point_features) {
      throw std::invalid_argument("model input: point cloud has " + std::to_string(points.extra()) +
                                  " features, model expects " + std::to_string(model.config.point_features));
    }
    in.points = points;
    in.pillars = voxelize_dynamic(points, model.config.bev);
  }
  return in;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace {

struct Activations {
  std::vector<ForwardCache> vt;
  std::vector<MaskedGrid> views;
  std::vector<std::uint32_t> counts;
  PillarActivations pillars;
  DecoderActivations decoder;
};

DecoderOutput run_forward(const Model& model, const ModelInput& input, Activations& act) {
  const ModelConfig& c = model.config;
  const std::size_t rows = c.bev.rows(), cols = c.bev.cols();
  std::vector<Grid2D> parts;
  if (c.use_camera) {
    if (input.perspective.size() != model.rig.size()) throw std::invalid_argument("forward: camera count mismatch");
    act.vt.assign(model.rig.size(), {});
    act.views.clear();
    for (std::size_t k = 0; k < model.rig.size(); ++k) {
      const Grid2D& pv = input.perspective[k];
      if (pv.height() != model.vt.pv_rows || pv.width() != model.vt.pv_cols) {
        throw std::invalid_argument("forward: encoded image size does not match the view transformer");
      }
      const Eigen::MatrixXd td = forward_rowwise(model.vt.cameras[k].layers, planes_of(pv), &act.vt[k]);
      act.views.push_back(model.warps[k].apply(grid_of_planes(td, model.vt.td_rows, model.vt.td_cols)));
    }
    act.counts = fusion_counts(act.views);
    parts.push_back(fuse_cameras(act.views));
  }
  if (c.use_lidar) {
    if (!(input.pillars.bev == c.bev)) throw std::invalid_argument("forward: pillars were binned on another BEV");
    act.pillars = aggregate_pillars_forward(input.pillars, input.points, model.pn);
    parts.push_back(act.pillars.features);
  }
  const Grid2D features = parts.size() == 1 ? parts.front() : concat_channels(parts);
  if (features.height() != rows || features.width() != cols) throw std::invalid_argument("forward: feature size mismatch");
  return decode_bev_forward(features, model.decoder, act.decoder);
}

void run_backward(const Model& model, const ModelInput& input, const Activations& act, const Grid2D& seg_grad,
                  const Grid2D& emb_grad, const Grid2D& dir_grad, InputGradient route, ModelGrads& grads) {
  (void)input;
  const ModelConfig& c = model.config;
  const Grid2D g =
      decode_bev_backward(model.decoder, act.decoder, seg_grad, emb_grad, dir_grad, grads.decoder, route);
  std::size_t offset = 0;
  if (c.use_camera) {
    const std::size_t nch = c.image_channels();
    for (std::size_t k = 0; k < model.rig.size(); ++k) {
      Grid2D gv(g.height(), g.width(), nch);
      for (std::size_t i = 0; i < g.cells(); ++i) {
        if (act.views[k].valid[i] == 0 || act.counts[i] == 0) continue;
        const double inv = 1.0 / static_cast<double>(act.counts[i]);
        for (std::size_t ch = 0; ch < nch; ++ch) gv.cell(i)[ch] = g.cell(i)[ch] * inv;
      }
      const Grid2D gtd = model.warps[k].apply_transpose(gv);
      backward_batch(model.vt.cameras[k].layers, act.vt[k], planes_of(gtd), grads.vt[k]);
    }
    offset = nch;
  }
  if (c.use_lidar) {
    Grid2D gp(g.height(), g.width(), c.pillar_width);
    for (std::size_t i = 0; i < g.cells(); ++i) {
      for (std::size_t ch = 0; ch < c.pillar_width; ++ch) gp.cell(i)[ch] = g.cell(i)[offset + ch];
    }
    aggregate_pillars_backward(act.pillars, model.pn, gp, grads.pn);
  }
}

}  // namespace

DecoderOutput forward(const Model& model, const ModelInput& input) {
  Activations act;
  return run_forward(model, input, act);
}

Prediction predict(const Model& model, const ModelInput& input) {
  DecoderOutput out = forward(model, input);
  return {softmax_channels(out.seg_logits), std::move(out.embeddings), softmax_channels(out.dir_logits)};
}

ModelGrads make_model_grads(const Model& model) {
  ModelGrads g;
  for (const auto& net : model.vt.cameras) g.vt.push_back(zero_grad(net.layers));
  g.pn = zero_grad(model.pn.layers);
  g.decoder = zero_grad(model.decoder.layers);
  return g;
}

LossBreakdown model_loss(const Model& model, const ModelInput& input, const LabelPack& labels,
                         const TrainConfig& config, ModelGrads* grads) {
  Activations act;
  const DecoderOutput out = run_forward(model, input, act);
  const LossResult seg = softmax_cross_entropy(out.seg_logits, labels.semantic);
  const DiscriminativeTerms emb = discriminative_loss(out.embeddings, labels.instance, config.loss);
  const LossResult dir = direction_loss(out.dir_logits, labels.direction);
  LossBreakdown l;
  l.seg = seg.loss;
  l.embedding = emb.total;
  l.direction = dir.loss;
  l.total = seg.loss + config.embedding_weight * emb.total + config.direction_weight * dir.loss;
  if (grads != nullptr) {
    Grid2D eg = emb.gradient;
    for (double& v : eg.data()) v *= config.embedding_weight;
    Grid2D dg = dir.gradient;
    for (double& v : dg.data()) v *= config.direction_weight;
    run_backward(model, input, act, seg.gradient, eg, dg,
                 config.encoder_from_segmentation ? InputGradient::kSegmentation : InputGradient::kAllHeads, *grads);
  }
  return l;
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

std::vector<TrainSample> load_samples(const fs::path& dataset, const Model& model, DatasetManifest* manifest_out) {
  const DatasetManifest manifest = read_manifest(dataset);
  if (model.config.use_camera) {
    if (manifest.rig.size() != model.rig.size()) throw std::invalid_argument(dataset.string() + ": rig differs from the model's");
    for (std::size_t k = 0; k < manifest.rig.size(); ++k) {
      if (manifest.rig[k].name != model.rig[k].name) throw std::invalid_argument(dataset.string() + ": rig differs from the model's");
    }
  }
  RasterStyle style = manifest.style;
  style.num_directions = model.config.num_directions;
  style.direction_step = model.config.direction_step;
  std::vector<TrainSample> out;
  for (std::size_t i = 0; i < manifest.scenes; ++i) {
    SceneFiles s = read_scene(dataset, i, manifest);
    VectorMap vm = s.map;
    vm.bev = model.config.bev;
    TrainSample t;
    t.packed_labels = pack_labels(rasterize_vector_map(vm, model.config.bev, style));
    t.input = make_input(model, s.cameras, s.points);
    out.push_back(std::move(t));
  }
  if (manifest_out != nullptr) *manifest_out = manifest;
  return out;
}

LabelPack sample_labels(const TrainSample& s, const ModelConfig& config) {
  return unpack_labels(s.packed_labels, config.num_directions);
}

TrainResult train_toy(const fs::path& dataset, const TrainConfig& config,
                      const std::function<void(const LossRecord&)>& progress) {
  config.loss.validate();
  if (!(config.lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  if (config.steps == 0) throw std::invalid_argument("train: steps must be >= 1");
  if (config.encoder_from_segmentation && config.model.decoder_branches != 3) {
    throw std::invalid_argument("train: encoder_from_segmentation needs three decoder branches");
  }
  const DatasetManifest manifest = read_manifest(dataset);
  if (manifest.scenes == 0) throw std::invalid_argument(dataset.string() + ": dataset has no scenes");
  ModelConfig mc = config.model;
  mc.point_features = manifest.spec.point_features;
  TrainResult result;
  result.model = make_model(mc, manifest.rig, config.seed);
  Model& model = result.model;
  const auto samples = load_samples(dataset, model);

  std::vector<AdamState> vt_state;
  for (const auto& net : model.vt.cameras) vt_state.push_back(make_adam_state(net.layers));
  AdamState pn_state = make_adam_state(model.pn.layers);
  AdamState dec_state = make_adam_state(model.decoder.layers);

  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(samples.size());
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
      }
      cursor = 0;
    }
    const TrainSample& s = samples[order[cursor++]];
    ModelGrads grads = make_model_grads(model);
    const LossBreakdown l = model_loss(model, s.input, sample_labels(s, model.config), config, &grads);
    for (std::size_t k = 0; k < model.vt.cameras.size(); ++k) {
      adam_step(model.vt.cameras[k], grads.vt[k], vt_state[k], config.lr);
    }
    if (model.config.use_lidar) adam_step(model.pn, grads.pn, pn_state, config.lr);
    adam_step(std::span<DenseLayer>(model.decoder.layers), grads.decoder, dec_state, config.lr);
    result.trace.push_back({step, l});
    if (progress) progress(result.trace.back());
  }
  result.initial_loss = result.trace.front().loss.total;
  const std::size_t tail = std::min<std::size_t>(20, result.trace.size());
  double sum = 0.0;
  for (std::size_t i = result.trace.size() - tail; i < result.trace.size(); ++i) sum += result.trace[i].loss.total;
  result.final_loss = sum / static_cast<double>(tail);
  return result;
}

std::vector<double> segmentation_iou(const Model& model, const std::vector<TrainSample>& samples) {
  std::vector<std::size_t> inter(kNumClasses, 0), uni(kNumClasses, 0);
  for (const auto& s : samples) {
    const DecoderOutput out = forward(model, s.input);
    for (std::size_t i = 0; i < out.seg_logits.cells(); ++i) {
      const auto l = out.seg_logits.cell(i);
      const auto pred = static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
      const auto gt = static_cast<std::size_t>(s.packed_labels.cell(i)[0]);
      for (std::size_t k = 1; k <= kNumClasses; ++k) {
        const bool a = pred == k, b = gt == k;
        inter[k - 1] += (a && b) ? 1 : 0;
        uni[k - 1] += (a || b) ? 1 : 0;
      }
    }
  }
  std::vector<double> out(kNumClasses);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    out[k] = uni[k] == 0 ? 1.0 : static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

namespace {

void push_layers(Bundle& b, const std::string& prefix, const std::vector<DenseLayer>& layers) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const DenseLayer& l = layers[k];
    Grid2D w(l.out(), l.in(), 1);
    for (std::size_t r = 0; r < l.out(); ++r) {
      for (std::size_t c = 0; c < l.in(); ++c) w.at(r, c) = l.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
    Grid2D bias(l.out(), 1, 1);
    for (std::size_t r = 0; r < l.out(); ++r) bias.at(r, 0) = l.bias(static_cast<Eigen::Index>(r));
    b.tensors.push_back({prefix + "." + std::to_string(k) + ".weight", std::move(w)});
    b.tensors.push_back({prefix + "." + std::to_string(k) + ".bias", std::move(bias)});
  }
}

void pull_layers(const Bundle& b, const std::string& prefix, std::vector<DenseLayer>& layers) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    DenseLayer& l = layers[k];
    const std::string name = prefix + "." + std::to_string(k);
    const Grid2D& w = b.get(name + ".weight");
    const Grid2D& bias = b.get(name + ".bias");
    if (w.height() != l.out() || w.width() != l.in() || bias.height() != l.out()) {
      throw std::invalid_argument("bundle tensor " + name + " has the wrong shape");
    }
    for (std::size_t r = 0; r < l.out(); ++r) {
      for (std::size_t c = 0; c < l.in(); ++c) l.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w.at(r, c);
      l.bias(static_cast<Eigen::Index>(r)) = bias.at(r, 0);
    }
  }
}

}  // namespace

void save_model(const fs::path& dir, const Model& model, std::uint64_t seed) {
  Bundle b;
  b.seed = seed;
  b.config = {{"model", model_config_to_json(model.config)}, {"rig", rig_to_json(model.rig)["cameras"]}};
  for (std::size_t k = 0; k < model.vt.cameras.size(); ++k) push_layers(b, "vt." + model.rig[k].name, model.vt.cameras[k].layers);
  push_layers(b, "pn", model.pn.layers);
  push_layers(b, "decoder", model.decoder.layers);
  write_bundle(dir, b);
}

Model load_model(const fs::path& dir) {
  const Bundle b = read_bundle(dir);
  const std::string source = (dir / "manifest.json").string();
  if (!b.config.contains("model") || !b.config.contains("rig")) {
    throw FormatError(source, FormatError::npos, "missing model or rig section", "/config");
  }
  const ModelConfig mc = model_config_from_json(b.config["model"], source);
  const auto rig = mc.use_camera ? rig_from_json(b.config["rig"], source) : std::vector<CameraModel>{};
  // Shapes come from a fresh model; values from the bundle.
  Model m = make_model(mc, rig, b.seed);
  for (std::size_t k = 0; k < m.vt.cameras.size(); ++k) pull_layers(b, "vt." + m.rig[k].name, m.vt.cameras[k].layers);
  pull_layers(b, "pn", m.pn.layers);
  pull_layers(b, "decoder", m.decoder.layers);
  return m;
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::string out = "step,total,seg,embedding,direction\n";
  char buf[160];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.step, r.loss.total, r.loss.seg, r.loss.embedding,
                  r.loss.direction);
    out += buf;
  }
  return out;
}

}  // namespace hdmap

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdmap/bevnet.hpp"
#include "hdmap/geometry.hpp"
#include "hdmap/io.hpp"
#include "hdmap/pillars.hpp"

namespace hdmap {

struct ModelConfig {
  BevConfig bev{-30.0, 30.0, -15.0, 15.0, 0.6};
  TopDownExtent topdown;
  std::size_t encoder_factor = 4;
  std::size_t vt_hidden = 256;
  std::string vt_init = "random";  // "random" or "ipm"
  std::size_t pillar_width = 16;
  std::size_t point_features = 0;
  std::size_t decoder_width = 32;
  std::size_t decoder_depth = 3;
  std::size_t decoder_branches = 3;  // 3: one stack per head; 1: a shared trunk
  std::size_t embedding_dim = 16;
  std::size_t num_directions = 36;
  double direction_step = 4.0;  // pixels
  bool use_camera = true;
  bool use_lidar = true;

  void validate() const;
  std::size_t image_channels() const { return kNumClasses; }
  std::size_t decoder_inputs() const;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& source);

struct TrainConfig {
  ModelConfig model;
  std::uint64_t seed = 0;
  std::size_t steps = 2000;
  double lr = 1e-3;
  LossWeights loss;
  double embedding_weight = 1.0;
  double direction_weight = 1.0;
  // When set, the view transformer and pillar net learn from the segmentation
  // loss alone; the embedding and direction branches train on their features.
  // Needs three decoder branches.
  bool encoder_from_segmentation = true;
  std::size_t log_every = 100;
};

/// Everything a forward pass needs from one scene.
struct ModelInput {
  std::vector<Grid2D> perspective;  // encoded, one per camera
  PointCloud points;
  PillarIndex pillars;
};

struct Model {
  ModelConfig config;
  std::vector<CameraModel> rig;
  ViewTransformParams vt;
  DenseNet pn;
  DecoderParams decoder;
  std::vector<Resampler> warps;  // camera top-down -> BEV, derived from the rig

  /// Rebuilds the derived camera warps; call after changing rig or config.
  void prepare();
};

Model make_model(const ModelConfig& config, const std::vector<CameraModel>& rig, std::uint64_t seed);

/// Encodes camera images and bins points for the model's BEV.
ModelInput make_input(const Model& model, const std::vector<Grid2D>& images, const PointCloud& points);

/// Decoder outputs after softmax on the segmentation and direction heads.
struct Prediction {
  Grid2D seg;        // probabilities, background + classes
  Grid2D embedding;
  Grid2D direction;  // probabilities
};

DecoderOutput forward(const Model& model, const ModelInput& input);
Prediction predict(const Model& model, const ModelInput& input);

struct LossBreakdown {
  double total = 0.0;
  double seg = 0.0;
  double embedding = 0.0;
  double direction = 0.0;
};

/// Loss of one scene and, when `grads` is non-null, its gradient with respect
/// to every parameter. Gradient buffers are laid out as returned by
/// make_model_grads.
struct ModelGrads {
  std::vector<NetGrad> vt;  // per camera
  NetGrad pn;
  NetGrad decoder;
};

ModelGrads make_model_grads(const Model& model);
LossBreakdown model_loss(const Model& model, const ModelInput& input, const LabelPack& labels,
                         const TrainConfig& config, ModelGrads* grads);

struct LossRecord {
  std::size_t step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  Model model;
  std::vector<LossRecord> trace;  // every step
  double initial_loss = 0.0;
  double final_loss = 0.0;  // mean over the last 20 steps
};

struct TrainSample {
  ModelInput input;
  Grid2D packed_labels;
};

/// Loads every scene of a dataset, re-rasterizing labels at the model BEV.
std::vector<TrainSample> load_samples(const std::filesystem::path& dataset, const Model& model,
                                      DatasetManifest* manifest_out = nullptr);
LabelPack sample_labels(const TrainSample& s, const ModelConfig& config);

TrainResult train_toy(const std::filesystem::path& dataset, const TrainConfig& config,
                      const std::function<void(const LossRecord&)>& progress = {});

/// Per-class IoU of the argmax segmentation, pooled over all scenes.
std::vector<double> segmentation_iou(const Model& model, const std::vector<TrainSample>& samples);

void save_model(const std::filesystem::path& dir, const Model& model, std::uint64_t seed);
Model load_model(const std::filesystem::path& dir);

std::string loss_trace_csv(const std::vector<LossRecord>& trace);

}  // namespace hdmap

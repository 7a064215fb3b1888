#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "hdmap/grid.hpp"
#include "hdmap/vector_map.hpp"

namespace hdmap {

using PointSet = std::vector<Eigen::Vector2d>;

/// Per-channel IoU of two binary grids (nonzero = set). 1 when both masks are
/// empty, 0 when exactly one is.
std::vector<double> iou(const Grid2D& pred, const Grid2D& gt);

/// Arc-length-uniform samples with gaps no larger than `spacing`, both
/// endpoints included.
PointSet sample_polyline(const Polyline& p, double spacing);

/// Mean over a of the distance to the nearest point of b. Returns `cap` when
/// either set is empty.
double chamfer_directed(const PointSet& a, const PointSet& b, double cap);

struct Chamfer {
  double sum = 0.0;
  double average = 0.0;
};

Chamfer chamfer(const PointSet& a, const PointSet& b, double cap);

/// One ranked prediction after matching at a fixed threshold.
struct Detection {
  double confidence = 0.0;
  bool true_positive = false;
};

/// Greedy one-to-one matching in descending confidence order (stable on
/// ties). `cd` is the prediction x GT matrix of bidirectional-average CDs.
std::vector<Detection> match_detections(std::span<const double> confidences,
                                        const Eigen::MatrixXd& cd, double threshold);

/// 10-point interpolated AP from ranked detections. The detections are
/// re-sorted stably by confidence, so pooled lists from several scenes work.
double ap_from_detections(std::vector<Detection> detections, std::size_t num_gt);

struct ApResult {
  double ap = 0.0;
  bool no_gt = false;
};

ApResult average_precision(std::span<const Polyline> preds, std::span<const Polyline> gts,
                           double cd_threshold, double spacing);

struct ClassMetrics {
  double iou = 0.0;
  double cd_p = 0.0;    // label -> prediction
  double cd_l = 0.0;    // prediction -> label
  double cd = 0.0;      // average of the two directed values (headline)
  double cd_sum = 0.0;  // sum of the two directed values
  bool cd_capped = false;
  std::vector<double> ap;  // one per threshold
  double map = 0.0;
  bool no_gt = false;
  std::size_t num_pred = 0;
  std::size_t num_gt = 0;
};

struct MetricsReport {
  std::vector<double> thresholds;
  std::vector<ClassMetrics> classes;  // indexed by class_index()
  ClassMetrics all;                   // unweighted class means
  double map = 0.0;
  std::size_t scenes = 0;
};

struct EvalOptions {
  std::vector<double> thresholds = {0.2, 0.5, 1.0};
  double spacing = 0.0;  // 0 = BEV pitch
};

/// Accumulates scenes; IoU pools cell counts, CD averages per-scene values and
/// AP pools ranked detections across scenes.
class Evaluator {
 public:
  explicit Evaluator(EvalOptions options = {});

  /// Masks hold one binary channel per class; pass nullptr to rasterize them
  /// from the maps.
  void add_scene(const VectorMap& pred, const VectorMap& gt, const Grid2D* pred_masks = nullptr,
                 const Grid2D* gt_masks = nullptr);
  MetricsReport report() const;

 private:
  struct ClassAccum {
    std::size_t intersection = 0;
    std::size_t uni = 0;
    double cd_p = 0.0, cd_l = 0.0;
    std::size_t cd_scenes = 0;
    bool cd_capped = false;
    std::vector<std::vector<Detection>> detections;  // per threshold
    std::size_t num_pred = 0;
    std::size_t num_gt = 0;
  };
  EvalOptions options_;
  std::vector<ClassAccum> accum_;
  std::size_t scenes_ = 0;
};

MetricsReport evaluate(const VectorMap& pred, const VectorMap& gt, const EvalOptions& options = {},
                       const Grid2D* pred_masks = nullptr, const Grid2D* gt_masks = nullptr);

/// One binary channel per class, rasterized with the default stroke widths.
Grid2D class_masks(const VectorMap& vm);

std::string report_to_json(const MetricsReport& report);
std::string report_to_text(const MetricsReport& report);

}  // namespace hdmap

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "hdmap/geometry.hpp"
#include "hdmap/numerics.hpp"
#include "hdmap/vector_map.hpp"

namespace hdmap {

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Co-registered training targets on one BEV raster.
struct LabelPack {
  Grid2D semantic;                   // one-hot over background + classes
  std::vector<std::uint32_t> instance;  // per cell, 0 = background
  Grid2D direction;                  // N_d channels, two-hot on element cells

  /// Throws std::invalid_argument if any LabelPack invariant is broken.
  void validate() const;
  std::size_t rows() const { return semantic.height(); }
  std::size_t cols() const { return semantic.width(); }
};

/// Direction bin of a raster-frame angle, theta = atan2(d_row, d_col).
std::size_t direction_bin(double theta, std::size_t num_dirs);
/// Unit raster-frame step (d_row, d_col) for the centre of a bin.
Eigen::Vector2d direction_vector(std::size_t bin, std::size_t num_dirs);

/// Two-hot direction targets for every cell drawn by an element (square brush
/// of `thickness`). The tangent is a central difference at the nearest vertex
/// after resampling the element every `step` pixels. Later elements overwrite
/// earlier ones.
Grid2D make_direction_labels(const VectorMap& vm, const BevConfig& bev, std::size_t num_dirs,
                             double step, std::span<const std::size_t> thickness = {});

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double delta_v = 0.5;
  double delta_d = 3.0;

  void validate() const;
};

struct DiscriminativeTerms {
  double variance = 0.0;
  double distance = 0.0;
  double total = 0.0;
  Grid2D gradient;
};

/// Pull/push clustering loss with L1 norms. Cells with instance id 0 are
/// ignored; a single cluster has no distance term.
DiscriminativeTerms discriminative_loss(const Grid2D& embeddings,
                                        std::span<const std::uint32_t> instance,
                                        const LossWeights& w = {});

/// Softmax cross-entropy against a 0.5/0.5 target over the two labelled
/// bins, averaged over labelled cells only.
LossResult direction_loss(const Grid2D& logits, const Grid2D& labels);

/// c_now + step * d, for unit d (within 1e-9).
Eigen::Vector2d step_node(const Eigen::Vector2d& c_now, const Eigen::Vector2d& d, double step);

// ---------------------------------------------------------------------------
// Neural view transformer
// ---------------------------------------------------------------------------

/// One dense network per camera mapping the flattened perspective plane to
/// the flattened camera top-down plane. Shared across feature channels.
struct ViewTransformParams {
  std::vector<DenseNet> cameras;
  std::size_t pv_rows = 0, pv_cols = 0;
  std::size_t td_rows = 0, td_cols = 0;

  void validate() const;
};

ViewTransformParams make_view_transform(std::size_t num_cameras, std::size_t pv_rows,
                                        std::size_t pv_cols, std::size_t td_rows,
                                        std::size_t td_cols, std::size_t hidden,
                                        std::mt19937_64& rng);

Grid2D neural_view_transform(const Grid2D& persp, const ViewTransformParams& params,
                             std::size_t camera_index);

/// Block-average downsampling; the fixed perspective-view image encoder.
Grid2D encode_perspective(const Grid2D& image, std::size_t factor);

// ---------------------------------------------------------------------------
// BEV decoder
// ---------------------------------------------------------------------------

/// Convolution stacks (each layer a dense map over unrolled k x k patches),
/// each ending in a 1x1 head layer.
///
/// With one branch a single trunk feeds one head layer whose output channels
/// are split into segmentation, embedding and direction. With three branches
/// every head has its own stack; `layers` then holds the segmentation,
/// embedding and direction stacks in that order, each laid out as its trunk
/// layers followed by its head.
struct DecoderParams {
  std::vector<DenseLayer> layers;
  std::vector<std::size_t> kernels;  // one odd kernel size per trunk layer, same for every branch
  std::size_t seg_channels = 0;
  std::size_t emb_channels = 0;
  std::size_t dir_channels = 0;
  std::size_t branches = 1;  // 1 or 3

  std::size_t layers_per_branch() const { return kernels.size() + 1; }
  std::size_t input_channels() const;
  void validate() const;
};

DecoderParams make_decoder(std::size_t in_channels, std::size_t width, std::size_t depth,
                           std::size_t seg_channels, std::size_t emb_channels,
                           std::size_t dir_channels, std::mt19937_64& rng,
                           std::size_t branches = 1);

struct DecoderOutput {
  Grid2D seg_logits;
  Grid2D embeddings;
  Grid2D dir_logits;
};

DecoderOutput decode_bev(const Grid2D& features, const DecoderParams& params);

/// Unrolls k x k zero-padded patches: one row per cell, columns ordered
/// (patch row, patch col, channel).
Eigen::MatrixXd im2col(const Eigen::MatrixXd& cells, std::size_t rows, std::size_t cols,
                       std::size_t kernel);
/// Adjoint of im2col.
Eigen::MatrixXd col2im(const Eigen::MatrixXd& patches, std::size_t rows, std::size_t cols,
                       std::size_t channels, std::size_t kernel);

struct DecoderActivations {
  std::size_t rows = 0, cols = 0;
  std::vector<ForwardCache> layers;
};

DecoderOutput decode_bev_forward(const Grid2D& features, const DecoderParams& params,
                                 DecoderActivations& act);

/// Which heads contribute to the gradient with respect to the decoder input.
/// kSegmentation needs three branches; the other branches still get their
/// parameter gradients.
enum class InputGradient { kAllHeads, kSegmentation };

/// Accumulates parameter gradients into `grads` (shaped like params.layers)
/// and returns the gradient with respect to the decoder input.
Grid2D decode_bev_backward(const DecoderParams& params, const DecoderActivations& act,
                           const Grid2D& seg_grad, const Grid2D& emb_grad, const Grid2D& dir_grad,
                           NetGrad& grads, InputGradient input = InputGradient::kAllHeads);

}  // namespace hdmap

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hdmap/grid.hpp"

namespace hdmap {

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

enum class PoolMode { kMax, kAvg };

/// Stride-1 "same" pooling with a kernel centred on each cell, applied to each
/// channel independently. Out-of-bounds cells are ignored: they never win a
/// max and are not counted in an average. Kernel sizes must be odd.
Grid2D pool2d(const Grid2D& grid, std::size_t kernel_h, std::size_t kernel_w, PoolMode mode);

// ---------------------------------------------------------------------------
// Dense networks
// ---------------------------------------------------------------------------

enum class Activation { kIdentity, kRelu, kSoftmax };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kIdentity;

  std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
};

struct DenseNet {
  std::vector<DenseLayer> layers;

  std::size_t input_size() const { return layers.empty() ? 0 : layers.front().in(); }
  std::size_t output_size() const { return layers.empty() ? 0 : layers.back().out(); }

  /// Throws std::invalid_argument unless layer sizes chain and weights are finite.
  void validate() const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for weights and biases.
DenseLayer make_dense_layer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng);

/// Builds a chain `sizes[0] -> sizes[1] -> ...` with one activation per layer.
DenseNet make_dense_net(std::span<const std::size_t> sizes, std::span<const Activation> acts,
                        std::mt19937_64& rng);

struct LayerGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};
using NetGrad = std::vector<LayerGrad>;

/// Zero gradients shaped like `layers`.
NetGrad zero_grad(std::span<const DenseLayer> layers);
/// dst += src, shapes must agree.
void accumulate(NetGrad& dst, const NetGrad& src);

std::vector<double> net_forward(const DenseNet& net, std::span<const double> input);

struct NetGradient {
  NetGrad params;
  std::vector<double> input;
};

/// Reverse-mode gradient of <upstream, net_forward(input)>.
NetGradient net_gradient(const DenseNet& net, std::span<const double> input,
                         std::span<const double> upstream);

/// Activations kept by a batched forward pass for the backward sweep.
/// `values[0]` is the input, `values[k + 1]` the output of layer k.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> values;
};

/// Batched forward over the rows of `input` (batch x in).
Eigen::MatrixXd forward_batch(std::span<const DenseLayer> layers, const Eigen::MatrixXd& input,
                              ForwardCache* cache = nullptr);
/// Same, taking ownership of the input so the cache can keep it without a copy.
Eigen::MatrixXd forward_batch(std::span<const DenseLayer> layers, Eigen::MatrixXd&& input,
                              ForwardCache* cache = nullptr);

/// Same result layout as forward_batch, but every row is evaluated on its own
/// with a fixed summation order, so a row's output never depends on where it
/// sits in the batch.
Eigen::MatrixXd forward_rowwise(std::span<const DenseLayer> layers, const Eigen::MatrixXd& input,
                                ForwardCache* cache = nullptr);

/// Batched backward. Adds parameter gradients into `grads` and returns the
/// gradient with respect to the batch input.
Eigen::MatrixXd backward_batch(std::span<const DenseLayer> layers, const ForwardCache& cache,
                               const Eigen::MatrixXd& upstream, NetGrad& grads);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::uint64_t step = 0;
  NetGrad first;
  NetGrad second;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(std::span<const DenseLayer> layers);

/// One bias-corrected Adam update in place. Rejects non-finite gradients
/// before touching any parameter.
void adam_step(std::span<DenseLayer> layers, const NetGrad& grads, AdamState& state, double lr);
inline void adam_step(DenseNet& net, const NetGrad& grads, AdamState& state, double lr) {
  adam_step(std::span<DenseLayer>(net.layers), grads, state, lr);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Grid2D gradient;
};

/// Mean over unmasked cells of -sum(target * log softmax(logits)).
/// `mask` is either empty (all cells count) or one byte per cell; zero bytes
/// exclude a cell from both the loss and the gradient.
LossResult softmax_cross_entropy(const Grid2D& logits, const Grid2D& target,
                                 std::span<const std::uint8_t> mask = {});

/// Numerically stable softmax over the channels of every cell.
Grid2D softmax_channels(const Grid2D& logits);

}  // namespace hdmap

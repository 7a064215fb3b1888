#include "hdmap/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hdmap {

Grid2D pool2d(const Grid2D& grid, std::size_t kernel_h, std::size_t kernel_w, PoolMode mode) {
  if (kernel_h == 0 || kernel_w == 0 || kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw std::invalid_argument("pool2d: kernel dimensions must be odd and >= 1, got " +
                                std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
  }
  const auto rh = static_cast<std::ptrdiff_t>(kernel_h / 2);
  const auto rw = static_cast<std::ptrdiff_t>(kernel_w / 2);
  const auto h = static_cast<std::ptrdiff_t>(grid.height());
  const auto w = static_cast<std::ptrdiff_t>(grid.width());
  const std::size_t nc = grid.channels();

  // Separable: pool along columns first, then along rows. Both max and
  // in-bounds average factor this way because the window is a rectangle.
  Grid2D tmp(grid.height(), grid.width(), nc);
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      const std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, c - rw);
      const std::ptrdiff_t c1 = std::min<std::ptrdiff_t>(w - 1, c + rw);
      for (std::size_t ch = 0; ch < nc; ++ch) {
        double acc = mode == PoolMode::kMax ? -std::numeric_limits<double>::infinity() : 0.0;
        for (std::ptrdiff_t cc = c0; cc <= c1; ++cc) {
          const double v = grid.at(r, cc, ch);
          acc = mode == PoolMode::kMax ? std::max(acc, v) : acc + v;
        }
        tmp.at(r, c, ch) = acc;
      }
    }
  }
  Grid2D out(grid.height(), grid.width(), nc);
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    const std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, r - rh);
    const std::ptrdiff_t r1 = std::min<std::ptrdiff_t>(h - 1, r + rh);
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      const std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, c - rw);
      const std::ptrdiff_t c1 = std::min<std::ptrdiff_t>(w - 1, c + rw);
      const double count = static_cast<double>((r1 - r0 + 1) * (c1 - c0 + 1));
      for (std::size_t ch = 0; ch < nc; ++ch) {
        double acc = mode == PoolMode::kMax ? -std::numeric_limits<double>::infinity() : 0.0;
        for (std::ptrdiff_t rr = r0; rr <= r1; ++rr) {
          const double v = tmp.at(rr, c, ch);
          acc = mode == PoolMode::kMax ? std::max(acc, v) : acc + v;
        }
        out.at(r, c, ch) = mode == PoolMode::kMax ? acc : acc / count;
      }
    }
  }
  return out;
}

void DenseNet::validate() const {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    if (static_cast<std::size_t>(layer.bias.size()) != layer.out()) {
      throw std::invalid_argument("DenseNet: layer " + std::to_string(k) +
                                  " bias length does not match its output size");
    }
    if (k > 0 && layers[k - 1].out() != layer.in()) {
      throw std::invalid_argument("DenseNet: layer " + std::to_string(k - 1) + " outputs " +
                                  std::to_string(layers[k - 1].out()) + " values but layer " +
                                  std::to_string(k) + " expects " + std::to_string(layer.in()));
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw std::invalid_argument("DenseNet: layer " + std::to_string(k) +
                                  " has non-finite parameters");
    }
  }
}

DenseLayer make_dense_layer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  DenseLayer layer;
  layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  layer.bias.resize(static_cast<Eigen::Index>(out));
  // Explicit loops fix the draw order independently of Eigen's storage order.
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
  }
  for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = dist(rng);
  layer.activation = act;
  return layer;
}

DenseNet make_dense_net(std::span<const std::size_t> sizes, std::span<const Activation> acts,
                        std::mt19937_64& rng) {
  if (sizes.size() < 2 || acts.size() != sizes.size() - 1) {
    throw std::invalid_argument("make_dense_net: need n+1 sizes for n activations");
  }
  DenseNet net;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    net.layers.push_back(make_dense_layer(sizes[k], sizes[k + 1], acts[k], rng));
  }
  return net;
}

NetGrad zero_grad(std::span<const DenseLayer> layers) {
  NetGrad g;
  g.reserve(layers.size());
  for (const auto& layer : layers) {
    g.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                 Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return g;
}

void accumulate(NetGrad& dst, const NetGrad& src) {
  if (dst.size() != src.size()) throw std::invalid_argument("accumulate: layer count mismatch");
  for (std::size_t k = 0; k < dst.size(); ++k) {
    if (dst[k].weight.rows() != src[k].weight.rows() ||
        dst[k].weight.cols() != src[k].weight.cols() || dst[k].bias.size() != src[k].bias.size()) {
      throw std::invalid_argument("accumulate: shape mismatch at layer " + std::to_string(k));
    }
    dst[k].weight += src[k].weight;
    dst[k].bias += src[k].bias;
  }
}

namespace {

void softmax_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double peak = m.row(r).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = std::exp(m(r, c) - peak);
      total += m(r, c);
    }
    m.row(r) /= total;
  }
}

void check_layers(std::span<const DenseLayer> layers) {
  for (std::size_t k = 1; k < layers.size(); ++k) {
    if (layers[k - 1].out() != layers[k].in()) {
      throw std::invalid_argument("dense network layer sizes do not chain at layer " +
                                  std::to_string(k));
    }
  }
}

}  // namespace

Eigen::MatrixXd forward_batch(std::span<const DenseLayer> layers, const Eigen::MatrixXd& input,
                              ForwardCache* cache) {
  return forward_batch(layers, Eigen::MatrixXd(input), cache);
}

Eigen::MatrixXd forward_batch(std::span<const DenseLayer> layers, Eigen::MatrixXd&& input,
                              ForwardCache* cache) {
  check_layers(layers);
  if (!layers.empty() && static_cast<std::size_t>(input.cols()) != layers.front().in()) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.cols()) +
                                " features, network expects " +
                                std::to_string(layers.front().in()));
  }
  Eigen::MatrixXd x = std::move(input);
  if (cache != nullptr) {
    cache->values.clear();
    cache->values.reserve(layers.size() + 1);
    cache->values.push_back(std::move(x));
  }
  for (const auto& layer : layers) {
    const Eigen::MatrixXd& in = cache != nullptr ? cache->values.back() : x;
    Eigen::MatrixXd z(in.rows(), layer.weight.rows());
    z.noalias() = in * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    switch (layer.activation) {
      case Activation::kIdentity:
        break;
      case Activation::kRelu:
        z = z.cwiseMax(0.0);
        break;
      case Activation::kSoftmax:
        softmax_rows(z);
        break;
    }
    if (cache != nullptr) {
      cache->values.push_back(std::move(z));
    } else {
      x = std::move(z);
    }
  }
  return cache != nullptr ? cache->values.back() : x;
}

Eigen::MatrixXd forward_rowwise(std::span<const DenseLayer> layers, const Eigen::MatrixXd& input,
                                ForwardCache* cache) {
  check_layers(layers);
  if (!layers.empty() && static_cast<std::size_t>(input.cols()) != layers.front().in()) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.cols()) +
                                " features, network expects " +
                                std::to_string(layers.front().in()));
  }
  if (cache != nullptr) {
    cache->values.clear();
    cache->values.push_back(input);
  }
  Eigen::MatrixXd x = input;
  for (const auto& layer : layers) {
    Eigen::MatrixXd z(x.rows(), layer.weight.rows());
    Eigen::VectorXd acc(layer.weight.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      // Every output starts from its bias and adds inputs in ascending order;
      // walking the weight column-wise keeps that order and the memory access
      // contiguous.
      acc = layer.bias;
      for (Eigen::Index i = 0; i < layer.weight.cols(); ++i) {
        const double xi = x(r, i);
        const double* w = layer.weight.col(i).data();
        for (Eigen::Index o = 0; o < acc.size(); ++o) acc(o) += w[o] * xi;
      }
      z.row(r) = acc.transpose();
    }
    switch (layer.activation) {
      case Activation::kIdentity:
        break;
      case Activation::kRelu:
        z = z.cwiseMax(0.0);
        break;
      case Activation::kSoftmax:
        softmax_rows(z);
        break;
    }
    x = std::move(z);
    if (cache != nullptr) cache->values.push_back(x);
  }
  return x;
}

Eigen::MatrixXd backward_batch(std::span<const DenseLayer> layers, const ForwardCache& cache,
                               const Eigen::MatrixXd& upstream, NetGrad& grads) {
  if (cache.values.size() != layers.size() + 1 || grads.size() != layers.size()) {
    throw std::invalid_argument("backward: cache or gradient buffer does not match the network");
  }
  const Eigen::MatrixXd& output = cache.values.back();
  if (upstream.rows() != output.rows() || upstream.cols() != output.cols()) {
    throw std::invalid_argument("backward: upstream gradient shape does not match the output");
  }
  Eigen::MatrixXd g = upstream;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& layer = layers[k];
    const Eigen::MatrixXd& y = cache.values[k + 1];
    switch (layer.activation) {
      case Activation::kIdentity:
        break;
      case Activation::kRelu:
        g = g.cwiseProduct((y.array() > 0.0).cast<double>().matrix());
        break;
      case Activation::kSoftmax: {
        const Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
        g = y.cwiseProduct(g - dots.replicate(1, g.cols()));
        break;
      }
    }
    grads[k].weight.noalias() += g.transpose() * cache.values[k];
    grads[k].bias += g.colwise().sum().transpose();
    g = g * layer.weight;
  }
  return g;
}

std::vector<double> net_forward(const DenseNet& net, std::span<const double> input) {
  if (input.size() != net.input_size()) {
    throw std::invalid_argument("net_forward: input length " + std::to_string(input.size()) +
                                " does not match network input size " +
                                std::to_string(net.input_size()));
  }
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(input.size()));
  for (std::size_t i = 0; i < input.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = input[i];
  const Eigen::MatrixXd y = forward_batch(net.layers, x);
  return {y.data(), y.data() + y.size()};
}

NetGradient net_gradient(const DenseNet& net, std::span<const double> input,
                         std::span<const double> upstream) {
  if (input.size() != net.input_size()) {
    throw std::invalid_argument("net_gradient: input length does not match network input size");
  }
  if (upstream.size() != net.output_size()) {
    throw std::invalid_argument("net_gradient: upstream length does not match network output size");
  }
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(input.size()));
  for (std::size_t i = 0; i < input.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = input[i];
  Eigen::MatrixXd g(1, static_cast<Eigen::Index>(upstream.size()));
  for (std::size_t i = 0; i < upstream.size(); ++i) g(0, static_cast<Eigen::Index>(i)) = upstream[i];

  ForwardCache cache;
  forward_batch(net.layers, x, &cache);
  NetGradient result;
  result.params = zero_grad(net.layers);
  const Eigen::MatrixXd dx = backward_batch(net.layers, cache, g, result.params);
  result.input.assign(dx.data(), dx.data() + dx.size());
  return result;
}

AdamState make_adam_state(std::span<const DenseLayer> layers) {
  AdamState s;
  s.first = zero_grad(layers);
  s.second = zero_grad(layers);
  return s;
}

void adam_step(std::span<DenseLayer> layers, const NetGrad& grads, AdamState& state, double lr) {
  if (grads.size() != layers.size() || state.first.size() != layers.size() ||
      state.second.size() != layers.size()) {
    throw std::invalid_argument("adam_step: gradient/state layer count does not match parameters");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& g = grads[k];
    if (g.weight.rows() != layers[k].weight.rows() || g.weight.cols() != layers[k].weight.cols() ||
        g.bias.size() != layers[k].bias.size()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch at layer " +
                                  std::to_string(k));
    }
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw std::invalid_argument("adam_step: non-finite gradient in layer " + std::to_string(k));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double eps = state.epsilon;

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t k = 0; k < layers.size(); ++k) {
    update(layers[k].weight, grads[k].weight, state.first[k].weight, state.second[k].weight);
    update(layers[k].bias, grads[k].bias, state.first[k].bias, state.second[k].bias);
  }
}

Grid2D softmax_channels(const Grid2D& logits) {
  Grid2D out = logits;
  for (std::size_t i = 0; i < out.cells(); ++i) {
    auto v = out.cell(i);
    if (v.empty()) continue;
    const double peak = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double& x : v) {
      x = std::exp(x - peak);
      total += x;
    }
    for (double& x : v) x /= total;
  }
  return out;
}

LossResult softmax_cross_entropy(const Grid2D& logits, const Grid2D& target,
                                 std::span<const std::uint8_t> mask) {
  if (!logits.same_shape(target)) {
    throw std::invalid_argument("softmax_cross_entropy: logits and target shapes differ");
  }
  if (!mask.empty() && mask.size() != logits.cells()) {
    throw std::invalid_argument("softmax_cross_entropy: mask length does not match cell count");
  }
  LossResult result{0.0, Grid2D(logits.height(), logits.width(), logits.channels())};
  std::size_t active = 0;
  for (std::size_t i = 0; i < logits.cells(); ++i) {
    if (mask.empty() || mask[i] != 0) ++active;
  }
  if (active == 0) return result;

  const double inv = 1.0 / static_cast<double>(active);
  const std::size_t nc = logits.channels();
  std::vector<double> prob(nc);
  for (std::size_t i = 0; i < logits.cells(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    auto z = logits.cell(i);
    auto t = target.cell(i);
    double tsum = 0.0;
    for (double x : t) {
      if (x < 0.0) throw std::invalid_argument("softmax_cross_entropy: negative target entry");
      tsum += x;
    }
    if (std::abs(tsum - 1.0) > 1e-9) {
      throw std::invalid_argument("softmax_cross_entropy: target does not sum to 1 at cell " +
                                  std::to_string(i));
    }
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      prob[c] = std::exp(z[c] - peak);
      total += prob[c];
    }
    const double log_total = std::log(total);
    auto g = result.gradient.cell(i);
    for (std::size_t c = 0; c < nc; ++c) {
      const double log_p = z[c] - peak - log_total;
      if (t[c] > 0.0) result.loss -= t[c] * log_p * inv;
      g[c] = (prob[c] / total - t[c]) * inv;
    }
  }
  return result;
}

}  // namespace hdmap

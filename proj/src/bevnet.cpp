#include "hdmap/bevnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hdmap/raster.hpp"

namespace hdmap {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd grid_to_matrix(const Grid2D& g) {
  return Eigen::Map<const RowMatrix>(g.data().data(), static_cast<Eigen::Index>(g.cells()),
                                     static_cast<Eigen::Index>(g.channels()));
}

Grid2D matrix_to_grid(const Eigen::MatrixXd& m, std::size_t rows, std::size_t cols) {
  Grid2D g(rows, cols, static_cast<std::size_t>(m.cols()));
  Eigen::Map<RowMatrix>(g.data().data(), m.rows(), m.cols()) = m;
  return g;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

// ---------------------------------------------------------------------------
// Labels

void LabelPack::validate() const {
  const std::size_t n = semantic.cells();
  if (instance.size() != n || !direction.same_spatial(semantic)) {
    throw std::invalid_argument("LabelPack: component rasters differ in size");
  }
  const std::size_t nd = direction.channels();
  for (std::size_t i = 0; i < n; ++i) {
    auto s = semantic.cell(i);
    std::size_t hot = 0, cls = 0;
    for (std::size_t c = 0; c < s.size(); ++c) {
      if (s[c] == 1.0) {
        ++hot;
        cls = c;
      } else if (s[c] != 0.0) {
        throw std::invalid_argument("LabelPack: semantic is not one-hot at cell " + std::to_string(i));
      }
    }
    if (hot != 1) throw std::invalid_argument("LabelPack: semantic is not one-hot at cell " + std::to_string(i));
    if ((instance[i] != 0) != (cls != 0)) {
      throw std::invalid_argument("LabelPack: instance id and class disagree at cell " + std::to_string(i));
    }
    auto d = direction.cell(i);
    std::vector<std::size_t> set;
    for (std::size_t c = 0; c < nd; ++c) {
      if (d[c] == 1.0) {
        set.push_back(c);
      } else if (d[c] != 0.0) {
        throw std::invalid_argument("LabelPack: direction entries must be 0 or 1");
      }
    }
    if (!set.empty() && (set.size() != 2 || set[1] - set[0] != nd / 2)) {
      throw std::invalid_argument("LabelPack: direction row is not a two-hot pair at cell " +
                                  std::to_string(i));
    }
  }
}

std::size_t direction_bin(double theta, std::size_t num_dirs) {
  const double n = static_cast<double>(num_dirs);
  const double raw = std::floor(theta * n / (2.0 * std::numbers::pi) + 0.5);
  const double wrapped = raw - n * std::floor(raw / n);
  return static_cast<std::size_t>(wrapped) % num_dirs;
}

Eigen::Vector2d direction_vector(std::size_t bin, std::size_t num_dirs) {
  const double theta = 2.0 * std::numbers::pi * static_cast<double>(bin) / static_cast<double>(num_dirs);
  return {std::sin(theta), std::cos(theta)};
}

Grid2D make_direction_labels(const VectorMap& vm, const BevConfig& bev, std::size_t num_dirs,
                             double step, std::span<const std::size_t> thickness) {
  if (num_dirs == 0 || num_dirs % 2 != 0) {
    throw std::invalid_argument("make_direction_labels: number of directions must be even, got " +
                                std::to_string(num_dirs));
  }
  if (!(step > 0.0)) throw std::invalid_argument("make_direction_labels: step must be positive");
  bev.validate();
  const std::size_t rows = bev.rows();
  const std::size_t cols = bev.cols();
  Grid2D labels(rows, cols, num_dirs);
  for (const auto& element : vm.elements) {
    const auto raster = dedupe_consecutive(to_raster(element.points, bev));
    if (raster.size() < 2) continue;
    const std::size_t thick = thickness.empty() ? 1 : thickness[class_index(element.cls)];
    const auto nodes = resample_polyline(raster, step);
    for (std::size_t cell : stroke_polyline(raster, thick, rows, cols)) {
      const Eigen::Vector2d centre(static_cast<double>(cell / cols), static_cast<double>(cell % cols));
      std::size_t nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double d = (nodes[k] - centre).squaredNorm();
        if (d < best) {
          best = d;
          nearest = k;
        }
      }
      const std::size_t lo = nearest == 0 ? 0 : nearest - 1;
      const std::size_t hi = std::min(nearest + 1, nodes.size() - 1);
      const Eigen::Vector2d t = nodes[hi] - nodes[lo];
      const std::size_t bin = direction_bin(std::atan2(t.x(), t.y()), num_dirs);
      auto row = labels.cell(cell);
      std::fill(row.begin(), row.end(), 0.0);
      row[bin] = 1.0;
      row[(bin + num_dirs / 2) % num_dirs] = 1.0;
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Losses

void LossWeights::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(delta_v > 0.0) || !(delta_d > 0.0)) {
    throw std::invalid_argument("LossWeights: alpha, beta, delta_v and delta_d must be positive");
  }
}

DiscriminativeTerms discriminative_loss(const Grid2D& embeddings,
                                        std::span<const std::uint32_t> instance,
                                        const LossWeights& w) {
  if (instance.size() != embeddings.cells()) {
    throw std::invalid_argument("discriminative_loss: instance labels do not match embedding cells");
  }
  const std::size_t dim = embeddings.channels();
  DiscriminativeTerms out;
  out.gradient = Grid2D(embeddings.height(), embeddings.width(), dim);

  std::map<std::uint32_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < instance.size(); ++i) {
    if (instance[i] != 0) clusters[instance[i]].push_back(i);
  }
  const std::size_t num = clusters.size();
  if (num == 0) return out;
  const double C = static_cast<double>(num);

  std::vector<Eigen::VectorXd> means;
  std::vector<const std::vector<std::size_t>*> members;
  for (const auto& [id, cells] : clusters) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t i : cells) {
      auto f = embeddings.cell(i);
      for (std::size_t e = 0; e < dim; ++e) mu(static_cast<Eigen::Index>(e)) += f[e];
    }
    mu /= static_cast<double>(cells.size());
    means.push_back(std::move(mu));
    members.push_back(&cells);
  }

  // Pull term.
  Eigen::VectorXd s(static_cast<Eigen::Index>(dim));
  for (std::size_t c = 0; c < num; ++c) {
    const auto& cells = *members[c];
    const double n = static_cast<double>(cells.size());
    const double scale = w.alpha * 2.0 / (C * n);
    Eigen::VectorXd mean_pull = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    std::vector<double> hinge(cells.size());
    std::vector<Eigen::VectorXd> signs(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      auto f = embeddings.cell(cells[j]);
      double dist = 0.0;
      for (std::size_t e = 0; e < dim; ++e) {
        const double diff = means[c](static_cast<Eigen::Index>(e)) - f[e];
        dist += std::abs(diff);
        s(static_cast<Eigen::Index>(e)) = sign(diff);
      }
      const double a = std::max(0.0, dist - w.delta_v);
      out.variance += a * a / (C * n);
      hinge[j] = a;
      signs[j] = s;
      if (a > 0.0) mean_pull += a * s;
    }
    mean_pull /= n;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      auto g = out.gradient.cell(cells[j]);
      for (std::size_t e = 0; e < dim; ++e) {
        const auto ei = static_cast<Eigen::Index>(e);
        g[e] += scale * (mean_pull(ei) - hinge[j] * signs[j](ei));
      }
    }
  }

  // Push term over ordered pairs; each unordered pair is visited once and doubled.
  if (num >= 2) {
    const double norm = C * (C - 1.0);
    std::vector<Eigen::VectorXd> mean_grad(num, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)));
    for (std::size_t a = 0; a < num; ++a) {
      for (std::size_t b = a + 1; b < num; ++b) {
        const Eigen::VectorXd diff = means[a] - means[b];
        const double hinge = std::max(0.0, 2.0 * w.delta_d - diff.cwiseAbs().sum());
        if (hinge <= 0.0) continue;
        out.distance += 2.0 * hinge * hinge / norm;
        const Eigen::VectorXd sg = diff.unaryExpr([](double x) { return sign(x); });
        mean_grad[a] -= (4.0 * hinge / norm) * sg;
        mean_grad[b] += (4.0 * hinge / norm) * sg;
      }
    }
    for (std::size_t c = 0; c < num; ++c) {
      const auto& cells = *members[c];
      const double n = static_cast<double>(cells.size());
      for (std::size_t i : cells) {
        auto g = out.gradient.cell(i);
        for (std::size_t e = 0; e < dim; ++e) {
          g[e] += w.beta * mean_grad[c](static_cast<Eigen::Index>(e)) / n;
        }
      }
    }
  }
  out.total = w.alpha * out.variance + w.beta * out.distance;
  return out;
}

LossResult direction_loss(const Grid2D& logits, const Grid2D& labels) {
  if (!logits.same_shape(labels)) {
    throw std::invalid_argument("direction_loss: logits and labels differ in shape");
  }
  Grid2D target(labels.height(), labels.width(), labels.channels());
  std::vector<std::uint8_t> mask(labels.cells(), 0);
  for (std::size_t i = 0; i < labels.cells(); ++i) {
    auto l = labels.cell(i);
    double total = 0.0;
    for (double v : l) total += v;
    if (total <= 0.0) continue;
    mask[i] = 1;
    auto t = target.cell(i);
    for (std::size_t c = 0; c < l.size(); ++c) t[c] = l[c] / total;
  }
  return softmax_cross_entropy(logits, target, mask);
}

Eigen::Vector2d step_node(const Eigen::Vector2d& c_now, const Eigen::Vector2d& d, double step) {
  if (std::abs(d.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("step_node: direction must be a unit vector");
  }
  return c_now + step * d;
}

// ---------------------------------------------------------------------------
// Neural view transformer

void ViewTransformParams::validate() const {
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    cameras[k].validate();
    if (cameras[k].input_size() != pv_rows * pv_cols || cameras[k].output_size() != td_rows * td_cols) {
      throw std::invalid_argument("view transform for camera " + std::to_string(k) +
                                  " does not map the configured raster sizes");
    }
  }
}

ViewTransformParams make_view_transform(std::size_t num_cameras, std::size_t pv_rows,
                                        std::size_t pv_cols, std::size_t td_rows,
                                        std::size_t td_cols, std::size_t hidden,
                                        std::mt19937_64& rng) {
  ViewTransformParams p;
  p.pv_rows = pv_rows;
  p.pv_cols = pv_cols;
  p.td_rows = td_rows;
  p.td_cols = td_cols;
  const std::size_t sizes[3] = {pv_rows * pv_cols, hidden, td_rows * td_cols};
  const Activation acts[2] = {Activation::kRelu, Activation::kIdentity};
  for (std::size_t k = 0; k < num_cameras; ++k) p.cameras.push_back(make_dense_net(sizes, acts, rng));
  return p;
}

Grid2D neural_view_transform(const Grid2D& persp, const ViewTransformParams& params,
                             std::size_t camera_index) {
  if (camera_index >= params.cameras.size()) {
    throw std::invalid_argument("neural_view_transform: camera index out of range");
  }
  if (persp.height() != params.pv_rows || persp.width() != params.pv_cols) {
    throw std::invalid_argument("neural_view_transform: perspective raster is " +
                                std::to_string(persp.height()) + "x" + std::to_string(persp.width()) +
                                ", transform expects " + std::to_string(params.pv_rows) + "x" +
                                std::to_string(params.pv_cols));
  }
  // One batch row per channel: the weights are shared channel-wise.
  const Eigen::MatrixXd planes = grid_to_matrix(persp).transpose();
  const Eigen::MatrixXd out = forward_rowwise(params.cameras[camera_index].layers, planes);
  return matrix_to_grid(out.transpose(), params.td_rows, params.td_cols);
}

Grid2D encode_perspective(const Grid2D& image, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("encode_perspective: factor must be >= 1");
  const std::size_t rows = image.height() / factor;
  const std::size_t cols = image.width() / factor;
  if (rows == 0 || cols == 0) throw std::invalid_argument("encode_perspective: image smaller than factor");
  Grid2D out(rows, cols, image.channels());
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      auto dst = out.cell(r, c);
      for (std::size_t dr = 0; dr < factor; ++dr) {
        for (std::size_t dc = 0; dc < factor; ++dc) {
          auto src = image.cell(r * factor + dr, c * factor + dc);
          for (std::size_t ch = 0; ch < dst.size(); ++ch) dst[ch] += src[ch] * inv;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoder

std::size_t DecoderParams::input_channels() const {
  if (layers.empty()) return 0;
  if (kernels.empty()) return layers.front().in();
  return layers.front().in() / (kernels.front() * kernels.front());
}

void DecoderParams::validate() const {
  if (branches != 1 && branches != 3) throw std::invalid_argument("DecoderParams: branches must be 1 or 3");
  if (layers.size() != branches * layers_per_branch()) {
    throw std::invalid_argument("DecoderParams: need one kernel size per trunk layer plus a head, per branch");
  }
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    if (kernels[k] % 2 == 0) throw std::invalid_argument("DecoderParams: kernel sizes must be odd");
  }
  const std::size_t heads[3] = {seg_channels, emb_channels, dir_channels};
  for (std::size_t b = 0; b < branches; ++b) {
    const std::size_t base = b * layers_per_branch();
    std::size_t channels = input_channels();
    for (std::size_t k = 0; k < kernels.size(); ++k) {
      if (layers[base + k].in() != kernels[k] * kernels[k] * channels) {
        throw std::invalid_argument("DecoderParams: trunk layer " + std::to_string(base + k) +
                                    " input size does not match its patch size");
      }
      channels = layers[base + k].out();
    }
    const std::size_t out = branches == 1 ? heads[0] + heads[1] + heads[2] : heads[b];
    const DenseLayer& head = layers[base + kernels.size()];
    if (head.in() != channels || head.out() != out) {
      throw std::invalid_argument("DecoderParams: head layer does not match the head channel counts");
    }
  }
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw std::invalid_argument("DecoderParams: non-finite weights");
    }
  }
}

DecoderParams make_decoder(std::size_t in_channels, std::size_t width, std::size_t depth,
                           std::size_t seg_channels, std::size_t emb_channels,
                           std::size_t dir_channels, std::mt19937_64& rng, std::size_t branches) {
  if (branches != 1 && branches != 3) throw std::invalid_argument("make_decoder: branches must be 1 or 3");
  DecoderParams p;
  p.seg_channels = seg_channels;
  p.emb_channels = emb_channels;
  p.dir_channels = dir_channels;
  p.branches = branches;
  p.kernels.assign(depth, 3);
  const std::size_t heads[3] = {seg_channels, emb_channels, dir_channels};
  for (std::size_t b = 0; b < branches; ++b) {
    std::size_t channels = in_channels;
    for (std::size_t k = 0; k < depth; ++k) {
      p.layers.push_back(make_dense_layer(9 * channels, width, Activation::kRelu, rng));
      channels = width;
    }
    const std::size_t out = branches == 1 ? seg_channels + emb_channels + dir_channels : heads[b];
    p.layers.push_back(make_dense_layer(channels, out, Activation::kIdentity, rng));
  }
  return p;
}

namespace {

// Calls f(dst, src, len, tap) for every run of `len` consecutive cells whose
// patch tap `tap` reads source cell `src + i` into destination cell `dst + i`.
template <typename F>
void for_each_tap_run(std::size_t rows, std::size_t cols, std::size_t kernel, F&& f) {
  const auto half = static_cast<long>(kernel / 2);
  const auto R = static_cast<long>(rows);
  const auto C = static_cast<long>(cols);
  Eigen::Index tap = 0;
  for (long dr = -half; dr <= half; ++dr) {
    for (long dc = -half; dc <= half; ++dc, ++tap) {
      const long c_lo = std::max(0L, -dc);
      const long c_hi = std::min(C, C - dc);
      if (c_hi <= c_lo) continue;
      for (long r = std::max(0L, -dr); r < std::min(R, R - dr); ++r) {
        const long dst = r * C + c_lo;
        f(static_cast<Eigen::Index>(dst), static_cast<Eigen::Index>(dst + dr * C + dc),
          static_cast<Eigen::Index>(c_hi - c_lo), tap);
      }
    }
  }
}

}  // namespace

Eigen::MatrixXd im2col(const Eigen::MatrixXd& cells, std::size_t rows, std::size_t cols,
                       std::size_t kernel) {
  const auto nc = cells.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cells.rows(), nc * static_cast<Eigen::Index>(kernel * kernel));
  for (Eigen::Index ch = 0; ch < nc; ++ch) {
    for_each_tap_run(rows, cols, kernel, [&](Eigen::Index dst, Eigen::Index src, Eigen::Index len, Eigen::Index tap) {
      out.col(tap * nc + ch).segment(dst, len) = cells.col(ch).segment(src, len);
    });
  }
  return out;
}

Eigen::MatrixXd col2im(const Eigen::MatrixXd& patches, std::size_t rows, std::size_t cols,
                       std::size_t channels, std::size_t kernel) {
  const auto nc = static_cast<Eigen::Index>(channels);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(patches.rows(), nc);
  for (Eigen::Index ch = 0; ch < nc; ++ch) {
    for_each_tap_run(rows, cols, kernel, [&](Eigen::Index dst, Eigen::Index src, Eigen::Index len, Eigen::Index tap) {
      out.col(ch).segment(src, len) += patches.col(tap * nc + ch).segment(dst, len);
    });
  }
  return out;
}

DecoderOutput decode_bev_forward(const Grid2D& features, const DecoderParams& params,
                                 DecoderActivations& act) {
  params.validate();
  if (features.channels() != params.input_channels()) {
    throw std::invalid_argument("decode_bev: features have " + std::to_string(features.channels()) +
                                " channels, decoder expects " +
                                std::to_string(params.input_channels()));
  }
  const std::size_t rows = features.height();
  const std::size_t cols = features.width();
  act.rows = rows;
  act.cols = cols;
  act.layers.assign(params.layers.size(), {});
  const Eigen::MatrixXd input = grid_to_matrix(features);
  // The first layer's patches are the same for every branch.
  const Eigen::MatrixXd first =
      params.kernels.empty() || params.kernels[0] == 1 ? input : im2col(input, rows, cols, params.kernels[0]);
  std::vector<Eigen::MatrixXd> heads;
  for (std::size_t b = 0; b < params.branches; ++b) {
    const std::size_t base = b * params.layers_per_branch();
    Eigen::MatrixXd x = first;
    for (std::size_t k = 0; k < params.kernels.size(); ++k) {
      Eigen::MatrixXd patches = k == 0 || params.kernels[k] == 1 ? std::move(x) : im2col(x, rows, cols, params.kernels[k]);
      x = forward_batch(std::span<const DenseLayer>(&params.layers[base + k], 1), std::move(patches),
                        &act.layers[base + k]);
    }
    const std::size_t h = base + params.kernels.size();
    heads.push_back(forward_batch(std::span<const DenseLayer>(&params.layers[h], 1), std::move(x), &act.layers[h]));
  }
  if (params.branches == 3) {
    return {matrix_to_grid(heads[0], rows, cols), matrix_to_grid(heads[1], rows, cols),
            matrix_to_grid(heads[2], rows, cols)};
  }
  const Eigen::MatrixXd& head = heads[0];
  const auto ns = static_cast<Eigen::Index>(params.seg_channels);
  const auto ne = static_cast<Eigen::Index>(params.emb_channels);
  const auto nd = static_cast<Eigen::Index>(params.dir_channels);
  return {matrix_to_grid(head.leftCols(ns), rows, cols),
          matrix_to_grid(head.middleCols(ns, ne), rows, cols),
          matrix_to_grid(head.rightCols(nd), rows, cols)};
}

DecoderOutput decode_bev(const Grid2D& features, const DecoderParams& params) {
  DecoderActivations act;
  return decode_bev_forward(features, params, act);
}

Grid2D decode_bev_backward(const DecoderParams& params, const DecoderActivations& act,
                           const Grid2D& seg_grad, const Grid2D& emb_grad, const Grid2D& dir_grad,
                           NetGrad& grads, InputGradient input) {
  if (grads.size() != params.layers.size() || act.layers.size() != params.layers.size()) {
    throw std::invalid_argument("decode_bev_backward: gradient buffer does not match the decoder");
  }
  if (input == InputGradient::kSegmentation && params.branches != 3) {
    throw std::invalid_argument("decode_bev_backward: a segmentation-only input gradient needs three branches");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(act.rows * act.cols);
  std::vector<Eigen::MatrixXd> upstream;
  if (params.branches == 3) {
    upstream = {grid_to_matrix(seg_grad), grid_to_matrix(emb_grad), grid_to_matrix(dir_grad)};
  } else {
    const auto ns = static_cast<Eigen::Index>(params.seg_channels);
    const auto ne = static_cast<Eigen::Index>(params.emb_channels);
    const auto nd = static_cast<Eigen::Index>(params.dir_channels);
    Eigen::MatrixXd g(n, ns + ne + nd);
    g.leftCols(ns) = grid_to_matrix(seg_grad);
    g.middleCols(ns, ne) = grid_to_matrix(emb_grad);
    g.rightCols(nd) = grid_to_matrix(dir_grad);
    upstream.push_back(std::move(g));
  }

  NetGrad one(1);
  auto run = [&](std::size_t k, const Eigen::MatrixXd& up) {
    one[0] = std::move(grads[k]);
    Eigen::MatrixXd dx = backward_batch(std::span<const DenseLayer>(&params.layers[k], 1), act.layers[k], up, one);
    grads[k] = std::move(one[0]);
    return dx;
  };
  // Gradient with respect to the first layer's patches, summed over branches.
  Eigen::MatrixXd first;
  for (std::size_t b = 0; b < params.branches; ++b) {
    const std::size_t base = b * params.layers_per_branch();
    Eigen::MatrixXd g = run(base + params.kernels.size(), upstream[b]);
    for (std::size_t k = params.kernels.size(); k-- > 1;) {
      const Eigen::MatrixXd dpatch = run(base + k, g);
      const std::size_t in_ch = params.layers[base + k].in() / (params.kernels[k] * params.kernels[k]);
      g = params.kernels[k] == 1 ? dpatch : col2im(dpatch, act.rows, act.cols, in_ch, params.kernels[k]);
    }
    if (!params.kernels.empty()) g = run(base, g);
    if (b == 0) {
      first = std::move(g);
    } else if (input == InputGradient::kAllHeads) {
      first += g;
    }
  }
  if (params.kernels.empty() || params.kernels[0] == 1) return matrix_to_grid(first, act.rows, act.cols);
  return matrix_to_grid(col2im(first, act.rows, act.cols, params.input_channels(), params.kernels[0]), act.rows,
                        act.cols);
}

}  // namespace hdmap

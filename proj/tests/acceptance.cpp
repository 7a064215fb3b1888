// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance --cli <path to hdmap> --work <scratch dir> [--only N,...]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hdmap/bevnet.hpp"
#include "hdmap/io.hpp"
#include "hdmap/metrics.hpp"
#include "hdmap/numerics.hpp"
#include "hdmap/pillars.hpp"
#include "hdmap/synth.hpp"
#include "hdmap/training.hpp"
#include "hdmap/vectorize.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace hdmap;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Polyline segment(Eigen::Vector2d a, Eigen::Vector2d b, double conf = 1.0) {
  return {ElementClass::kDivider, {a, b}, conf};
}

// Random AP fixture: short segments so each sampled element has at most 30
// points, predictions jittered from random ground truths.
void ap_fixture(std::mt19937_64& rng, std::vector<Polyline>& preds, std::vector<Polyline>& gts) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), jitter(-0.4, 0.4), conf(0, 1);
  preds.clear();
  gts.clear();
  const std::size_t ng = 1 + rng() % 5, np = rng() % 8;
  for (std::size_t i = 0; i < ng; ++i) gts.push_back(segment({u(rng), u(rng)}, {u(rng), u(rng)}));
  for (std::size_t i = 0; i < np; ++i) {
    const Polyline& src = gts[rng() % ng];
    preds.push_back(segment(src.points[0] + Eigen::Vector2d(jitter(rng), jitter(rng)),
                            src.points[1] + Eigen::Vector2d(jitter(rng), jitter(rng)), std::round(conf(rng) * 5) / 5));
  }
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> dim(1, 32), chans(1, 3), npts(0, 30);
  std::uniform_real_distribution<double> coord(-5, 5);
  double worst = 0.0;
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Grid2D a = testing::random_grid(dim(rng), dim(rng), chans(rng), rng, 0, 1);
    Grid2D b(a.height(), a.width(), a.channels());
    for (double& v : a.data()) v = v < 0.4 ? 1.0 : 0.0;
    for (double& v : b.data()) v = coord(rng) < -1 ? 1.0 : 0.0;
    const auto got = iou(a, b), want = oracle::iou(a, b);
    for (std::size_t c = 0; c < got.size(); ++c) worst = std::max(worst, std::abs(got[c] - want[c]));

    PointSet p, q;
    for (std::size_t i = 0, n = npts(rng); i < n; ++i) p.emplace_back(coord(rng), coord(rng));
    for (std::size_t i = 0, n = npts(rng); i < n; ++i) q.emplace_back(coord(rng), coord(rng));
    worst = std::max(worst, std::abs(chamfer_directed(p, q, 50.0) - oracle::directed(p, q, 50.0)));
    const Chamfer c = chamfer(p, q, 50.0);
    worst = std::max(worst, std::abs(c.average - oracle::average_cd(p, q, 50.0)));
    worst = std::max(worst, std::abs(c.sum - (oracle::directed(p, q, 50.0) + oracle::directed(q, p, 50.0))));

    std::vector<Polyline> preds, gts;
    ap_fixture(rng, preds, gts);
    std::vector<std::vector<double>> cd(preds.size(), std::vector<double>(gts.size()));
    std::vector<double> conf;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      conf.push_back(preds[i].confidence);
      for (std::size_t j = 0; j < gts.size(); ++j) {
        const PointSet sp = sample_polyline(preds[i], 0.15), sg = sample_polyline(gts[j], 0.15);
        if (sp.size() > 30 || sg.size() > 30) ++mismatches;
        cd[i][j] = oracle::average_cd(sp, sg, 1e9);
      }
    }
    for (double t : {0.2, 0.5, 1.0}) {
      worst = std::max(worst, std::abs(average_precision(preds, gts, t, 0.15).ap - oracle::ap(conf, cd, gts.size(), t)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10.0 && mismatches == 0,
          fmt("max |diff| %.3g over 100 instances (tol 1e-12), %.2f s (limit 10 s)", worst, secs)};
}

Outcome ap_monotone() {
  std::mt19937_64 rng(202);
  std::size_t violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Polyline> preds, gts;
    ap_fixture(rng, preds, gts);
    const double a = average_precision(preds, gts, 0.2, 0.15).ap;
    const double b = average_precision(preds, gts, 0.5, 0.15).ap;
    const double c = average_precision(preds, gts, 1.0, 0.15).ap;
    if (!(a <= b && b <= c)) ++violations;
  }
  return {violations == 0, fmt("%zu of 100 fixtures violate AP@0.2 <= AP@0.5 <= AP@1.0", violations)};
}

// ---------------------------------------------------------------------------
// Gradient checks

struct GradStats {
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t nudged = 0;

  void add(double fd, double analytic) {
    worst = std::max(worst, testing::rel_error(fd, analytic));
    ++checked;
  }
};

// Smallest distance of any discriminative-loss kink argument from zero: L1
// sign flips of residuals and mean differences, and both hinges.
double discriminative_margin(const Grid2D& emb, const std::vector<std::uint32_t>& ids, const LossWeights& w) {
  std::map<std::uint32_t, Eigen::VectorXd> sum;
  std::map<std::uint32_t, double> count;
  const auto dim = static_cast<Eigen::Index>(emb.channels());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!ids[i]) continue;
    auto& s = sum.try_emplace(ids[i], Eigen::VectorXd::Zero(dim)).first->second;
    for (Eigen::Index e = 0; e < dim; ++e) s(e) += emb.cell(i)[static_cast<std::size_t>(e)];
    count[ids[i]] += 1.0;
  }
  std::map<std::uint32_t, Eigen::VectorXd> mean;
  for (auto& [id, s] : sum) mean[id] = s / count[id];
  double margin = 1e300;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!ids[i]) continue;
    double l1 = 0.0;
    for (Eigen::Index e = 0; e < dim; ++e) {
      const double r = mean[ids[i]](e) - emb.cell(i)[static_cast<std::size_t>(e)];
      margin = std::min(margin, std::abs(r));
      l1 += std::abs(r);
    }
    margin = std::min(margin, std::abs(l1 - w.delta_v));
  }
  for (auto& [a, ma] : mean) {
    for (auto& [b, mb] : mean) {
      if (a >= b) continue;
      margin = std::min(margin, std::abs((ma - mb).lpNorm<1>() - 2.0 * w.delta_d));
      for (Eigen::Index e = 0; e < dim; ++e) margin = std::min(margin, std::abs(ma(e) - mb(e)));
    }
  }
  return margin;
}

// True when a ReLU changes state anywhere between the two caches.
bool relu_pattern_differs(const ForwardCache& a, const ForwardCache& b) {
  for (std::size_t k = 1; k < a.values.size(); ++k) {
    for (Eigen::Index i = 0; i < a.values[k].size(); ++i) {
      if ((a.values[k].data()[i] > 0.0) != (b.values[k].data()[i] > 0.0)) return true;
    }
  }
  return false;
}

void check_discriminative(std::mt19937_64& rng, GradStats& st) {
  const LossWeights w{1.3, 0.7, 0.5, 1.5};
  const std::size_t cells = 12, dim = 3;
  std::uniform_int_distribution<std::uint32_t> id(0, 3);
  std::vector<std::uint32_t> ids(cells);
  Grid2D emb;
  // Redraw until every kink is at least 100 steps away.
  for (;;) {
    for (auto& v : ids) v = id(rng);
    emb = testing::random_grid(3, 4, dim, rng, -2, 2);
    if (discriminative_margin(emb, ids, w) > 1e-2) break;
    ++st.nudged;
  }
  const auto analytic = discriminative_loss(emb, ids, w).gradient;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const double fd = testing::central_difference(emb.data()[i], [&] { return discriminative_loss(emb, ids, w).total; });
    st.add(fd, analytic.data()[i]);
  }
}

void check_direction(std::mt19937_64& rng, GradStats& st) {
  const std::size_t nd = 8;
  Grid2D logits = testing::random_grid(3, 3, nd, rng, -3, 3);
  Grid2D labels(3, 3, nd);
  std::uniform_int_distribution<std::size_t> bin(0, nd - 1), coin(0, 2);
  for (std::size_t i = 0; i < labels.cells(); ++i) {
    if (coin(rng) == 0) continue;
    const std::size_t b = bin(rng);
    labels.cell(i)[b] = labels.cell(i)[(b + nd / 2) % nd] = 1.0;
  }
  const auto analytic = direction_loss(logits, labels).gradient;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    st.add(testing::central_difference(logits.data()[i], [&] { return direction_loss(logits, labels).loss; }),
           analytic.data()[i]);
  }
}

void check_segmentation(std::mt19937_64& rng, GradStats& st) {
  Grid2D logits = testing::random_grid(3, 3, 4, rng, -3, 3);
  Grid2D target(3, 3, 4);
  std::uniform_int_distribution<std::size_t> cls(0, 3);
  for (std::size_t i = 0; i < target.cells(); ++i) target.cell(i)[cls(rng)] = 1.0;
  const auto analytic = softmax_cross_entropy(logits, target).gradient;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    st.add(testing::central_difference(logits.data()[i], [&] { return softmax_cross_entropy(logits, target).loss; }),
           analytic.data()[i]);
  }
}

void check_dense_net(std::mt19937_64& rng, GradStats& st) {
  const std::size_t sizes[] = {5, 7, 6, 4};
  const Activation acts[] = {Activation::kRelu, Activation::kRelu, Activation::kSoftmax};
  DenseNet net = make_dense_net(sizes, acts, rng);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> x(5), up(4);
  for (auto& v : x) v = u(rng);
  for (auto& v : up) v = u(rng);
  auto objective = [&] {
    const auto y = net_forward(net, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
    return s;
  };
  auto pattern = [&] {
    Eigen::MatrixXd in(1, 5);
    for (int i = 0; i < 5; ++i) in(0, i) = x[static_cast<std::size_t>(i)];
    ForwardCache c;
    forward_batch(net.layers, in, &c);
    return c;
  };
  const auto g = net_gradient(net, x, up);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    for (Eigen::Index i = 0; i < net.layers[k].weight.size(); ++i) {
      double& p = net.layers[k].weight.data()[i];
      const double saved = p;
      p = saved + 1e-4;
      const ForwardCache hi = pattern();
      p = saved - 1e-4;
      const ForwardCache lo = pattern();
      p = saved;
      if (relu_pattern_differs(hi, lo)) {
        ++st.nudged;
        continue;
      }
      st.add(testing::central_difference(p, objective), g.params[k].weight.data()[i]);
    }
  }
}

void check_decoder(std::mt19937_64& rng, GradStats& st, std::size_t branches) {
  const DecoderParams params = make_decoder(3, 4, 2, 3, 2, 4, rng, branches);
  // Only relu layers have kinks; the heads are linear.
  auto relu_differs = [&](const DecoderActivations& hi, const DecoderActivations& lo) {
    for (std::size_t k = 0; k < hi.layers.size(); ++k) {
      if (params.layers[k].activation == Activation::kRelu && relu_pattern_differs(hi.layers[k], lo.layers[k])) {
        return true;
      }
    }
    return false;
  };
  Grid2D features = testing::random_grid(4, 5, 3, rng, -1, 1);
  const Grid2D gs = testing::random_grid(4, 5, 3, rng), ge = testing::random_grid(4, 5, 2, rng),
               gd = testing::random_grid(4, 5, 4, rng);
  auto dot = [](const Grid2D& a, const Grid2D& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
  };
  auto objective = [&] {
    const DecoderOutput o = decode_bev(features, params);
    return dot(o.seg_logits, gs) + dot(o.embeddings, ge) + dot(o.dir_logits, gd);
  };
  DecoderActivations act;
  decode_bev_forward(features, params, act);
  NetGrad grads = zero_grad(params.layers);
  const Grid2D gin = decode_bev_backward(params, act, gs, ge, gd, grads);
  auto kink_near = [&](double& x) {
    const double saved = x;
    DecoderActivations hi, lo;
    x = saved + 1e-4;
    decode_bev_forward(features, params, hi);
    x = saved - 1e-4;
    decode_bev_forward(features, params, lo);
    x = saved;
    return relu_differs(hi, lo);
  };
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (kink_near(features.data()[i])) {
      ++st.nudged;
      continue;
    }
    st.add(testing::central_difference(features.data()[i], objective), gin.data()[i]);
  }
  DecoderParams mut = params;
  auto objective_p = [&] {
    const DecoderOutput o = decode_bev(features, mut);
    return dot(o.seg_logits, gs) + dot(o.embeddings, ge) + dot(o.dir_logits, gd);
  };
  for (std::size_t k = 0; k < mut.layers.size(); ++k) {
    for (Eigen::Index i = 0; i < mut.layers[k].weight.size(); i += 3) {
      double& p = mut.layers[k].weight.data()[i];
      const double saved = p;
      DecoderActivations hi, lo;
      p = saved + 1e-4;
      decode_bev_forward(features, mut, hi);
      p = saved - 1e-4;
      decode_bev_forward(features, mut, lo);
      p = saved;
      if (relu_differs(hi, lo)) {
        ++st.nudged;
        continue;
      }
      st.add(testing::central_difference(p, objective_p), grads[k].weight.data()[i]);
    }
  }
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  GradStats st;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    check_discriminative(rng, st);
    check_direction(rng, st);
    check_segmentation(rng, st);
    check_dense_net(rng, st);
    check_decoder(rng, st, seed % 2 == 0 ? 1 : 3);
  }
  const double secs = seconds_since(t0);
  return {st.worst < 1e-3 && secs < 30.0,
          fmt("max rel err %.3g over %zu partials, 100 seeds (tol 1e-3, %zu near-kink draws skipped), %.2f s (limit 30 s)",
              st.worst, st.checked, st.nudged, secs)};
}

// ---------------------------------------------------------------------------

Outcome discriminative_zero_cases() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-3, 3), pos(0.2, 4.0), spread(1.0, 1.5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const LossWeights w{pos(rng), pos(rng), pos(rng), pos(rng)};
    const std::size_t dim = 1 + rng() % 4, clusters = 2 + rng() % 4;
    // Means spaced along the first axis, at least 2 * delta_d apart.
    std::vector<std::vector<double>> means(clusters, std::vector<double>(dim, 0.0));
    Eigen::VectorXd base(static_cast<Eigen::Index>(dim));
    for (auto& v : base) v = u(rng);
    double offset = 0.0;
    for (std::size_t c = 0; c < clusters; ++c) {
      for (std::size_t e = 0; e < dim; ++e) means[c][e] = base(static_cast<Eigen::Index>(e));
      means[c][0] += offset;
      offset += 2.0 * w.delta_d * spread(rng);
    }
    Grid2D emb(4, 4, dim);
    std::vector<std::uint32_t> ids(16, 0);
    for (std::size_t i = 0; i < 16; ++i) {
      ids[i] = static_cast<std::uint32_t>(i % (clusters + 1));
      if (ids[i]) {
        for (std::size_t e = 0; e < dim; ++e) emb.cell(i)[e] = means[ids[i] - 1][e];
      } else {
        for (std::size_t e = 0; e < dim; ++e) emb.cell(i)[e] = u(rng);
      }
    }
    worst = std::max(worst, std::abs(discriminative_loss(emb, ids, w).total));

    // Two constant clusters on one mean.
    std::vector<std::uint32_t> two(16);
    for (std::size_t i = 0; i < 16; ++i) {
      two[i] = 1 + static_cast<std::uint32_t>(i % 2);
      for (std::size_t e = 0; e < dim; ++e) emb.cell(i)[e] = base(static_cast<Eigen::Index>(e));
    }
    const DiscriminativeTerms t = discriminative_loss(emb, two, w);
    const double want = w.beta * (2.0 * w.delta_d) * (2.0 * w.delta_d);
    worst = std::max(worst, std::abs(t.total - want) / want);
    worst = std::max(worst, std::abs(t.variance));
  }
  return {worst < 1e-12, fmt("max deviation %.3g over 100 random weightings (separated: L = 0; coincident: L = beta (2 delta_d)^2)", worst)};
}

Outcome ipm_round_trip() {
  const auto rig = default_rig();
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> fwd(3.0, 25.0), lat(-0.8, 0.8);
  double worst = 0.0;
  std::size_t done = 0, misses = 0;
  while (done < 1000) {
    const CameraModel& cam = rig[done % rig.size()];
    // Sample along the camera's ground heading so the point is in view.
    const Eigen::Vector3d axis = cam.rotation.col(2);
    const Eigen::Vector2d h = Eigen::Vector2d(axis.x(), axis.y()).normalized();
    const double f = fwd(rng), l = lat(rng) * f;
    const Eigen::Vector3d p(cam.translation.x() + f * h.x() - l * h.y(), cam.translation.y() + f * h.y() + l * h.x(), 0.0);
    const PixelProjection px = project_ego_to_pixel(cam, p);
    if (!px.in_front || px.u < 0 || px.v < 0 || px.u > double(cam.width - 1) || px.v > double(cam.height - 1)) {
      ++misses;
      continue;
    }
    const auto g = ipm_pixel_to_ground(cam, px.u, px.v);
    if (!g) return {false, fmt("ground point (%.3f, %.3f) did not back-project", p.x(), p.y())};
    worst = std::max(worst, (*g - p.head<2>()).norm());
    ++done;
  }
  return {worst < 1e-9, fmt("max error %.3g m over 1000 ground points (tol 1e-9 m)", worst)};
}

Outcome ideal_vectorize() {
  const auto t0 = Clock::now();
  const BevConfig bev;
  std::size_t bad = 0, count_mismatch = 0, elements = 0;
  double worst = 0.0;
  for (std::size_t s = 0; s < 50; ++s) {
    SceneSpec spec;
    spec.seed = scene_seed(606, s);
    const Scene sc = gen_scene(spec, bev, {});
    const IdealGrids ig = ideal_grids(sc.labels, 16, LossWeights{}.delta_d);
    const VectorMap vm = vectorize(ig.seg, ig.embedding, ig.direction, bev);
    for (ElementClass cls : kAllClasses) {
      const auto n = [&](const VectorMap& m) {
        return std::count_if(m.elements.begin(), m.elements.end(), [&](const Polyline& p) { return p.cls == cls; });
      };
      if (n(vm) != n(sc.map)) ++count_mismatch;
    }
    for (const Polyline& e : vm.elements) {
      double best = 1e300;
      for (const Polyline& g : sc.map.elements) {
        if (g.cls == e.cls) best = std::min(best, chamfer(sample_polyline(e, bev.pitch), sample_polyline(g, bev.pitch), 1e9).average);
      }
      worst = std::max(worst, best);
      if (!(best < 0.15)) ++bad;
      ++elements;
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && count_mismatch == 0 && secs < 60.0,
          fmt("%zu elements, worst CD %.4f m (tol 0.15), %zu bad, %zu class-count mismatches, %.1f s (limit 60 s)",
              elements, worst, bad, count_mismatch, secs)};
}

Outcome toy_training(const fs::path& work) {
  const fs::path train_dir = work / "train200", hold_dir = work / "holdout";
  fs::remove_all(train_dir);
  fs::remove_all(hold_dir);
  const auto rig = default_rig();
  generate_dataset(train_dir, 200, 0, BevConfig{}, rig);
  generate_dataset(hold_dir, 20, 1000, BevConfig{}, rig);
  TrainConfig cfg;
  cfg.seed = 0;
  const auto t0 = Clock::now();
  const TrainResult r = train_toy(train_dir, cfg);
  const double secs = seconds_since(t0);
  const auto ious = segmentation_iou(r.model, load_samples(hold_dir, r.model));
  const double ratio = r.final_loss / r.initial_loss;
  return {ious[0] >= 0.40 && ratio <= 0.5 && secs < 900.0,
          fmt("held-out divider IoU %.4f (need >= 0.40), loss %.4f -> %.4f ratio %.3f (need <= 0.5), %.0f s (limit 900 s)",
              ious[0], r.initial_loss, r.final_loss, ratio, secs)};
}

Outcome pillar_shuffles() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> x(-31, 31), y(-16, 16), z(-0.5, 0.5);
  const BevConfig bev;
  PointCloud cloud;
  for (int i = 0; i < 3000; ++i) cloud.push_back(std::vector<double>{x(rng), y(rng), z(rng)});
  const std::size_t sizes[] = {pillar_input_size(0), 16};
  const Activation acts[] = {Activation::kRelu};
  const DenseNet pn = make_dense_net(sizes, acts, rng);
  const Grid2D ref = aggregate_pillars(voxelize_dynamic(cloud, bev), cloud, pn);
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t differing = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    PointCloud shuffled;
    for (std::size_t i : order) shuffled.push_back(cloud.point(i));
    const Grid2D g = aggregate_pillars(voxelize_dynamic(shuffled, bev), shuffled, pn);
    if (g.data() != ref.data()) ++differing;
  }
  return {differing == 0, fmt("%zu of 1000 shuffles differ bitwise (3000 points)", differing)};
}

int run_cli(const fs::path& cli, const std::string& args) {
  const std::string cmd = "'" + cli.string() + "' " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

// Every regular file under a directory, by relative path.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

Outcome cli_determinism(const fs::path& cli, const fs::path& work) {
  if (cli.empty()) return {false, "no --cli given"};
  std::vector<std::string> differ;
  std::size_t files = 0;
  for (int run = 0; run < 2; ++run) {
    const fs::path d = work / ("det" + std::to_string(run));
    fs::remove_all(d);
    auto q = [&](const char* sub) { return "'" + (d / sub).string() + "'"; };
    if (run_cli(cli, "synth --n 3 --seed 5 --out " + q("data")) != 0 ||
        run_cli(cli, "train --data " + q("data") + " --seed 0 --steps 20 --log-every 0 --out " + q("train")) != 0 ||
        run_cli(cli, "infer --model " + q("train/model") + " --data " + q("data") + " --out " + q("infer")) != 0 ||
        run_cli(cli, "vectorize --in " + q("infer") + " --out " + q("vec")) != 0 ||
        run_cli(cli, "vectorize --ideal --in " + q("data") + " --out " + q("vec_ideal")) != 0) {
      return {false, "a CLI step failed"};
    }
  }
  for (const char* sub : {"data", "train", "vec", "vec_ideal"}) {
    const auto a = snapshot(work / "det0" / sub), b = snapshot(work / "det1" / sub);
    if (a.size() != b.size()) differ.push_back(std::string(sub) + " (file lists)");
    for (const auto& [name, bytes] : a) {
      ++files;
      const auto it = b.find(name);
      if (it == b.end() || it->second != bytes) differ.push_back(std::string(sub) + "/" + name);
    }
  }
  std::string detail = fmt("%zu files compared across two runs of synth, train, vectorize; %zu differ", files, differ.size());
  if (!differ.empty()) detail += " (first: " + differ.front() + ")";
  return {differ.empty() && files > 0, detail};
}

Outcome codec_suites() {
  std::mt19937_64 rng(1010);
  std::size_t round_trip_fail = 0, accepted_truncations = 0, values = 0, truncations = 0;
  auto expect_reject = [&](auto&& f) {
    ++truncations;
    try {
      f();
      ++accepted_truncations;
    } catch (const FormatError&) {
    }
  };
  std::uniform_int_distribution<std::size_t> dim(0, 5);
  std::uniform_real_distribution<double> v(-1e4, 1e4);
  for (int i = 0; i < 200; ++i, ++values) {
    Grid2D g(dim(rng), dim(rng), 1 + dim(rng));
    for (double& x : g.data()) x = static_cast<float>(v(rng));
    const std::string bytes = encode_bvg(g);
    if (!(decode_bvg(bytes) == g)) ++round_trip_fail;
    for (std::size_t n = 0; n < bytes.size(); ++n) expect_reject([&] { decode_bvg(std::string_view(bytes).substr(0, n)); });
  }
  for (int i = 0; i < 200; ++i, ++values) {
    PointCloud pc(dim(rng) % 3);
    std::vector<double> p(pc.stride());
    for (std::size_t n = 0, m = dim(rng) * 4; n < m; ++n) {
      for (double& x : p) x = static_cast<float>(v(rng));
      pc.push_back(p);
    }
    const std::string bytes = encode_bvp(pc);
    if (!(decode_bvp(bytes) == pc)) ++round_trip_fail;
    for (std::size_t n = 0; n < bytes.size(); ++n) expect_reject([&] { decode_bvp(std::string_view(bytes).substr(0, n)); });
  }
  std::uniform_real_distribution<double> coord(-30, 30);
  for (int i = 0; i < 200; ++i, ++values) {
    VectorMap vm{BevConfig{}, {}};
    for (std::size_t e = 0, ne = dim(rng); e < ne; ++e) {
      Polyline pl;
      pl.cls = kAllClasses[rng() % kNumClasses];
      pl.confidence = std::round(std::abs(coord(rng)) / 30 * 1e6) / 1e6;
      for (std::size_t k = 0, nk = 2 + dim(rng); k < nk; ++k) {
        pl.points.emplace_back(std::round(coord(rng) * 1e6) / 1e6, std::round(coord(rng) * 1e6) / 1e6);
      }
      vm.elements.push_back(std::move(pl));
    }
    const std::string text = encode_vector_map(vm);
    const VectorMap back = decode_vector_map(text);
    bool same = back.elements.size() == vm.elements.size() && back.bev == vm.bev;
    for (std::size_t e = 0; same && e < vm.elements.size(); ++e) {
      same = back.elements[e].cls == vm.elements[e].cls &&
             std::abs(back.elements[e].confidence - vm.elements[e].confidence) < 1e-9 &&
             back.elements[e].points.size() == vm.elements[e].points.size();
      for (std::size_t k = 0; same && k < vm.elements[e].points.size(); ++k) {
        same = (back.elements[e].points[k] - vm.elements[e].points[k]).norm() < 1e-9;
      }
    }
    if (!same || encode_vector_map(back) != text) ++round_trip_fail;
    // The trailing newline is whitespace; every cut into the document proper
    // must be rejected.
    const std::size_t body = text.find_last_not_of('\n') + 1;
    for (std::size_t n = 0; n < body; ++n) expect_reject([&] { decode_vector_map(std::string_view(text).substr(0, n)); });
  }
  return {round_trip_fail == 0 && accepted_truncations == 0,
          fmt("%zu values (200 per codec): %zu round-trip failures; %zu truncated inputs, %zu accepted", values,
              round_trip_fail, truncations, accepted_truncations)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string cli, work = (fs::temp_directory_path() / "hdmap_acceptance").string();
  std::vector<int> only;
  app.add_option("--cli", cli, "path to the hdmap executable");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::function<Outcome()>> criteria = {
      metric_oracles,
      ap_monotone,
      gradient_checks,
      discriminative_zero_cases,
      ipm_round_trip,
      ideal_vectorize,
      [&] { return toy_training(work); },
      pillar_shuffles,
      [&] { return cli_determinism(cli, work); },
      codec_suites,
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2d: %s  %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

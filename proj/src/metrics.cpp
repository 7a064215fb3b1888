#include "hdmap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hdmap/raster.hpp"

namespace hdmap {

std::vector<double> iou(const Grid2D& pred, const Grid2D& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("iou: grid shapes differ");
  std::vector<double> out(pred.channels(), 0.0);
  for (std::size_t ch = 0; ch < pred.channels(); ++ch) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.cells(); ++i) {
      const bool a = pred.cell(i)[ch] != 0.0;
      const bool b = gt.cell(i)[ch] != 0.0;
      inter += (a && b) ? 1 : 0;
      uni += (a || b) ? 1 : 0;
    }
    out[ch] = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

PointSet sample_polyline(const Polyline& p, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("sample_polyline: spacing must be positive");
  p.validate();
  std::vector<double> cum(p.points.size(), 0.0);
  for (std::size_t i = 1; i < p.points.size(); ++i) {
    cum[i] = cum[i - 1] + (p.points[i] - p.points[i - 1]).norm();
  }
  const double total = cum.back();
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(total / spacing - 1e-9)));
  PointSet out;
  out.reserve(n + 1);
  out.push_back(p.points.front());
  std::size_t seg = 1;
  for (std::size_t k = 1; k < n; ++k) {
    const double s = total * static_cast<double>(k) / static_cast<double>(n);
    while (seg + 1 < p.points.size() && cum[seg] < s) ++seg;
    const double len = cum[seg] - cum[seg - 1];
    const double t = std::clamp((s - cum[seg - 1]) / len, 0.0, 1.0);
    out.push_back(p.points[seg - 1] + t * (p.points[seg] - p.points[seg - 1]));
  }
  out.push_back(p.points.back());
  return out;
}

double chamfer_directed(const PointSet& a, const PointSet& b, double cap) {
  if (a.empty() || b.empty()) return cap;
  double total = 0.0;
  for (const auto& x : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& y : b) best = std::min(best, (x - y).norm());
    total += best;
  }
  return total / static_cast<double>(a.size());
}

Chamfer chamfer(const PointSet& a, const PointSet& b, double cap) {
  const double ab = chamfer_directed(a, b, cap);
  const double ba = chamfer_directed(b, a, cap);
  return {ab + ba, 0.5 * (ab + ba)};
}

std::vector<Detection> match_detections(std::span<const double> confidences,
                                        const Eigen::MatrixXd& cd, double threshold) {
  if (static_cast<std::size_t>(cd.rows()) != confidences.size()) {
    throw std::invalid_argument("match_detections: CD matrix rows must match predictions");
  }
  std::vector<std::size_t> order(confidences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });
  std::vector<bool> used(static_cast<std::size_t>(cd.cols()), false);
  std::vector<Detection> out;
  out.reserve(order.size());
  for (std::size_t i : order) {
    Eigen::Index best = -1;
    double best_cd = std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < cd.cols(); ++g) {
      if (used[static_cast<std::size_t>(g)]) continue;
      const double d = cd(static_cast<Eigen::Index>(i), g);
      if (d < best_cd) {
        best_cd = d;
        best = g;
      }
    }
    const bool tp = best >= 0 && best_cd < threshold;
    if (tp) used[static_cast<std::size_t>(best)] = true;
    out.push_back({confidences[i], tp});
  }
  return out;
}

double ap_from_detections(std::vector<Detection> detections, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  // best[k] = max precision over ranks whose recall reaches k/10.
  std::vector<double> best(11, 0.0);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].true_positive) ++tp;
    const double precision = static_cast<double>(tp) / static_cast<double>(i + 1);
    for (std::size_t k = 1; k <= 10; ++k) {
      if (10 * tp >= k * num_gt) best[k] = std::max(best[k], precision);
    }
  }
  double ap = 0.0;
  for (std::size_t k = 1; k <= 10; ++k) ap += best[k];
  return ap / 10.0;
}

namespace {

Eigen::MatrixXd cd_matrix(const std::vector<PointSet>& preds, const std::vector<PointSet>& gts,
                          double cap) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(preds.size()), static_cast<Eigen::Index>(gts.size()));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chamfer(preds[i], gts[j], cap).average;
    }
  }
  return m;
}

std::vector<PointSet> sample_all(std::span<const Polyline> lines, double spacing) {
  std::vector<PointSet> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(sample_polyline(l, spacing));
  return out;
}

}  // namespace

ApResult average_precision(std::span<const Polyline> preds, std::span<const Polyline> gts,
                           double cd_threshold, double spacing) {
  for (const auto& p : preds) {
    for (const auto& g : gts) {
      if (p.cls != g.cls) throw std::invalid_argument("average_precision: mixed classes");
    }
  }
  if (gts.empty()) return {0.0, true};
  std::vector<double> conf;
  for (const auto& p : preds) conf.push_back(p.confidence);
  const auto cd = cd_matrix(sample_all(preds, spacing), sample_all(gts, spacing),
                            std::numeric_limits<double>::infinity());
  return {ap_from_detections(match_detections(conf, cd, cd_threshold), gts.size()), false};
}

Grid2D class_masks(const VectorMap& vm) {
  const BevConfig& bev = vm.bev;
  bev.validate();
  constexpr std::size_t kThickness[kNumClasses] = {1, 3, 1};
  Grid2D masks(bev.rows(), bev.cols(), kNumClasses);
  for (const auto& e : vm.elements) {
    const auto raster = dedupe_consecutive(to_raster(e.points, bev));
    if (raster.size() < 2) continue;
    const std::size_t ch = class_index(e.cls);
    for (std::size_t cell : stroke_polyline(raster, kThickness[ch], bev.rows(), bev.cols())) {
      masks.cell(cell)[ch] = 1.0;
    }
  }
  return masks;
}

// ---------------------------------------------------------------------------

Evaluator::Evaluator(EvalOptions options) : options_(std::move(options)), accum_(kNumClasses) {
  if (options_.thresholds.empty()) throw std::invalid_argument("evaluate: no CD thresholds");
  for (std::size_t i = 0; i < options_.thresholds.size(); ++i) {
    if (!(options_.thresholds[i] > 0.0) || (i > 0 && options_.thresholds[i] <= options_.thresholds[i - 1])) {
      throw std::invalid_argument("evaluate: thresholds must be positive and strictly ascending");
    }
  }
  if (options_.spacing < 0.0) throw std::invalid_argument("evaluate: negative sampling spacing");
  for (auto& a : accum_) a.detections.resize(options_.thresholds.size());
}

void Evaluator::add_scene(const VectorMap& pred, const VectorMap& gt, const Grid2D* pred_masks,
                          const Grid2D* gt_masks) {
  if (!(pred.bev == gt.bev)) throw std::invalid_argument("evaluate: prediction and label BEV configs differ");
  const BevConfig& bev = gt.bev;
  const double spacing = options_.spacing > 0.0 ? options_.spacing : bev.pitch;
  const double cap = bev.diagonal();

  const Grid2D pm = pred_masks != nullptr ? *pred_masks : class_masks(pred);
  const Grid2D gm = gt_masks != nullptr ? *gt_masks : class_masks(gt);
  if (pm.height() != bev.rows() || pm.width() != bev.cols() || pm.channels() != kNumClasses ||
      !pm.same_shape(gm)) {
    throw std::invalid_argument("evaluate: masks must be rows x cols x " + std::to_string(kNumClasses));
  }

  for (ElementClass cls : kAllClasses) {
    const std::size_t ci = class_index(cls);
    ClassAccum& acc = accum_[ci];
    for (std::size_t i = 0; i < pm.cells(); ++i) {
      const bool a = pm.cell(i)[ci] != 0.0;
      const bool b = gm.cell(i)[ci] != 0.0;
      acc.intersection += (a && b) ? 1 : 0;
      acc.uni += (a || b) ? 1 : 0;
    }

    std::vector<Polyline> p, g;
    for (const auto& e : pred.elements) {
      if (e.cls == cls) p.push_back(e);
    }
    for (const auto& e : gt.elements) {
      if (e.cls == cls) g.push_back(e);
    }
    acc.num_pred += p.size();
    acc.num_gt += g.size();
    const auto ps = sample_all(p, spacing);
    const auto gs = sample_all(g, spacing);

    if (!p.empty() || !g.empty()) {
      PointSet pp, gg;
      for (const auto& s : ps) pp.insert(pp.end(), s.begin(), s.end());
      for (const auto& s : gs) gg.insert(gg.end(), s.begin(), s.end());
      if (pp.empty() || gg.empty()) acc.cd_capped = true;
      acc.cd_p += chamfer_directed(gg, pp, cap);
      acc.cd_l += chamfer_directed(pp, gg, cap);
      ++acc.cd_scenes;
    }

    std::vector<double> conf;
    for (const auto& e : p) conf.push_back(e.confidence);
    const auto cd = cd_matrix(ps, gs, cap);
    for (std::size_t t = 0; t < options_.thresholds.size(); ++t) {
      const auto det = match_detections(conf, cd, options_.thresholds[t]);
      acc.detections[t].insert(acc.detections[t].end(), det.begin(), det.end());
    }
  }
  ++scenes_;
}

MetricsReport Evaluator::report() const {
  MetricsReport r;
  r.thresholds = options_.thresholds;
  r.scenes = scenes_;
  const std::size_t nt = options_.thresholds.size();
  for (const auto& acc : accum_) {
    ClassMetrics m;
    m.iou = acc.uni == 0 ? 1.0 : static_cast<double>(acc.intersection) / static_cast<double>(acc.uni);
    if (acc.cd_scenes > 0) {
      m.cd_p = acc.cd_p / static_cast<double>(acc.cd_scenes);
      m.cd_l = acc.cd_l / static_cast<double>(acc.cd_scenes);
    }
    m.cd = 0.5 * (m.cd_p + m.cd_l);
    m.cd_sum = m.cd_p + m.cd_l;
    m.cd_capped = acc.cd_capped;
    m.no_gt = acc.num_gt == 0;
    m.num_pred = acc.num_pred;
    m.num_gt = acc.num_gt;
    for (std::size_t t = 0; t < nt; ++t) m.ap.push_back(ap_from_detections(acc.detections[t], acc.num_gt));
    m.map = std::accumulate(m.ap.begin(), m.ap.end(), 0.0) / static_cast<double>(nt);
    r.classes.push_back(std::move(m));
  }

  // Semantic metrics average over every class; AP only over classes that
  // have ground truth, since AP is undefined without it.
  ClassMetrics& all = r.all;
  all.ap.assign(nt, 0.0);
  std::size_t with_gt = 0;
  for (const auto& m : r.classes) {
    all.iou += m.iou / kNumClasses;
    all.cd_p += m.cd_p / kNumClasses;
    all.cd_l += m.cd_l / kNumClasses;
    all.cd_capped = all.cd_capped || m.cd_capped;
    all.num_pred += m.num_pred;
    all.num_gt += m.num_gt;
    if (m.no_gt) continue;
    ++with_gt;
    for (std::size_t t = 0; t < nt; ++t) all.ap[t] += m.ap[t];
  }
  all.cd = 0.5 * (all.cd_p + all.cd_l);
  all.cd_sum = all.cd_p + all.cd_l;
  all.no_gt = with_gt == 0;
  if (with_gt > 0) {
    for (auto& a : all.ap) a /= static_cast<double>(with_gt);
  }
  all.map = std::accumulate(all.ap.begin(), all.ap.end(), 0.0) / static_cast<double>(nt);
  r.map = all.map;
  return r;
}

MetricsReport evaluate(const VectorMap& pred, const VectorMap& gt, const EvalOptions& options,
                       const Grid2D* pred_masks, const Grid2D* gt_masks) {
  Evaluator ev(options);
  ev.add_scene(pred, gt, pred_masks, gt_masks);
  return ev.report();
}

// ---------------------------------------------------------------------------

namespace {

std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

nlohmann::ordered_json class_json(const ClassMetrics& m, const std::vector<double>& thresholds) {
  nlohmann::ordered_json j;
  j["iou"] = m.iou;
  j["cd_p"] = m.cd_p;
  j["cd_l"] = m.cd_l;
  j["cd"] = m.cd;
  j["cd_sum"] = m.cd_sum;
  j["cd_capped"] = m.cd_capped;
  nlohmann::ordered_json ap = nlohmann::ordered_json::object();
  for (std::size_t t = 0; t < thresholds.size(); ++t) ap[threshold_key(thresholds[t])] = m.ap[t];
  j["ap"] = ap;
  j["map"] = m.map;
  j["no_gt"] = m.no_gt;
  j["num_pred"] = m.num_pred;
  j["num_gt"] = m.num_gt;
  return j;
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["scenes"] = report.scenes;
  j["thresholds"] = report.thresholds;
  j["cd_convention"] = {{"cd_p", "mean distance from label points to prediction points"},
                        {"cd_l", "mean distance from prediction points to label points"},
                        {"cd", "average of cd_p and cd_l"},
                        {"cd_sum", "sum of cd_p and cd_l"}};
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (ElementClass cls : kAllClasses) {
    classes[std::string(class_name(cls))] = class_json(report.classes[class_index(cls)], report.thresholds);
  }
  j["classes"] = classes;
  j["all"] = class_json(report.all, report.thresholds);
  j["map"] = report.map;
  return j.dump(2) + "\n";
}

std::string report_to_text(const MetricsReport& report) {
  std::ostringstream os;
  char buf[256];
  auto row_name = [&](std::size_t i) -> std::string {
    return i < kNumClasses ? std::string(class_name(kAllClasses[i])) : "all";
  };
  auto capped = [](const ClassMetrics& m) { return m.cd_capped ? " *" : ""; };

  os << "Semantic metrics (m): CD_P label->pred, CD_L pred->label, CD = average, CD_sum = sum\n";
  std::snprintf(buf, sizeof buf, "%-14s %8s %8s %8s %8s %8s\n", "class", "IoU", "CD_P", "CD_L", "CD",
                "CD_sum");
  os << buf;
  for (std::size_t i = 0; i <= kNumClasses; ++i) {
    const ClassMetrics& m = i < kNumClasses ? report.classes[i] : report.all;
    std::snprintf(buf, sizeof buf, "%-14s %8.4f %8.4f %8.4f %8.4f %8.4f%s\n", row_name(i).c_str(), m.iou,
                  m.cd_p, m.cd_l, m.cd, m.cd_sum, capped(m));
    os << buf;
  }
  os << "\nInstance metrics: AP at CD thresholds (m)\n";
  std::snprintf(buf, sizeof buf, "%-14s", "class");
  os << buf;
  for (double t : report.thresholds) {
    std::snprintf(buf, sizeof buf, " %8s", ("AP@" + threshold_key(t)).c_str());
    os << buf;
  }
  os << "      mAP\n";
  for (std::size_t i = 0; i <= kNumClasses; ++i) {
    const ClassMetrics& m = i < kNumClasses ? report.classes[i] : report.all;
    std::snprintf(buf, sizeof buf, "%-14s", row_name(i).c_str());
    os << buf;
    for (double a : m.ap) {
      std::snprintf(buf, sizeof buf, " %8.4f", a);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, " %8.4f%s\n", m.map, m.no_gt ? "  (no ground truth)" : "");
    os << buf;
  }
  if (report.all.cd_capped) os << "\n* CD capped at the BEV diagonal because one side was empty\n";
  return os.str();
}

}  // namespace hdmap

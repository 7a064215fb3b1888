#include "hdmap/vector_map.hpp"

#include <cmath>
#include <stdexcept>

namespace hdmap {

std::string_view class_name(ElementClass cls) {
  switch (cls) {
    case ElementClass::kDivider:
      return "divider";
    case ElementClass::kPedCrossing:
      return "ped_crossing";
    case ElementClass::kBoundary:
      return "boundary";
  }
  return "unknown";
}

std::optional<ElementClass> parse_class(std::string_view name) {
  for (ElementClass cls : kAllClasses) {
    if (class_name(cls) == name) return cls;
  }
  return std::nullopt;
}

double Polyline::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) total += (points[i] - points[i - 1]).norm();
  return total;
}

void Polyline::validate() const {
  if (points.size() < 2) throw std::invalid_argument("polyline needs at least 2 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) throw std::invalid_argument("polyline has a non-finite point");
    if (i > 0 && points[i] == points[i - 1]) {
      throw std::invalid_argument("polyline has coincident consecutive points at index " +
                                  std::to_string(i));
    }
  }
}

bool Polyline::operator==(const Polyline& other) const {
  return cls == other.cls && confidence == other.confidence && points == other.points;
}

std::vector<Eigen::Vector2d> dedupe_consecutive(const std::vector<Eigen::Vector2d>& pts) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    if (out.empty() || out.back() != p) out.push_back(p);
  }
  return out;
}

}  // namespace hdmap

#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hdmap/geometry.hpp"

namespace hdmap {

/// Static map element classes. The numeric value doubles as the semantic
/// channel index; channel 0 is background.
enum class ElementClass : int { kDivider = 1, kPedCrossing = 2, kBoundary = 3 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<ElementClass, kNumClasses> kAllClasses = {
    ElementClass::kDivider, ElementClass::kPedCrossing, ElementClass::kBoundary};

std::string_view class_name(ElementClass cls);
std::optional<ElementClass> parse_class(std::string_view name);
inline std::size_t class_index(ElementClass cls) { return static_cast<std::size_t>(cls) - 1; }

struct Polyline {
  ElementClass cls = ElementClass::kDivider;
  std::vector<Eigen::Vector2d> points;  // ego metres
  double confidence = 1.0;

  double length() const;
  /// Throws std::invalid_argument unless there are >= 2 finite points and no
  /// two consecutive points coincide.
  void validate() const;

  bool operator==(const Polyline& other) const;
};

struct VectorMap {
  BevConfig bev;
  std::vector<Polyline> elements;

  bool operator==(const VectorMap& other) const = default;
};

/// Drops consecutive duplicate points.
std::vector<Eigen::Vector2d> dedupe_consecutive(const std::vector<Eigen::Vector2d>& pts);

}  // namespace hdmap

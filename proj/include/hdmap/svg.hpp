#pragma once

#include <string>

#include "hdmap/vector_map.hpp"

namespace hdmap {

/// Top-down SVG of a vector map (forward is up, left is left). When
/// `reference` is given it is drawn underneath in grey.
std::string render_svg(const VectorMap& map, const VectorMap* reference = nullptr,
                       double pixels_per_metre = 10.0);

}  // namespace hdmap

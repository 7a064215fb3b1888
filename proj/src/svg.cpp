#include "hdmap/svg.hpp"

#include <cstdio>
#include <stdexcept>

namespace hdmap {

namespace {

const char* class_colour(ElementClass cls) {
  switch (cls) {
    case ElementClass::kDivider: return "#d62728";
    case ElementClass::kPedCrossing: return "#1f77b4";
    case ElementClass::kBoundary: return "#2ca02c";
  }
  return "#000000";
}

void draw(std::string& out, const VectorMap& vm, const BevConfig& bev, double s, bool reference) {
  char buf[128];
  for (const auto& e : vm.elements) {
    out += "<polyline fill=\"none\" stroke=\"";
    out += reference ? "#bbbbbb" : class_colour(e.cls);
    std::snprintf(buf, sizeof buf, "\" stroke-width=\"%.1f\" points=\"", reference ? 4.0 : 1.5);
    out += buf;
    for (std::size_t i = 0; i < e.points.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i == 0 ? "" : " ", (bev.y_max - e.points[i].y()) * s,
                    (bev.x_max - e.points[i].x()) * s);
      out += buf;
    }
    out += "\"/>\n";
  }
}

}  // namespace

std::string render_svg(const VectorMap& map, const VectorMap* reference, double pixels_per_metre) {
  if (!(pixels_per_metre > 0.0)) throw std::invalid_argument("render_svg: scale must be positive");
  const BevConfig& bev = map.bev;
  const double w = (bev.y_max - bev.y_min) * pixels_per_metre;
  const double h = (bev.x_max - bev.x_min) * pixels_per_metre;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.2f %.2f\">\n",
                w, h, w, h);
  std::string out = buf;
  std::snprintf(buf, sizeof buf, "<rect width=\"%.2f\" height=\"%.2f\" fill=\"#ffffff\"/>\n", w, h);
  out += buf;
  if (reference != nullptr) draw(out, *reference, bev, pixels_per_metre, true);
  draw(out, map, bev, pixels_per_metre, false);
  // Ego vehicle marker at the origin.
  std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"#000000\"/>\n",
                bev.y_max * pixels_per_metre, bev.x_max * pixels_per_metre);
  out += buf;
  out += "</svg>\n";
  return out;
}

}  // namespace hdmap

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hdmap/grid.hpp"
#include "hdmap/numerics.hpp"

namespace testing {

inline hdmap::Grid2D random_grid(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng,
                                 double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  hdmap::Grid2D g(h, w, c);
  for (double& v : g.data()) v = u(rng);
  return g;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

/// Central difference of `f` with respect to `x`, perturbing in place.
inline double central_difference(double& x, const std::function<double()>& f, double h = 1e-4) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hdmap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing

#include "ffsim/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace ffsim {

int GridConfig::width() const {
  return static_cast<int>(std::llround((x_max - x_min) / cell));
}

int GridConfig::height() const {
  return static_cast<int>(std::llround((y_max - y_min) / cell));
}

FeatureGrid FeatureGrid::zeros(const GridConfig& g) {
  FeatureGrid f;
  f.c = g.channels;
  f.h = g.height();
  f.w = g.width();
  f.grid = g;
  f.data.assign(static_cast<size_t>(f.c) * f.h * f.w, 0.0f);
  return f;
}

FeatureGrid FeatureGrid::zeros(int c, int h, int w) {
  FeatureGrid f;
  f.c = c;
  f.h = h;
  f.w = w;
  f.grid.channels = c;
  f.grid.x_min = 0.0;
  f.grid.x_max = w;
  f.grid.y_min = 0.0;
  f.grid.y_max = h;
  f.grid.cell = 1.0;
  f.data.assign(static_cast<size_t>(c) * h * w, 0.0f);
  return f;
}

FeatureGrid rasterize(const PointCloud& cloud, const GridConfig& grid) {
  if (grid.channels != 4) {
    throw std::invalid_argument("rasterize expects a 4-channel grid");
  }
  FeatureGrid f = FeatureGrid::zeros(grid);
  const int H = f.h, W = f.w;

  // Collect (cell, z, intensity) and sort into a canonical order so that the
  // per-cell accumulation is independent of the input point order.
  std::vector<std::tuple<int64_t, float, float>> hits;
  hits.reserve(cloud.points.size());
  for (const Point4& p : cloud.points) {
    if (p.x < grid.x_min || p.x >= grid.x_max) continue;
    if (p.y < grid.y_min || p.y >= grid.y_max) continue;
    if (p.z < grid.z_min || p.z > grid.z_max) continue;
    const int ix = static_cast<int>(std::floor((p.x - grid.x_min) / grid.cell));
    const int iy = static_cast<int>(std::floor((p.y - grid.y_min) / grid.cell));
    if (ix < 0 || ix >= W || iy < 0 || iy >= H) continue;
    hits.emplace_back(static_cast<int64_t>(iy) * W + ix, p.z, p.intensity);
  }
  std::sort(hits.begin(), hits.end());

  size_t i = 0;
  while (i < hits.size()) {
    const int64_t cell = std::get<0>(hits[i]);
    size_t j = i;
    int64_t count = 0;
    float max_z = std::get<1>(hits[i]);
    double sum_int = 0.0;
    while (j < hits.size() && std::get<0>(hits[j]) == cell) {
      max_z = std::max(max_z, std::get<1>(hits[j]));
      sum_int += std::get<2>(hits[j]);
      ++count;
      ++j;
    }
    const int iy = static_cast<int>(cell / W);
    const int ix = static_cast<int>(cell % W);
    f.at(0, iy, ix) = static_cast<float>(std::log1p(static_cast<double>(count)));
    f.at(1, iy, ix) = static_cast<float>(max_z - grid.z_min);
    f.at(2, iy, ix) = static_cast<float>(sum_int / static_cast<double>(count));
    f.at(3, iy, ix) = 1.0f;
    i = j;
  }
  return f;
}

}  // namespace ffsim

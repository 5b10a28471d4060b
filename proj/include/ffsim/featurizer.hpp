#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ffsim/scene.hpp"

namespace ffsim {

struct GridConfig {
  double x_min = 0.0, x_max = 92.16;
  double y_min = -46.08, y_max = 46.08;
  double z_min = -3.0, z_max = 1.0;
  double cell = 0.16;
  int channels = 4;

  int width() const;   // cells along x
  int height() const;  // cells along y
  bool operator==(const GridConfig&) const = default;
};

// Dense (C, H, W) float32 tensor over a metric BEV grid. Row index is the y
// cell, column index is the x cell.
struct FeatureGrid {
  int c = 0, h = 0, w = 0;
  GridConfig grid;
  std::string frame;  // pose identifier, informational
  std::vector<float> data;  // channel-major, row-major

  static FeatureGrid zeros(const GridConfig& g);
  static FeatureGrid zeros(int c, int h, int w);

  float& at(int ch, int y, int x) {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  float at(int ch, int y, int x) const {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  size_t size() const { return data.size(); }
  bool same_dims(const FeatureGrid& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
};

// BEV pillar rasterization. Channels per cell:
//   0: log1p(point count)
//   1: max z minus z_min (0 if empty)
//   2: mean intensity (0 if empty)
//   3: occupancy indicator {0, 1}
// Bit-identical under any permutation of the input points.
FeatureGrid rasterize(const PointCloud& cloud, const GridConfig& grid);

}  // namespace ffsim

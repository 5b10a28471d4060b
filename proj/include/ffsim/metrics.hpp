#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ffsim/geometry.hpp"

namespace ffsim {

struct EvalConfig {
  std::vector<double> iou_thresholds{0.5, 0.7};
  bool mode_bev = true;
  bool mode_3d = true;
  // egocentric region of interest [x_min, y_min, x_max, y_max], closed
  double roi_x_min = 0.0, roi_y_min = -39.12, roi_x_max = 100.0,
         roi_y_max = 39.12;
};

struct EvalResult {
  // key: (class_id, mode "bev"|"3d", threshold)
  std::map<std::tuple<int, std::string, double>, double> ap;
  // key: (mode, threshold)
  std::map<std::pair<std::string, double>, double> map;
  uint64_t num_gt = 0;
  uint64_t num_tp = 0;  // at the first (mode, threshold) pair, informational
  uint64_t num_fp = 0;
  double ab_mean = 0.0;
  std::vector<int> zero_gt_classes;  // classes whose AP was pinned to 0
};

std::vector<Box3D> roi_filter(const std::vector<Box3D>& boxes,
                              const EvalConfig& cfg);

using IouFn = std::function<double(const Box3D&, const Box3D&)>;

// Greedy confidence-ordered matching; each GT is consumed at most once.
// Returns TP flags aligned with the confidence-descending prediction order,
// paired with the confidences.
std::vector<std::pair<double, bool>> match(const std::vector<Box3D>& preds,
                                           const std::vector<Box3D>& gts,
                                           const IouFn& iou_fn,
                                           double threshold);

// 11-point interpolated AP over confidence-sorted (confidence, is_tp) flags.
double average_precision(const std::vector<std::pair<double, bool>>& flags,
                         uint64_t num_gt);

double mean_ap(const std::vector<double>& per_class_ap);

EvalResult evaluate_run(const std::vector<std::vector<Box3D>>& per_frame_preds,
                        const std::vector<std::vector<Box3D>>& per_frame_gts,
                        const EvalConfig& cfg,
                        const std::vector<uint64_t>& ab_log);

}  // namespace ffsim

#pragma once

#include <cstdint>
#include <vector>

#include "ffsim/channel.hpp"
#include "ffsim/codec.hpp"
#include "ffsim/flow.hpp"
#include "ffsim/scene.hpp"

namespace ffsim {

enum class FusionMode {
  EarlyFusion,
  LateFusion,
  MiddleNoPrediction,  // stale feature, no derivative transmitted
  MiddleFlowInfra,     // derivative estimated roadside from raw frames
  MiddleFlowVehicle,   // derivative estimated on the vehicle from received features
};

const char* fusion_mode_name(FusionMode mode);
FusionMode fusion_mode_from_name(const std::string& name);

// Connected-component proxy detector over the occupancy channel.
struct DetectorConfig {
  double occupancy_threshold = 0.25;
  int min_cells = 3;
  int connectivity = 8;  // 4 or 8
  double z_center = 0.75;
  double z_height = 1.5;
  double count_norm = 4.0;  // confidence normalizer, log1p(points_per_actor)
};

// Resample a feature grid from the source sensor frame into the destination
// frame (bilinear; out-of-extent samples contribute zero).
FeatureGrid align(const FeatureGrid& f, const Pose2& pose_src,
                  const Pose2& pose_dst, const GridConfig& grid_dst);

// Element-wise maximum.
FeatureGrid fuse(const FeatureGrid& f_ego, const FeatureGrid& f_infra_aligned);

std::vector<Box3D> detect(const FeatureGrid& f, const DetectorConfig& cfg);

PointCloud early_fuse(const PointCloud& cloud_v, const PointCloud& cloud_i,
                      const Pose2& rel_pose);

// Greedy confidence-ordered NMS over the union of both sets.
std::vector<Box3D> late_fuse(const std::vector<Box3D>& dets_v,
                             const std::vector<Box3D>& dets_i,
                             const Pose2& rel_pose, double iou_merge);

struct CodecSettings {
  int bits = 6;
  bool quantized = true;
  bool use_mask = true;
  double mask_threshold = 0.0;
  int mask_stride = 1;      // patch stride on the compressed grid
  int compress_spatial = 4;  // sx
  int compress_channel = 1;  // sc
};

struct RunConfigs {
  GridConfig grid;
  CodecSettings codec;
  DetectorConfig detector;
  double late_fuse_iou = 0.3;
  bool jitter_on = false;
};

struct RunModeResult {
  std::vector<std::vector<Box3D>> detections;    // ego frame, per vehicle frame
  std::vector<std::vector<Box3D>> ground_truth;  // ego frame, per vehicle frame
  std::vector<uint64_t> ab_per_frame;
  uint64_t storage_counter = 0;  // packets retained on the vehicle
  uint64_t compute_counter = 0;  // derivative-estimator applications
};

RunModeResult run_mode(FusionMode mode, const Scenario& scenario,
                       const LatencyLink& link, const EstimatorParams& theta,
                       const RunConfigs& cfgs);

}  // namespace ffsim

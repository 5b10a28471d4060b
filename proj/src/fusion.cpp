#include "ffsim/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace ffsim {

const char* fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::EarlyFusion: return "EarlyFusion";
    case FusionMode::LateFusion: return "LateFusion";
    case FusionMode::MiddleNoPrediction: return "MiddleNoPrediction";
    case FusionMode::MiddleFlowInfra: return "MiddleFlowInfra";
    case FusionMode::MiddleFlowVehicle: return "MiddleFlowVehicle";
  }
  return "?";
}

FusionMode fusion_mode_from_name(const std::string& name) {
  if (name == "EarlyFusion") return FusionMode::EarlyFusion;
  if (name == "LateFusion") return FusionMode::LateFusion;
  if (name == "MiddleNoPrediction") return FusionMode::MiddleNoPrediction;
  if (name == "MiddleFlowInfra") return FusionMode::MiddleFlowInfra;
  if (name == "MiddleFlowVehicle") return FusionMode::MiddleFlowVehicle;
  throw std::invalid_argument("unknown fusion mode: " + name);
}

FeatureGrid align(const FeatureGrid& f, const Pose2& pose_src,
                  const Pose2& pose_dst, const GridConfig& grid_dst) {
  FeatureGrid out = FeatureGrid::zeros(grid_dst);
  if (out.c != f.c) throw std::invalid_argument("align: channel mismatch");
  const Pose2 rel = compose(inverse(pose_src), pose_dst);
  const GridConfig& gs = f.grid;
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      const double dx = grid_dst.x_min + (x + 0.5) * grid_dst.cell;
      const double dy = grid_dst.y_min + (y + 0.5) * grid_dst.cell;
      double sx_m, sy_m;
      apply_pose(rel, dx, dy, sx_m, sy_m);
      // continuous cell-center coordinates in the source grid
      const double u = (sx_m - gs.x_min) / gs.cell - 0.5;
      const double v = (sy_m - gs.y_min) / gs.cell - 0.5;
      const int x0 = static_cast<int>(std::floor(u));
      const int y0 = static_cast<int>(std::floor(v));
      const double fu = u - x0, fv = v - y0;
      const double w00 = (1.0 - fu) * (1.0 - fv);
      const double w01 = fu * (1.0 - fv);
      const double w10 = (1.0 - fu) * fv;
      const double w11 = fu * fv;
      auto sample = [&](int c, int yy, int xx) -> double {
        if (xx < 0 || xx >= f.w || yy < 0 || yy >= f.h) return 0.0;
        return f.at(c, yy, xx);
      };
      for (int c = 0; c < out.c; ++c) {
        const double val = w00 * sample(c, y0, x0) + w01 * sample(c, y0, x0 + 1) +
                           w10 * sample(c, y0 + 1, x0) +
                           w11 * sample(c, y0 + 1, x0 + 1);
        out.at(c, y, x) = static_cast<float>(val);
      }
    }
  }
  return out;
}

FeatureGrid fuse(const FeatureGrid& f_ego, const FeatureGrid& f_infra_aligned) {
  if (!f_ego.same_dims(f_infra_aligned)) {
    throw std::invalid_argument("fuse: dimension mismatch");
  }
  FeatureGrid out = f_ego;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::max(f_ego.data[i], f_infra_aligned.data[i]);
  }
  return out;
}

std::vector<Box3D> detect(const FeatureGrid& f, const DetectorConfig& cfg) {
  if (cfg.connectivity != 4 && cfg.connectivity != 8) {
    throw std::invalid_argument("detect: connectivity must be 4 or 8");
  }
  const int H = f.h, W = f.w;
  std::vector<int> label(static_cast<size_t>(H) * W, -1);
  auto occupied = [&](int y, int x) {
    return f.at(3, y, x) >= static_cast<float>(cfg.occupancy_threshold);
  };

  std::vector<Box3D> dets;
  std::vector<std::pair<int, int>> stack, members;
  int next_label = 0;
  for (int sy = 0; sy < H; ++sy) {
    for (int sxx = 0; sxx < W; ++sxx) {
      if (!occupied(sy, sxx) || label[static_cast<size_t>(sy) * W + sxx] >= 0) continue;
      members.clear();
      stack.clear();
      stack.push_back({sy, sxx});
      label[static_cast<size_t>(sy) * W + sxx] = next_label;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        members.push_back({y, x});
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            if (cfg.connectivity == 4 && dy != 0 && dx != 0) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
            if (!occupied(ny, nx)) continue;
            if (label[static_cast<size_t>(ny) * W + nx] >= 0) continue;
            label[static_cast<size_t>(ny) * W + nx] = next_label;
            stack.push_back({ny, nx});
          }
        }
      }
      ++next_label;
      if (static_cast<int>(members.size()) < cfg.min_cells) continue;

      // cell-mass centroid and 2D PCA over member-cell centers
      double mx = 0.0, my = 0.0;
      double sum0 = 0.0;
      for (auto [y, x] : members) {
        mx += f.grid.x_min + (x + 0.5) * f.grid.cell;
        my += f.grid.y_min + (y + 0.5) * f.grid.cell;
        sum0 += f.at(0, y, x);
      }
      const double n = static_cast<double>(members.size());
      mx /= n;
      my /= n;
      double sxx2 = 0.0, syy2 = 0.0, sxy = 0.0;
      for (auto [y, x] : members) {
        const double px = f.grid.x_min + (x + 0.5) * f.grid.cell - mx;
        const double py = f.grid.y_min + (y + 0.5) * f.grid.cell - my;
        sxx2 += px * px;
        syy2 += py * py;
        sxy += px * py;
      }
      sxx2 /= n;
      syy2 /= n;
      sxy /= n;
      const double tr = sxx2 + syy2;
      const double disc = std::sqrt(std::max(0.0, (sxx2 - syy2) * (sxx2 - syy2) + 4.0 * sxy * sxy));
      const double l1 = 0.5 * (tr + disc);
      const double l2 = 0.5 * (tr - disc);
      double yaw;
      if (std::fabs(sxy) < 1e-12 && sxx2 >= syy2) {
        yaw = 0.0;
      } else if (std::fabs(sxy) < 1e-12) {
        yaw = 0.5 * kPi;
      } else {
        yaw = std::atan2(l1 - sxx2, sxy);
      }
      Box3D b;
      b.cx = mx;
      b.cy = my;
      b.cz = cfg.z_center;
      b.l = std::max(2.0 * std::sqrt(std::max(0.0, l1) * 3.0), f.grid.cell);
      b.w = std::max(2.0 * std::sqrt(std::max(0.0, l2) * 3.0), f.grid.cell);
      b.h = cfg.z_height;
      b.yaw = normalize_angle(yaw);
      b.class_id = 0;
      b.confidence = std::clamp(sum0 / n / cfg.count_norm, 0.0, 1.0);
      dets.push_back(b);
    }
  }
  return dets;
}

PointCloud early_fuse(const PointCloud& cloud_v, const PointCloud& cloud_i,
                      const Pose2& rel_pose) {
  PointCloud out = cloud_v;
  out.points.reserve(cloud_v.points.size() + cloud_i.points.size());
  for (const Point4& p : cloud_i.points) {
    double x, y;
    apply_pose(rel_pose, p.x, p.y, x, y);
    out.points.push_back(Point4{static_cast<float>(x), static_cast<float>(y),
                                p.z, p.intensity});
  }
  return out;
}

std::vector<Box3D> late_fuse(const std::vector<Box3D>& dets_v,
                             const std::vector<Box3D>& dets_i,
                             const Pose2& rel_pose, double iou_merge) {
  if (iou_merge <= 0.0 || iou_merge >= 1.0) {
    throw std::invalid_argument("late_fuse: iou_merge outside (0,1)");
  }
  std::vector<Box3D> pool = dets_v;
  for (const Box3D& b : dets_i) pool.push_back(transform_box(b, rel_pose));
  std::vector<size_t> order(pool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return pool[a].confidence > pool[b].confidence;
  });
  std::vector<Box3D> kept;
  for (size_t i : order) {
    bool suppressed = false;
    for (const Box3D& k : kept) {
      if (bev_iou(pool[i], k) >= iou_merge) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(pool[i]);
  }
  return kept;
}

namespace {

uint64_t to_us(double t_s) {
  return static_cast<uint64_t>(std::llround(t_s * 1e6));
}

}  // namespace

RunModeResult run_mode(FusionMode mode, const Scenario& scenario,
                       const LatencyLink& link, const EstimatorParams& theta,
                       const RunConfigs& cfgs) {
  const double period_s = scenario.frame_period_ms / 1000.0;
  const double horizon_s = scenario.num_frames * period_s;
  const int sx = cfgs.codec.compress_spatial;
  const int sc = cfgs.codec.compress_channel;
  const bool is_flow_mode = mode == FusionMode::MiddleFlowInfra ||
                            mode == FusionMode::MiddleFlowVehicle;
  if (is_flow_mode && theta.channels != cfgs.grid.channels / sc) {
    throw std::invalid_argument("run_mode: estimator channels do not match grid");
  }

  auto featurize_compressed = [&](const PointCloud& cloud) {
    return spatial_compress(rasterize(cloud, cfgs.grid), sx, sc);
  };

  RunModeResult res;
  // Vehicle-side estimation keeps every received packet; key is the
  // infrastructure frame index.
  std::map<int64_t, FeatureGrid> vehicle_buffer;

  for (int iv = 0; iv < scenario.num_frames; ++iv) {
    const double jitter_ms = cfgs.jitter_on ? pair_jitter(link, iv) : 0.0;
    const double t_v =
        std::clamp(iv * period_s + jitter_ms / 1000.0, 0.0, horizon_s);
    const uint64_t t_v_us = to_us(t_v);
    const Pose2 vpose = vehicle_pose_at(scenario, t_v);
    SensorSpec vspec = scenario.vehicle;
    vspec.pose = vpose;

    const int64_t ii =
        delivered_frame_index(iv, link.latency_ms, scenario.frame_period_ms);
    const double t_i = ii * period_s;
    const uint64_t t_i_us = to_us(t_i);
    const Pose2 ipose = scenario.infra.pose;
    const Pose2 infra_to_ego = compose(inverse(vpose), ipose);

    auto [cloud_v, gt_v] = sample_frame(scenario, vspec, t_v);
    (void)gt_v;
    auto [cloud_i, gt_i] = sample_frame(scenario, scenario.infra, t_i);
    (void)gt_i;

    std::vector<Box3D> dets;
    uint64_t ab = 0;

    switch (mode) {
      case FusionMode::EarlyFusion: {
        const PointCloud merged = early_fuse(cloud_v, cloud_i, infra_to_ego);
        dets = detect(rasterize(merged, cfgs.grid), cfgs.detector);
        ab = transmission_cost(CostForm::Early,
                               CostParams{.num_points = cloud_i.size()});
        res.storage_counter = std::max<uint64_t>(res.storage_counter, 1);
        break;
      }
      case FusionMode::LateFusion: {
        const auto dets_v = detect(rasterize(cloud_v, cfgs.grid), cfgs.detector);
        const auto dets_i = detect(rasterize(cloud_i, cfgs.grid), cfgs.detector);
        ab = transmission_cost(CostForm::Late,
                               CostParams{.num_detections = dets_i.size()});
        dets = late_fuse(dets_v, dets_i, infra_to_ego, cfgs.late_fuse_iou);
        res.storage_counter = std::max<uint64_t>(res.storage_counter, 1);
        break;
      }
      case FusionMode::MiddleNoPrediction:
      case FusionMode::MiddleFlowInfra: {
        const FeatureGrid f_curr_c = featurize_compressed(cloud_i);
        FeatureFlow tx;
        tx.base = f_curr_c;
        tx.t_ref_us = t_i_us;
        EncodeOptions opts;
        opts.bits = cfgs.codec.bits;
        opts.quantized = cfgs.codec.quantized;
        if (mode == FusionMode::MiddleFlowInfra && ii >= 1) {
          const auto [cloud_prev, gtp] =
              sample_frame(scenario, scenario.infra, (ii - 1) * period_s);
          (void)gtp;
          const FeatureGrid f_prev_c = featurize_compressed(cloud_prev);
          tx.deriv = estimate_derivative(theta, f_prev_c, f_curr_c, period_s);
          ++res.compute_counter;
          opts.include_deriv = true;
          if (cfgs.codec.use_mask) {
            opts.mask = attention_mask(
                f_prev_c, f_curr_c, f_curr_c.h / cfgs.codec.mask_stride,
                f_curr_c.w / cfgs.codec.mask_stride, cfgs.codec.mask_threshold);
          }
        } else if (mode == FusionMode::MiddleFlowInfra) {
          tx.deriv = FeatureGrid::zeros(f_curr_c.c, f_curr_c.h, f_curr_c.w);
          tx.deriv.grid = f_curr_c.grid;
          opts.include_deriv = true;
        } else {
          opts.include_deriv = false;
        }
        const EncodedPacket pkt = encode_packet(
            tx, PosePayload{static_cast<float>(ipose.x),
                            static_cast<float>(ipose.y), 0.0f,
                            static_cast<float>(ipose.yaw)},
            opts);
        ab = pkt.ab_bytes;
        const Delivery del = transmit(link, pkt.bytes, t_i_us);
        GridConfig cgrid = f_curr_c.grid;
        DecodedPacket rx = decode_packet(del.bytes, &cgrid);
        FeatureGrid infra_feat =
            (mode == FusionMode::MiddleFlowInfra)
                ? predict(rx.flow, std::max(t_v_us, rx.flow.t_ref_us))
                : rx.flow.base;
        const FeatureGrid full =
            spatial_decompress(infra_feat, sx, sc, cfgs.grid);
        const FeatureGrid aligned = align(full, ipose, vpose, cfgs.grid);
        const FeatureGrid f_v = rasterize(cloud_v, cfgs.grid);
        dets = detect(fuse(f_v, aligned), cfgs.detector);
        res.storage_counter = std::max<uint64_t>(res.storage_counter, 1);
        break;
      }
      case FusionMode::MiddleFlowVehicle: {
        // Infrastructure transmits base-only packets for frames ii-1 and ii;
        // the vehicle estimates the derivative from the lossy received pair.
        for (int64_t fi : {ii - 1, ii}) {
          if (fi < 0) continue;
          const auto [cl, g] = sample_frame(scenario, scenario.infra, fi * period_s);
          (void)g;
          const FeatureGrid fc = featurize_compressed(cl);
          FeatureFlow tx;
          tx.base = fc;
          tx.t_ref_us = to_us(fi * period_s);
          EncodeOptions opts;
          opts.bits = cfgs.codec.bits;
          opts.quantized = cfgs.codec.quantized;
          opts.include_deriv = false;
          const EncodedPacket pkt = encode_packet(
              tx, PosePayload{static_cast<float>(ipose.x),
                              static_cast<float>(ipose.y), 0.0f,
                              static_cast<float>(ipose.yaw)},
              opts);
          ab += pkt.ab_bytes;
          const Delivery del = transmit(link, pkt.bytes, tx.t_ref_us);
          GridConfig cgrid = fc.grid;
          DecodedPacket rx = decode_packet(del.bytes, &cgrid);
          vehicle_buffer.insert_or_assign(fi, std::move(rx.flow.base));
        }
        FeatureGrid infra_feat;
        if (ii >= 1) {
          const FeatureGrid& prev = vehicle_buffer.at(ii - 1);
          const FeatureGrid& curr = vehicle_buffer.at(ii);
          FeatureFlow flow;
          flow.deriv = estimate_derivative(theta, prev, curr, period_s);
          ++res.compute_counter;
          flow.base = curr;
          flow.t_ref_us = t_i_us;
          infra_feat = predict(flow, std::max(t_v_us, flow.t_ref_us));
        } else {
          infra_feat = vehicle_buffer.at(ii);
        }
        const FeatureGrid full =
            spatial_decompress(infra_feat, sx, sc, cfgs.grid);
        const FeatureGrid aligned = align(full, ipose, vpose, cfgs.grid);
        const FeatureGrid f_v = rasterize(cloud_v, cfgs.grid);
        dets = detect(fuse(f_v, aligned), cfgs.detector);
        res.storage_counter = vehicle_buffer.size();
        break;
      }
    }

    res.detections.push_back(std::move(dets));
    res.ground_truth.push_back(ground_truth_ego(scenario, t_v));
    res.ab_per_frame.push_back(ab);
  }
  if (mode == FusionMode::MiddleFlowVehicle) {
    res.storage_counter = vehicle_buffer.size();
  }
  return res;
}

}  // namespace ffsim

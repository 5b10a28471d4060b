#include "ffsim/metrics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace ffsim {

std::vector<Box3D> roi_filter(const std::vector<Box3D>& boxes,
                              const EvalConfig& cfg) {
  std::vector<Box3D> out;
  for (const Box3D& b : boxes) {
    if (b.cx >= cfg.roi_x_min && b.cx <= cfg.roi_x_max &&
        b.cy >= cfg.roi_y_min && b.cy <= cfg.roi_y_max) {
      out.push_back(b);
    }
  }
  return out;
}

std::vector<std::pair<double, bool>> match(const std::vector<Box3D>& preds,
                                           const std::vector<Box3D>& gts,
                                           const IouFn& iou_fn,
                                           double threshold) {
  std::vector<size_t> order(preds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return preds[a].confidence > preds[b].confidence;
  });
  std::vector<bool> consumed(gts.size(), false);
  std::vector<std::pair<double, bool>> flags;
  flags.reserve(preds.size());
  for (size_t i : order) {
    double best_iou = 0.0;
    size_t best_gt = gts.size();
    for (size_t g = 0; g < gts.size(); ++g) {
      if (consumed[g]) continue;
      const double iou = iou_fn(preds[i], gts[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = g;
      }
    }
    const bool tp = best_gt < gts.size() && best_iou >= threshold;
    if (tp) consumed[best_gt] = true;
    flags.push_back({preds[i].confidence, tp});
  }
  return flags;
}

double average_precision(const std::vector<std::pair<double, bool>>& flags,
                         uint64_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  uint64_t tp = 0, fp = 0;
  for (const auto& [conf, is_tp] : flags) {
    (void)conf;
    if (is_tp) ++tp; else ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  double ap = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const double r = 0.1 * i;
    double p_interp = 0.0;
    for (size_t j = 0; j < recall.size(); ++j) {
      if (recall[j] >= r - 1e-12) p_interp = std::max(p_interp, precision[j]);
    }
    ap += p_interp;
  }
  return ap / 11.0;
}

double mean_ap(const std::vector<double>& per_class_ap) {
  if (per_class_ap.empty()) throw std::invalid_argument("mean_ap: empty class set");
  double sum = 0.0;
  for (double a : per_class_ap) sum += a;
  return sum / static_cast<double>(per_class_ap.size());
}

EvalResult evaluate_run(const std::vector<std::vector<Box3D>>& per_frame_preds,
                        const std::vector<std::vector<Box3D>>& per_frame_gts,
                        const EvalConfig& cfg,
                        const std::vector<uint64_t>& ab_log) {
  if (per_frame_preds.size() != per_frame_gts.size()) {
    throw std::invalid_argument("evaluate_run: frame count mismatch");
  }
  EvalResult res;

  std::vector<std::vector<Box3D>> preds, gts;
  std::set<int> classes;
  for (size_t fr = 0; fr < per_frame_preds.size(); ++fr) {
    preds.push_back(roi_filter(per_frame_preds[fr], cfg));
    gts.push_back(roi_filter(per_frame_gts[fr], cfg));
    for (const auto& b : preds.back()) classes.insert(b.class_id);
    for (const auto& b : gts.back()) classes.insert(b.class_id);
  }
  for (const auto& fgt : gts) res.num_gt += fgt.size();

  struct ModeSpec {
    std::string name;
    IouFn fn;
  };
  std::vector<ModeSpec> modes;
  if (cfg.mode_bev) modes.push_back({"bev", [](const Box3D& a, const Box3D& b) { return bev_iou(a, b); }});
  if (cfg.mode_3d) modes.push_back({"3d", [](const Box3D& a, const Box3D& b) { return iou_3d(a, b); }});

  bool first_combo = true;
  for (const ModeSpec& mode : modes) {
    for (double thr : cfg.iou_thresholds) {
      std::vector<double> class_aps;
      for (int cls : classes) {
        uint64_t num_gt_cls = 0;
        std::vector<std::pair<double, bool>> pooled;
        for (size_t fr = 0; fr < preds.size(); ++fr) {
          std::vector<Box3D> p, g;
          for (const auto& b : preds[fr]) if (b.class_id == cls) p.push_back(b);
          for (const auto& b : gts[fr]) if (b.class_id == cls) g.push_back(b);
          num_gt_cls += g.size();
          const auto flags = match(p, g, mode.fn, thr);
          pooled.insert(pooled.end(), flags.begin(), flags.end());
        }
        std::stable_sort(pooled.begin(), pooled.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        double ap = 0.0;
        if (num_gt_cls == 0) {
          ap = 0.0;
          if (std::find(res.zero_gt_classes.begin(), res.zero_gt_classes.end(),
                        cls) == res.zero_gt_classes.end()) {
            res.zero_gt_classes.push_back(cls);
          }
        } else {
          ap = average_precision(pooled, num_gt_cls);
        }
        res.ap[{cls, mode.name, thr}] = ap;
        class_aps.push_back(ap);
        if (first_combo) {
          for (const auto& [conf, tp] : pooled) {
            (void)conf;
            if (tp) ++res.num_tp; else ++res.num_fp;
          }
        }
      }
      res.map[{mode.name, thr}] = class_aps.empty() ? 0.0 : mean_ap(class_aps);
      first_combo = false;
    }
  }

  if (!ab_log.empty()) {
    double sum = 0.0;
    for (uint64_t v : ab_log) sum += static_cast<double>(v);
    res.ab_mean = sum / static_cast<double>(ab_log.size());
  }
  return res;
}

}  // namespace ffsim

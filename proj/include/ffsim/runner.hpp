#pragma once

#include <map>
#include <string>
#include <vector>

#include "ffsim/config.hpp"
#include "ffsim/flow.hpp"
#include "ffsim/metrics.hpp"

namespace ffsim {

struct ReportRow {
  std::string mode;
  double latency_ms = 0.0;
  // (eval mode, iou threshold) -> mAP
  std::map<std::pair<std::string, double>, double> map;
  double ab_mean = 0.0;
  uint64_t storage_counter = 0;
  uint64_t compute_counter = 0;
};

struct BenefitGap {
  double latency_ms = 0.0;
  double gap = 0.0;  // mAP(MiddleFlowInfra) - mAP(MiddleNoPrediction), BEV @ first threshold
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<BenefitGap> prediction_benefit;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  std::string version;
};

Report run_experiment(const ExperimentConfig& cfg);

std::string report_csv(const Report& r, const ExperimentConfig& cfg);
std::string report_json(const Report& r, const ExperimentConfig& cfg);

struct TrainOutcome {
  EstimatorParams theta;
  TrainLog log;
  double holdout_before = 0.0;
  double holdout_after = 0.0;
};

TrainOutcome train_from_config(const ExperimentConfig& cfg);

void save_params(const EstimatorParams& p, const TrainOutcome* outcome,
                 const std::string& path);
EstimatorParams load_params(const std::string& path);

// CLI entry points. Throw on failure; exit-code mapping lives in main().
void cmd_simulate(const std::string& config_path, const std::string& out_dir);
void cmd_train_flow(const std::string& config_path, const std::string& out_path);
void cmd_bench(const std::string& config_path);
void cmd_eval(const std::string& pred_path, const std::string& gt_path,
              const std::string& config_path);

// JSON-lines interchange: one frame per line with frame_id, timestamp_us, boxes.
std::map<int64_t, std::vector<Box3D>> load_boxes_jsonl(const std::string& path);

}  // namespace ffsim

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffsim/fusion.hpp"
#include "ffsim/metrics.hpp"

namespace ffsim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Line-oriented `[section]` / `key = value` experiment configuration.
// The key set is closed: unknown sections or keys are errors.
struct ExperimentConfig {
  // [scenario]
  uint64_t seed = 42;
  int num_frames = 30;
  double frame_period_ms = 100.0;
  int num_actors = 6;
  double actor_speed_min = 3.0;
  double actor_speed_max = 8.0;
  double actor_yaw_rate_max = 0.0;
  double spawn_x_min = 8.0, spawn_x_max = 40.0;
  double spawn_y_min = -16.0, spawn_y_max = 16.0;
  int points_per_actor = 200;
  int clutter_points = 40;
  double dropout = 0.0;
  double infra_x = 24.0, infra_y = 20.0, infra_yaw = -1.5707963267948966;
  double infra_range = 60.0;
  double vehicle_range = 18.0;
  double vehicle_start_x = -6.0, vehicle_start_y = 0.0;
  double vehicle_end_x = 6.0, vehicle_end_y = 0.0;
  double vehicle_yaw = 0.0;

  // [grid]
  GridConfig grid{0.0, 46.08, -23.04, 23.04, -0.5, 3.0, 0.32, 4};

  // [flow]
  int k_min = 1, k_max = 2;
  double lr = 0.001;
  double weight_decay = 0.01;
  int epochs = 10;
  std::string flow_init = "fd";  // fd | zero
  int holdout_every = 5;         // every Nth pair held out
  std::string params_file;       // optional trained parameters for simulate

  // [codec]
  CodecSettings codec;

  // [channel]
  std::vector<double> latencies_ms{0, 100, 200, 300, 400, 500};
  bool jitter_on = false;
  double jitter_lo_ms = -30.0, jitter_hi_ms = 30.0;

  // [detector]
  DetectorConfig detector;

  // [eval]
  EvalConfig eval;

  // [run]
  std::vector<std::string> modes{"EarlyFusion", "LateFusion",
                                 "MiddleNoPrediction", "MiddleFlowInfra",
                                 "MiddleFlowVehicle"};
  double late_fuse_iou = 0.3;

  std::string raw_text;  // original file content, echoed into reports

  Scenario build_scenario() const;
  RunConfigs run_configs() const;
  LatencyLink link(double latency_ms) const;
  uint64_t config_hash() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Built-in demo configuration (also what `simulate` uses by default).
std::string default_config_text();

}  // namespace ffsim

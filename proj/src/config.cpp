#include "ffsim/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ffsim/common.hpp"

namespace ffsim {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ConfigError("invalid number for " + key + ": '" + v + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return i;
  } catch (...) {
    throw ConfigError("invalid integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(parse_double(key, s));
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  cfg.raw_text = text;

  using Handler = std::function<void(const std::string&, const std::string&)>;
  std::map<std::string, Handler> handlers;
  auto D = [&](const std::string& k, double* dst) {
    handlers[k] = [&, dst](const std::string& key, const std::string& v) {
      *dst = parse_double(key, v);
    };
  };
  auto I = [&](const std::string& k, int* dst) {
    handlers[k] = [&, dst](const std::string& key, const std::string& v) {
      *dst = static_cast<int>(parse_int(key, v));
    };
  };
  auto B = [&](const std::string& k, bool* dst) {
    handlers[k] = [&, dst](const std::string& key, const std::string& v) {
      *dst = parse_bool(key, v);
    };
  };
  auto S = [&](const std::string& k, std::string* dst) {
    handlers[k] = [&, dst](const std::string&, const std::string& v) { *dst = v; };
  };

  handlers["scenario.seed"] = [&](const std::string& key, const std::string& v) {
    cfg.seed = static_cast<uint64_t>(parse_int(key, v));
  };
  I("scenario.num_frames", &cfg.num_frames);
  D("scenario.frame_period_ms", &cfg.frame_period_ms);
  I("scenario.num_actors", &cfg.num_actors);
  D("scenario.actor_speed_min", &cfg.actor_speed_min);
  D("scenario.actor_speed_max", &cfg.actor_speed_max);
  D("scenario.actor_yaw_rate_max", &cfg.actor_yaw_rate_max);
  D("scenario.spawn_x_min", &cfg.spawn_x_min);
  D("scenario.spawn_x_max", &cfg.spawn_x_max);
  D("scenario.spawn_y_min", &cfg.spawn_y_min);
  D("scenario.spawn_y_max", &cfg.spawn_y_max);
  I("scenario.points_per_actor", &cfg.points_per_actor);
  I("scenario.clutter_points", &cfg.clutter_points);
  D("scenario.dropout", &cfg.dropout);
  D("scenario.infra_x", &cfg.infra_x);
  D("scenario.infra_y", &cfg.infra_y);
  D("scenario.infra_yaw", &cfg.infra_yaw);
  D("scenario.infra_range", &cfg.infra_range);
  D("scenario.vehicle_range", &cfg.vehicle_range);
  D("scenario.vehicle_start_x", &cfg.vehicle_start_x);
  D("scenario.vehicle_start_y", &cfg.vehicle_start_y);
  D("scenario.vehicle_end_x", &cfg.vehicle_end_x);
  D("scenario.vehicle_end_y", &cfg.vehicle_end_y);
  D("scenario.vehicle_yaw", &cfg.vehicle_yaw);

  D("grid.x_min", &cfg.grid.x_min);
  D("grid.x_max", &cfg.grid.x_max);
  D("grid.y_min", &cfg.grid.y_min);
  D("grid.y_max", &cfg.grid.y_max);
  D("grid.z_min", &cfg.grid.z_min);
  D("grid.z_max", &cfg.grid.z_max);
  D("grid.cell", &cfg.grid.cell);

  I("flow.k_min", &cfg.k_min);
  I("flow.k_max", &cfg.k_max);
  D("flow.lr", &cfg.lr);
  D("flow.weight_decay", &cfg.weight_decay);
  I("flow.epochs", &cfg.epochs);
  S("flow.init", &cfg.flow_init);
  I("flow.holdout_every", &cfg.holdout_every);
  S("flow.params_file", &cfg.params_file);

  I("codec.bits", &cfg.codec.bits);
  B("codec.quantized", &cfg.codec.quantized);
  B("codec.use_mask", &cfg.codec.use_mask);
  D("codec.mask_threshold", &cfg.codec.mask_threshold);
  I("codec.mask_stride", &cfg.codec.mask_stride);
  I("codec.compress_spatial", &cfg.codec.compress_spatial);
  I("codec.compress_channel", &cfg.codec.compress_channel);

  handlers["channel.latencies_ms"] = [&](const std::string& key,
                                         const std::string& v) {
    cfg.latencies_ms = parse_double_list(key, v);
  };
  B("channel.jitter", &cfg.jitter_on);
  D("channel.jitter_lo_ms", &cfg.jitter_lo_ms);
  D("channel.jitter_hi_ms", &cfg.jitter_hi_ms);

  D("detector.occupancy_threshold", &cfg.detector.occupancy_threshold);
  I("detector.min_cells", &cfg.detector.min_cells);
  I("detector.connectivity", &cfg.detector.connectivity);
  D("detector.z_center", &cfg.detector.z_center);
  D("detector.z_height", &cfg.detector.z_height);

  handlers["eval.iou_thresholds"] = [&](const std::string& key,
                                        const std::string& v) {
    cfg.eval.iou_thresholds = parse_double_list(key, v);
  };
  handlers["eval.modes"] = [&](const std::string&, const std::string& v) {
    cfg.eval.mode_bev = false;
    cfg.eval.mode_3d = false;
    for (const auto& m : split_list(v)) {
      if (m == "bev") cfg.eval.mode_bev = true;
      else if (m == "3d") cfg.eval.mode_3d = true;
      else throw ConfigError("unknown eval mode: " + m);
    }
  };
  handlers["eval.roi"] = [&](const std::string& key, const std::string& v) {
    const auto vals = parse_double_list(key, v);
    if (vals.size() != 4) throw ConfigError("eval.roi expects 4 values");
    cfg.eval.roi_x_min = vals[0];
    cfg.eval.roi_y_min = vals[1];
    cfg.eval.roi_x_max = vals[2];
    cfg.eval.roi_y_max = vals[3];
  };

  handlers["run.modes"] = [&](const std::string&, const std::string& v) {
    cfg.modes = split_list(v);
    for (const auto& m : cfg.modes) {
      try {
        fusion_mode_from_name(m);
      } catch (const std::exception&) {
        throw ConfigError("unknown run mode: " + m);
      }
    }
  };
  D("run.late_fuse_iou", &cfg.late_fuse_iou);

  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
    }
    const std::string full = section + "." + key;
    auto it = handlers.find(full);
    if (it == handlers.end()) {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + full + "'");
    }
    it->second(full, value);
  }

  // Validation.
  if (cfg.num_frames < 1) throw ConfigError("scenario.num_frames must be >= 1");
  if (cfg.frame_period_ms <= 0) throw ConfigError("scenario.frame_period_ms must be > 0");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("scenario.dropout must be in [0,1)");
  if (cfg.actor_speed_max > 30.0) throw ConfigError("scenario.actor_speed_max exceeds 30 m/s");
  if (cfg.actor_speed_min < 0.0 || cfg.actor_speed_min > cfg.actor_speed_max) {
    throw ConfigError("scenario actor speed range invalid");
  }
  if (cfg.infra_range <= 0.0 || cfg.vehicle_range <= 0.0) {
    throw ConfigError("sensor range must be > 0");
  }
  if (cfg.grid.cell <= 0.0) throw ConfigError("grid.cell must be > 0");
  const double wq = (cfg.grid.x_max - cfg.grid.x_min) / cfg.grid.cell;
  const double hq = (cfg.grid.y_max - cfg.grid.y_min) / cfg.grid.cell;
  if (std::fabs(wq - std::round(wq)) > 1e-9 || std::fabs(hq - std::round(hq)) > 1e-9) {
    throw ConfigError("grid extents must be integer multiples of cell");
  }
  if (cfg.codec.bits < 2 || cfg.codec.bits > 16) throw ConfigError("codec.bits must be in [2,16]");
  if (cfg.codec.compress_spatial < 1 || cfg.codec.compress_channel < 1 ||
      cfg.codec.mask_stride < 1) {
    throw ConfigError("codec factors must be >= 1");
  }
  if (cfg.grid.width() % cfg.codec.compress_spatial != 0 ||
      cfg.grid.height() % cfg.codec.compress_spatial != 0) {
    throw ConfigError("grid dims not divisible by codec.compress_spatial");
  }
  if (cfg.grid.channels % cfg.codec.compress_channel != 0) {
    throw ConfigError("channels not divisible by codec.compress_channel");
  }
  if ((cfg.grid.width() / cfg.codec.compress_spatial) % cfg.codec.mask_stride != 0 ||
      (cfg.grid.height() / cfg.codec.compress_spatial) % cfg.codec.mask_stride != 0) {
    throw ConfigError("compressed dims not divisible by codec.mask_stride");
  }
  if (cfg.k_min < 1 || cfg.k_max < cfg.k_min) throw ConfigError("flow k range invalid");
  if (cfg.flow_init != "fd" && cfg.flow_init != "zero") {
    throw ConfigError("flow.init must be fd or zero");
  }
  if (cfg.holdout_every < 2) throw ConfigError("flow.holdout_every must be >= 2");
  if (cfg.jitter_lo_ms > cfg.jitter_hi_ms) throw ConfigError("channel jitter range invalid");
  if (cfg.detector.connectivity != 4 && cfg.detector.connectivity != 8) {
    throw ConfigError("detector.connectivity must be 4 or 8");
  }
  if (cfg.detector.occupancy_threshold <= 0.0) {
    throw ConfigError("detector.occupancy_threshold must be > 0");
  }
  if (cfg.detector.min_cells < 1) throw ConfigError("detector.min_cells must be >= 1");
  if (cfg.late_fuse_iou <= 0.0 || cfg.late_fuse_iou >= 1.0) {
    throw ConfigError("run.late_fuse_iou must be in (0,1)");
  }
  for (double t : cfg.eval.iou_thresholds) {
    if (t <= 0.0 || t > 1.0) throw ConfigError("eval.iou_thresholds must be in (0,1]");
  }
  if (cfg.eval.roi_x_min >= cfg.eval.roi_x_max || cfg.eval.roi_y_min >= cfg.eval.roi_y_max) {
    throw ConfigError("eval.roi not well-ordered");
  }
  if (cfg.modes.empty()) throw ConfigError("run.modes is empty");
  if (cfg.latencies_ms.empty()) throw ConfigError("channel.latencies_ms is empty");

  cfg.detector.count_norm = std::log1p(static_cast<double>(cfg.points_per_actor));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

Scenario ExperimentConfig::build_scenario() const {
  Scenario s;
  s.seed = seed;
  s.num_frames = num_frames;
  s.frame_period_ms = frame_period_ms;

  Rng rng(hash_combine(seed, 0xac7031ULL));
  for (int i = 0; i < num_actors; ++i) {
    Actor a;
    a.box0.cx = rng.uniform(spawn_x_min, spawn_x_max);
    a.box0.cy = rng.uniform(spawn_y_min, spawn_y_max);
    a.box0.cz = 0.75;
    a.box0.l = 4.5;
    a.box0.w = 2.0;
    a.box0.h = 1.5;
    const double heading = rng.uniform(-kPi, kPi);
    a.box0.yaw = heading;
    a.box0.class_id = 0;
    const double speed = rng.uniform(actor_speed_min, actor_speed_max);
    a.vx = speed * std::cos(heading);
    a.vy = speed * std::sin(heading);
    a.yaw_rate = actor_yaw_rate_max > 0.0
                     ? rng.uniform(-actor_yaw_rate_max, actor_yaw_rate_max)
                     : 0.0;
    s.actors.push_back(a);
  }

  s.infra.id = 1;
  s.infra.pose = make_pose(infra_x, infra_y, infra_yaw);
  s.infra.range = infra_range;
  s.infra.points_per_actor = points_per_actor;
  s.infra.clutter_points = clutter_points;
  s.infra.dropout = dropout;

  s.vehicle.id = 2;
  s.vehicle.pose = make_pose(vehicle_start_x, vehicle_start_y, vehicle_yaw);
  s.vehicle.range = vehicle_range;
  s.vehicle.points_per_actor = points_per_actor;
  s.vehicle.clutter_points = clutter_points;
  s.vehicle.dropout = dropout;

  const double horizon_s = num_frames * frame_period_ms / 1000.0;
  s.trajectory = {
      {0.0, make_pose(vehicle_start_x, vehicle_start_y, vehicle_yaw)},
      {horizon_s, make_pose(vehicle_end_x, vehicle_end_y, vehicle_yaw)}};
  return s;
}

RunConfigs ExperimentConfig::run_configs() const {
  RunConfigs rc;
  rc.grid = grid;
  rc.codec = codec;
  rc.detector = detector;
  rc.late_fuse_iou = late_fuse_iou;
  rc.jitter_on = jitter_on;
  return rc;
}

LatencyLink ExperimentConfig::link(double latency_ms) const {
  LatencyLink l;
  l.latency_ms = latency_ms;
  l.jitter_lo_ms = jitter_lo_ms;
  l.jitter_hi_ms = jitter_hi_ms;
  l.frame_period_ms = frame_period_ms;
  l.seed = hash_combine(seed, 0x71773eULL);
  return l;
}

uint64_t ExperimentConfig::config_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : raw_text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string default_config_text() {
  return R"(# ffsim demo experiment
[scenario]
seed = 42
num_frames = 30
frame_period_ms = 100
num_actors = 6
actor_speed_min = 3.0
actor_speed_max = 8.0
actor_yaw_rate_max = 0.0
spawn_x_min = 8.0
spawn_x_max = 40.0
spawn_y_min = -16.0
spawn_y_max = 16.0
points_per_actor = 200
clutter_points = 40
dropout = 0.0
infra_x = 24.0
infra_y = 20.0
infra_yaw = -1.5707963267948966
infra_range = 60.0
vehicle_range = 18.0
vehicle_start_x = -6.0
vehicle_start_y = 0.0
vehicle_end_x = 6.0
vehicle_end_y = 0.0
vehicle_yaw = 0.0

[grid]
x_min = 0.0
x_max = 46.08
y_min = -23.04
y_max = 23.04
z_min = -0.5
z_max = 3.0
cell = 0.32

[flow]
k_min = 1
k_max = 2
lr = 0.001
weight_decay = 0.01
epochs = 10
init = fd
holdout_every = 5

[codec]
bits = 6
quantized = on
use_mask = on
mask_threshold = 0.0
mask_stride = 1
compress_spatial = 4
compress_channel = 1

[channel]
latencies_ms = 0, 100, 200, 300, 400, 500
jitter = off
jitter_lo_ms = -30
jitter_hi_ms = 30

[detector]
occupancy_threshold = 0.25
min_cells = 3
connectivity = 8
z_center = 0.75
z_height = 1.5

[eval]
iou_thresholds = 0.5, 0.7
modes = bev, 3d
roi = 0, -39.12, 100, 39.12

[run]
modes = EarlyFusion, LateFusion, MiddleNoPrediction, MiddleFlowInfra, MiddleFlowVehicle
late_fuse_iou = 0.3
)";
}

}  // namespace ffsim

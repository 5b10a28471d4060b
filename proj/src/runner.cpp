#include "ffsim/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ffsim/common.hpp"
#include "ffsim/fusion.hpp"

namespace ffsim {

namespace {

constexpr const char* kVersion = "1.0.0";

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string hex64(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

EstimatorParams initial_params(const ExperimentConfig& cfg) {
  const int channels = cfg.grid.channels / cfg.codec.compress_channel;
  if (!cfg.params_file.empty()) return load_params(cfg.params_file);
  return cfg.flow_init == "zero" ? zero_init(channels) : fd_init(channels);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg) {
  const Scenario scenario = cfg.build_scenario();
  const RunConfigs rc = cfg.run_configs();
  const EstimatorParams theta = initial_params(cfg);

  Report rep;
  rep.seed = cfg.seed;
  rep.config_hash = cfg.config_hash();
  rep.version = kVersion;

  for (const std::string& mode_name : cfg.modes) {
    const FusionMode mode = fusion_mode_from_name(mode_name);
    for (double latency : cfg.latencies_ms) {
      const RunModeResult run = run_mode(mode, scenario, cfg.link(latency), theta, rc);
      const EvalResult ev =
          evaluate_run(run.detections, run.ground_truth, cfg.eval, run.ab_per_frame);
      ReportRow row;
      row.mode = mode_name;
      row.latency_ms = latency;
      row.map = ev.map;
      row.ab_mean = ev.ab_mean;
      row.storage_counter = run.storage_counter;
      row.compute_counter = run.compute_counter;
      rep.rows.push_back(std::move(row));
    }
  }

  // Prediction-benefit gap: the predictive mode minus its no-prediction ablation, BEV at
  // the first configured threshold.
  if (cfg.eval.mode_bev && !cfg.eval.iou_thresholds.empty()) {
    const std::pair<std::string, double> key{"bev", cfg.eval.iou_thresholds[0]};
    for (double latency : cfg.latencies_ms) {
      const ReportRow* flow = nullptr;
      const ReportRow* stale = nullptr;
      for (const auto& row : rep.rows) {
        if (row.latency_ms != latency) continue;
        if (row.mode == "MiddleFlowInfra") flow = &row;
        if (row.mode == "MiddleNoPrediction") stale = &row;
      }
      if (flow && stale) {
        rep.prediction_benefit.push_back(
            {latency, flow->map.at(key) - stale->map.at(key)});
      }
    }
  }
  return rep;
}

std::string report_csv(const Report& r, const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::vector<std::pair<std::string, double>> columns;
  if (cfg.eval.mode_3d) {
    for (double t : cfg.eval.iou_thresholds) columns.push_back({"3d", t});
  }
  if (cfg.eval.mode_bev) {
    for (double t : cfg.eval.iou_thresholds) columns.push_back({"bev", t});
  }
  out << "mode,latency_ms";
  for (const auto& [m, t] : columns) {
    out << ",mAP_" << (m == "bev" ? "BEV" : "3D") << "@" << fmt6(t);
  }
  out << ",ab_bytes,storage_counter,compute_counter\n";
  for (const auto& row : r.rows) {
    out << row.mode << "," << fmt6(row.latency_ms);
    for (const auto& col : columns) out << "," << fmt6(row.map.at(col));
    out << "," << fmt6(row.ab_mean) << "," << row.storage_counter << ","
        << row.compute_counter << "\n";
  }
  return out.str();
}

std::string report_json(const Report& r, const ExperimentConfig& cfg) {
  json doc;
  doc["version"] = r.version;
  doc["seed"] = r.seed;
  doc["config_hash"] = hex64(r.config_hash);
  doc["config_echo"] = cfg.raw_text;
  json rows = json::array();
  for (const auto& row : r.rows) {
    json jr;
    jr["mode"] = row.mode;
    jr["latency_ms"] = row.latency_ms;
    json maps = json::object();
    for (const auto& [key, val] : row.map) {
      maps[key.first + "@" + fmt6(key.second)] = val;
    }
    jr["map"] = maps;
    jr["ab_bytes"] = row.ab_mean;
    jr["storage_counter"] = row.storage_counter;
    jr["compute_counter"] = row.compute_counter;
    rows.push_back(jr);
  }
  doc["rows"] = rows;
  json gaps = json::array();
  for (const auto& g : r.prediction_benefit) {
    gaps.push_back({{"latency_ms", g.latency_ms}, {"gap_bev", g.gap}});
  }
  doc["prediction_benefit_gap"] = gaps;
  return doc.dump(2) + "\n";
}

TrainOutcome train_from_config(const ExperimentConfig& cfg) {
  const Scenario scenario = cfg.build_scenario();
  const double period_s = cfg.frame_period_ms / 1000.0;

  // Infrastructure frames only; the ego vehicle contributes nothing here.
  std::vector<Frame> frames;
  for (int i = 0; i < cfg.num_frames; ++i) {
    Frame fr;
    auto [cloud, gt] = sample_frame(scenario, scenario.infra, i * period_s);
    (void)gt;
    fr.cloud = std::move(cloud);
    fr.t_us = static_cast<uint64_t>(std::llround(i * period_s * 1e6));
    frames.push_back(std::move(fr));
  }

  const GridConfig grid = cfg.grid;
  const int sx = cfg.codec.compress_spatial;
  const int sc = cfg.codec.compress_channel;
  Featurize featurize = [grid, sx, sc](const PointCloud& cloud) {
    return spatial_compress(rasterize(cloud, grid), sx, sc);
  };

  const auto all_pairs =
      make_pairs(frames, cfg.k_min, cfg.k_max, hash_combine(cfg.seed, 0x9a125ULL));
  std::vector<TrainingPair> train_pairs, holdout_pairs;
  for (size_t i = 0; i < all_pairs.size(); ++i) {
    if ((i + 1) % static_cast<size_t>(cfg.holdout_every) == 0) {
      holdout_pairs.push_back(all_pairs[i]);
    } else {
      train_pairs.push_back(all_pairs[i]);
    }
  }
  if (train_pairs.empty() || holdout_pairs.empty()) {
    throw std::runtime_error("train_from_config: not enough pairs for a holdout split");
  }

  const int channels = grid.channels / sc;
  TrainOutcome out;
  const EstimatorParams theta0 =
      cfg.flow_init == "zero" ? zero_init(channels) : fd_init(channels);
  out.holdout_before = mean_loss(theta0, holdout_pairs, featurize);
  out.theta = train(theta0, train_pairs, featurize, cfg.lr, cfg.weight_decay,
                    cfg.epochs, hash_combine(cfg.seed, 0x7121aULL), &out.log);
  out.holdout_after = mean_loss(out.theta, holdout_pairs, featurize);
  return out;
}

void save_params(const EstimatorParams& p, const TrainOutcome* outcome,
                 const std::string& path) {
  json doc;
  doc["channels"] = p.channels;
  doc["weights"] = p.weights;
  doc["bias"] = p.bias;
  if (outcome) {
    doc["epoch_mean_loss"] = outcome->log.epoch_mean_loss;
    doc["holdout_loss_before"] = outcome->holdout_before;
    doc["holdout_loss_after"] = outcome->holdout_after;
  }
  write_file(path, doc.dump(2) + "\n");
}

EstimatorParams load_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open params file: " + path);
  json doc = json::parse(f);
  EstimatorParams p;
  p.channels = doc.at("channels").get<int>();
  p.weights = doc.at("weights").get<std::vector<double>>();
  p.bias = doc.at("bias").get<std::vector<double>>();
  if (p.weights.size() != static_cast<size_t>(p.channels) * 2 * p.channels ||
      p.bias.size() != static_cast<size_t>(p.channels)) {
    throw std::runtime_error("params file has inconsistent shapes");
  }
  return p;
}

void cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig cfg =
      config_path.empty() ? parse_config_text(default_config_text())
                          : load_config(config_path);
  const Report rep = run_experiment(cfg);
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "report.csv").string(), report_csv(rep, cfg));
  write_file((fs::path(out_dir) / "report.json").string(), report_json(rep, cfg));
  std::printf("wrote %s/report.{csv,json} (%zu rows)\n", out_dir.c_str(),
              rep.rows.size());
}

void cmd_train_flow(const std::string& config_path, const std::string& out_path) {
  const ExperimentConfig cfg =
      config_path.empty() ? parse_config_text(default_config_text())
                          : load_config(config_path);
  const TrainOutcome outcome = train_from_config(cfg);
  save_params(outcome.theta, &outcome, out_path);
  std::printf("trained %d epochs; holdout loss %.6g -> %.6g; params in %s\n",
              cfg.epochs, outcome.holdout_before, outcome.holdout_after,
              out_path.c_str());
}

void cmd_bench(const std::string& config_path) {
  const ExperimentConfig cfg =
      config_path.empty() ? parse_config_text(default_config_text())
                          : load_config(config_path);
  const Scenario scenario = cfg.build_scenario();
  const double period_s = cfg.frame_period_ms / 1000.0;
  auto [cloud, gt] = sample_frame(scenario, scenario.infra, 0.0);
  (void)gt;
  auto [cloud2, gt2] = sample_frame(scenario, scenario.infra, period_s);
  (void)gt2;

  using clock = std::chrono::steady_clock;
  auto secs = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };

  const int reps = 20;
  auto t0 = clock::now();
  FeatureGrid f;
  for (int i = 0; i < reps; ++i) f = rasterize(cloud, cfg.grid);
  auto t1 = clock::now();
  const double raster_cells_s =
      static_cast<double>(f.size()) * reps / secs(t0, t1);

  const FeatureGrid fc = spatial_compress(f, cfg.codec.compress_spatial,
                                          cfg.codec.compress_channel);
  const FeatureGrid fp = spatial_compress(rasterize(cloud2, cfg.grid),
                                          cfg.codec.compress_spatial,
                                          cfg.codec.compress_channel);
  FeatureFlow flow;
  flow.base = fc;
  flow.deriv = finite_difference_derivative(fp, fc, period_s);
  flow.t_ref_us = 0;

  EncodeOptions opts;
  opts.bits = cfg.codec.bits;
  opts.quantized = cfg.codec.quantized;
  EncodedPacket pkt_plain = encode_packet(flow, PosePayload{}, opts);
  opts.mask = attention_mask(fp, fc, fc.h / cfg.codec.mask_stride,
                             fc.w / cfg.codec.mask_stride,
                             cfg.codec.mask_threshold);
  EncodedPacket pkt_masked = encode_packet(flow, PosePayload{}, opts);

  t0 = clock::now();
  for (int i = 0; i < reps; ++i) pkt_plain = encode_packet(flow, PosePayload{}, EncodeOptions{cfg.codec.bits, cfg.codec.quantized, true, std::nullopt});
  t1 = clock::now();
  const double enc_bytes_s = static_cast<double>(pkt_plain.bytes.size()) * reps / secs(t0, t1);

  t0 = clock::now();
  for (int i = 0; i < reps; ++i) {
    auto dec = decode_packet(pkt_plain.bytes);
    (void)dec;
  }
  t1 = clock::now();
  const double dec_bytes_s = static_cast<double>(pkt_plain.bytes.size()) * reps / secs(t0, t1);

  const Pose2 vpose = vehicle_pose_at(scenario, 0.0);
  t0 = clock::now();
  FeatureGrid aligned;
  for (int i = 0; i < reps; ++i) {
    aligned = align(f, scenario.infra.pose, vpose, cfg.grid);
  }
  t1 = clock::now();
  const double align_cells_s = static_cast<double>(aligned.size()) * reps / secs(t0, t1);

  std::printf("rasterize: %.3e cells/s\n", raster_cells_s);
  std::printf("align:     %.3e cells/s\n", align_cells_s);
  std::printf("encode:    %.3e bytes/s\n", enc_bytes_s);
  std::printf("decode:    %.3e bytes/s\n", dec_bytes_s);
  std::printf("packet ab, flow unmasked: %llu bytes\n",
              static_cast<unsigned long long>(pkt_plain.ab_bytes));
  std::printf("packet ab, flow masked:   %llu bytes\n",
              static_cast<unsigned long long>(pkt_masked.ab_bytes));
  std::printf("early fusion per frame:   %llu bytes (%zu points)\n",
              static_cast<unsigned long long>(transmission_cost(
                  CostForm::Early, CostParams{.num_points = cloud.size()})),
              cloud.size());
}

std::map<int64_t, std::vector<Box3D>> load_boxes_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::map<int64_t, std::vector<Box3D>> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc = json::parse(line);
    const int64_t frame_id = doc.at("frame_id").get<int64_t>();
    std::vector<Box3D> boxes;
    for (const auto& jb : doc.at("boxes")) {
      Box3D b;
      b.cx = jb.at("cx").get<double>();
      b.cy = jb.at("cy").get<double>();
      b.cz = jb.at("cz").get<double>();
      b.w = jb.at("w").get<double>();
      b.l = jb.at("l").get<double>();
      b.h = jb.at("h").get<double>();
      b.yaw = jb.at("yaw").get<double>();
      b.class_id = jb.at("class_id").get<int>();
      b.confidence = jb.contains("confidence") ? jb["confidence"].get<double>() : 1.0;
      boxes.push_back(b);
    }
    out[frame_id] = std::move(boxes);
  }
  return out;
}

void cmd_eval(const std::string& pred_path, const std::string& gt_path,
              const std::string& config_path) {
  const ExperimentConfig cfg =
      config_path.empty() ? parse_config_text(default_config_text())
                          : load_config(config_path);
  const auto preds = load_boxes_jsonl(pred_path);
  const auto gts = load_boxes_jsonl(gt_path);
  std::vector<std::vector<Box3D>> pv, gv;
  std::set<int64_t> frame_ids;
  for (const auto& [id, _] : preds) frame_ids.insert(id);
  for (const auto& [id, _] : gts) frame_ids.insert(id);
  for (int64_t id : frame_ids) {
    auto ip = preds.find(id);
    auto ig = gts.find(id);
    pv.push_back(ip != preds.end() ? ip->second : std::vector<Box3D>{});
    gv.push_back(ig != gts.end() ? ig->second : std::vector<Box3D>{});
  }
  const EvalResult res = evaluate_run(pv, gv, cfg.eval, {});
  json doc;
  for (const auto& [key, val] : res.map) {
    doc["map"][key.first + "@" + fmt6(key.second)] = val;
  }
  for (const auto& [key, val] : res.ap) {
    doc["ap"]["class_" + std::to_string(std::get<0>(key)) + "_" +
              std::get<1>(key) + "@" + fmt6(std::get<2>(key))] = val;
  }
  doc["num_gt"] = res.num_gt;
  doc["num_tp"] = res.num_tp;
  doc["num_fp"] = res.num_fp;
  std::printf("%s\n", doc.dump(2).c_str());
}

}  // namespace ffsim

// End-to-end acceptance suite. Each check prints exactly one PASS/FAIL line;
// the binary exits nonzero if any check fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ffsim/common.hpp"
#include "ffsim/config.hpp"
#include "ffsim/fusion.hpp"
#include "ffsim/metrics.hpp"
#include "ffsim/runner.hpp"

using namespace ffsim;
namespace fs = std::filesystem;

namespace {

FeatureGrid random_grid(int c, int h, int w, uint64_t seed, double span = 2.0) {
  FeatureGrid f = FeatureGrid::zeros(c, h, w);
  Rng rng(seed);
  for (auto& v : f.data) v = static_cast<float>(rng.uniform(-span, span));
  return f;
}

// ---------------------------------------------------------------------------
// 1. Byte-accounting formulas for every fusion strategy.
bool check_cost_model(std::string& detail) {
  CostParams p;
  p.num_points = 1000;
  p.num_detections = 12;
  p.c = 12;
  p.h = 36;
  p.w = 36;
  const uint64_t early = transmission_cost(CostForm::Early, p);
  const uint64_t late = transmission_cost(CostForm::Late, p);
  const uint64_t feat = transmission_cost(CostForm::MiddleFeature, p);
  p.quantized = false;
  const uint64_t flow_raw = transmission_cost(CostForm::MiddleFlow, p);
  p.quantized = true;
  p.bits = 6;
  const uint64_t flow_q = transmission_cost(CostForm::MiddleFlow, p);
  std::ostringstream os;
  os << "early=" << early << " late=" << late << " feature=" << feat
     << " flow_raw=" << flow_raw << " flow_q6=" << flow_q;
  detail = os.str();
  return early == 16'000 && late == 384 && feat == 62'208 &&
         flow_raw == 124'416 && flow_q == 23'328;
}

// ---------------------------------------------------------------------------
// 2. Wire-format payload size of a 6-bit (12,36,36) flow packet.
bool check_packet_size(std::string& detail) {
  FeatureFlow flow;
  flow.base = random_grid(12, 36, 36, 1);
  flow.deriv = random_grid(12, 36, 36, 2);
  flow.t_ref_us = 42;
  EncodeOptions o;
  o.bits = 6;
  const EncodedPacket q = encode_packet(flow, {}, o);
  o.quantized = false;
  const EncodedPacket raw = encode_packet(flow, {}, o);
  std::ostringstream os;
  os << "quantized ab=" << q.ab_bytes << " (total " << q.bytes.size()
     << "), raw ab=" << raw.ab_bytes;
  detail = os.str();
  return q.ab_bytes == 23'336 && q.bytes.size() == 23'336 + kPacketHeaderSize &&
         raw.ab_bytes == 124'416;
}

// ---------------------------------------------------------------------------
// 3. Quantizer contract at every bit width plus masked packet round trips.
bool check_quantizer(std::string& detail) {
  int widths_ok = 0;
  for (int bits = 2; bits <= 16; ++bits) {
    const FeatureGrid f = random_grid(1, 250, 400, 100 + bits, 5.0);  // 1e5 values
    const QuantizedTensor q = quantize(f, bits);
    const std::vector<float> back = dequantize(q);
    // half a quantization step, plus one float ulp at the value magnitude
    // for the code*scale reconstruction product
    const double tol = 0.5 * q.scale + 1e-6;
    double max_err = 0.0;
    for (size_t i = 0; i < f.data.size(); ++i) {
      max_err = std::max(max_err, std::fabs(static_cast<double>(back[i]) - f.data[i]));
    }
    FeatureGrid f2 = f;
    f2.data = back;
    const QuantizedTensor q2 = quantize(f2, bits);
    if (max_err <= tol && q2.packed == q.packed && q2.scale == q.scale) ++widths_ok;
  }
  const FeatureGrid z = FeatureGrid::zeros(2, 10, 10);
  const QuantizedTensor qz = quantize(z, 6);
  bool zero_ok = qz.scale == 0.0f;
  for (float v : dequantize(qz)) zero_ok = zero_ok && v == 0.0f;

  // masked packets reconstruct exactly the masked-and-requantized derivative
  bool mask_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    FeatureFlow flow;
    flow.base = random_grid(4, 16, 16, 500 + trial);
    flow.deriv = random_grid(4, 16, 16, 600 + trial);
    BitMask m = BitMask::zeros(4, 4);
    Rng rng(700 + trial);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) m.set(y, x, rng.uniform() < 0.4);
    }
    EncodeOptions o;
    o.bits = 8;
    o.mask = m;
    const DecodedPacket d = decode_packet(encode_packet(flow, {}, o).bytes);
    const std::vector<float> ref = dequantize(quantize(apply_mask(flow.deriv, m), 8));
    mask_ok = mask_ok && d.flow.deriv.data == ref &&
              d.flow.base.data == dequantize(quantize(flow.base, 8));
  }
  std::ostringstream os;
  os << widths_ok << "/15 bit widths, zero-tensor "
     << (zero_ok ? "ok" : "bad") << ", 20 masked round trips "
     << (mask_ok ? "ok" : "bad");
  detail = os.str();
  return widths_ok == 15 && zero_ok && mask_ok;
}

// ---------------------------------------------------------------------------
// 4. Average precision against an independent oracle.
double oracle_ap(const std::vector<std::pair<double, bool>>& sorted_flags,
                 uint64_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> prec, rec;
  uint64_t tp = 0, fp = 0;
  for (const auto& [c, t] : sorted_flags) {
    (void)c;
    t ? ++tp : ++fp;
    prec.push_back(double(tp) / double(tp + fp));
    rec.push_back(double(tp) / double(num_gt));
  }
  // monotone precision envelope evaluated right-to-left
  for (size_t i = prec.size(); i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const double r = 0.1 * i;
    double p = 0.0;
    for (size_t j = 0; j < rec.size(); ++j) {
      if (rec[j] >= r - 1e-12) {
        p = prec[j];
        break;
      }
    }
    ap += p / 11.0;
  }
  return ap;
}

bool check_average_precision(std::string& detail) {
  const double hand = average_precision({{0.9, false}, {0.8, true}}, 2);
  const bool hand_ok = std::fabs(hand - 3.0 / 11.0) < 1e-12;
  Rng rng(41);
  int ok = 0;
  const int trials = 500;
  for (int trial = 0; trial < trials; ++trial) {
    const uint64_t num_gt = 1 + static_cast<uint64_t>(rng.uniform_int(0, 11));
    const int n = static_cast<int>(rng.uniform_int(0, 24));
    std::vector<std::pair<double, bool>> flags;
    uint64_t budget = num_gt;
    for (int i = 0; i < n; ++i) {
      const bool tp = budget > 0 && rng.uniform() < 0.55;
      if (tp) --budget;
      flags.push_back({1.0 - 0.001 * i, tp});
    }
    const double got = average_precision(flags, num_gt);
    if (std::fabs(got - oracle_ap(flags, num_gt)) < 1e-12 && got >= 0.0 && got <= 1.0) {
      ++ok;
    }
  }
  std::ostringstream os;
  os << "hand case " << (hand_ok ? "3/11 ok" : "wrong") << ", " << ok << "/"
     << trials << " random instances match the oracle";
  detail = os.str();
  return hand_ok && ok == trials;
}

// ---------------------------------------------------------------------------
// 5. Rotated-box IoU against Monte-Carlo integration.
bool inside_rect(const Box3D& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.cx, dy = y - b.cy;
  return std::fabs(c * dx + s * dy) <= 0.5 * b.l &&
         std::fabs(-s * dx + c * dy) <= 0.5 * b.w;
}

double mc_iou(const Box3D& a, const Box3D& b, int samples, uint64_t seed) {
  double xmin = 1e18, xmax = -1e18, ymin = 1e18, ymax = -1e18;
  for (const Box3D* bb : {&a, &b}) {
    for (const auto& [x, y] : box_corners_bev(*bb)) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  Rng rng(seed);
  int64_t ni = 0, nu = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = rng.uniform(xmin, xmax), y = rng.uniform(ymin, ymax);
    const bool ia = inside_rect(a, x, y), ib = inside_rect(b, x, y);
    ni += ia && ib;
    nu += ia || ib;
  }
  return nu == 0 ? 0.0 : static_cast<double>(ni) / static_cast<double>(nu);
}

bool check_bev_iou(std::string& detail) {
  Box3D unit;
  unit.w = unit.l = unit.h = 1;
  Box3D rot = unit;
  rot.yaw = kPi / 4;
  const double exact45 = bev_iou(unit, rot);
  const bool case45 =
      std::fabs(exact45 - mc_iou(unit, rot, 10'000'000, 9)) < 0.001 &&
      std::fabs(exact45 - 0.70710678) < 0.002;

  Rng rng(51);
  int ok = 0;
  double worst = 0.0;
  const int pairs = 1000;
  for (int i = 0; i < pairs; ++i) {
    Box3D a, b;
    a.cx = rng.uniform(-2, 2); a.cy = rng.uniform(-2, 2);
    a.w = rng.uniform(0.5, 4); a.l = rng.uniform(0.5, 4); a.h = 1;
    a.yaw = rng.uniform(-3.2, 3.2);
    b.cx = rng.uniform(-2, 2); b.cy = rng.uniform(-2, 2);
    b.w = rng.uniform(0.5, 4); b.l = rng.uniform(0.5, 4); b.h = 1;
    b.yaw = rng.uniform(-3.2, 3.2);
    const double err = std::fabs(bev_iou(a, b) - mc_iou(a, b, 1'000'000, 10'000 + i));
    worst = std::max(worst, err);
    if (err < 0.005) ++ok;
  }
  std::ostringstream os;
  os << "45-degree case " << (case45 ? "ok" : "bad") << ", " << ok << "/"
     << pairs << " random pairs within 0.005 (worst " << worst << ")";
  detail = os.str();
  return case45 && ok == pairs;
}

// ---------------------------------------------------------------------------
// 6. Analytic training gradient against central finite differences.
bool check_gradient(std::string& detail) {
  GridConfig g;
  g.x_min = 0; g.x_max = 8; g.y_min = -4; g.y_max = 4;
  g.z_min = -1; g.z_max = 2; g.cell = 1.0;
  Featurize feat = [g](const PointCloud& c) { return rasterize(c, g); };
  auto cloud_at = [](double t, double speed, uint64_t seed) {
    Rng rng(seed);
    PointCloud c;
    for (int i = 0; i < 50; ++i) {
      Point4 p;
      p.x = static_cast<float>(2.0 + speed * t + rng.uniform(-1.0, 1.0));
      p.y = static_cast<float>(rng.uniform(-1.5, 1.5));
      p.z = static_cast<float>(rng.uniform(0.0, 1.0));
      p.intensity = static_cast<float>(rng.uniform());
      c.points.push_back(p);
    }
    return c;
  };
  Rng rng(61);
  int checked = 0, ok = 0;
  for (int trial = 0; trial < 20; ++trial) {
    TrainingPair pair;
    const double speed = 2.0 + trial * 0.3;
    pair.prev = {cloud_at(0.0, speed, 900 + trial), 0};
    pair.curr = {cloud_at(0.1, speed, 901 + trial), 100'000};
    pair.future = {cloud_at(0.2, speed, 902 + trial), 200'000};
    pair.k = 1;
    EstimatorParams theta = zero_init(4);
    for (auto& w : theta.weights) w = rng.uniform(-0.4, 0.4);
    for (auto& b : theta.bias) b = rng.uniform(-0.4, 0.4);
    const FlowGradient grad = flow_loss_gradient(theta, pair, feat);
    for (int probe = 0; probe < 5; ++probe) {
      const size_t idx = static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(theta.weights.size()) - 1));
      const double h = 1e-4;
      EstimatorParams tp = theta, tm = theta;
      tp.weights[idx] += h;
      tm.weights[idx] -= h;
      const double fd = (flow_loss(tp, pair, feat) - flow_loss(tm, pair, feat)) / (2 * h);
      const double rel = std::fabs(grad.d_weights[idx] - fd) / std::max(std::fabs(fd), 1e-8);
      ++checked;
      if (rel < 1e-4) ++ok;
    }
  }
  std::ostringstream os;
  os << ok << "/" << checked << " probes within relative 1e-4";
  detail = os.str();
  return checked == 100 && ok == 100;
}

// ---------------------------------------------------------------------------
// Shared demo experiment used by the system-level checks.
const Report& demo_report() {
  static const Report rep = run_experiment(parse_config_text(default_config_text()));
  return rep;
}

const ReportRow* find_row(const Report& rep, const std::string& mode, double lat) {
  for (const auto& r : rep.rows) {
    if (r.mode == mode && r.latency_ms == lat) return &r;
  }
  return nullptr;
}

// 7. Prediction closes the latency gap: the flow mode beats its stale
// ablation at high latency, and the stale ablation degrades monotonically.
bool check_prediction_benefit(std::string& detail) {
  const Report& rep = demo_report();
  const std::pair<std::string, double> key{"bev", 0.5};
  std::ostringstream os;
  bool ok = true;
  for (double lat : {200.0, 300.0}) {
    const ReportRow* flow = find_row(rep, "MiddleFlowInfra", lat);
    const ReportRow* stale = find_row(rep, "MiddleNoPrediction", lat);
    if (!flow || !stale) return false;
    const double gap = flow->map.at(key) - stale->map.at(key);
    os << "gap@" << lat << "ms=" << gap << " ";
    ok = ok && gap > 0.0;
  }
  double prev = 2.0;
  bool mono = true;
  for (double lat : {0.0, 100.0, 200.0, 300.0, 400.0, 500.0}) {
    const ReportRow* stale = find_row(rep, "MiddleNoPrediction", lat);
    if (!stale) return false;
    const double v = stale->map.at(key);
    mono = mono && v <= prev + 1e-9;
    prev = v;
  }
  os << (mono ? "stale mAP non-increasing over latency"
              : "stale mAP NOT monotone");
  detail = os.str();
  return ok && mono;
}

// 8. Zero latency: prediction must coincide exactly with the stale baseline.
bool check_zero_latency_identity(std::string& detail) {
  const ExperimentConfig cfg = parse_config_text(default_config_text());
  const Scenario s = cfg.build_scenario();
  const EstimatorParams theta = fd_init(cfg.grid.channels / cfg.codec.compress_channel);
  const RunModeResult a =
      run_mode(FusionMode::MiddleNoPrediction, s, cfg.link(0.0), theta, cfg.run_configs());
  const RunModeResult b =
      run_mode(FusionMode::MiddleFlowInfra, s, cfg.link(0.0), theta, cfg.run_configs());
  if (a.detections.size() != b.detections.size()) return false;
  size_t boxes = 0;
  for (size_t f = 0; f < a.detections.size(); ++f) {
    if (a.detections[f].size() != b.detections[f].size()) return false;
    for (size_t i = 0; i < a.detections[f].size(); ++i) {
      const Box3D &x = a.detections[f][i], &y = b.detections[f][i];
      if (x.cx != y.cx || x.cy != y.cy || x.w != y.w || x.l != y.l ||
          x.yaw != y.yaw || x.confidence != y.confidence) {
        return false;
      }
      ++boxes;
    }
  }
  std::ostringstream os;
  os << boxes << " detections identical across " << a.detections.size() << " frames";
  detail = os.str();
  return true;
}

// 9. Roadside vs vehicle-side estimation: equal-or-better accuracy with O(1)
// instead of O(N) storage.
bool check_infra_vs_vehicle(std::string& detail) {
  const Report& rep = demo_report();
  const ExperimentConfig cfg = parse_config_text(default_config_text());
  const std::pair<std::string, double> key{"bev", 0.5};
  const ReportRow* infra = find_row(rep, "MiddleFlowInfra", 300.0);
  const ReportRow* veh = find_row(rep, "MiddleFlowVehicle", 300.0);
  if (!infra || !veh) return false;
  // latency of 3 frames: the vehicle ends up holding num_frames - 3 packets
  const uint64_t expected_buffer = static_cast<uint64_t>(cfg.num_frames) - 3;
  std::ostringstream os;
  os << "mAP infra=" << infra->map.at(key) << " vehicle=" << veh->map.at(key)
     << ", storage " << infra->storage_counter << " vs " << veh->storage_counter;
  detail = os.str();
  return infra->map.at(key) >= veh->map.at(key) - 1e-9 &&
         infra->storage_counter == 1 && veh->storage_counter == expected_buffer;
}

// 10. Training from a zero initializer strictly improves the held-out loss.
bool check_training_improves(std::string& detail) {
  ExperimentConfig cfg = parse_config_text(default_config_text());
  cfg.flow_init = "zero";
  const TrainOutcome out = train_from_config(cfg);
  std::ostringstream os;
  os << "holdout loss " << out.holdout_before << " -> " << out.holdout_after;
  detail = os.str();
  return out.holdout_after < out.holdout_before;
}

// 11. Whole-experiment determinism: two runs, byte-identical reports.
bool check_determinism(std::string& detail) {
  const fs::path dir = fs::temp_directory_path() / "ffsim_acceptance";
  fs::create_directories(dir);
  const fs::path o1 = dir / "run1", o2 = dir / "run2";
  cmd_simulate("", o1.string());
  cmd_simulate("", o2.string());
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const bool csv_ok = slurp(o1 / "report.csv") == slurp(o2 / "report.csv");
  const bool json_ok = slurp(o1 / "report.json") == slurp(o2 / "report.json");
  std::ostringstream os;
  os << "report.csv " << (csv_ok ? "identical" : "DIFFERS") << ", report.json "
     << (json_ok ? "identical" : "DIFFERS");
  detail = os.str();
  return csv_ok && json_ok;
}

}  // namespace

int main() {
  struct Check {
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Check> checks = {
      {"transmission cost model", check_cost_model},
      {"flow packet payload size", check_packet_size},
      {"quantizer contract across bit widths", check_quantizer},
      {"average precision vs oracle", check_average_precision},
      {"rotated-box IoU vs Monte Carlo", check_bev_iou},
      {"training gradient vs finite differences", check_gradient},
      {"prediction benefit under latency", check_prediction_benefit},
      {"zero-latency prediction identity", check_zero_latency_identity},
      {"roadside vs vehicle-side estimation", check_infra_vs_vehicle},
      {"training improves held-out loss", check_training_improves},
      {"end-to-end determinism", check_determinism},
  };

  int failures = 0;
  for (size_t i = 0; i < checks.size(); ++i) {
    std::string detail;
    bool pass = false;
    try {
      pass = checks[i].fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %2zu/%zu %s%s%s\n", pass ? "PASS" : "FAIL", i + 1,
                checks.size(), checks[i].name, detail.empty() ? "" : " — ",
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  if (failures) std::printf("%d of %zu checks failed\n", failures, checks.size());
  return failures == 0 ? 0 : 1;
}

#include <cstdio>
#include <cstring>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "ffsim/config.hpp"
#include "ffsim/runner.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;
constexpr int kExitDivergence = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ffsim: flow-based vehicle-infrastructure cooperative detection simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", out_params = "flow_params.json";
  std::string pred_path, gt_path;

  auto* sim = app.add_subcommand("simulate", "run the latency x fusion-mode sweep and write reports");
  sim->add_option("--config", config_path, "experiment config file (built-in demo when omitted)");
  sim->add_option("--out", out_dir, "output directory")->required();

  auto* trn = app.add_subcommand("train-flow", "self-supervised training of the derivative estimator");
  trn->add_option("--config", config_path, "experiment config file");
  trn->add_option("--out", out_params, "output parameter file")->required();

  auto* ben = app.add_subcommand("bench", "codec / rasterizer / alignment throughput");
  ben->add_option("--config", config_path, "experiment config file");

  auto* evl = app.add_subcommand("eval", "re-score prediction/GT JSONL files");
  evl->add_option("--pred", pred_path, "predictions, JSON lines")->required();
  evl->add_option("--gt", gt_path, "ground truth, JSON lines")->required();
  evl->add_option("--config", config_path, "experiment config file");

  auto* dcf = app.add_subcommand("default-config", "print the built-in demo config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitConfigError : 0;
  }

  try {
    if (sim->parsed()) {
      ffsim::cmd_simulate(config_path, out_dir);
    } else if (trn->parsed()) {
      ffsim::cmd_train_flow(config_path, out_params);
    } else if (ben->parsed()) {
      ffsim::cmd_bench(config_path);
    } else if (evl->parsed()) {
      ffsim::cmd_eval(pred_path, gt_path, config_path);
    } else if (dcf->parsed()) {
      std::fputs(ffsim::default_config_text().c_str(), stdout);
    }
  } catch (const ffsim::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::runtime_error& e) {
    if (std::strstr(e.what(), "diverged") != nullptr) {
      std::fprintf(stderr, "training diverged: %s\n", e.what());
      return kExitDivergence;
    }
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntimeError;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ffsim/featurizer.hpp"

namespace ffsim {

// Base feature plus its first-order time derivative (per second). Predicts
// the feature at any t >= t_ref by linear extrapolation.
struct FeatureFlow {
  FeatureGrid base;
  FeatureGrid deriv;
  uint64_t t_ref_us = 0;
};

// Per-cell linear derivative estimator: output channel c is
//   (bias[c] + sum_j weights[c][j] * concat(f_prev, f_curr)[j]) / dt.
struct EstimatorParams {
  int channels = 0;
  std::vector<double> weights;  // channels x 2*channels, row-major
  std::vector<double> bias;     // channels

  double& w(int out, int in) { return weights[static_cast<size_t>(out) * 2 * channels + in]; }
  double w(int out, int in) const { return weights[static_cast<size_t>(out) * 2 * channels + in]; }
};

// weights = [-I | +I], bias = 0: reproduces the finite difference exactly.
EstimatorParams fd_init(int channels);
EstimatorParams zero_init(int channels);

struct Frame {
  PointCloud cloud;
  uint64_t t_us = 0;
};

struct TrainingPair {
  Frame prev, curr, future;
  int k = 1;
};

using Featurize = std::function<FeatureGrid(const PointCloud&)>;

FeatureGrid finite_difference_derivative(const FeatureGrid& f_prev,
                                         const FeatureGrid& f_curr, double dt);

FeatureGrid estimate_derivative(const EstimatorParams& params,
                                const FeatureGrid& f_prev,
                                const FeatureGrid& f_curr, double dt);

// base + (t_target - t_ref) * deriv. Throws if t_target < t_ref.
FeatureGrid predict(const FeatureFlow& flow, uint64_t t_target_us);

// Over the flattened tensors. Throws std::domain_error on zero-norm input.
double cosine_similarity(const FeatureGrid& a, const FeatureGrid& b);

// 1 - cos(predicted future feature, rasterized future feature), in [0, 2].
double flow_loss(const EstimatorParams& params, const TrainingPair& pair,
                 const Featurize& featurize);

struct FlowGradient {
  std::vector<double> d_weights;
  std::vector<double> d_bias;
  double loss = 0.0;
};

FlowGradient flow_loss_gradient(const EstimatorParams& params,
                                const TrainingPair& pair,
                                const Featurize& featurize);

// One pair per eligible anchor index; k drawn uniformly in [k_min, k_max].
std::vector<TrainingPair> make_pairs(const std::vector<Frame>& frames,
                                     int k_min, int k_max, uint64_t seed);

struct TrainLog {
  std::vector<double> epoch_mean_loss;
};

// SGD with L2 weight decay, pair order shuffled per epoch (seeded). Throws
// std::runtime_error if the mean loss diverges.
EstimatorParams train(const EstimatorParams& theta0,
                      const std::vector<TrainingPair>& pairs,
                      const Featurize& featurize, double lr,
                      double weight_decay, int epochs, uint64_t seed,
                      TrainLog* log = nullptr);

double mean_loss(const EstimatorParams& params,
                 const std::vector<TrainingPair>& pairs,
                 const Featurize& featurize);

}  // namespace ffsim

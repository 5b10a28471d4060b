#include "ffsim/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ffsim/common.hpp"

namespace ffsim {

EstimatorParams fd_init(int channels) {
  EstimatorParams p;
  p.channels = channels;
  p.weights.assign(static_cast<size_t>(channels) * 2 * channels, 0.0);
  p.bias.assign(channels, 0.0);
  for (int c = 0; c < channels; ++c) {
    p.w(c, c) = -1.0;
    p.w(c, channels + c) = 1.0;
  }
  return p;
}

EstimatorParams zero_init(int channels) {
  EstimatorParams p;
  p.channels = channels;
  p.weights.assign(static_cast<size_t>(channels) * 2 * channels, 0.0);
  p.bias.assign(channels, 0.0);
  return p;
}

FeatureGrid finite_difference_derivative(const FeatureGrid& f_prev,
                                         const FeatureGrid& f_curr, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("finite_difference: dt <= 0");
  if (!f_prev.same_dims(f_curr)) {
    throw std::invalid_argument("finite_difference: dimension mismatch");
  }
  FeatureGrid out = f_curr;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<float>(
        (static_cast<double>(f_curr.data[i]) - f_prev.data[i]) / dt);
  }
  return out;
}

namespace {

void check_estimator_inputs(const EstimatorParams& params,
                            const FeatureGrid& f_prev,
                            const FeatureGrid& f_curr, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("estimate_derivative: dt <= 0");
  if (!f_prev.same_dims(f_curr)) {
    throw std::invalid_argument("estimate_derivative: dimension mismatch");
  }
  if (params.channels != f_curr.c ||
      params.weights.size() !=
          static_cast<size_t>(params.channels) * 2 * params.channels ||
      params.bias.size() != static_cast<size_t>(params.channels)) {
    throw std::invalid_argument("estimate_derivative: parameter mismatch");
  }
}

// Derivative estimate in double precision, flattened channel-major.
std::vector<double> estimate_double(const EstimatorParams& params,
                                    const FeatureGrid& f_prev,
                                    const FeatureGrid& f_curr, double dt) {
  const int C = f_curr.c;
  const size_t cells = static_cast<size_t>(f_curr.h) * f_curr.w;
  std::vector<double> out(static_cast<size_t>(C) * cells);
  for (int c = 0; c < C; ++c) {
    for (size_t i = 0; i < cells; ++i) {
      double acc = params.bias[c];
      for (int j = 0; j < C; ++j) {
        acc += params.w(c, j) * static_cast<double>(f_prev.data[j * cells + i]);
      }
      for (int j = 0; j < C; ++j) {
        acc += params.w(c, C + j) *
               static_cast<double>(f_curr.data[j * cells + i]);
      }
      out[c * cells + i] = acc / dt;
    }
  }
  return out;
}

}  // namespace

FeatureGrid estimate_derivative(const EstimatorParams& params,
                                const FeatureGrid& f_prev,
                                const FeatureGrid& f_curr, double dt) {
  check_estimator_inputs(params, f_prev, f_curr, dt);
  const std::vector<double> d = estimate_double(params, f_prev, f_curr, dt);
  FeatureGrid out = f_curr;
  for (size_t i = 0; i < d.size(); ++i) {
    out.data[i] = static_cast<float>(d[i]);
  }
  return out;
}

FeatureGrid predict(const FeatureFlow& flow, uint64_t t_target_us) {
  if (t_target_us < flow.t_ref_us) {
    throw std::invalid_argument("predict: t_target precedes t_ref");
  }
  if (!flow.base.same_dims(flow.deriv)) {
    throw std::invalid_argument("predict: base/deriv dimension mismatch");
  }
  const double dt = static_cast<double>(t_target_us - flow.t_ref_us) * 1e-6;
  FeatureGrid out = flow.base;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<float>(static_cast<double>(flow.base.data[i]) +
                                     dt * flow.deriv.data[i]);
  }
  return out;
}

double cosine_similarity(const FeatureGrid& a, const FeatureGrid& b) {
  if (!a.same_dims(b)) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i], y = b.data[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) {
    throw std::domain_error("cosine_similarity: zero-norm input");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

struct LossContext {
  std::vector<double> concat;  // 2C x cells, channel-major, double copies
  std::vector<double> pred;    // C x cells
  std::vector<double> target;  // C x cells
  double dt = 0.0;             // prev -> curr, seconds
  double horizon = 0.0;        // curr -> future, seconds
  double loss = 0.0;
  double dot = 0.0, np = 0.0, ng = 0.0;  // np/ng are L2 norms
  int channels = 0;
  size_t cells = 0;
};

LossContext eval_loss(const EstimatorParams& params, const TrainingPair& pair,
                      const Featurize& featurize) {
  if (!(pair.prev.t_us < pair.curr.t_us && pair.curr.t_us < pair.future.t_us)) {
    throw std::invalid_argument("flow_loss: timestamps not strictly increasing");
  }
  const FeatureGrid f_prev = featurize(pair.prev.cloud);
  const FeatureGrid f_curr = featurize(pair.curr.cloud);
  const FeatureGrid f_fut = featurize(pair.future.cloud);
  LossContext ctx;
  ctx.dt = static_cast<double>(pair.curr.t_us - pair.prev.t_us) * 1e-6;
  ctx.horizon = static_cast<double>(pair.future.t_us - pair.curr.t_us) * 1e-6;
  check_estimator_inputs(params, f_prev, f_curr, ctx.dt);
  if (!f_curr.same_dims(f_fut)) {
    throw std::invalid_argument("flow_loss: future frame dimension mismatch");
  }
  const int C = f_curr.c;
  ctx.channels = C;
  ctx.cells = static_cast<size_t>(f_curr.h) * f_curr.w;

  ctx.concat.resize(2 * C * ctx.cells);
  for (size_t i = 0; i < static_cast<size_t>(C) * ctx.cells; ++i) {
    ctx.concat[i] = f_prev.data[i];
    ctx.concat[C * ctx.cells + i] = f_curr.data[i];
  }
  const std::vector<double> deriv = estimate_double(params, f_prev, f_curr, ctx.dt);
  ctx.pred.resize(C * ctx.cells);
  ctx.target.resize(C * ctx.cells);
  for (size_t i = 0; i < ctx.pred.size(); ++i) {
    ctx.pred[i] = static_cast<double>(f_curr.data[i]) + ctx.horizon * deriv[i];
    ctx.target[i] = f_fut.data[i];
  }
  double dot = 0.0, np2 = 0.0, ng2 = 0.0;
  for (size_t i = 0; i < ctx.pred.size(); ++i) {
    dot += ctx.pred[i] * ctx.target[i];
    np2 += ctx.pred[i] * ctx.pred[i];
    ng2 += ctx.target[i] * ctx.target[i];
  }
  if (np2 == 0.0 || ng2 == 0.0) {
    throw std::domain_error("flow_loss: zero-norm feature");
  }
  ctx.dot = dot;
  ctx.np = std::sqrt(np2);
  ctx.ng = std::sqrt(ng2);
  ctx.loss = 1.0 - std::clamp(dot / (ctx.np * ctx.ng), -1.0, 1.0);
  return ctx;
}

}  // namespace

double flow_loss(const EstimatorParams& params, const TrainingPair& pair,
                 const Featurize& featurize) {
  return eval_loss(params, pair, featurize).loss;
}

FlowGradient flow_loss_gradient(const EstimatorParams& params,
                                const TrainingPair& pair,
                                const Featurize& featurize) {
  const LossContext ctx = eval_loss(params, pair, featurize);
  const int C = ctx.channels;
  const size_t cells = ctx.cells;

  // dL/dpred for L = 1 - <p,g> / (|p| |g|)
  std::vector<double> dpred(ctx.pred.size());
  const double inv = 1.0 / (ctx.np * ctx.ng);
  const double scale_p = ctx.dot / (ctx.np * ctx.np * ctx.np * ctx.ng);
  for (size_t i = 0; i < dpred.size(); ++i) {
    dpred[i] = -(ctx.target[i] * inv - ctx.pred[i] * scale_p);
  }

  FlowGradient g;
  g.loss = ctx.loss;
  g.d_weights.assign(static_cast<size_t>(C) * 2 * C, 0.0);
  g.d_bias.assign(C, 0.0);
  // pred = f_curr + horizon * (W x + b) / dt
  const double factor = ctx.horizon / ctx.dt;
  for (int c = 0; c < C; ++c) {
    double bias_acc = 0.0;
    for (size_t i = 0; i < cells; ++i) {
      bias_acc += dpred[c * cells + i];
    }
    g.d_bias[c] = bias_acc * factor;
    for (int j = 0; j < 2 * C; ++j) {
      double acc = 0.0;
      for (size_t i = 0; i < cells; ++i) {
        acc += dpred[c * cells + i] * ctx.concat[static_cast<size_t>(j) * cells + i];
      }
      g.d_weights[static_cast<size_t>(c) * 2 * C + j] = acc * factor;
    }
  }
  return g;
}

std::vector<TrainingPair> make_pairs(const std::vector<Frame>& frames,
                                     int k_min, int k_max, uint64_t seed) {
  if (k_min < 1 || k_max < k_min) {
    throw std::invalid_argument("make_pairs: invalid k range");
  }
  const int n = static_cast<int>(frames.size());
  if (n < k_max + 2) {
    throw std::invalid_argument("make_pairs: too few frames");
  }
  std::vector<TrainingPair> out;
  for (int i = 1; i + k_max < n; ++i) {
    Rng rng(hash_combine(seed, static_cast<uint64_t>(i)));
    const int k = static_cast<int>(rng.uniform_int(k_min, k_max));
    TrainingPair p;
    p.prev = frames[i - 1];
    p.curr = frames[i];
    p.future = frames[i + k];
    p.k = k;
    out.push_back(std::move(p));
  }
  return out;
}

double mean_loss(const EstimatorParams& params,
                 const std::vector<TrainingPair>& pairs,
                 const Featurize& featurize) {
  if (pairs.empty()) throw std::invalid_argument("mean_loss: no pairs");
  double acc = 0.0;
  for (const auto& p : pairs) acc += flow_loss(params, p, featurize);
  return acc / static_cast<double>(pairs.size());
}

EstimatorParams train(const EstimatorParams& theta0,
                      const std::vector<TrainingPair>& pairs,
                      const Featurize& featurize, double lr,
                      double weight_decay, int epochs, uint64_t seed,
                      TrainLog* log) {
  if (pairs.empty()) throw std::invalid_argument("train: no pairs");
  EstimatorParams theta = theta0;
  std::vector<size_t> order(pairs.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(hash_combine(seed, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
    }
    double loss_acc = 0.0;
    for (size_t idx : order) {
      const FlowGradient g = flow_loss_gradient(theta, pairs[idx], featurize);
      loss_acc += g.loss;
      for (size_t j = 0; j < theta.weights.size(); ++j) {
        theta.weights[j] -= lr * (g.d_weights[j] + weight_decay * theta.weights[j]);
      }
      for (size_t j = 0; j < theta.bias.size(); ++j) {
        theta.bias[j] -= lr * (g.d_bias[j] + weight_decay * theta.bias[j]);
      }
    }
    const double mean = loss_acc / static_cast<double>(pairs.size());
    if (!std::isfinite(mean) || mean > 2.0 + 1e-6) {
      throw std::runtime_error("train: loss diverged");
    }
    if (log) log->epoch_mean_loss.push_back(mean);
  }
  return theta;
}

}  // namespace ffsim

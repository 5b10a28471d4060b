#pragma once

#include <cstdint>
#include <vector>

namespace ffsim {

// Asynchronous delivery model between roadside and ego systems. Jitter models
// the unsynchronized vehicle/infrastructure clocks, not the link latency.
struct LatencyLink {
  double latency_ms = 0.0;
  double jitter_lo_ms = -30.0;
  double jitter_hi_ms = 30.0;
  double frame_period_ms = 100.0;
  uint64_t seed = 0;
};

// Latency of k frame periods replaces the current frame by the k-th previous
// one, clamped at the start of the sequence.
int64_t delivered_frame_index(int64_t current, double latency_ms,
                              double frame_period_ms);

// Deterministic per (seed, frame_index) uniform draw in [lo, hi] ms.
double pair_jitter(const LatencyLink& link, int64_t frame_index);

struct Delivery {
  std::vector<uint8_t> bytes;
  uint64_t t_send_us = 0;
  uint64_t t_recv_us = 0;
  uint64_t ab_bytes = 0;
};

Delivery transmit(const LatencyLink& link, std::vector<uint8_t> bytes,
                  uint64_t t_send_us);

}  // namespace ffsim

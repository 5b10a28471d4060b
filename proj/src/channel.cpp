#include "ffsim/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ffsim/codec.hpp"
#include "ffsim/common.hpp"

namespace ffsim {

int64_t delivered_frame_index(int64_t current, double latency_ms,
                              double frame_period_ms) {
  if (current < 0) throw std::invalid_argument("delivered_frame_index: current < 0");
  if (frame_period_ms <= 0.0) {
    throw std::invalid_argument("delivered_frame_index: period <= 0");
  }
  // round half-to-even
  const int64_t k =
      static_cast<int64_t>(std::nearbyint(latency_ms / frame_period_ms));
  return std::max<int64_t>(0, current - k);
}

double pair_jitter(const LatencyLink& link, int64_t frame_index) {
  if (link.jitter_lo_ms > link.jitter_hi_ms) {
    throw std::invalid_argument("pair_jitter: lo > hi");
  }
  if (link.jitter_lo_ms == link.jitter_hi_ms) return link.jitter_lo_ms;
  Rng rng(hash_combine(link.seed, static_cast<uint64_t>(frame_index)));
  return rng.uniform(link.jitter_lo_ms, link.jitter_hi_ms);
}

Delivery transmit(const LatencyLink& link, std::vector<uint8_t> bytes,
                  uint64_t t_send_us) {
  Delivery d;
  d.t_send_us = t_send_us;
  d.t_recv_us =
      t_send_us + static_cast<uint64_t>(std::llround(link.latency_ms * 1000.0));
  d.ab_bytes = bytes.size() > kPacketHeaderSize
                   ? bytes.size() - kPacketHeaderSize
                   : 0;
  d.bytes = std::move(bytes);
  return d;
}

}  // namespace ffsim

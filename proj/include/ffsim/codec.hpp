#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ffsim/flow.hpp"

namespace ffsim {

// Linear symmetric quantization with b-bit two's-complement codes packed
// MSB-first. scale = alpha / (2^(b-1) - 1) with alpha = max |value|.
struct QuantizedTensor {
  int c = 0, h = 0, w = 0;
  int bits = 6;
  float scale = 0.0f;
  std::vector<uint8_t> packed;  // channel-major row-major codes, MSB-first

  size_t num_codes() const { return static_cast<size_t>(c) * h * w; }
};

struct BitMask {
  int h = 0, w = 0;
  std::vector<uint8_t> bytes;  // row-major bits, MSB-first, zero-padded

  static BitMask zeros(int h, int w);
  bool get(int y, int x) const;
  void set(int y, int x, bool v);
  size_t byte_size() const { return bytes.size(); }
  int count_set() const;
};

QuantizedTensor quantize(const FeatureGrid& t, int bits);

// Throws on corrupt packing (nonzero trailing pad bits).
std::vector<float> dequantize(const QuantizedTensor& q);

// Patch-level change mask: bit (k,l) is 1 iff the summed absolute feature
// difference over the corresponding stride x stride patch exceeds threshold.
BitMask attention_mask(const FeatureGrid& f_prev, const FeatureGrid& f_curr,
                       int mask_h, int mask_w, double threshold);

FeatureGrid apply_mask(const FeatureGrid& deriv, const BitMask& mask);

// Average pooling over sx*sx spatial blocks and sc-channel groups.
FeatureGrid spatial_compress(const FeatureGrid& f, int sx, int sc);

// Nearest-neighbor spatial upsample, broadcast across channel groups.
FeatureGrid spatial_decompress(const FeatureGrid& f, int sx, int sc,
                               const GridConfig& target_grid);

struct PosePayload {
  float x = 0.f, y = 0.f, z = 0.f, yaw = 0.f;
};

struct EncodeOptions {
  int bits = 6;
  bool quantized = true;      // raw 32-bit floats when false
  bool include_deriv = true;  // base-only packets for no-prediction modes
  std::optional<BitMask> mask;  // derivative sparsification
};

struct EncodedPacket {
  std::vector<uint8_t> bytes;
  uint64_t ab_bytes = 0;  // accounted bytes: payload + mask, header excluded
};

inline constexpr size_t kPacketHeaderSize = 38;
inline constexpr uint8_t kPacketVersion = 1;
inline constexpr uint8_t kFlagQuantized = 0x01;
inline constexpr uint8_t kFlagMasked = 0x02;
inline constexpr uint8_t kFlagDeriv = 0x04;

EncodedPacket encode_packet(const FeatureFlow& flow, const PosePayload& pose,
                            const EncodeOptions& opts);

struct DecodedPacket {
  FeatureFlow flow;  // masked-out derivative regions restored as zeros
  PosePayload pose;
  uint8_t flags = 0;
  int bits = 0;
  int stride = 0;
  std::optional<BitMask> mask;
};

// Throws std::runtime_error on bad magic, truncation, or nonzero pad bits.
DecodedPacket decode_packet(std::span<const uint8_t> bytes,
                            const GridConfig* grid = nullptr);

enum class CostForm { Early, Late, MiddleFeature, MiddleFlow };

struct CostParams {
  uint64_t num_points = 0;
  uint64_t num_detections = 0;
  int c = 0, h = 0, w = 0;
  bool quantized = false;
  int bits = 32;
};

uint64_t transmission_cost(CostForm form, const CostParams& p);

}  // namespace ffsim

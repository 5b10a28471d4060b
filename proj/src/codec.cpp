#include "ffsim/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ffsim {

namespace {

class BitWriter {
 public:
  void put(uint32_t value, int nbits) {
    for (int i = nbits - 1; i >= 0; --i) {
      const uint8_t bit = (value >> i) & 1u;
      if (fill_ == 0) bytes_.push_back(0);
      bytes_.back() = static_cast<uint8_t>(bytes_.back() | (bit << (7 - fill_)));
      fill_ = (fill_ + 1) % 8;
    }
  }
  std::vector<uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<uint8_t> bytes_;
  int fill_ = 0;
};

class BitReader {
 public:
  BitReader(const uint8_t* data, size_t nbytes) : data_(data), nbits_(nbytes * 8) {}

  uint32_t get(int nbits) {
    uint32_t v = 0;
    for (int i = 0; i < nbits; ++i) {
      if (pos_ >= nbits_) throw std::runtime_error("bit stream truncated");
      const uint8_t byte = data_[pos_ / 8];
      v = (v << 1) | ((byte >> (7 - pos_ % 8)) & 1u);
      ++pos_;
    }
    return v;
  }

  void check_trailing_zero() const {
    for (size_t p = pos_; p < nbits_; ++p) {
      if ((data_[p / 8] >> (7 - p % 8)) & 1u) {
        throw std::runtime_error("nonzero trailing pad bits");
      }
    }
  }

 private:
  const uint8_t* data_;
  size_t nbits_;
  size_t pos_ = 0;
};

int32_t sign_extend(uint32_t v, int bits) {
  const uint32_t sign = 1u << (bits - 1);
  return static_cast<int32_t>((v ^ sign) - sign);
}

void check_bits(int bits) {
  if (bits < 2 || bits > 16) throw std::invalid_argument("bits out of [2,16]");
}

}  // namespace

BitMask BitMask::zeros(int h, int w) {
  BitMask m;
  m.h = h;
  m.w = w;
  m.bytes.assign((static_cast<size_t>(h) * w + 7) / 8, 0);
  return m;
}

bool BitMask::get(int y, int x) const {
  const size_t i = static_cast<size_t>(y) * w + x;
  return (bytes[i / 8] >> (7 - i % 8)) & 1u;
}

void BitMask::set(int y, int x, bool v) {
  const size_t i = static_cast<size_t>(y) * w + x;
  const uint8_t bit = static_cast<uint8_t>(1u << (7 - i % 8));
  if (v) {
    bytes[i / 8] = static_cast<uint8_t>(bytes[i / 8] | bit);
  } else {
    bytes[i / 8] = static_cast<uint8_t>(bytes[i / 8] & ~bit);
  }
}

int BitMask::count_set() const {
  int n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) n += get(y, x) ? 1 : 0;
  }
  return n;
}

QuantizedTensor quantize(const FeatureGrid& t, int bits) {
  check_bits(bits);
  double alpha = 0.0;
  for (float v : t.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("quantize: non-finite value");
    alpha = std::max(alpha, std::fabs(static_cast<double>(v)));
  }
  const int32_t qmax = (1 << (bits - 1)) - 1;
  QuantizedTensor q;
  q.c = t.c;
  q.h = t.h;
  q.w = t.w;
  q.bits = bits;
  q.scale = static_cast<float>(alpha / static_cast<double>(qmax));
  BitWriter bw;
  if (q.scale == 0.0f) {
    for (size_t i = 0; i < t.data.size(); ++i) bw.put(0, bits);
  } else {
    const double s = static_cast<double>(q.scale);
    for (float v : t.data) {
      const double clamped = std::clamp(static_cast<double>(v), -alpha, alpha);
      int32_t code = static_cast<int32_t>(std::nearbyint(clamped / s));
      code = std::clamp(code, -qmax, qmax);
      bw.put(static_cast<uint32_t>(code) & ((1u << bits) - 1u), bits);
    }
  }
  q.packed = bw.take();
  return q;
}

std::vector<float> dequantize(const QuantizedTensor& q) {
  check_bits(q.bits);
  const size_t n = q.num_codes();
  if (q.packed.size() != (n * q.bits + 7) / 8) {
    throw std::runtime_error("dequantize: packed size mismatch");
  }
  const int32_t qmax = (1 << (q.bits - 1)) - 1;
  BitReader br(q.packed.data(), q.packed.size());
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i) {
    const int32_t code = sign_extend(br.get(q.bits), q.bits);
    if (code < -qmax || code > qmax) {
      throw std::runtime_error("dequantize: code out of range");
    }
    out[i] = static_cast<float>(code) * q.scale;
  }
  br.check_trailing_zero();
  return out;
}

BitMask attention_mask(const FeatureGrid& f_prev, const FeatureGrid& f_curr,
                       int mask_h, int mask_w, double threshold) {
  if (!f_prev.same_dims(f_curr)) {
    throw std::invalid_argument("attention_mask: dimension mismatch");
  }
  if (mask_h <= 0 || mask_w <= 0 || f_curr.h % mask_h != 0 ||
      f_curr.w % mask_w != 0 || f_curr.h / mask_h != f_curr.w / mask_w) {
    throw std::invalid_argument("attention_mask: non-divisible dims");
  }
  const int stride = f_curr.h / mask_h;
  BitMask m = BitMask::zeros(mask_h, mask_w);
  for (int k = 0; k < mask_h; ++k) {
    for (int l = 0; l < mask_w; ++l) {
      double sum = 0.0;
      for (int c = 0; c < f_curr.c; ++c) {
        for (int py = 0; py < stride; ++py) {
          for (int px = 0; px < stride; ++px) {
            const int y = k * stride + py, x = l * stride + px;
            sum += std::fabs(static_cast<double>(f_curr.at(c, y, x)) -
                             f_prev.at(c, y, x));
          }
        }
      }
      if (sum > threshold) m.set(k, l, true);
    }
  }
  return m;
}

FeatureGrid apply_mask(const FeatureGrid& deriv, const BitMask& mask) {
  if (mask.h <= 0 || mask.w <= 0 || deriv.h % mask.h != 0 ||
      deriv.w % mask.w != 0 || deriv.h / mask.h != deriv.w / mask.w) {
    throw std::invalid_argument("apply_mask: dimension mismatch");
  }
  const int stride = deriv.h / mask.h;
  FeatureGrid out = deriv;
  for (int k = 0; k < mask.h; ++k) {
    for (int l = 0; l < mask.w; ++l) {
      if (mask.get(k, l)) continue;
      for (int c = 0; c < deriv.c; ++c) {
        for (int py = 0; py < stride; ++py) {
          for (int px = 0; px < stride; ++px) {
            out.at(c, k * stride + py, l * stride + px) = 0.0f;
          }
        }
      }
    }
  }
  return out;
}

FeatureGrid spatial_compress(const FeatureGrid& f, int sx, int sc) {
  if (sx < 1 || sc < 1 || f.h % sx != 0 || f.w % sx != 0 || f.c % sc != 0) {
    throw std::invalid_argument("spatial_compress: non-divisible dims");
  }
  FeatureGrid out;
  out.c = f.c / sc;
  out.h = f.h / sx;
  out.w = f.w / sx;
  out.grid = f.grid;
  out.grid.cell = f.grid.cell * sx;
  out.grid.channels = out.c;
  out.frame = f.frame;
  out.data.assign(static_cast<size_t>(out.c) * out.h * out.w, 0.0f);
  const double norm = 1.0 / (static_cast<double>(sx) * sx * sc);
  for (int oc = 0; oc < out.c; ++oc) {
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        double sum = 0.0;
        for (int dc = 0; dc < sc; ++dc) {
          for (int py = 0; py < sx; ++py) {
            for (int px = 0; px < sx; ++px) {
              sum += f.at(oc * sc + dc, oy * sx + py, ox * sx + px);
            }
          }
        }
        out.at(oc, oy, ox) = static_cast<float>(sum * norm);
      }
    }
  }
  return out;
}

FeatureGrid spatial_decompress(const FeatureGrid& f, int sx, int sc,
                               const GridConfig& target_grid) {
  if (sx < 1 || sc < 1) throw std::invalid_argument("spatial_decompress: bad factors");
  FeatureGrid out = FeatureGrid::zeros(target_grid);
  if (out.c != f.c * sc || out.h != f.h * sx || out.w != f.w * sx) {
    throw std::invalid_argument("spatial_decompress: inconsistent target dims");
  }
  out.frame = f.frame;
  for (int c = 0; c < out.c; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        out.at(c, y, x) = f.at(c / sc, y / sx, x / sx);
      }
    }
  }
  return out;
}

namespace {

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v & 0xff));
  b.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& b, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((u >> (8 * i)) & 0xff));
}

struct Cursor {
  std::span<const uint8_t> data;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > data.size()) throw std::runtime_error("packet truncated");
  }
  uint8_t u8() {
    need(1);
    return data[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    need(4);
    uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  std::vector<uint8_t> raw(size_t n) {
    need(n);
    std::vector<uint8_t> out(data.begin() + pos, data.begin() + pos + n);
    pos += n;
    return out;
  }
};

// Codes of the derivative tensor restricted to mask=1 patches, in row-major
// patch order, channel-major within a patch.
std::vector<size_t> masked_cell_order(int c, int h, int w, const BitMask& mask) {
  const int stride = h / mask.h;
  const size_t cells = static_cast<size_t>(h) * w;
  std::vector<size_t> order;
  for (int k = 0; k < mask.h; ++k) {
    for (int l = 0; l < mask.w; ++l) {
      if (!mask.get(k, l)) continue;
      for (int ch = 0; ch < c; ++ch) {
        for (int py = 0; py < stride; ++py) {
          for (int px = 0; px < stride; ++px) {
            order.push_back(static_cast<size_t>(ch) * cells +
                            static_cast<size_t>(k * stride + py) * w +
                            (l * stride + px));
          }
        }
      }
    }
  }
  return order;
}

}  // namespace

EncodedPacket encode_packet(const FeatureFlow& flow, const PosePayload& pose,
                            const EncodeOptions& opts) {
  const FeatureGrid& base = flow.base;
  if (base.c > 0xffff || base.h > 0xffff || base.w > 0xffff) {
    throw std::invalid_argument("encode_packet: dims exceed 16-bit fields");
  }
  if (opts.include_deriv && !flow.base.same_dims(flow.deriv)) {
    throw std::invalid_argument("encode_packet: base/deriv dimension mismatch");
  }
  if (opts.quantized) check_bits(opts.bits);
  int stride = 0;
  if (opts.mask) {
    if (!opts.include_deriv) {
      throw std::invalid_argument("encode_packet: mask without derivative");
    }
    if (base.h % opts.mask->h != 0 || base.w % opts.mask->w != 0 ||
        base.h / opts.mask->h != base.w / opts.mask->w) {
      throw std::invalid_argument("encode_packet: mask dims incompatible");
    }
    stride = base.h / opts.mask->h;
    if (stride > 0xff) throw std::invalid_argument("encode_packet: stride too large");
  }

  uint8_t flags = 0;
  if (opts.quantized) flags |= kFlagQuantized;
  if (opts.mask) flags |= kFlagMasked;
  if (opts.include_deriv) flags |= kFlagDeriv;

  std::vector<uint8_t> out;
  out.reserve(kPacketHeaderSize);
  out.insert(out.end(), {'F', 'F', 'L', 'W'});
  out.push_back(kPacketVersion);
  out.push_back(flags);
  put_u64(out, flow.t_ref_us);
  put_f32(out, pose.x);
  put_f32(out, pose.y);
  put_f32(out, pose.z);
  put_f32(out, pose.yaw);
  put_u16(out, static_cast<uint16_t>(base.c));
  put_u16(out, static_cast<uint16_t>(base.h));
  put_u16(out, static_cast<uint16_t>(base.w));
  out.push_back(static_cast<uint8_t>(opts.quantized ? opts.bits : 32));
  out.push_back(static_cast<uint8_t>(stride));

  uint64_t ab = 0;
  if (opts.mask) {
    out.insert(out.end(), opts.mask->bytes.begin(), opts.mask->bytes.end());
    ab += opts.mask->bytes.size();
  }

  // Base feature payload: scale + all codes (or raw floats).
  if (opts.quantized) {
    const QuantizedTensor q = quantize(base, opts.bits);
    put_f32(out, q.scale);
    out.insert(out.end(), q.packed.begin(), q.packed.end());
    ab += 4 + q.packed.size();
  } else {
    for (float v : base.data) put_f32(out, v);
    ab += 4 * base.data.size();
  }

  // Derivative payload: masked regions are omitted from the stream.
  if (opts.include_deriv) {
    const FeatureGrid masked =
        opts.mask ? apply_mask(flow.deriv, *opts.mask) : flow.deriv;
    if (opts.quantized) {
      const QuantizedTensor q = quantize(masked, opts.bits);
      put_f32(out, q.scale);
      ab += 4;
      if (opts.mask) {
        // Re-pack only the transmitted codes, preserving code values.
        const int32_t qmax = (1 << (opts.bits - 1)) - 1;
        BitWriter bw;
        for (size_t idx : masked_cell_order(base.c, base.h, base.w, *opts.mask)) {
          int32_t code = 0;
          if (q.scale != 0.0f) {
            code = static_cast<int32_t>(
                std::nearbyint(static_cast<double>(masked.data[idx]) /
                               static_cast<double>(q.scale)));
            code = std::clamp(code, -qmax, qmax);
          }
          bw.put(static_cast<uint32_t>(code) & ((1u << opts.bits) - 1u), opts.bits);
        }
        const std::vector<uint8_t> packed = bw.take();
        out.insert(out.end(), packed.begin(), packed.end());
        ab += packed.size();
      } else {
        out.insert(out.end(), q.packed.begin(), q.packed.end());
        ab += q.packed.size();
      }
    } else {
      if (opts.mask) {
        for (size_t idx : masked_cell_order(base.c, base.h, base.w, *opts.mask)) {
          put_f32(out, masked.data[idx]);
          ab += 4;
        }
      } else {
        for (float v : masked.data) put_f32(out, v);
        ab += 4 * masked.data.size();
      }
    }
  }

  return EncodedPacket{std::move(out), ab};
}

DecodedPacket decode_packet(std::span<const uint8_t> bytes,
                            const GridConfig* grid) {
  Cursor cur{bytes, 0};
  cur.need(4);
  if (std::memcmp(bytes.data(), "FFLW", 4) != 0) {
    throw std::runtime_error("decode_packet: bad magic");
  }
  cur.pos = 4;
  const uint8_t version = cur.u8();
  if (version != kPacketVersion) throw std::runtime_error("decode_packet: bad version");
  DecodedPacket pkt;
  pkt.flags = cur.u8();
  pkt.flow.t_ref_us = cur.u64();
  pkt.pose.x = cur.f32();
  pkt.pose.y = cur.f32();
  pkt.pose.z = cur.f32();
  pkt.pose.yaw = cur.f32();
  const int c = cur.u16(), h = cur.u16(), w = cur.u16();
  pkt.bits = cur.u8();
  pkt.stride = cur.u8();
  const bool quantized = pkt.flags & kFlagQuantized;
  const bool has_mask = pkt.flags & kFlagMasked;
  const bool has_deriv = pkt.flags & kFlagDeriv;
  const size_t n = static_cast<size_t>(c) * h * w;

  if (has_mask) {
    if (pkt.stride <= 0 || h % pkt.stride != 0 || w % pkt.stride != 0) {
      throw std::runtime_error("decode_packet: bad mask stride");
    }
    BitMask m = BitMask::zeros(h / pkt.stride, w / pkt.stride);
    m.bytes = cur.raw(m.bytes.size());
    pkt.mask = std::move(m);
  }

  auto make_grid = [&](std::vector<float> values) {
    FeatureGrid g;
    if (grid) {
      g = FeatureGrid::zeros(*grid);
      if (g.c != c || g.h != h || g.w != w) {
        throw std::runtime_error("decode_packet: grid config dims mismatch");
      }
    } else {
      g = FeatureGrid::zeros(c, h, w);
    }
    g.data = std::move(values);
    return g;
  };

  auto read_full_tensor = [&]() {
    std::vector<float> values(n);
    if (quantized) {
      QuantizedTensor q;
      q.c = c;
      q.h = h;
      q.w = w;
      q.bits = pkt.bits;
      q.scale = cur.f32();
      q.packed = cur.raw((n * pkt.bits + 7) / 8);
      values = dequantize(q);
    } else {
      for (size_t i = 0; i < n; ++i) values[i] = cur.f32();
    }
    return values;
  };

  pkt.flow.base = make_grid(read_full_tensor());

  if (has_deriv) {
    std::vector<float> dv(n, 0.0f);
    if (has_mask) {
      const std::vector<size_t> order = masked_cell_order(c, h, w, *pkt.mask);
      if (quantized) {
        const float scale = cur.f32();
        const std::vector<uint8_t> packed = cur.raw((order.size() * pkt.bits + 7) / 8);
        const int32_t qmax = (1 << (pkt.bits - 1)) - 1;
        BitReader br(packed.data(), packed.size());
        for (size_t idx : order) {
          const int32_t code = sign_extend(br.get(pkt.bits), pkt.bits);
          if (code < -qmax || code > qmax) {
            throw std::runtime_error("decode_packet: code out of range");
          }
          dv[idx] = static_cast<float>(code) * scale;
        }
        br.check_trailing_zero();
      } else {
        for (size_t idx : order) dv[idx] = cur.f32();
      }
    } else {
      dv = read_full_tensor();
    }
    pkt.flow.deriv = make_grid(std::move(dv));
  } else {
    pkt.flow.deriv = make_grid(std::vector<float>(n, 0.0f));
  }

  if (cur.pos != bytes.size()) {
    throw std::runtime_error("decode_packet: trailing bytes");
  }
  return pkt;
}

uint64_t transmission_cost(CostForm form, const CostParams& p) {
  switch (form) {
    case CostForm::Early:
      return 16ull * p.num_points;
    case CostForm::Late:
      return 32ull * p.num_detections;
    case CostForm::MiddleFeature:
      return 4ull * p.c * p.h * p.w;
    case CostForm::MiddleFlow: {
      const uint64_t elems = 2ull * p.c * p.h * p.w;
      if (!p.quantized) return elems * 4ull;
      return (elems * static_cast<uint64_t>(p.bits) + 7) / 8;
    }
  }
  throw std::invalid_argument("transmission_cost: bad form");
}

}  // namespace ffsim

#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "msbridge/errors.hpp"
#include "msbridge/model.hpp"

namespace msbridge {

/// CRC-32 (reflected, polynomial 0xEDB88320, init/final 0xFFFFFFFF).
inline uint32_t crc32(const unsigned char* data, size_t len, uint32_t seed = 0) {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline uint32_t crc32(const std::vector<unsigned char>& data) {
  return crc32(data.data(), data.size());
}

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', 'S', 'B', 'R', 'I', 'D', 'G', '1'};
constexpr uint32_t kCheckpointVersion = 1;

inline void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::vector<unsigned char>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<unsigned char>& out, float v) {
  uint32_t bits = 0;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

/// Bounds-checked little-endian reader.
struct ByteReader {
  const std::vector<unsigned char>& buf;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (buf.size() - pos < n) {
      throw ParseError(std::string("checkpoint truncated at byte ") + std::to_string(pos) +
                       ": need " + std::to_string(n) + " bytes for " + what + ", have " +
                       std::to_string(buf.size() - pos));
    }
  }

  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }

  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }

  float f32(const char* what) {
    const uint32_t bits = u32(what);
    float v = 0.0f;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

inline void flatten_params(const std::vector<const Tensor*>& tensors,
                           std::vector<unsigned char>& out) {
  uint64_t total = 0;
  for (const Tensor* t : tensors) total += static_cast<uint64_t>(t->numel());
  put_u64(out, total);
  for (const Tensor* t : tensors) {
    for (float v : t->data) put_f32(out, v);
  }
}

inline std::vector<const Tensor*> live_tensors(const VectorFieldModel& m) {
  std::vector<const Tensor*> out;
  for (const auto& layer : m.layers()) {
    out.push_back(&layer.w);
    out.push_back(&layer.b);
  }
  out.push_back(&m.embedding());
  return out;
}

inline std::vector<const Tensor*> ema_tensors(const VectorFieldModel& m) {
  std::vector<const Tensor*> out;
  for (const auto& layer : m.ema_layers()) {
    out.push_back(&layer.w);
    out.push_back(&layer.b);
  }
  out.push_back(&m.ema_embedding());
  return out;
}

inline std::vector<Tensor*> live_tensors(VectorFieldModel& m) {
  std::vector<Tensor*> out;
  for (auto& layer : m.layers()) {
    out.push_back(&layer.w);
    out.push_back(&layer.b);
  }
  out.push_back(&m.embedding());
  return out;
}

inline std::vector<Tensor*> ema_tensors(VectorFieldModel& m) {
  std::vector<Tensor*> out;
  for (auto& layer : m.ema_layers()) {
    out.push_back(&layer.w);
    out.push_back(&layer.b);
  }
  out.push_back(&m.ema_embedding());
  return out;
}

inline void read_array(ByteReader& r, const std::vector<Tensor*>& tensors, const char* what) {
  uint64_t expect = 0;
  for (const Tensor* t : tensors) expect += static_cast<uint64_t>(t->numel());
  const uint64_t declared = r.u64(what);
  if (declared != expect) {
    throw SchemaError(std::string("checkpoint ") + what + " length " + std::to_string(declared) +
                      " does not match topology (expected " + std::to_string(expect) + ")");
  }
  for (Tensor* t : tensors) {
    for (float& v : t->data) v = r.f32(what);
  }
}

}  // namespace detail

/// Serializes topology plus the live and EMA parameter arrays, with a
/// trailing CRC-32 over everything before it. Little-endian throughout.
inline std::vector<unsigned char> encode_checkpoint(const VectorFieldModel& m) {
  std::vector<unsigned char> out;
  out.insert(out.end(), detail::kCheckpointMagic, detail::kCheckpointMagic + 8);
  detail::put_u32(out, detail::kCheckpointVersion);
  detail::put_u32(out, static_cast<uint32_t>(m.data_dim()));
  detail::put_u32(out, static_cast<uint32_t>(m.num_domains()));
  detail::put_u32(out, static_cast<uint32_t>(m.time_dim()));
  detail::put_u32(out, static_cast<uint32_t>(m.domain_dim()));
  detail::put_f32(out, m.ema_rate());
  detail::put_f32(out, m.time_base());
  const std::vector<int> hidden = m.hidden_widths();
  detail::put_u32(out, static_cast<uint32_t>(hidden.size()));
  for (int h : hidden) detail::put_u32(out, static_cast<uint32_t>(h));
  detail::flatten_params(detail::live_tensors(m), out);
  detail::flatten_params(detail::ema_tensors(m), out);
  detail::put_u32(out, crc32(out));
  return out;
}

inline VectorFieldModel decode_checkpoint(const std::vector<unsigned char>& buf) {
  if (buf.size() < 8 || std::memcmp(buf.data(), detail::kCheckpointMagic, 8) != 0) {
    throw SchemaError("not a model checkpoint: bad magic tag");
  }

  // structural pass: locate every field without trusting any of them yet
  detail::ByteReader r{buf, 8};
  const uint32_t version = r.u32("version");
  if (version != detail::kCheckpointVersion) {
    throw SchemaError("unsupported checkpoint version " + std::to_string(version) +
                      " (this build reads version " +
                      std::to_string(detail::kCheckpointVersion) + ")");
  }
  const uint32_t data_dim = r.u32("data_dim");
  const uint32_t num_domains = r.u32("num_domains");
  const uint32_t time_dim = r.u32("time_dim");
  const uint32_t domain_dim = r.u32("domain_dim");
  const float ema_rate = r.f32("ema_rate");
  const float time_base = r.f32("time_base");
  const uint32_t n_hidden = r.u32("hidden layer count");
  if (data_dim < 1 || num_domains < 1 || domain_dim < 1 || n_hidden > 64) {
    throw SchemaError("checkpoint topology is implausible");
  }
  std::vector<int> hidden;
  hidden.reserve(n_hidden);
  for (uint32_t i = 0; i < n_hidden; ++i) {
    hidden.push_back(static_cast<int>(r.u32("hidden width")));
  }
  const size_t arrays_at = r.pos;
  auto skip_array = [&r, &buf](const char* what) {
    const uint64_t len = r.u64(what);
    if (len > buf.size() / 4) {
      throw ParseError(std::string("checkpoint truncated: declared ") + what + " of " +
                       std::to_string(len) + " values exceeds the file size");
    }
    r.need(static_cast<size_t>(len) * 4, what);
    r.pos += static_cast<size_t>(len) * 4;
  };
  skip_array("parameter array");
  skip_array("EMA parameter array");
  r.need(4, "checksum");
  const size_t crc_at = r.pos;
  if (buf.size() - crc_at > 4) {
    throw SchemaError("checkpoint has " + std::to_string(buf.size() - crc_at - 4) +
                      " unexpected bytes after the checksum");
  }

  // integrity gate: nothing is loaded from a corrupt stream
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(buf[crc_at + i]) << (8 * i);
  const uint32_t computed = crc32(buf.data(), crc_at);
  if (stored != computed) {
    char msg[128];
    std::snprintf(msg, sizeof(msg),
                  "checkpoint corrupt: checksum at byte %zu is %08x, computed %08x", crc_at,
                  stored, computed);
    throw ParseError(msg);
  }

  VectorFieldModel m = [&] {
    try {
      return VectorFieldModel(static_cast<int>(data_dim), static_cast<int>(num_domains), hidden,
                              /*seed=*/0, static_cast<int>(time_dim),
                              static_cast<int>(domain_dim), ema_rate, time_base);
    } catch (const ConfigError& e) {
      throw SchemaError(std::string("checkpoint topology invalid: ") + e.what());
    }
  }();
  r.pos = arrays_at;
  detail::read_array(r, detail::live_tensors(m), "parameter array");
  detail::read_array(r, detail::ema_tensors(m), "EMA parameter array");
  return m;
}

inline void save_checkpoint(const VectorFieldModel& m, const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = encode_checkpoint(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline VectorFieldModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return decode_checkpoint(buf);
}

}  // namespace msbridge

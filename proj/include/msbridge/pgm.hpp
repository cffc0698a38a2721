#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "msbridge/errors.hpp"
#include "msbridge/tensor.hpp"

namespace msbridge {

namespace detail {

/// Token scanner over a raw P5 byte buffer. Tracks the byte offset so
/// malformed files can be reported precisely.
struct PgmScanner {
  const std::vector<unsigned char>& buf;
  size_t pos = 0;

  bool eof() const { return pos >= buf.size(); }

  void skip_separators() {
    while (!eof()) {
      const unsigned char c = buf[pos];
      if (c == '#') {
        while (!eof() && buf[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f') {
        ++pos;
      } else {
        break;
      }
    }
  }

  long read_int(const char* what) {
    skip_separators();
    if (eof()) {
      throw ParseError(std::string("unexpected end of file at byte ") + std::to_string(pos) +
                       " while reading " + what);
    }
    if (buf[pos] < '0' || buf[pos] > '9') {
      throw ParseError(std::string("expected ") + what + " at byte " + std::to_string(pos));
    }
    long v = 0;
    while (!eof() && buf[pos] >= '0' && buf[pos] <= '9') {
      v = v * 10 + (buf[pos] - '0');
      if (v > 1'000'000'000L) throw ParseError(std::string(what) + " out of range at byte " +
                                               std::to_string(pos));
      ++pos;
    }
    return v;
  }
};

}  // namespace detail

/// Decodes a binary (P5) graymap from raw bytes into an image in [0,1].
/// Supports maxval 255 (one byte per pixel) and 65535 (two bytes,
/// big-endian). Bytes past the pixel payload are ignored.
inline Tensor decode_pgm(const std::vector<unsigned char>& buf) {
  detail::PgmScanner sc{buf};
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
    throw ParseError("not a binary PGM: expected magic 'P5' at byte 0");
  }
  sc.pos = 2;
  const long w = sc.read_int("width");
  const long h = sc.read_int("height");
  const long maxval = sc.read_int("maxval");
  if (w < 1 || h < 1) {
    throw ParseError("image dimensions must be positive (got " + std::to_string(w) + "x" +
                     std::to_string(h) + ")");
  }
  if (maxval != 255 && maxval != 65535) {
    throw SchemaError("unsupported maxval " + std::to_string(maxval) +
                      " (expected 255 or 65535)");
  }
  if (sc.eof()) {
    throw ParseError("unexpected end of file at byte " + std::to_string(sc.pos) +
                     " before pixel data");
  }
  const unsigned char sep = buf[sc.pos];
  if (!(sep == ' ' || sep == '\t' || sep == '\r' || sep == '\n')) {
    throw ParseError("expected single whitespace byte at byte " + std::to_string(sc.pos) +
                     " before pixel data");
  }
  ++sc.pos;

  const int bytes_per = maxval == 255 ? 1 : 2;
  const size_t need = static_cast<size_t>(w) * static_cast<size_t>(h) * bytes_per;
  if (buf.size() - sc.pos < need) {
    throw ParseError("truncated pixel data: need " + std::to_string(need) + " bytes at byte " +
                     std::to_string(sc.pos) + ", have " + std::to_string(buf.size() - sc.pos));
  }

  Tensor img = Tensor::zeros({static_cast<int>(h), static_cast<int>(w)});
  const float scale = 1.0f / static_cast<float>(maxval);
  size_t p = sc.pos;
  for (int64_t i = 0; i < img.numel(); ++i) {
    unsigned v = buf[p++];
    if (bytes_per == 2) v = (v << 8) | buf[p++];
    img.data[static_cast<size_t>(i)] = static_cast<float>(v) * scale;
  }
  return img;
}

inline std::vector<unsigned char> encode_pgm(const Tensor& img, int maxval = 255) {
  img.require_2d();
  if (maxval != 255 && maxval != 65535) {
    throw ConfigError("unsupported maxval " + std::to_string(maxval) + " (expected 255 or 65535)");
  }
  std::string header = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) +
                       "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<size_t>(img.numel()) * (maxval == 255 ? 1 : 2));
  for (int64_t i = 0; i < img.numel(); ++i) {
    float v = img.data[static_cast<size_t>(i)];
    if (!std::isfinite(v)) throw NumericError("encode_pgm: non-finite pixel value");
    v = std::min(std::max(v, 0.0f), 1.0f);
    const long q = std::lround(static_cast<double>(v) * maxval);
    if (maxval == 255) {
      out.push_back(static_cast<unsigned char>(q));
    } else {
      out.push_back(static_cast<unsigned char>((q >> 8) & 0xff));
      out.push_back(static_cast<unsigned char>(q & 0xff));
    }
  }
  return out;
}

inline Tensor load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  try {
    return decode_pgm(buf);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

inline void save_pgm(const Tensor& img, const std::filesystem::path& path, int maxval = 255) {
  const std::vector<unsigned char> bytes = encode_pgm(img, maxval);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace msbridge

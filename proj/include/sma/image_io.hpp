#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sma/core.hpp"
#include "sma/error.hpp"

namespace sma {

// ---------------------------------------------------------------------------
// Binary PPM (P6), 8-bit.
// ---------------------------------------------------------------------------
inline void write_ppm(const RasterImage& img, const std::string& path) {
  if (!img.valid()) throw Error(ErrorCode::IoError, "invalid image buffer");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

namespace detail {

inline int next_ppm_value(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header fields.
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
      continue;
    }
    break;
  }
  int value = 0;
  if (!(in >> value)) throw Error(ErrorCode::IoError, "bad PPM header in " + path);
  return value;
}

}  // namespace detail

inline RasterImage read_ppm(std::istream& in, const std::string& path) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') {
    throw Error(ErrorCode::IoError, "not a binary PPM (P6): " + path);
  }
  RasterImage img;
  img.width = detail::next_ppm_value(in, path);
  img.height = detail::next_ppm_value(in, path);
  const int maxval = detail::next_ppm_value(in, path);
  if (img.width <= 0 || img.height <= 0 || maxval != 255) {
    throw Error(ErrorCode::IoError, "unsupported PPM geometry in " + path);
  }
  in.get();  // single whitespace after maxval
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * RasterImage::kChannels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw Error(ErrorCode::IoError, "truncated PPM pixel data in " + path);
  }
  return img;
}

// ---------------------------------------------------------------------------
// PNG reader: 8-bit depth, color types 0 (gray), 2 (RGB) and 6 (RGBA, alpha
// dropped), non-interlaced. Enough for stored image corpora; everything the
// toolkit writes itself is PPM.
// ---------------------------------------------------------------------------
namespace detail {

inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& in,
                                              std::size_t expected,
                                              const std::string& path) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (inflateInit(&zs) != Z_OK) throw Error(ErrorCode::IoError, "inflateInit failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != expected) {
    throw Error(ErrorCode::IoError, "corrupt PNG image data in " + path);
  }
  return out;
}

inline std::uint8_t paeth(std::uint8_t a, std::uint8_t b, std::uint8_t c) {
  const int p = int(a) + int(b) - int(c);
  const int pa = std::abs(p - int(a));
  const int pb = std::abs(p - int(b));
  const int pc = std::abs(p - int(c));
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

inline RasterImage read_png(std::istream& in, const std::string& path) {
  static const std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::uint8_t sig[8];
  in.read(reinterpret_cast<char*>(sig), 8);
  if (in.gcount() != 8 || std::memcmp(sig, kSig, 8) != 0) {
    throw Error(ErrorCode::IoError, "not a PNG file: " + path);
  }
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int bit_depth = 0;
  int color_type = -1;
  std::vector<std::uint8_t> idat;
  bool done = false;
  while (!done) {
    std::uint8_t head[8];
    in.read(reinterpret_cast<char*>(head), 8);
    if (in.gcount() != 8) throw Error(ErrorCode::IoError, "truncated PNG: " + path);
    const std::uint32_t len = detail::read_be32(head);
    const std::string type(reinterpret_cast<char*>(head + 4), 4);
    std::vector<std::uint8_t> data(len);
    if (len) {
      in.read(reinterpret_cast<char*>(data.data()), len);
      if (in.gcount() != static_cast<std::streamsize>(len)) {
        throw Error(ErrorCode::IoError, "truncated PNG chunk in " + path);
      }
    }
    in.ignore(4);  // CRC
    if (type == "IHDR") {
      if (len != 13) throw Error(ErrorCode::IoError, "bad IHDR in " + path);
      width = detail::read_be32(data.data());
      height = detail::read_be32(data.data() + 4);
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) throw Error(ErrorCode::IoError, "interlaced PNG unsupported: " + path);
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data.begin(), data.end());
    } else if (type == "IEND") {
      done = true;
    }
  }
  if (width == 0 || height == 0 || bit_depth != 8 ||
      (color_type != 0 && color_type != 2 && color_type != 6)) {
    throw Error(ErrorCode::IoError, "unsupported PNG format in " + path +
                                        " (need 8-bit gray/RGB/RGBA, non-interlaced)");
  }
  const int src_channels = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
  const std::size_t stride = std::size_t(width) * src_channels;
  auto raw = detail::zlib_inflate(idat, (stride + 1) * height, path);

  std::vector<std::uint8_t> prev(stride, 0);
  std::vector<std::uint8_t> line(stride, 0);
  RasterImage img;
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.pixels.resize(std::size_t(width) * height * RasterImage::kChannels);
  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    for (std::size_t i = 0; i < stride; ++i) {
      const std::uint8_t left = i >= std::size_t(src_channels) ? line[i - src_channels] : 0;
      const std::uint8_t up = prev[i];
      const std::uint8_t up_left = i >= std::size_t(src_channels) ? prev[i - src_channels] : 0;
      std::uint8_t value = src[i];
      switch (filter) {
        case 0: break;
        case 1: value = std::uint8_t(value + left); break;
        case 2: value = std::uint8_t(value + up); break;
        case 3: value = std::uint8_t(value + ((int(left) + int(up)) >> 1)); break;
        case 4: value = std::uint8_t(value + detail::paeth(left, up, up_left)); break;
        default: throw Error(ErrorCode::IoError, "bad PNG filter byte in " + path);
      }
      line[i] = value;
    }
    for (std::uint32_t x = 0; x < width; ++x) {
      const std::uint8_t* px = line.data() + std::size_t(x) * src_channels;
      std::uint8_t* dst = img.pixels.data() + (std::size_t(y) * width + x) * 3;
      if (src_channels == 1) {
        dst[0] = dst[1] = dst[2] = px[0];
      } else {
        dst[0] = px[0];
        dst[1] = px[1];
        dst[2] = px[2];
      }
    }
    prev = line;
  }
  return img;
}

/// Dispatches on the file's magic bytes: PNG or binary PPM (P6).
inline RasterImage load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open image: " + path);
  const int first = in.peek();
  if (first == 0x89) return read_png(in, path);
  return read_ppm(in, path);
}

}  // namespace sma

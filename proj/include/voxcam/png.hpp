#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/explain.hpp"
#include "voxcam/volume.hpp"

// Minimal dependency-free PNG writer (8-bit RGB, zlib stream with stored
// deflate blocks) plus a slice-strip renderer for heatmaps: anatomy in gray,
// relevance color-coded yellow (instrumental) to red (more instrumental).

namespace voxcam {
namespace png {

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

inline std::uint32_t adler32(const std::uint8_t* data, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, crc32(body.data(), body.size()));
}

}  // namespace detail

// rgb: row-major, 3 bytes per pixel.
inline std::vector<std::uint8_t> encode_rgb(const std::vector<std::uint8_t>& rgb, int width,
                                            int height) {
  require(rgb.size() == static_cast<std::size_t>(width) * height * 3, Errc::internal,
          "rgb buffer size mismatch");
  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  detail::chunk(out, "IHDR", ihdr);

  // raw scanlines, filter byte 0 per row
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + width * 3));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const auto* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * 3);
  }

  // zlib stream of stored (uncompressed) deflate blocks
  std::vector<std::uint8_t> z{0x78, 0x01};
  std::size_t off = 0;
  while (off < raw.size()) {
    const std::size_t len = std::min<std::size_t>(65535, raw.size() - off);
    const bool final = off + len == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(len & 0xff));
    z.push_back(static_cast<std::uint8_t>(len >> 8));
    z.push_back(static_cast<std::uint8_t>(~len & 0xff));
    z.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + off, raw.begin() + off + len);
    off += len;
  }
  detail::put_be32(z, detail::adler32(raw.data(), raw.size()));
  detail::chunk(out, "IDAT", z);
  detail::chunk(out, "IEND", {});
  return out;
}

inline void write_rgb_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb,
                           int width, int height) {
  const auto bytes = encode_rgb(rgb, width, height);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::io_error, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Tiles every `step`-th axial slice horizontally. Anatomy renders as gray;
// relevance above `threshold` blends yellow -> red with increasing value.
inline std::vector<std::uint8_t> heatmap_slice_strip(const BrainVolume& anatomy,
                                                     const Heatmap3D& heat, int step,
                                                     float threshold, int* out_width,
                                                     int* out_height) {
  require(anatomy.dims == heat.dims, Errc::dim_mismatch, "anatomy/heatmap dims differ");
  require(step >= 1, Errc::config_error, "step must be >= 1");
  const int nx = anatomy.nx(), ny = anatomy.ny(), nz = anatomy.nz();
  const int n_slices = (nz + step - 1) / step;
  const int gap = 2;
  const int width = n_slices * nx + (n_slices - 1) * gap;
  const int height = ny;

  float lo = anatomy.data[0], hi = anatomy.data[0];
  for (float v : anatomy.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float range = hi > lo ? hi - lo : 1.0f;

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 0);
  for (int s = 0; s < n_slices; ++s) {
    const int z = s * step;
    const int x_off = s * (nx + gap);
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        // image row 0 at anatomical top (largest y)
        const std::size_t px =
            (static_cast<std::size_t>(ny - 1 - y) * width + x_off + x) * 3;
        const float a = (anatomy.at(x, y, z) - lo) / range;
        const auto gray = static_cast<std::uint8_t>(std::clamp(a, 0.0f, 1.0f) * 255.0f);
        std::uint8_t r = gray, gch = gray, b = gray;
        const float h = heat.at(x, y, z);
        if (h >= threshold && h > 0.0f) {
          const float t = std::clamp((h - threshold) / std::max(1e-6f, 1.0f - threshold),
                                     0.0f, 1.0f);
          r = 255;                                               // yellow -> red
          gch = static_cast<std::uint8_t>(255.0f * (1.0f - t));  // green fades out
          b = 0;
        }
        rgb[px] = r;
        rgb[px + 1] = gch;
        rgb[px + 2] = b;
      }
    }
  }
  *out_width = width;
  *out_height = height;
  return rgb;
}

inline void write_heatmap_strip(const std::filesystem::path& path, const BrainVolume& anatomy,
                                const Heatmap3D& heat, int step = 5, float threshold = 0.5f) {
  int w = 0, h = 0;
  const auto rgb = heatmap_slice_strip(anatomy, heat, step, threshold, &w, &h);
  write_rgb_file(path, rgb, w, h);
}

}  // namespace png
}  // namespace voxcam

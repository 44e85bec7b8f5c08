#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/volume.hpp"

// NIfTI-1 single-file (.nii) reader/writer. The 348-byte header is packed and
// unpacked field-by-field at the offsets fixed by the standard, so no struct
// layout assumptions are made. Files written here always carry a float32
// payload at vox_offset 352 with the affine in sform (sform_code = 1).

namespace voxcam {
namespace nifti {

// Accepted datatype codes.
inline constexpr std::int16_t kUint8 = 2;
inline constexpr std::int16_t kInt16 = 4;
inline constexpr std::int16_t kFloat32 = 16;
inline constexpr std::int16_t kFloat64 = 64;

namespace offsets {
inline constexpr std::size_t sizeof_hdr = 0;
inline constexpr std::size_t dim = 40;        // int16[8]
inline constexpr std::size_t datatype = 70;   // int16
inline constexpr std::size_t bitpix = 72;     // int16
inline constexpr std::size_t pixdim = 76;     // float[8]
inline constexpr std::size_t vox_offset = 108;
inline constexpr std::size_t scl_slope = 112;
inline constexpr std::size_t scl_inter = 116;
inline constexpr std::size_t descrip = 148;   // char[80]
inline constexpr std::size_t qform_code = 252;
inline constexpr std::size_t sform_code = 254;
inline constexpr std::size_t quatern_b = 256;
inline constexpr std::size_t quatern_c = 260;
inline constexpr std::size_t quatern_d = 264;
inline constexpr std::size_t qoffset_x = 268;
inline constexpr std::size_t qoffset_y = 272;
inline constexpr std::size_t qoffset_z = 276;
inline constexpr std::size_t srow_x = 280;    // float[4]
inline constexpr std::size_t srow_y = 296;
inline constexpr std::size_t srow_z = 312;
inline constexpr std::size_t magic = 344;     // char[4]
}  // namespace offsets

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kVoxOffset = 352;  // header + 4-byte extension pad

namespace detail {

template <typename T>
T field(std::span<const std::uint8_t> buf, std::size_t off, bool swapped) {
  T v = le::get<T>(buf, off);
  return swapped ? le::byteswap(v) : v;
}

inline Affine affine_from_quaternion(float b, float c, float d, float ox, float oy, float oz,
                                     double dx, double dy, double dz, float qfac_raw) {
  const double a2 = 1.0 - (double(b) * b + double(c) * c + double(d) * d);
  const double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
  const double qfac = qfac_raw < 0.0f ? -1.0 : 1.0;
  Affine out = Affine::identity();
  out.at(0, 0) = (a * a + b * b - c * c - d * d) * dx;
  out.at(0, 1) = (2.0 * b * c - 2.0 * a * d) * dy;
  out.at(0, 2) = (2.0 * b * d + 2.0 * a * c) * dz * qfac;
  out.at(1, 0) = (2.0 * b * c + 2.0 * a * d) * dx;
  out.at(1, 1) = (a * a + c * c - b * b - d * d) * dy;
  out.at(1, 2) = (2.0 * c * d - 2.0 * a * b) * dz * qfac;
  out.at(2, 0) = (2.0 * b * d - 2.0 * a * c) * dx;
  out.at(2, 1) = (2.0 * c * d + 2.0 * a * b) * dy;
  out.at(2, 2) = (a * a + d * d - b * b - c * c) * dz * qfac;
  out.at(0, 3) = ox;
  out.at(1, 3) = oy;
  out.at(2, 3) = oz;
  return out;
}

template <typename T>
void decode_payload(std::span<const std::uint8_t> raw, std::size_t n, bool swapped,
                    std::vector<float>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    if (swapped) v = le::byteswap(v);
    out[i] = static_cast<float>(v);
  }
}

}  // namespace detail

inline BrainVolume read(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= kVoxOffset, Errc::truncated_data,
          "stream shorter than 352 bytes");

  char magic[4];
  std::memcpy(magic, bytes.data() + offsets::magic, 4);
  const bool single = std::memcmp(magic, "n+1\0", 4) == 0;
  const bool pair = std::memcmp(magic, "ni1\0", 4) == 0;
  require(single || pair, Errc::bad_magic, "header magic is not n+1 or ni1");

  const std::int32_t hdr_native = le::get<std::int32_t>(bytes, offsets::sizeof_hdr);
  const bool swapped = hdr_native != 348;
  require(!swapped || le::byteswap(hdr_native) == 348, Errc::bad_magic,
          "sizeof_hdr is not 348 in either byte order");

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i)
    dim[i] = detail::field<std::int16_t>(bytes, offsets::dim + 2 * i, swapped);
  require(dim[0] == 3 || dim[0] == 4, Errc::dim_mismatch,
          "dim[0] = " + std::to_string(dim[0]) + ", expected 3 or 4");
  require(dim[0] == 3 || dim[4] <= 1, Errc::dim_mismatch,
          "multi-frame 4D volumes are not supported");
  require(dim[1] > 0 && dim[2] > 0 && dim[3] > 0, Errc::dim_mismatch,
          "spatial dims must be positive");
  const Dims3 dims{dim[1], dim[2], dim[3]};
  const std::size_t n = voxel_count(dims);

  const std::int16_t datatype = detail::field<std::int16_t>(bytes, offsets::datatype, swapped);
  std::size_t voxel_bytes = 0;
  switch (datatype) {
    case kUint8: voxel_bytes = 1; break;
    case kInt16: voxel_bytes = 2; break;
    case kFloat32: voxel_bytes = 4; break;
    case kFloat64: voxel_bytes = 8; break;
    default:
      raise(Errc::unsupported_datatype, "datatype code " + std::to_string(datatype));
  }

  float pixdim[8];
  for (int i = 0; i < 8; ++i)
    pixdim[i] = detail::field<float>(bytes, offsets::pixdim + 4 * i, swapped);
  std::array<double, 3> spacing{};
  for (int i = 0; i < 3; ++i) spacing[i] = pixdim[i + 1] > 0.0f ? pixdim[i + 1] : 1.0;

  // Affine precedence: sform, then qform, then diagonal pixdim.
  Affine affine;
  const std::int16_t sform = detail::field<std::int16_t>(bytes, offsets::sform_code, swapped);
  const std::int16_t qform = detail::field<std::int16_t>(bytes, offsets::qform_code, swapped);
  if (sform > 0) {
    affine = Affine::identity();
    for (int c = 0; c < 4; ++c) {
      affine.at(0, c) = detail::field<float>(bytes, offsets::srow_x + 4 * c, swapped);
      affine.at(1, c) = detail::field<float>(bytes, offsets::srow_y + 4 * c, swapped);
      affine.at(2, c) = detail::field<float>(bytes, offsets::srow_z + 4 * c, swapped);
    }
  } else if (qform > 0) {
    affine = detail::affine_from_quaternion(
        detail::field<float>(bytes, offsets::quatern_b, swapped),
        detail::field<float>(bytes, offsets::quatern_c, swapped),
        detail::field<float>(bytes, offsets::quatern_d, swapped),
        detail::field<float>(bytes, offsets::qoffset_x, swapped),
        detail::field<float>(bytes, offsets::qoffset_y, swapped),
        detail::field<float>(bytes, offsets::qoffset_z, swapped), spacing[0], spacing[1],
        spacing[2], pixdim[0]);
  } else {
    affine = Affine::diagonal(spacing[0], spacing[1], spacing[2]);
  }

  float vox_offset_f = detail::field<float>(bytes, offsets::vox_offset, swapped);
  std::size_t data_offset = vox_offset_f >= static_cast<float>(kHeaderSize)
                                ? static_cast<std::size_t>(vox_offset_f)
                                : kVoxOffset;
  require(bytes.size() >= data_offset + n * voxel_bytes, Errc::truncated_data,
          "payload shorter than dim product");
  const auto raw = bytes.subspan(data_offset, n * voxel_bytes);

  std::vector<float> values;
  switch (datatype) {
    case kUint8: detail::decode_payload<std::uint8_t>(raw, n, swapped, values); break;
    case kInt16: detail::decode_payload<std::int16_t>(raw, n, swapped, values); break;
    case kFloat32: detail::decode_payload<float>(raw, n, swapped, values); break;
    case kFloat64: detail::decode_payload<double>(raw, n, swapped, values); break;
    default: raise(Errc::internal, "unreachable");
  }

  const float slope = detail::field<float>(bytes, offsets::scl_slope, swapped);
  const float inter = detail::field<float>(bytes, offsets::scl_inter, swapped);
  if (slope != 0.0f && !(slope == 1.0f && inter == 0.0f)) {
    for (auto& v : values) v = slope * v + inter;
  }

  return BrainVolume(dims, spacing, affine, std::move(values));
}

inline std::vector<std::uint8_t> write(const BrainVolume& v) {
  v.validate();
  std::vector<std::uint8_t> out(kVoxOffset, 0);
  le::put<std::int32_t>(out, offsets::sizeof_hdr, 348);
  out[38] = 'r';  // regular, conventional
  le::put<std::int16_t>(out, offsets::dim + 0, 3);
  le::put<std::int16_t>(out, offsets::dim + 2, static_cast<std::int16_t>(v.dims[0]));
  le::put<std::int16_t>(out, offsets::dim + 4, static_cast<std::int16_t>(v.dims[1]));
  le::put<std::int16_t>(out, offsets::dim + 6, static_cast<std::int16_t>(v.dims[2]));
  for (int i = 4; i < 8; ++i) le::put<std::int16_t>(out, offsets::dim + 2 * i, 1);
  le::put<std::int16_t>(out, offsets::datatype, kFloat32);
  le::put<std::int16_t>(out, offsets::bitpix, 32);
  le::put<float>(out, offsets::pixdim + 0, 1.0f);
  for (int i = 0; i < 3; ++i)
    le::put<float>(out, offsets::pixdim + 4 * (i + 1), static_cast<float>(v.spacing[i]));
  le::put<float>(out, offsets::vox_offset, static_cast<float>(kVoxOffset));
  le::put<float>(out, offsets::scl_slope, 0.0f);  // 0 = no scaling
  le::put<float>(out, offsets::scl_inter, 0.0f);
  const char descrip[] = "voxcam";
  std::memcpy(out.data() + offsets::descrip, descrip, sizeof(descrip));
  le::put<std::int16_t>(out, offsets::qform_code, 0);
  le::put<std::int16_t>(out, offsets::sform_code, 1);
  for (int c = 0; c < 4; ++c) {
    le::put<float>(out, offsets::srow_x + 4 * c, static_cast<float>(v.affine.at(0, c)));
    le::put<float>(out, offsets::srow_y + 4 * c, static_cast<float>(v.affine.at(1, c)));
    le::put<float>(out, offsets::srow_z + 4 * c, static_cast<float>(v.affine.at(2, c)));
  }
  std::memcpy(out.data() + offsets::magic, "n+1\0", 4);

  const std::size_t n = v.size();
  out.resize(kVoxOffset + n * 4);
  std::memcpy(out.data() + kVoxOffset, v.data.data(), n * 4);
  return out;
}

inline BrainVolume read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_error, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return read(bytes);
}

inline void write_file(const std::filesystem::path& path, const BrainVolume& v) {
  const auto bytes = write(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::io_error, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  require(out.good(), Errc::io_error, "short write to " + path.string());
}

}  // namespace nifti
}  // namespace voxcam

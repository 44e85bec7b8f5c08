#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "voxcam/core.hpp"

namespace voxcam {

// 4x4 voxel-index -> world-mm transform, row-major.
struct Affine {
  std::array<double, 16> m{};

  static Affine identity() {
    Affine a;
    a.m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    return a;
  }

  static Affine diagonal(double dx, double dy, double dz) {
    Affine a = identity();
    a.m[0] = dx;
    a.m[5] = dy;
    a.m[10] = dz;
    return a;
  }

  double at(int r, int c) const { return m[r * 4 + c]; }
  double& at(int r, int c) { return m[r * 4 + c]; }

  bool last_row_is_affine() const {
    return m[12] == 0.0 && m[13] == 0.0 && m[14] == 0.0 && m[15] == 1.0;
  }

  std::array<double, 3> apply(double x, double y, double z) const {
    return {m[0] * x + m[1] * y + m[2] * z + m[3],
            m[4] * x + m[5] * y + m[6] * z + m[7],
            m[8] * x + m[9] * y + m[10] * z + m[11]};
  }

  // Gauss-Jordan inverse; affines here are small and well-conditioned.
  Affine inverse() const {
    std::array<double, 32> a{};
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) a[r * 8 + c] = m[r * 4 + c];
      a[r * 8 + 4 + r] = 1.0;
    }
    for (int col = 0; col < 4; ++col) {
      int pivot = col;
      for (int r = col + 1; r < 4; ++r) {
        if (std::abs(a[r * 8 + col]) > std::abs(a[pivot * 8 + col])) pivot = r;
      }
      require(std::abs(a[pivot * 8 + col]) > 1e-12, Errc::internal, "singular affine");
      if (pivot != col) {
        for (int c = 0; c < 8; ++c) std::swap(a[col * 8 + c], a[pivot * 8 + c]);
      }
      const double inv = 1.0 / a[col * 8 + col];
      for (int c = 0; c < 8; ++c) a[col * 8 + c] *= inv;
      for (int r = 0; r < 4; ++r) {
        if (r == col) continue;
        const double f = a[r * 8 + col];
        if (f == 0.0) continue;
        for (int c = 0; c < 8; ++c) a[r * 8 + c] -= f * a[col * 8 + c];
      }
    }
    Affine out;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) out.m[r * 4 + c] = a[r * 8 + 4 + c];
    return out;
  }

  bool operator==(const Affine& o) const { return m == o.m; }
};

using Dims3 = std::array<int, 3>;

inline std::size_t voxel_count(const Dims3& d) {
  return static_cast<std::size_t>(d[0]) * static_cast<std::size_t>(d[1]) *
         static_cast<std::size_t>(d[2]);
}

// A 3D scalar grid with voxel spacing and a voxel-to-world affine.
// Data is stored x-fastest: index(x,y,z) = x + nx*(y + ny*z).
struct BrainVolume {
  Dims3 dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Affine affine = Affine::identity();
  std::vector<float> data;

  BrainVolume() = default;
  BrainVolume(Dims3 d, std::array<double, 3> sp, Affine a, std::vector<float> values)
      : dims(d), spacing(sp), affine(a), data(std::move(values)) {
    validate();
  }

  static BrainVolume zeros(Dims3 d, std::array<double, 3> sp = {1, 1, 1},
                           Affine a = Affine::identity()) {
    return BrainVolume(d, sp, a, std::vector<float>(voxel_count(d), 0.0f));
  }

  int nx() const { return dims[0]; }
  int ny() const { return dims[1]; }
  int nz() const { return dims[2]; }
  std::size_t size() const { return data.size(); }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }

  void validate() const {
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, Errc::dim_mismatch,
            "volume dims must be positive");
    require(data.size() == voxel_count(dims), Errc::dim_mismatch,
            "data length != nx*ny*nz");
    require(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0, Errc::dim_mismatch,
            "voxel spacing must be positive");
    require(affine.last_row_is_affine(), Errc::dim_mismatch,
            "affine last row must be (0,0,0,1)");
  }
};

// Binary in-brain mask; at least one voxel must be set.
struct BrainMask {
  Dims3 dims{0, 0, 0};
  std::vector<std::uint8_t> data;

  BrainMask() = default;
  BrainMask(Dims3 d, std::vector<std::uint8_t> values) : dims(d), data(std::move(values)) {
    validate();
  }

  static BrainMask from_volume(const BrainVolume& v) {
    std::vector<std::uint8_t> bits(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) bits[i] = v.data[i] != 0.0f ? 1 : 0;
    return BrainMask(v.dims, std::move(bits));
  }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }
  bool at(int x, int y, int z) const { return data[index(x, y, z)] != 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : data) n += b != 0;
    return n;
  }

  void validate() const {
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, Errc::dim_mismatch,
            "mask dims must be positive");
    require(data.size() == voxel_count(dims), Errc::dim_mismatch,
            "mask length != nx*ny*nz");
    require(count() > 0, Errc::zero_mask, "mask has no nonzero voxel");
    for (auto b : data)
      require(b == 0 || b == 1, Errc::dim_mismatch, "mask values must be 0 or 1");
  }
};

// Zeroes voxels outside the mask; pure function.
inline BrainVolume apply_mask(const BrainVolume& v, const BrainMask& m) {
  require(v.dims == m.dims, Errc::dim_mismatch, "volume/mask dims differ");
  BrainVolume out = v;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (!m.data[i]) out.data[i] = 0.0f;
  }
  return out;
}

struct RegionLabel {
  std::string hemisphere;
  std::string region;
  bool operator==(const RegionLabel& o) const = default;
};

// Integer-labelled parcellation sharing a volume grid. Label 0 is background.
struct AtlasVolume {
  Dims3 dims{0, 0, 0};
  Affine affine = Affine::identity();
  std::vector<std::int32_t> labels;
  std::map<std::int32_t, RegionLabel> label_table;

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }
  std::int32_t at(int x, int y, int z) const { return labels[index(x, y, z)]; }

  const RegionLabel& lookup(std::int32_t label) const {
    auto it = label_table.find(label);
    require(it != label_table.end(), Errc::unknown_label_in_volume,
            "label " + std::to_string(label) + " not in table");
    return it->second;
  }

  void validate() const {
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, Errc::dim_mismatch,
            "atlas dims must be positive");
    require(labels.size() == voxel_count(dims), Errc::dim_mismatch,
            "atlas length != nx*ny*nz");
    for (auto l : labels) {
      if (l != 0) {
        require(label_table.count(l) != 0, Errc::unknown_label_in_volume,
                "volume label " + std::to_string(l) + " missing from table");
      }
    }
  }
};

}  // namespace voxcam

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/dataset.hpp"
#include "voxcam/volume.hpp"

// Deterministic synthetic two-class dataset with known discriminative regions:
// each subject is a smoothed random field inside an ellipsoidal brain mask,
// plus its class's spherical blobs, plus i.i.d. voxel noise. Backgrounds are
// paired across classes (same background stream per subject index), so the
// class-conditional difference is supported exactly on the blob templates.

namespace voxcam {

struct BlobSpec {
  std::array<double, 3> center{0, 0, 0};  // voxel coordinates
  double radius = 4.0;                    // voxels; membership is distance <= radius
  float amplitude = 3.0f;
};

struct PhantomConfig {
  int n_per_class = 40;
  Dims3 dims{60, 73, 60};
  std::array<double, 3> mask_semi_axes{22.0, 27.0, 22.0};
  std::vector<BlobSpec> class_blobs[2];
  double background_smooth_sigma = 2.0;  // gaussian blur sigma in voxels
  double noise_sigma = 1.0;              // relative to unit background sigma
  double edge_taper_voxels = 4.0;        // field fades to zero near the mask rim
  double amplitude_jitter_sigma = 0.0;   // per-subject, per-blob amplitude spread
  std::uint64_t seed = 7;
  std::array<double, 3> spacing{3.0, 3.0, 3.0};

  // Default blobs are class-asymmetric in appearance (broad faint vs compact
  // bright), so class evidence is carried by what the signal looks like, not
  // only by where it sits. Sizes keep the top-5% threshold satisfiable: the
  // 2-voxel-dilated blob must be able to hold half of the ~2700 thresholded
  // voxels of the default mask.
  static PhantomConfig defaults() {
    PhantomConfig cfg;
    cfg.class_blobs[0].push_back({{19.0, 36.0, 30.0}, 10.0, 1.2f});
    cfg.class_blobs[1].push_back({{40.0, 36.0, 30.0}, 8.0, 5.0f});
    return cfg;
  }

  void validate() const {
    require(n_per_class >= 1, Errc::config_error, "n_per_class must be >= 1");
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, Errc::config_error, "bad dims");
    for (double a : mask_semi_axes)
      require(a > 0.0, Errc::config_error, "mask semi axes must be positive");
    require(edge_taper_voxels >= 0.0, Errc::config_error, "edge taper must be >= 0");
    for (int c = 0; c < 2; ++c)
      for (const auto& b : class_blobs[c]) {
        require(b.radius > 0.0, Errc::config_error, "blob radius must be positive");
        require(b.amplitude > 0.0f, Errc::config_error, "blob amplitude must be positive");
      }
    require(background_smooth_sigma >= 0.0 && noise_sigma >= 0.0, Errc::config_error,
            "sigmas must be >= 0");
    require(amplitude_jitter_sigma >= 0.0, Errc::config_error, "jitter must be >= 0");
  }
};

struct PhantomTruth {
  BrainMask brain;
  std::array<std::vector<std::uint8_t>, 2> blob_masks;  // per class, brain-grid sized
  Dims3 dims{0, 0, 0};
};

namespace detail {

inline BrainMask ellipsoid_mask(const Dims3& dims, const std::array<double, 3>& semi) {
  std::vector<std::uint8_t> bits(voxel_count(dims), 0);
  const double cx = (dims[0] - 1) / 2.0, cy = (dims[1] - 1) / 2.0, cz = (dims[2] - 1) / 2.0;
  std::size_t i = 0;
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x, ++i) {
        const double dx = (x - cx) / semi[0];
        const double dy = (y - cy) / semi[1];
        const double dz = (z - cz) / semi[2];
        bits[i] = dx * dx + dy * dy + dz * dz <= 1.0 ? 1 : 0;
      }
  return BrainMask(dims, std::move(bits));
}

inline std::vector<std::uint8_t> ball_mask(const Dims3& dims, const BlobSpec& blob) {
  std::vector<std::uint8_t> bits(voxel_count(dims), 0);
  const double r2 = blob.radius * blob.radius;
  std::size_t i = 0;
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x, ++i) {
        const double dx = x - blob.center[0];
        const double dy = y - blob.center[1];
        const double dz = z - blob.center[2];
        bits[i] = dx * dx + dy * dy + dz * dz <= r2 ? 1 : 0;
      }
  return bits;
}

// Separable zero-padded gaussian blur, kernel radius 3*sigma.
inline void gaussian_blur3d(std::vector<float>& data, const Dims3& dims, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= ksum;

  const int nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<float> tmp(data.size());
  auto idx = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) +
                                           static_cast<std::size_t>(ny) * z);
  };
  const std::array<int, 3> extent{nx, ny, nz};
  for (int axis = 0; axis < 3; ++axis) {
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          double acc = 0.0;
          const std::array<int, 3> p{x, y, z};
          for (int o = -radius; o <= radius; ++o) {
            std::array<int, 3> q = p;
            q[axis] += o;
            if (q[axis] < 0 || q[axis] >= extent[axis]) continue;  // zero padding
            acc += kernel[o + radius] * data[idx(q[0], q[1], q[2])];
          }
          tmp[idx(x, y, z)] = static_cast<float>(acc);
        }
    data.swap(tmp);
  }
}

}  // namespace detail

// Euclidean-ball morphological dilation of a binary mask.
inline std::vector<std::uint8_t> dilate_mask(const std::vector<std::uint8_t>& mask,
                                             const Dims3& dims, int radius) {
  require(mask.size() == voxel_count(dims), Errc::dim_mismatch, "mask length mismatch");
  if (radius <= 0) return mask;
  std::vector<std::array<int, 3>> offsets;
  for (int dz = -radius; dz <= radius; ++dz)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy + dz * dz <= radius * radius) offsets.push_back({dx, dy, dz});

  const int nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<std::uint8_t> out(mask.size(), 0);
  std::size_t i = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++i) {
        if (!mask[i]) continue;
        for (const auto& o : offsets) {
          const int xx = x + o[0], yy = y + o[1], zz = z + o[2];
          if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
          out[static_cast<std::size_t>(xx) +
              static_cast<std::size_t>(nx) * (static_cast<std::size_t>(yy) +
                                              static_cast<std::size_t>(ny) * zz)] = 1;
        }
      }
  return out;
}

namespace detail {

// Per-voxel fade factor: 0 outside the mask, ramping to 1 at taper_width
// voxels from the rim. Keeps the boundary from being a step edge that
// dominates learned convolution responses.
inline std::vector<float> edge_taper_weights(const BrainMask& mask, double taper_width) {
  std::vector<float> w(mask.data.size(), 0.0f);
  if (taper_width <= 0.0) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = mask.data[i] ? 1.0f : 0.0f;
    return w;
  }
  const int R = static_cast<int>(std::ceil(taper_width));
  std::vector<std::array<int, 3>> offsets;
  for (int dz = -R; dz <= R; ++dz)
    for (int dy = -R; dy <= R; ++dy)
      for (int dx = -R; dx <= R; ++dx)
        if (dx || dy || dz) offsets.push_back({dx, dy, dz});
  std::sort(offsets.begin(), offsets.end(), [](const auto& a, const auto& b) {
    const int la = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
    const int lb = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
    return la < lb;
  });
  const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
  std::size_t i = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++i) {
        if (!mask.data[i]) continue;
        double d2min = taper_width * taper_width;
        for (const auto& o : offsets) {
          const double d2 = o[0] * o[0] + o[1] * o[1] + o[2] * o[2];
          if (d2 >= d2min) break;  // offsets sorted by length
          const int xx = x + o[0], yy = y + o[1], zz = z + o[2];
          const bool outside = xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz ||
                               !mask.data[mask.index(xx, yy, zz)];
          if (outside) d2min = d2;
        }
        w[i] = static_cast<float>(std::min(1.0, std::sqrt(d2min) / taper_width));
      }
  return w;
}

}  // namespace detail

inline std::pair<Dataset, PhantomTruth> generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  PhantomTruth truth;
  truth.dims = cfg.dims;
  truth.brain = detail::ellipsoid_mask(cfg.dims, cfg.mask_semi_axes);
  const std::vector<float> taper =
      detail::edge_taper_weights(truth.brain, cfg.edge_taper_voxels);

  // Expected signal field per class; the class truth mask marks voxels where
  // that class's expected intensity exceeds the other's. With one blob per
  // class this is just the blob's ball; with shared blob sites of different
  // amplitudes it is the site this class dominates.
  std::array<std::vector<float>, 2> expected{};
  for (int c = 0; c < 2; ++c) {
    expected[c].assign(voxel_count(cfg.dims), 0.0f);
    for (const auto& blob : cfg.class_blobs[c]) {
      const auto ball = detail::ball_mask(cfg.dims, blob);
      for (std::size_t i = 0; i < ball.size(); ++i) {
        if (!ball[i]) continue;
        require(truth.brain.data[i] != 0, Errc::blob_outside_mask,
                "class " + std::to_string(c) + " blob leaves the brain mask");
        expected[c][i] += blob.amplitude;
      }
    }
  }
  for (int c = 0; c < 2; ++c) {
    truth.blob_masks[c].assign(voxel_count(cfg.dims), 0);
    for (std::size_t i = 0; i < expected[c].size(); ++i)
      truth.blob_masks[c][i] = expected[c][i] > expected[1 - c][i] ? 1 : 0;
  }

  const Affine affine =
      Affine::diagonal(cfg.spacing[0], cfg.spacing[1], cfg.spacing[2]);
  Dataset ds;
  ds.mask = truth.brain;
  const std::size_t n_vox = voxel_count(cfg.dims);

  for (int subject = 0; subject < cfg.n_per_class; ++subject) {
    // One background field per subject index, shared by both classes, so the
    // class difference is exactly the blob template.
    std::vector<float> background(n_vox);
    Rng bg_rng(mix_seed(cfg.seed, 0xb6'0000 + static_cast<std::uint64_t>(subject)));
    for (auto& v : background) v = static_cast<float>(bg_rng.normal());
    detail::gaussian_blur3d(background, cfg.dims, cfg.background_smooth_sigma);
    // normalize the in-mask field to mean 0, sigma 1
    double sum = 0.0, sumsq = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < n_vox; ++i) {
      if (!truth.brain.data[i]) continue;
      sum += background[i];
      sumsq += static_cast<double>(background[i]) * background[i];
      ++m;
    }
    const double mean = sum / static_cast<double>(m);
    const double sd = std::sqrt(std::max(1e-12, sumsq / static_cast<double>(m) - mean * mean));
    for (std::size_t i = 0; i < n_vox; ++i)
      background[i] = static_cast<float>((background[i] - mean) / sd);

    for (int c = 0; c < 2; ++c) {
      BrainVolume vol(cfg.dims, cfg.spacing, affine, background);
      for (std::size_t i = 0; i < n_vox; ++i) vol.data[i] *= taper[i];
      Rng jitter_rng(mix_seed(cfg.seed, 0x4a'0000 + static_cast<std::uint64_t>(subject) * 2 +
                                            static_cast<std::uint64_t>(c)));
      for (const auto& blob : cfg.class_blobs[c]) {
        float amp = blob.amplitude;
        if (cfg.amplitude_jitter_sigma > 0.0) {
          amp += static_cast<float>(jitter_rng.normal() * cfg.amplitude_jitter_sigma);
          amp = std::max(amp, 0.1f * blob.amplitude);  // amplitudes stay positive
        }
        const auto ball = detail::ball_mask(cfg.dims, blob);
        for (std::size_t i = 0; i < n_vox; ++i)
          if (ball[i]) vol.data[i] += amp;
      }
      if (cfg.noise_sigma > 0.0) {
        Rng noise_rng(mix_seed(cfg.seed, 0x4e'0000 + static_cast<std::uint64_t>(subject) * 2 +
                                             static_cast<std::uint64_t>(c)));
        for (std::size_t i = 0; i < n_vox; ++i) {
          if (truth.brain.data[i])
            vol.data[i] += static_cast<float>(noise_rng.normal() * cfg.noise_sigma) * taper[i];
        }
      }
      for (std::size_t i = 0; i < n_vox; ++i)
        if (!truth.brain.data[i]) vol.data[i] = 0.0f;

      Subject s;
      s.volume = std::move(vol);
      s.label = c;
      char id[32];
      std::snprintf(id, sizeof(id), "c%d_s%02d", c, subject);
      s.id = id;
      ds.items.push_back(std::move(s));
    }
  }
  ds.validate();
  return {std::move(ds), std::move(truth)};
}

// Fraction of heatmap-mask voxels that fall inside the truth mask dilated by
// `dilation` voxels.
inline double localization_score(const std::vector<std::uint8_t>& heat_mask,
                                 const std::vector<std::uint8_t>& truth_mask, const Dims3& dims,
                                 int dilation) {
  require(heat_mask.size() == voxel_count(dims) && truth_mask.size() == voxel_count(dims),
          Errc::dim_mismatch, "mask sizes do not match dims");
  const auto dilated = dilate_mask(truth_mask, dims, dilation);
  std::size_t selected = 0, hits = 0;
  for (std::size_t i = 0; i < heat_mask.size(); ++i) {
    if (!heat_mask[i]) continue;
    ++selected;
    hits += dilated[i] != 0;
  }
  require(selected > 0, Errc::empty_heatmap, "heatmap mask is empty");
  return static_cast<double>(hits) / static_cast<double>(selected);
}

// Synthetic octant parcellation of a brain mask: hemisphere by x, region by
// y/z quadrant. Gives region reports something meaningful to count on phantom
// data.
inline AtlasVolume synthetic_atlas(const BrainMask& brain, const Affine& affine) {
  AtlasVolume atlas;
  atlas.dims = brain.dims;
  atlas.affine = affine;
  atlas.labels.assign(brain.data.size(), 0);
  const int nx = brain.dims[0], ny = brain.dims[1], nz = brain.dims[2];
  std::size_t i = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++i) {
        if (!brain.data[i]) continue;
        const int hemi = x < nx / 2 ? 0 : 1;           // 0 = Left
        const int anterior = y >= ny / 2 ? 1 : 0;      // larger y = anterior
        const int superior = z >= nz / 2 ? 1 : 0;      // larger z = superior
        atlas.labels[i] = 1 + hemi * 4 + anterior * 2 + superior;
      }
  const char* names[4] = {"Posterior Inferior", "Posterior Superior", "Anterior Inferior",
                          "Anterior Superior"};
  for (int hemi = 0; hemi < 2; ++hemi)
    for (int q = 0; q < 4; ++q)
      atlas.label_table[1 + hemi * 4 + q] = RegionLabel{hemi == 0 ? "Left" : "Right", names[q]};
  atlas.validate();
  return atlas;
}

}  // namespace voxcam

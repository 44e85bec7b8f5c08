#pragma once

#include <cmath>
#include <string>

#include "voxcam/core.hpp"
#include "voxcam/dataset.hpp"
#include "voxcam/volume.hpp"

// The two training-time augmentations: additive Gaussian voxel noise and a
// single Gaussian offset ("contrast") shared by all in-mask voxels. Magnitudes
// are relative to the per-volume in-mask standard deviation, so they track
// each subject's intensity scale.

namespace voxcam {

struct AugmentConfig {
  double noise_sigma_rel = 0.05;
  double offset_sigma_rel = 0.10;
  int copies_per_subject = 4;
  std::uint64_t seed = 1;
  bool compose = false;  // false: alternate noise/offset copies; true: apply both

  void validate() const {
    require(noise_sigma_rel >= 0.0 && offset_sigma_rel >= 0.0, Errc::config_error,
            "augment sigmas must be >= 0");
    require(copies_per_subject >= 0, Errc::config_error, "copies must be >= 0");
  }
};

// Mean/stddev over in-mask voxels (population stddev, double accumulation).
inline std::pair<double, double> in_mask_stats(const BrainVolume& v, const BrainMask& m) {
  require(v.dims == m.dims, Errc::dim_mismatch, "volume/mask dims differ");
  double sum = 0.0, sumsq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    if (!m.data[i]) continue;
    sum += v.data[i];
    sumsq += static_cast<double>(v.data[i]) * v.data[i];
    ++n;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sumsq / static_cast<double>(n) - mean * mean);
  return {mean, std::sqrt(var)};
}

// In-mask voxels get i.i.d. N(0, (sigma_rel * sigma_v)^2); everything outside
// the mask is untouched.
inline BrainVolume gaussian_noise(const BrainVolume& v, const BrainMask& m, double sigma_rel,
                                  std::uint64_t seed) {
  require(sigma_rel >= 0.0, Errc::config_error, "sigma_rel must be >= 0");
  BrainVolume out = v;
  if (sigma_rel == 0.0) return out;
  const double sigma = sigma_rel * in_mask_stats(v, m).second;
  Rng rng(seed);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (m.data[i]) out.data[i] += static_cast<float>(rng.normal() * sigma);
  }
  return out;
}

// One scalar c ~ N(0, (sigma_rel * sigma_v)^2) added to every in-mask voxel.
inline BrainVolume gaussian_offset(const BrainVolume& v, const BrainMask& m, double sigma_rel,
                                   std::uint64_t seed) {
  require(sigma_rel >= 0.0, Errc::config_error, "sigma_rel must be >= 0");
  BrainVolume out = v;
  if (sigma_rel == 0.0) return out;
  const double sigma = sigma_rel * in_mask_stats(v, m).second;
  Rng rng(seed);
  const float c = static_cast<float>(rng.normal() * sigma);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (m.data[i]) out.data[i] += c;
  }
  return out;
}

// Appends copies_per_subject variants per subject. Originals are retained and
// every variant carries its source label and an id derived from the source,
// so lineage stays auditable. Only the train split may be augmented.
inline Dataset augment_dataset(const Dataset& train, const AugmentConfig& cfg) {
  require(train.role == SplitRole::train, Errc::applied_to_eval_split,
          std::string("augmentation applied to ") + split_role_name(train.role) + " split");
  cfg.validate();
  Dataset out = train;
  for (std::size_t si = 0; si < train.items.size(); ++si) {
    const Subject& src = train.items[si];
    for (int c = 0; c < cfg.copies_per_subject; ++c) {
      const std::uint64_t id_hash = fnv1a64(src.id.data(), src.id.size());
      const std::uint64_t noise_seed =
          mix_seed(cfg.seed, id_hash ^ (2 * static_cast<std::uint64_t>(c)));
      const std::uint64_t offset_seed =
          mix_seed(cfg.seed, id_hash ^ (2 * static_cast<std::uint64_t>(c) + 1));
      Subject aug;
      aug.label = src.label;
      aug.id = src.id + "#aug" + std::to_string(c);
      if (cfg.compose) {
        aug.volume = gaussian_offset(
            gaussian_noise(src.volume, train.mask, cfg.noise_sigma_rel, noise_seed), train.mask,
            cfg.offset_sigma_rel, offset_seed);
      } else if (c % 2 == 0) {
        aug.volume = gaussian_noise(src.volume, train.mask, cfg.noise_sigma_rel, noise_seed);
      } else {
        aug.volume = gaussian_offset(src.volume, train.mask, cfg.offset_sigma_rel, offset_seed);
      }
      out.items.push_back(std::move(aug));
    }
  }
  return out;
}

// Root subject id of an (possibly augmented) item id.
inline std::string source_subject_id(const std::string& id) {
  const auto pos = id.find("#aug");
  return pos == std::string::npos ? id : id.substr(0, pos);
}

}  // namespace voxcam

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/nifti.hpp"
#include "voxcam/volume.hpp"

namespace voxcam {

enum class SplitRole { unsplit, train, val, test };

inline const char* split_role_name(SplitRole r) {
  switch (r) {
    case SplitRole::unsplit: return "unsplit";
    case SplitRole::train: return "train";
    case SplitRole::val: return "val";
    case SplitRole::test: return "test";
  }
  return "?";
}

struct Subject {
  BrainVolume volume;
  int label = 0;  // 0 = typical, 1 = dyslexic
  std::string id;
};

// Labelled volumes sharing one grid and one brain mask.
struct Dataset {
  std::vector<Subject> items;
  BrainMask mask;
  SplitRole role = SplitRole::unsplit;

  std::size_t size() const { return items.size(); }

  void validate() const {
    require(!items.empty(), Errc::empty_split, "dataset has no items");
    mask.validate();
    bool have[2] = {false, false};
    for (const auto& s : items) {
      require(s.label == 0 || s.label == 1, Errc::dim_mismatch, "label must be 0 or 1");
      require(s.volume.dims == mask.dims, Errc::dim_mismatch,
              "subject " + s.id + " dims differ from mask");
      have[s.label] = true;
    }
    require(have[0] && have[1], Errc::class_too_small,
            "dataset must contain both classes");
  }

  std::array<int, 2> class_counts() const {
    std::array<int, 2> n{0, 0};
    for (const auto& s : items) ++n[s.label];
    return n;
  }
};

// Directory layout: mask.nii + one .nii per subject + manifest.csv with
// `subject_id,label,file` rows.
inline void save_dataset_dir(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  BrainVolume mask_vol = BrainVolume::zeros(ds.mask.dims);
  if (!ds.items.empty()) {
    mask_vol.spacing = ds.items.front().volume.spacing;
    mask_vol.affine = ds.items.front().volume.affine;
  }
  for (std::size_t i = 0; i < ds.mask.data.size(); ++i)
    mask_vol.data[i] = static_cast<float>(ds.mask.data[i]);
  nifti::write_file(dir / "mask.nii", mask_vol);

  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  require(manifest.good(), Errc::io_error, "cannot write manifest.csv");
  manifest << "subject_id,label,file\n";
  for (const auto& s : ds.items) {
    const std::string file = s.id + ".nii";
    nifti::write_file(dir / file, s.volume);
    manifest << s.id << "," << s.label << "," << file << "\n";
  }
}

inline Dataset load_dataset_dir(const std::filesystem::path& dir) {
  Dataset ds;
  const auto mask_path = dir / "mask.nii";
  require(std::filesystem::exists(mask_path), Errc::io_error,
          "missing " + mask_path.string());
  ds.mask = BrainMask::from_volume(nifti::read_file(mask_path));

  std::ifstream manifest(dir / "manifest.csv");
  require(manifest.good(), Errc::io_error, "cannot open " + (dir / "manifest.csv").string());
  std::string line;
  bool first = true;
  while (std::getline(manifest, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (first) {
      first = false;
      if (t.rfind("subject_id", 0) == 0) continue;  // header
    }
    const auto parts = split(t, ',');
    require(parts.size() == 3, Errc::config_error, "manifest row needs 3 fields: " + t);
    Subject s;
    s.id = trim(parts[0]);
    s.label = std::stoi(trim(parts[1]));
    s.volume = nifti::read_file(dir / trim(parts[2]));
    ds.items.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace voxcam

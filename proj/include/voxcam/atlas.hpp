#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "voxcam/core.hpp"
#include "voxcam/nifti.hpp"
#include "voxcam/volume.hpp"

namespace voxcam {

// Label table rows: `label,hemisphere,region` (UTF-8 CSV, no quoting; region
// names may contain spaces but not commas). Blank lines and #-comments allowed.
inline std::map<std::int32_t, RegionLabel> parse_label_table(const std::string& text) {
  std::map<std::int32_t, RegionLabel> table;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto parts = split(t, ',');
    require(parts.size() == 3, Errc::malformed_label_row,
            "line " + std::to_string(lineno) + ": expected label,hemisphere,region");
    std::int32_t label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(trim(parts[0]), &used);
      require(used == trim(parts[0]).size(), Errc::malformed_label_row,
              "line " + std::to_string(lineno) + ": bad label");
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      raise(Errc::malformed_label_row, "line " + std::to_string(lineno) + ": bad label");
    }
    require(label != 0, Errc::malformed_label_row,
            "line " + std::to_string(lineno) + ": label 0 is reserved for background");
    const std::string hemi = trim(parts[1]);
    const std::string region = trim(parts[2]);
    require(!hemi.empty() && !region.empty(), Errc::malformed_label_row,
            "line " + std::to_string(lineno) + ": empty field");
    table[label] = RegionLabel{hemi, region};
  }
  return table;
}

// Builds an AtlasVolume from NIfTI bytes plus a label table. Voxel values are
// rounded to the nearest integer label; every nonzero label must be in the
// table.
inline AtlasVolume load_atlas(std::span<const std::uint8_t> volume_bytes,
                              const std::string& label_table_text) {
  const BrainVolume v = nifti::read(volume_bytes);
  AtlasVolume atlas;
  atlas.dims = v.dims;
  atlas.affine = v.affine;
  atlas.labels.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    atlas.labels[i] = static_cast<std::int32_t>(std::lround(v.data[i]));
  atlas.label_table = parse_label_table(label_table_text);
  atlas.validate();
  return atlas;
}

inline AtlasVolume load_atlas_files(const std::filesystem::path& volume_path,
                                    const std::filesystem::path& table_path) {
  std::ifstream vin(volume_path, std::ios::binary);
  require(vin.good(), Errc::io_error, "cannot open " + volume_path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(vin)),
                                  std::istreambuf_iterator<char>());
  std::ifstream tin(table_path);
  require(tin.good(), Errc::io_error, "cannot open " + table_path.string());
  std::stringstream text;
  text << tin.rdbuf();
  return load_atlas(bytes, text.str());
}

inline void write_label_table(const std::filesystem::path& path,
                              const std::map<std::int32_t, RegionLabel>& table) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Errc::io_error, "cannot open " + path.string() + " for writing");
  for (const auto& [label, rl] : table)
    out << label << "," << rl.hemisphere << "," << rl.region << "\n";
}

}  // namespace voxcam

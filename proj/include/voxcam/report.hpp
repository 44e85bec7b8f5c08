#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/explain.hpp"
#include "voxcam/volume.hpp"

// Turns relevance volumes into region-level artifacts: thresholded masks,
// per-region voxel counts, and peak coordinate tables.

namespace voxcam {

// Marks the ceil(q * in-mask-count) highest-relevance voxels. Ties at the cut
// are taken lowest linear index first, so a given heatmap always thresholds to
// the same mask. An all-zero heatmap is an error, not an empty mask.
inline std::vector<std::uint8_t> threshold_heatmap(const Heatmap3D& heat, const BrainMask& mask,
                                                   double q) {
  require(heat.dims == mask.dims, Errc::dim_mismatch, "heatmap/mask dims differ");
  require(q > 0.0 && q <= 1.0, Errc::config_error, "q must be in (0,1]");
  require(heat.max_value() > 0.0f, Errc::empty_heatmap, "heatmap is all zero");

  std::vector<std::size_t> in_mask;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i]) in_mask.push_back(i);
  const std::size_t want =
      static_cast<std::size_t>(std::ceil(q * static_cast<double>(in_mask.size())));

  std::stable_sort(in_mask.begin(), in_mask.end(), [&](std::size_t a, std::size_t b) {
    if (heat.data[a] != heat.data[b]) return heat.data[a] > heat.data[b];
    return a < b;
  });
  std::vector<std::uint8_t> out(heat.data.size(), 0);
  for (std::size_t i = 0; i < want && i < in_mask.size(); ++i) out[in_mask[i]] = 1;
  return out;
}

struct RegionRow {
  std::string hemisphere;
  std::string region;
  std::int64_t voxels = 0;
};

struct RegionReport {
  std::vector<RegionRow> rows;         // sorted by hemisphere, then region name
  std::int64_t unlabeled_voxels = 0;   // thresholded voxels on atlas background
  std::int64_t total_voxels = 0;       // all thresholded voxels
  double top_fraction = 0.0;
};

// Voxel counts of a binary mask per atlas region. Regions with an empty
// intersection are omitted; background-label voxels are reported separately.
inline RegionReport region_voxel_counts(const std::vector<std::uint8_t>& mask, const Dims3& dims,
                                        const AtlasVolume& atlas, double top_fraction = 0.0) {
  require(dims == atlas.dims, Errc::dim_mismatch, "mask/atlas dims differ");
  require(mask.size() == voxel_count(dims), Errc::dim_mismatch, "mask length mismatch");
  RegionReport report;
  report.top_fraction = top_fraction;
  std::map<std::int32_t, std::int64_t> counts;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++report.total_voxels;
    const std::int32_t label = atlas.labels[i];
    if (label == 0) {
      ++report.unlabeled_voxels;
    } else {
      ++counts[label];
    }
  }
  for (const auto& [label, n] : counts) {
    const RegionLabel& rl = atlas.lookup(label);
    report.rows.push_back({rl.hemisphere, rl.region, n});
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const RegionRow& a, const RegionRow& b) {
    if (a.hemisphere != b.hemisphere) return a.hemisphere < b.hemisphere;
    return a.region < b.region;
  });
  return report;
}

inline std::string region_report_to_csv(const RegionReport& report) {
  std::ostringstream out;
  out << "hemisphere,region,voxels\n";
  for (const auto& r : report.rows)
    out << r.hemisphere << "," << r.region << "," << r.voxels << "\n";
  if (report.unlabeled_voxels > 0) out << ",unlabeled," << report.unlabeled_voxels << "\n";
  return out.str();
}

// Fixed-width table mirroring the per-region voxel count layout.
inline std::string region_report_to_text(const RegionReport& report) {
  std::ostringstream out;
  for (const auto& r : report.rows) {
    out << r.hemisphere;
    for (std::size_t i = r.hemisphere.size(); i < 8; ++i) out << ' ';
    out << "| ";
    out << r.region;
    for (std::size_t i = r.region.size(); i < 30; ++i) out << ' ';
    out << "| " << r.voxels << "\n";
  }
  return out.str();
}

struct PeakRow {
  std::string group;
  std::string hemisphere;
  std::string region;
  double x_mm = 0.0, y_mm = 0.0, z_mm = 0.0;
  std::array<int, 3> voxel{0, 0, 0};
  float value = 0.0f;
};

struct PeakTable {
  std::vector<PeakRow> rows;  // highest relevance first
};

// The k highest local maxima over the 26-neighborhood, at least 2 voxels
// apart, converted to world mm through the affine and labelled via the atlas.
// Background peaks are labelled "Unlabeled".
inline PeakTable peak_coordinates(const Heatmap3D& heat, const Affine& affine,
                                  const AtlasVolume& atlas, int k,
                                  const std::string& group = "") {
  require(heat.dims == atlas.dims, Errc::dim_mismatch, "heatmap/atlas dims differ");
  require(heat.max_value() > 0.0f, Errc::empty_heatmap, "heatmap is all zero");
  require(k >= 1, Errc::config_error, "k must be >= 1");
  const int nx = heat.dims[0], ny = heat.dims[1], nz = heat.dims[2];

  struct Candidate {
    float value;
    std::size_t index;
    int x, y, z;
  };
  std::vector<Candidate> candidates;
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const float v = heat.at(x, y, z);
        if (v <= 0.0f) continue;
        bool is_max = true;
        for (int dz = -1; dz <= 1 && is_max; ++dz) {
          for (int dy = -1; dy <= 1 && is_max; ++dy) {
            for (int dx = -1; dx <= 1 && is_max; ++dx) {
              if (dx == 0 && dy == 0 && dz == 0) continue;
              const int xx = x + dx, yy = y + dy, zz = z + dz;
              if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
              if (heat.at(xx, yy, zz) > v) is_max = false;
            }
          }
        }
        if (is_max) candidates.push_back({v, heat.index(x, y, z), x, y, z});
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.index < b.index;
  });

  PeakTable table;
  std::vector<Candidate> accepted;
  for (const auto& c : candidates) {
    if (static_cast<int>(accepted.size()) >= k) break;
    bool separated = true;
    for (const auto& a : accepted) {
      const double d2 = static_cast<double>(c.x - a.x) * (c.x - a.x) +
                        static_cast<double>(c.y - a.y) * (c.y - a.y) +
                        static_cast<double>(c.z - a.z) * (c.z - a.z);
      if (d2 < 4.0) {  // separation >= 2 voxels
        separated = false;
        break;
      }
    }
    if (!separated) continue;
    accepted.push_back(c);
    PeakRow row;
    row.group = group;
    row.value = c.value;
    row.voxel = {c.x, c.y, c.z};
    const auto mm = affine.apply(c.x, c.y, c.z);
    row.x_mm = mm[0];
    row.y_mm = mm[1];
    row.z_mm = mm[2];
    const std::int32_t label = atlas.labels[c.index];
    if (label == 0) {
      row.hemisphere = "";
      row.region = "Unlabeled";
    } else {
      const RegionLabel& rl = atlas.lookup(label);
      row.hemisphere = rl.hemisphere;
      row.region = rl.region;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string peak_table_to_csv(const PeakTable& table) {
  std::ostringstream out;
  out << "group,hemisphere,region,x_mm,y_mm,z_mm\n";
  for (const auto& r : table.rows) {
    out << r.group << "," << r.hemisphere << "," << r.region << "," << r.x_mm << "," << r.y_mm
        << "," << r.z_mm << "\n";
  }
  return out.str();
}

// Human-readable peak listing; carries both mm and voxel coordinates since the
// underlying template convention may be either.
inline std::string peak_table_to_text(const PeakTable& table) {
  std::ostringstream out;
  for (const auto& r : table.rows) {
    out << (r.group.empty() ? "-" : r.group) << "  " << (r.hemisphere.empty() ? "-" : r.hemisphere)
        << "  " << r.region << "  mm(" << r.x_mm << ", " << r.y_mm << ", " << r.z_mm << ")  voxel("
        << r.voxel[0] << ", " << r.voxel[1] << ", " << r.voxel[2] << ")\n";
  }
  return out.str();
}

}  // namespace voxcam

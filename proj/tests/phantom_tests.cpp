#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "voxcam/phantom.hpp"

using namespace voxcam;

TEST_CASE("phantom generation: determinism, balance, invariants") {
  PhantomConfig cfg = PhantomConfig::defaults();
  cfg.n_per_class = 4;
  auto [ds, truth] = generate_phantom(cfg);

  SECTION("dataset invariants hold") {
    CHECK(ds.size() == 8u);
    const auto counts = ds.class_counts();
    CHECK(counts[0] == 4);
    CHECK(counts[1] == 4);
    CHECK_NOTHROW(ds.validate());
  }

  SECTION("same seed is bitwise identical") {
    auto [ds2, truth2] = generate_phantom(cfg);
    REQUIRE(ds2.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(ds.items[i].id == ds2.items[i].id);
      CHECK(std::memcmp(ds.items[i].volume.data.data(), ds2.items[i].volume.data.data(),
                        ds.items[i].volume.size() * 4) == 0);
    }
  }

  SECTION("different seed differs") {
    PhantomConfig other = cfg;
    other.seed = cfg.seed + 1;
    auto [ds2, truth2] = generate_phantom(other);
    CHECK(std::memcmp(ds.items[0].volume.data.data(), ds2.items[0].volume.data.data(),
                      ds.items[0].volume.size() * 4) != 0);
  }

  SECTION("truth masks live inside the brain mask") {
    for (int c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < truth.blob_masks[c].size(); ++i)
        if (truth.blob_masks[c][i]) CHECK(truth.brain.data[i] == 1);
  }
}

TEST_CASE("noise 0: paired subjects differ across classes exactly by the blob templates") {
  PhantomConfig cfg = PhantomConfig::defaults();
  cfg.n_per_class = 2;
  cfg.noise_sigma = 0.0;
  auto [ds, truth] = generate_phantom(cfg);

  // subjects are emitted in (class0, class1) pairs per background seed
  const BrainVolume& a = ds.items[0].volume;  // c0_s00
  const BrainVolume& b = ds.items[1].volume;  // c1_s00
  REQUIRE(ds.items[0].label == 0);
  REQUIRE(ds.items[1].label == 1);

  // expected class difference from the blob specs
  std::vector<float> expected(a.size(), 0.0f);
  for (const auto& blob : cfg.class_blobs[1]) {
    const double r2 = blob.radius * blob.radius;
    for (int z = 0; z < cfg.dims[2]; ++z)
      for (int y = 0; y < cfg.dims[1]; ++y)
        for (int x = 0; x < cfg.dims[0]; ++x) {
          const double dx = x - blob.center[0], dy = y - blob.center[1], dz = z - blob.center[2];
          if (dx * dx + dy * dy + dz * dz <= r2)
            expected[a.index(x, y, z)] += blob.amplitude;
        }
  }
  for (const auto& blob : cfg.class_blobs[0]) {
    const double r2 = blob.radius * blob.radius;
    for (int z = 0; z < cfg.dims[2]; ++z)
      for (int y = 0; y < cfg.dims[1]; ++y)
        for (int x = 0; x < cfg.dims[0]; ++x) {
          const double dx = x - blob.center[0], dy = y - blob.center[1], dz = z - blob.center[2];
          if (dx * dx + dy * dy + dz * dz <= r2)
            expected[a.index(x, y, z)] -= blob.amplitude;
        }
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(b.data[i] - a.data[i] == Approx(expected[i]).margin(1e-5));
  }

  SECTION("class-conditional difference is supported exactly on the blob masks") {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (expected[i] == 0.0f) CHECK(b.data[i] == a.data[i]);
    }
  }
}

TEST_CASE("blob voxel count equals the lattice-ball oracle") {
  PhantomConfig cfg = PhantomConfig::defaults();
  cfg.n_per_class = 1;
  // single-blob classes so the truth mask is exactly the ball
  cfg.class_blobs[0] = {{{20.0, 30.0, 25.0}, 6.0, 2.0f}};
  cfg.class_blobs[1] = {{{40.0, 42.0, 35.0}, 4.0, 2.0f}};
  auto [ds, truth] = generate_phantom(cfg);
  const auto count0 = std::count(truth.blob_masks[0].begin(), truth.blob_masks[0].end(), 1);
  const auto count1 = std::count(truth.blob_masks[1].begin(), truth.blob_masks[1].end(), 1);
  CHECK(count0 == oracle::lattice_ball_count(20, 30, 25, 6.0, 60, 73, 60));
  CHECK(count1 == oracle::lattice_ball_count(40, 42, 35, 4.0, 60, 73, 60));
}

TEST_CASE("blobs escaping the mask are rejected") {
  PhantomConfig cfg = PhantomConfig::defaults();
  cfg.n_per_class = 1;
  cfg.class_blobs[0] = {{{2.0, 2.0, 2.0}, 5.0, 1.0f}};  // corner, outside the ellipsoid
  CHECK_THROWS_MATCHES(generate_phantom(cfg), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Errc::blob_outside_mask;
                       }));
}

TEST_CASE("localization_score counts hits against the dilated truth") {
  const Dims3 dims{10, 10, 10};

  SECTION("identical masks score 1") {
    std::vector<std::uint8_t> m(voxel_count(dims), 0);
    for (std::size_t i = 100; i < 160; ++i) m[i] = 1;
    CHECK(localization_score(m, m, dims, 0) == 1.0);
    CHECK(localization_score(m, m, dims, 2) == 1.0);
  }

  SECTION("disjoint masks with dilation 0 score 0") {
    std::vector<std::uint8_t> a(voxel_count(dims), 0), b(voxel_count(dims), 0);
    a[0] = 1;
    b[999] = 1;
    CHECK(localization_score(a, b, dims, 0) == 0.0);
  }

  SECTION("half-overlap gives the exact brute-force fraction") {
    std::vector<std::uint8_t> heat(voxel_count(dims), 0), truth_mask(voxel_count(dims), 0);
    // heat selects 40 voxels; truth covers the first 20 of them
    for (std::size_t i = 0; i < 40; ++i) heat[200 + i] = 1;
    for (std::size_t i = 0; i < 20; ++i) truth_mask[200 + i] = 1;
    const auto dilated = dilate_mask(truth_mask, dims, 0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < heat.size(); ++i) hits += heat[i] && dilated[i];
    CHECK(localization_score(heat, truth_mask, dims, 0) ==
          Approx(static_cast<double>(hits) / 40.0));
    CHECK(localization_score(heat, truth_mask, dims, 0) == 0.5);
  }

  SECTION("dilation grows the truth by a Euclidean ball") {
    std::vector<std::uint8_t> point(voxel_count(dims), 0);
    const std::size_t center = 5 + 10 * (5 + 10 * 5);
    point[center] = 1;
    const auto dilated = dilate_mask(point, dims, 2);
    CHECK(std::count(dilated.begin(), dilated.end(), 1) ==
          oracle::lattice_ball_count(5, 5, 5, 2.0, 10, 10, 10));
  }
}

TEST_CASE("synthetic atlas covers the mask with labelled octants") {
  PhantomConfig cfg = PhantomConfig::defaults();
  cfg.n_per_class = 1;
  auto [ds, truth] = generate_phantom(cfg);
  const AtlasVolume atlas = synthetic_atlas(truth.brain, Affine::diagonal(3, 3, 3));
  CHECK_NOTHROW(atlas.validate());
  CHECK(atlas.label_table.size() == 8);
  for (std::size_t i = 0; i < atlas.labels.size(); ++i) {
    if (truth.brain.data[i]) {
      CHECK(atlas.labels[i] != 0);
    } else {
      CHECK(atlas.labels[i] == 0);
    }
  }
}

#include <catch2/catch.hpp>

#include "voxcam/explain.hpp"
#include "voxcam/nn.hpp"

using namespace voxcam;

namespace {

BrainVolume random_volume(Dims3 dims, std::uint64_t seed, double mean = 0.0) {
  BrainVolume v = BrainVolume::zeros(dims);
  Rng rng(seed);
  for (auto& x : v.data) x = static_cast<float>(rng.normal(mean, 1.0));
  return v;
}

// conv(1 filter) -> flatten -> dense whose weights realize the spatial mean:
// the logit for class 0 is exactly mean(A).
Model single_map_model(int C, int H, int W, int kernel, std::uint64_t seed) {
  ArchitectureSpec spec;
  spec.input_shape = {C, H, W};
  spec.layers = {LayerSpec::Conv2D(1, kernel), LayerSpec::Flatten(), LayerSpec::Dense(2)};
  Model model = build_model(spec, seed);
  const int ho = H - kernel + 1, wo = W - kernel + 1;
  Tensor* head = model.find_param("l02.w");
  const float inv = 1.0f / static_cast<float>(ho * wo);
  for (int j = 0; j < ho * wo; ++j) {
    head->data()[j] = inv;             // class 0 = spatial mean of the map
    head->data()[ho * wo + j] = 0.0f;  // class 1 flat
  }
  model.set_mode(Mode::eval);
  return model;
}

}  // namespace

TEST_CASE("grad_cam on a single-feature-map model is proportional to ReLU(A)") {
  Model model = single_map_model(2, 9, 9, 3, 4);
  const BrainVolume v = random_volume({9, 9, 2}, 21);
  GradCamMap map = grad_cam(model, v, 0);

  // recompute the feature map directly
  Tensor input = volume_to_input(model.spec, v);
  const Tensor a = conv2d(nullptr, input, *model.find_param("l00.w"),
                          *model.find_param("l00.b"), 1, 0);
  REQUIRE(map.coarse.size() == static_cast<std::size_t>(a.size()));
  // alpha = 1/(Ho*Wo) > 0, so coarse = alpha * ReLU... map = ReLU(alpha*A)
  float scale = 0.0f;
  for (std::size_t i = 0; i < map.coarse.size(); ++i) {
    const float expect = std::max(0.0f, a.data()[i]);
    if (expect > 0.0f && scale == 0.0f) scale = map.coarse[i] / expect;
  }
  REQUIRE(scale > 0.0f);
  for (std::size_t i = 0; i < map.coarse.size(); ++i) {
    CHECK(map.coarse[i] == Approx(std::max(0.0f, a.data()[i]) * scale).margin(1e-5));
  }
}

TEST_CASE("grad_cam requirements: eval mode and a conv layer") {
  Model model = single_map_model(2, 9, 9, 3, 4);
  const BrainVolume v = random_volume({9, 9, 2}, 23);
  model.set_mode(Mode::train);
  CHECK_THROWS_MATCHES(grad_cam(model, v, 0), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::not_eval_mode; }));
  model.set_mode(Mode::eval);

  ArchitectureSpec dense_only;
  dense_only.input_shape = {2, 3, 3};
  dense_only.layers = {LayerSpec::Flatten(), LayerSpec::Dense(2)};
  Model no_conv = build_model(dense_only, 1);
  no_conv.set_mode(Mode::eval);
  BrainVolume v2 = random_volume({3, 3, 2}, 2);
  CHECK_THROWS_MATCHES(grad_cam(no_conv, v2, 0), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::no_conv_layer; }));
}

TEST_CASE("grad_cam: all-negative weighted combination gives an all-zero map") {
  Model model = single_map_model(1, 7, 7, 3, 4);
  // flip the head so alpha < 0 while the feature map stays positive
  Tensor* head = model.find_param("l02.w");
  for (std::int64_t i = 0; i < head->size(); ++i) head->data()[i] = -std::abs(head->data()[i]);
  // positive input and positive kernel -> positive A
  BrainVolume v = random_volume({7, 7, 1}, 5, 10.0);
  Tensor* k = model.find_param("l00.w");
  for (std::int64_t i = 0; i < k->size(); ++i) k->data()[i] = std::abs(k->data()[i]) + 0.1f;
  GradCamMap map = grad_cam(model, v, 0);
  for (float x : map.coarse) CHECK(x == 0.0f);
}

TEST_CASE("relevance invariant to the non-target logit's bias") {
  Model model = single_map_model(2, 9, 9, 3, 6);
  Rng rng(17);
  Tensor* head = model.find_param("l02.w");
  for (std::int64_t i = 0; i < head->size(); ++i)
    head->data()[i] = static_cast<float>(rng.uniform(-1, 1));
  const BrainVolume v = random_volume({9, 9, 2}, 29);
  const GradCamMap before = grad_cam(model, v, 0);
  model.find_param("l02.b")->data()[1] += 100.0f;  // non-target logit bias
  const GradCamMap after = grad_cam(model, v, 0);
  CHECK(before.coarse == after.coarse);
}

TEST_CASE("relevance_volume modes") {
  Model model = single_map_model(4, 11, 11, 3, 8);
  Rng rng(19);
  Tensor* head = model.find_param("l02.w");
  for (std::int64_t i = 0; i < head->size(); ++i)
    head->data()[i] = static_cast<float>(rng.uniform(-1, 1));
  const BrainVolume v = random_volume({11, 11, 4}, 31);

  SECTION("replicate: every axial slice is identical") {
    const Heatmap3D heat = relevance_volume(model, v, 0, RelevanceMode::gradcam2d_replicate);
    CHECK(heat.dims == v.dims);
    for (int z = 1; z < v.nz(); ++z)
      for (int y = 0; y < v.ny(); ++y)
        for (int x = 0; x < v.nx(); ++x)
          CHECK(heat.at(x, y, z) == heat.at(x, y, 0));
    CHECK(heat.max_value() == 1.0f);  // normalized
  }

  SECTION("slicegrad concentrates on the slice the model reads") {
    // conv kernel zero except channel z0: only that slice carries gradient
    const int z0 = 2;
    Tensor* k = model.find_param("l00.w");  // [1,4,3,3]
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 9; ++i) k->data()[c * 9 + i] = c == z0 ? 0.5f : 0.0f;
    const Heatmap3D heat = relevance_volume(model, v, 0, RelevanceMode::gradcam2d_slicegrad);
    double mass[4] = {0, 0, 0, 0};
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) mass[z] += heat.at(x, y, z);
    for (int z = 0; z < 4; ++z) {
      if (z == z0) continue;
      CHECK(mass[z0] >= 2.0 * mass[z]);
    }
  }

  SECTION("mode/rank mismatches are rejected") {
    CHECK_THROWS_MATCHES(relevance_volume(model, v, 0, RelevanceMode::gradcam3d), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::mode_rank_mismatch;
                         }));
  }
}

TEST_CASE("gradcam3d produces an aligned, normalized volume on a 3D model") {
  ArchitectureSpec spec;
  spec.input_shape = {1, 8, 9, 10};
  spec.layers = {LayerSpec::Conv3D(2, 3), LayerSpec::BatchNorm(), LayerSpec::ReLU(),
                 LayerSpec::Flatten(), LayerSpec::Dense(2)};
  Model model = build_model(spec, 3);
  Rng rng(23);
  Tensor* head = model.find_param("l04.w");
  for (std::int64_t i = 0; i < head->size(); ++i)
    head->data()[i] = static_cast<float>(rng.uniform(-1, 1));
  model.set_mode(Mode::eval);
  const BrainVolume v = random_volume({10, 9, 8}, 37);
  const Heatmap3D heat = relevance_volume(model, v, 1, RelevanceMode::gradcam3d);
  CHECK(heat.dims == v.dims);
  CHECK(heat.max_value() <= 1.0f);
  for (float x : heat.data) CHECK(x >= 0.0f);
}

TEST_CASE("guided_backprop rules") {
  SECTION("linear model (no relu): equals |plain input gradient|") {
    ArchitectureSpec spec;
    spec.input_shape = {2, 5, 5};
    spec.layers = {LayerSpec::Conv2D(2, 3), LayerSpec::Flatten(), LayerSpec::Dense(2)};
    Model model = build_model(spec, 9);
    Rng rng(29);
    for (auto& [n, t] : model.params)
      for (std::int64_t i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    model.set_mode(Mode::eval);
    const BrainVolume v = random_volume({5, 5, 2}, 41);
    const auto guided = guided_backprop(model, v, 0);

    Tensor input = volume_to_input(model.spec, v);
    Graph g;
    Tensor x = input;
    Tensor logits = forward(model, x, &g);
    g.backward(logits, {1.0f, 0.0f});
    auto plain = g.grad(x);
    REQUIRE(guided.size() == plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i)
      CHECK(guided[i] == Approx(std::abs(plain[i])).margin(1e-6));
  }

  SECTION("all-negative activations into every relu give zero saliency") {
    ArchitectureSpec spec;
    spec.input_shape = {1, 4, 4};
    spec.layers = {LayerSpec::Conv2D(1, 1), LayerSpec::ReLU(), LayerSpec::Flatten(),
                   LayerSpec::Dense(2)};
    Model model = build_model(spec, 10);
    model.find_param("l00.w")->data()[0] = 1.0f;
    model.find_param("l00.b")->data()[0] = -100.0f;  // forces negative pre-activation
    Tensor* head = model.find_param("l03.w");
    for (std::int64_t i = 0; i < head->size(); ++i) head->data()[i] = 1.0f;
    model.set_mode(Mode::eval);
    const BrainVolume v = random_volume({4, 4, 1}, 43);
    const auto guided = guided_backprop(model, v, 0);
    for (float s : guided) CHECK(s == 0.0f);
  }

  SECTION("agreement with path enumeration on 2-layer nets") {
    // dense(relu(dense(x))): guided grad[i] = sum_j [a_j > 0][w2_j > 0] w2_j w1_ji
    Rng rng(47);
    for (int trial = 0; trial < 10; ++trial) {
      const int F = 4, Hidden = 6;
      ArchitectureSpec spec;
      spec.input_shape = {F, 1, 1};
      spec.layers = {LayerSpec::Flatten(), LayerSpec::Dense(Hidden), LayerSpec::ReLU(),
                     LayerSpec::Dense(2)};
      Model model = build_model(spec, trial);
      for (auto& [n, t] : model.params)
        for (std::int64_t i = 0; i < t.size(); ++i)
          t.data()[i] = static_cast<float>(rng.uniform(-1, 1));
      model.set_mode(Mode::eval);
      BrainVolume v = BrainVolume::zeros({1, 1, F});
      for (auto& x : v.data) x = static_cast<float>(rng.uniform(-1, 1));

      const auto guided = guided_backprop(model, v, 1);

      const Tensor* w1 = model.find_param("l01.w");
      const Tensor* b1 = model.find_param("l01.b");
      const Tensor* w2 = model.find_param("l03.w");
      for (int i = 0; i < F; ++i) {
        double acc = 0.0;
        for (int j = 0; j < Hidden; ++j) {
          double pre = b1->data()[j];
          for (int f = 0; f < F; ++f) pre += w1->data()[j * F + f] * v.data[f];
          const float w2j = w2->data()[Hidden + j];  // class-1 row
          if (pre > 0.0 && w2j > 0.0f) acc += static_cast<double>(w2j) * w1->data()[j * F + i];
        }
        CHECK(guided[i] == Approx(std::abs(acc)).margin(1e-5));
      }
    }
  }
}

TEST_CASE("guided_grad_cam: zero map gives zero product, support shrinks") {
  Model model = single_map_model(2, 9, 9, 3, 12);
  Rng rng(53);
  Tensor* head = model.find_param("l02.w");
  for (std::int64_t i = 0; i < head->size(); ++i)
    head->data()[i] = static_cast<float>(rng.uniform(-1, 1));
  const BrainVolume v = random_volume({9, 9, 2}, 59);

  const Heatmap3D base = relevance_volume(model, v, 0, RelevanceMode::gradcam2d_replicate);
  const Heatmap3D product = guided_grad_cam(model, v, 0, RelevanceMode::gradcam2d_replicate);
  CHECK(product.source_mode == RelevanceMode::guided_gradcam);
  // support of the product is inside the support of the base map
  for (std::size_t i = 0; i < product.data.size(); ++i) {
    if (product.data[i] > 0.0f) CHECK(base.data[i] > 0.0f);
  }
}

TEST_CASE("upsampling preserves the argmax within one coarse cell") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int ch = 4 + static_cast<int>(rng.below(6));
    const int cw = 4 + static_cast<int>(rng.below(6));
    const int dh = ch * 3 + static_cast<int>(rng.below(10));
    const int dw = cw * 3 + static_cast<int>(rng.below(10));
    std::vector<float> coarse(static_cast<std::size_t>(ch) * cw);
    for (auto& x : coarse) x = static_cast<float>(rng.uniform(0.0, 0.3));
    const int py = static_cast<int>(rng.below(ch));
    const int px = static_cast<int>(rng.below(cw));
    coarse[static_cast<std::size_t>(py) * cw + px] = 1.0f;

    const auto fine = detail::upsample_bilinear(coarse, ch, cw, dh, dw);
    std::size_t am = 0;
    for (std::size_t i = 1; i < fine.size(); ++i)
      if (fine[i] > fine[am]) am = i;
    const double fy = (static_cast<double>(am / dw) + 0.5) * ch / dh - 0.5;
    const double fx = (static_cast<double>(am % dw) + 0.5) * cw / dw - 0.5;
    CHECK(std::abs(fy - py) <= 1.0);
    CHECK(std::abs(fx - px) <= 1.0);
  }
}

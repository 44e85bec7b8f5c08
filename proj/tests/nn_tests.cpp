#include <catch2/catch.hpp>

#include "voxcam/nn.hpp"

using namespace voxcam;

TEST_CASE("reference LeNet-5 lands in the parameter budget") {
  const ArchitectureSpec spec = lenet5_modified_spec({60, 73, 60}, 32);
  const std::int64_t params = count_parameters(spec);
  CHECK(params >= 150000);
  CHECK(params <= 200000);
  CHECK(params == 172058);  // 16/24 filters, fc 32

  const ArchitectureSpec spec3 = to_3d(spec);
  CHECK(count_parameters(spec3) > 3000000);
}

TEST_CASE("param_count matches hand counts") {
  SECTION("Conv2D(1->2, 3x3, bias) alone is 20") {
    ArchitectureSpec spec;
    spec.input_shape = {1, 8, 8};
    spec.layers = {LayerSpec::Conv2D(2, 3), LayerSpec::Flatten(), LayerSpec::Dense(2)};
    // count only the conv: 2*(3*3*1) + 2 = 20
    ArchitectureSpec conv_only = spec;
    conv_only.layers = {LayerSpec::Conv2D(2, 3)};
    CHECK(count_parameters(conv_only) == 20);
  }
  SECTION("Dense(4->2, bias) is 10") {
    ArchitectureSpec flat;
    flat.input_shape = {1, 2, 2};  // flattens to 4 features
    flat.layers = {LayerSpec::Flatten(), LayerSpec::Dense(2)};
    CHECK(count_parameters(flat) == 10);
  }
  SECTION("empty spec counts zero") {
    ArchitectureSpec spec;
    spec.input_shape = {1, 4, 4};
    CHECK(count_parameters(spec) == 0);
  }
  SECTION("model-level param_count agrees with the spec-level count") {
    const ArchitectureSpec spec = lenet5_modified_spec({3, 18, 18}, 8, 2, 4);
    Model model = build_model(spec, 5);
    CHECK(param_count(model) == count_parameters(spec));
  }
}

TEST_CASE("builder smoke case forward-produces 2 logits") {
  Model model = build_lenet5_modified({1, 18, 18}, 4, 3, 2, 4);
  model.set_mode(Mode::eval);
  BrainVolume v = BrainVolume::zeros({18, 18, 1});
  Rng rng(6);
  for (auto& x : v.data) x = static_cast<float>(rng.normal());
  const Tensor logits = forward_logits(model, v);
  CHECK(logits.size() == 2);
}

TEST_CASE("undersized inputs give ShapeUnderflow") {
  CHECK_THROWS_MATCHES(lenet5_modified_spec({1, 4, 4}, 4), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::shape_underflow; }));
  // kernel 5 on an 8x8 input underflows at the second block
  CHECK_THROWS_MATCHES(lenet5_modified_spec({1, 8, 8}, 4), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::shape_underflow; }));
}

TEST_CASE("static shape propagation equals dynamic shapes") {
  Rng rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    const int C = 1 + static_cast<int>(rng.below(4));
    const int H = 14 + static_cast<int>(rng.below(10));
    const int W = 14 + static_cast<int>(rng.below(10));
    const int k = 1 + static_cast<int>(rng.below(4));
    ArchitectureSpec spec;
    spec.input_shape = {C, H, W};
    spec.layers = {LayerSpec::Conv2D(1 + static_cast<int>(rng.below(4)), k,
                                     1 + static_cast<int>(rng.below(2))),
                   LayerSpec::BatchNorm(),
                   LayerSpec::ReLU(),
                   LayerSpec::MaxPool(2, 2),
                   LayerSpec::Flatten(),
                   LayerSpec::Dense(3 + static_cast<int>(rng.below(5))),
                   LayerSpec::ReLU(),
                   LayerSpec::Dropout(0.5f),
                   LayerSpec::Dense(2)};
    const auto shapes = spec.propagate();

    Model model = build_model(spec, trial);
    model.set_mode(Mode::eval);
    Tensor x({C, H, W});
    std::vector<Tensor> trace;
    (void)forward(model, x, nullptr, &trace);
    REQUIRE(trace.size() == shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) CHECK(trace[i].shape() == shapes[i]);
  }
}

TEST_CASE("to_3d structure: layer count, conv mapping, dense tail preserved") {
  const ArchitectureSpec spec = lenet5_modified_spec({60, 73, 60}, 32);
  const ArchitectureSpec spec3 = to_3d(spec);
  REQUIRE(spec3.layers.size() == spec.layers.size());
  CHECK(spec3.input_shape == Shape{1, 60, 73, 60});
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& a = spec.layers[i];
    const LayerSpec& b = spec3.layers[i];
    if (a.kind == LayerKind::conv2d) {
      CHECK(b.kind == LayerKind::conv3d);
      CHECK(b.filters == a.filters);
      CHECK(b.kernel == a.kernel);
    } else {
      CHECK(b.kind == a.kind);
      if (a.kind == LayerKind::dense) CHECK(b.units == a.units);
    }
  }

  SECTION("tiny spec forward-runs after conversion") {
    const ArchitectureSpec tiny = lenet5_modified_spec({6, 6, 6}, 4, 2, 3, 1);
    const ArchitectureSpec tiny3 = to_3d(tiny);
    CHECK(tiny3.input_shape == Shape{1, 6, 6, 6});
    Model model = build_model(tiny3, 1);
    model.set_mode(Mode::eval);
    Tensor x({1, 6, 6, 6});
    CHECK(forward(model, x, nullptr).size() == 2);
  }

  SECTION("param count grows whenever a conv kernel exceeds 1") {
    Rng rng(19);
    for (int trial = 0; trial < 8; ++trial) {
      const int k = 2 + static_cast<int>(rng.below(3));
      const int size = 5 * k;
      ArchitectureSpec s = lenet5_modified_spec({8, size, size}, 8, 2, 3, k);
      CHECK(count_parameters(to_3d(s)) > count_parameters(s));
    }
  }
}

TEST_CASE("forward_logits: zero weights give zero logits; eval is deterministic") {
  Model model = build_lenet5_modified({1, 18, 18}, 4, 2, 3);
  for (auto& [name, t] : model.params) std::fill(t.values().begin(), t.values().end(), 0.0f);
  model.set_mode(Mode::eval);
  BrainVolume v = BrainVolume::zeros({18, 18, 1});
  Rng rng(12);
  for (auto& x : v.data) x = static_cast<float>(rng.normal());
  const Tensor logits = forward_logits(model, v);
  CHECK(logits.data()[0] == 0.0f);
  CHECK(logits.data()[1] == 0.0f);

  Model model2 = build_lenet5_modified({1, 18, 18}, 4, 2, 3, 5);
  model2.set_mode(Mode::eval);
  const Tensor a = forward_logits(model2, v);
  const Tensor b = forward_logits(model2, v);
  CHECK(a.data()[0] == b.data()[0]);
  CHECK(a.data()[1] == b.data()[1]);
}

TEST_CASE("forward_logits rejects mismatched volumes") {
  Model model = build_lenet5_modified({1, 18, 18}, 4, 2, 3);
  model.set_mode(Mode::eval);
  BrainVolume wrong = BrainVolume::zeros({17, 18, 1});
  CHECK_THROWS_MATCHES(forward_logits(model, wrong), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::dim_mismatch; }));
}

TEST_CASE("arch config text round-trips") {
  const ArchitectureSpec spec = lenet5_modified_spec({60, 73, 60}, 32);
  const std::string text = arch_to_text(spec);
  const ArchitectureSpec back = arch_from_text(text);
  CHECK(arch_to_text(back) == text);
  CHECK(count_parameters(back) == count_parameters(spec));

  CHECK_THROWS_MATCHES(arch_from_text("layer warp units=3\n"), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::config_error; }));
}

TEST_CASE("checkpoint save/load round-trips parameters and running stats") {
  Model model = build_lenet5_modified({2, 14, 14}, 4, 2, 3, 3);
  // touch the running stats so they are not defaults
  model.find_state("l01.bn.rmean")->data()[0] = 0.25f;
  const auto dir = std::filesystem::temp_directory_path() / "voxcam_ckpt_test";
  save_model(dir, model);
  Model loaded = load_model(dir);
  REQUIRE(loaded.params.size() == model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    CHECK(loaded.params[i].first == model.params[i].first);
    CHECK(loaded.params[i].second.values() == model.params[i].second.values());
  }
  CHECK(loaded.find_state("l01.bn.rmean")->data()[0] == 0.25f);
  std::filesystem::remove_all(dir);
}

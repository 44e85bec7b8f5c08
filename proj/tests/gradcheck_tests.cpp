#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "voxcam/nn.hpp"
#include "voxcam/ops.hpp"

// Analytic gradients vs central finite differences. The numeric side
// evaluates the loss with the double-precision oracle forward, so the
// comparison is limited by the engine's own float32 arithmetic, not by
// cancellation in the difference quotient.

using namespace voxcam;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<float>(rng.uniform(-scale, scale));
  return t;
}

constexpr double kTol = 1e-3;

}  // namespace

TEST_CASE("finite differences: conv2d gradients (input, kernel, bias)") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const int C = 1 + static_cast<int>(rng.below(3));
    const int kernel = 1 + static_cast<int>(rng.below(3));
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int H = kernel + 2 + static_cast<int>(rng.below(4));
    const int W = kernel + 2 + static_cast<int>(rng.below(4));
    const int F = 1 + static_cast<int>(rng.below(3));
    Tensor x = random_tensor({C, H, W}, rng);
    Tensor k = random_tensor({F, C, kernel, kernel}, rng);
    Tensor b = random_tensor({F}, rng);

    auto loss_of = [&]() {
      int ho, wo;
      return oracle::dquadratic(oracle::dconv2d(oracle::to_double(x), 1, C, H, W,
                                                oracle::to_double(k), oracle::to_double(b), F,
                                                kernel, kernel, stride, 0, ho, wo));
    };
    Graph g;
    Tensor y = conv2d(&g, x, k, b, stride, 0);
    g.backward(sum(&g, mul(&g, y, y)), {0.5f});

    for (Tensor* t : {&x, &k, &b}) {
      const auto r = oracle::finite_difference_check(*t, g.grad(*t), loss_of);
      CHECK(r.max_rel_err <= kTol);
    }
  }
}

TEST_CASE("finite differences: conv3d gradients") {
  Rng rng(202);
  for (int trial = 0; trial < 20; ++trial) {
    const int C = 1 + static_cast<int>(rng.below(2));
    const int kernel = 1 + static_cast<int>(rng.below(3));
    const int D = kernel + static_cast<int>(rng.below(3));
    const int H = kernel + static_cast<int>(rng.below(3));
    const int W = kernel + static_cast<int>(rng.below(3));
    const int F = 1 + static_cast<int>(rng.below(2));
    Tensor x = random_tensor({C, D, H, W}, rng);
    Tensor k = random_tensor({F, C, kernel, kernel, kernel}, rng);
    Tensor b = random_tensor({F}, rng);
    auto loss_of = [&]() {
      int dd, ho, wo;
      return oracle::dquadratic(oracle::dconv3d(oracle::to_double(x), 1, C, D, H, W,
                                                oracle::to_double(k), oracle::to_double(b), F,
                                                kernel, kernel, kernel, 1, 0, dd, ho, wo));
    };
    Graph g;
    Tensor y = conv3d(&g, x, k, b, 1, 0);
    g.backward(sum(&g, mul(&g, y, y)), {0.5f});
    for (Tensor* t : {&x, &k, &b}) {
      const auto r = oracle::finite_difference_check(*t, g.grad(*t), loss_of);
      CHECK(r.max_rel_err <= kTol);
    }
  }
}

TEST_CASE("finite differences: dense, relu+maxpool, batchnorm, softmax-CE") {
  Rng rng(303);
  SECTION("dense") {
    for (int trial = 0; trial < 20; ++trial) {
      const int N = 1 + static_cast<int>(rng.below(4));
      const int Fin = 1 + static_cast<int>(rng.below(6));
      const int U = 1 + static_cast<int>(rng.below(5));
      Tensor x = random_tensor({N, Fin}, rng);
      Tensor w = random_tensor({U, Fin}, rng);
      Tensor b = random_tensor({U}, rng);
      auto loss_of = [&]() {
        return oracle::dquadratic(oracle::ddense(oracle::to_double(x), N, Fin,
                                                 oracle::to_double(w), oracle::to_double(b), U));
      };
      Graph g;
      Tensor y = dense(&g, x, w, b);
      g.backward(sum(&g, mul(&g, y, y)), {0.5f});
      for (Tensor* t : {&x, &w, &b}) {
        const auto r = oracle::finite_difference_check(*t, g.grad(*t), loss_of);
        CHECK(r.max_rel_err <= kTol);
      }
    }
  }
  SECTION("relu and maxpool (away from kinks)") {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x = random_tensor({2, 6, 6}, rng);
      for (std::int64_t i = 0; i < x.size(); ++i)
        if (std::abs(x.data()[i]) < 0.05f) x.data()[i] += 0.1f;
      auto loss_of = [&]() {
        int ho, wo;
        return oracle::dquadratic(
            oracle::dmaxpool2d(oracle::drelu(oracle::to_double(x)), 1, 2, 6, 6, 2, 2, ho, wo));
      };
      Graph g;
      Tensor y = maxpool(&g, relu(&g, x), 2, 2, 2);
      g.backward(sum(&g, mul(&g, y, y)), {0.5f});
      const auto r = oracle::finite_difference_check(x, g.grad(x), loss_of);
      CHECK(r.max_rel_err <= kTol);
    }
  }
  SECTION("batchnorm train mode: input, gamma, beta") {
    for (int trial = 0; trial < 20; ++trial) {
      const int N = 3 + static_cast<int>(rng.below(3));
      const int C = 1 + static_cast<int>(rng.below(3));
      const int S = 4;
      Tensor x = random_tensor({N, C, S}, rng, 2.0);
      Tensor gamma = random_tensor({C}, rng);
      Tensor beta = random_tensor({C}, rng);
      auto loss_of = [&]() {
        return oracle::dquadratic(oracle::dbatchnorm(oracle::to_double(x), N, C, S,
                                                     oracle::to_double(gamma),
                                                     oracle::to_double(beta)));
      };
      Graph g;
      Tensor rm({C}), rv = Tensor::full({C}, 1.0f);
      Tensor y = batchnorm(&g, x, gamma, beta, rm, rv, true);
      g.backward(sum(&g, mul(&g, y, y)), {0.5f});
      for (Tensor* t : {&x, &gamma, &beta}) {
        const auto r = oracle::finite_difference_check(*t, g.grad(*t), loss_of);
        CHECK(r.max_rel_err <= kTol);
      }
    }
  }
  SECTION("softmax cross-entropy logit gradients") {
    for (int trial = 0; trial < 20; ++trial) {
      const int N = 1 + static_cast<int>(rng.below(4));
      const int K = 2 + static_cast<int>(rng.below(3));
      Tensor z = random_tensor({N, K}, rng, 2.0);
      std::vector<int> labels;
      for (int n = 0; n < N; ++n) labels.push_back(static_cast<int>(rng.below(K)));
      auto loss_of = [&]() { return oracle::dsoftmax_ce(oracle::to_double(z), N, K, labels); };
      Graph g;
      Tensor loss = softmax_cross_entropy(&g, z, labels);
      g.backward(loss);
      const auto r = oracle::finite_difference_check(z, g.grad(z), loss_of);
      CHECK(r.max_rel_err <= kTol);
    }
  }
}

TEST_CASE("finite differences: every parameter of a small modified LeNet-5") {
  Rng data_rng(404);
  const Shape input_shape{2, 12, 12};
  ArchitectureSpec spec = lenet5_modified_spec(input_shape, 8, 2, 3, 3);
  Model model = build_model(spec, 11);
  model.set_mode(Mode::train);
  // re-randomize every parameter (incl. the zero biases) so no gradient path
  // is vacuously zero
  for (auto& [name, param] : model.params)
    for (std::int64_t i = 0; i < param.size(); ++i)
      param.data()[i] = static_cast<float>(data_rng.uniform(-0.5, 0.5));

  const int N = 4;
  Tensor batch({N, 2, 12, 12});
  for (std::int64_t i = 0; i < batch.size(); ++i)
    batch.data()[i] = static_cast<float>(data_rng.uniform(-1, 1));
  const std::vector<int> labels{0, 1, 1, 0};

  const std::uint64_t dropout_seed = 777;
  auto loss_of = [&] { return oracle::lenet_double_loss(model, batch, labels, dropout_seed); };

  model.dropout_rng = Rng(mix_seed(dropout_seed, 0));
  Graph g;
  Tensor logits = forward(model, batch, &g);
  Tensor loss = softmax_cross_entropy(&g, logits, labels);
  g.backward(loss);

  // the double path reproduces the float loss to float accuracy
  CHECK(std::abs(loss_of() - static_cast<double>(loss.item())) < 1e-4);

  std::int64_t total_checked = 0;
  for (auto& [name, param] : model.params) {
    INFO("parameter " << name);
    const auto r = oracle::finite_difference_check(param, g.grad(param), loss_of);
    CHECK(r.max_rel_err <= kTol);
    total_checked += r.checked;
  }
  CHECK(total_checked == param_count(model));
}

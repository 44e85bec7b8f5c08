#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "voxcam/ops.hpp"
#include "voxcam/tensor.hpp"

using namespace voxcam;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<float>(rng.uniform(-scale, scale));
  return t;
}

}  // namespace

TEST_CASE("conv2d identity on a 1x1x1 input") {
  Tensor x({1, 1, 1}, {3.5f});
  Tensor k({1, 1, 1, 1}, {1.0f});
  Tensor b({1}, {0.0f});
  const Tensor y = conv2d(nullptr, x, k, b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y.data()[0] == 3.5f);
}

TEST_CASE("conv2d all-ones 3x3 input with 2x2 kernel gives 4 everywhere") {
  Tensor x({1, 3, 3}, std::vector<float>(9, 1.0f));
  Tensor k({1, 1, 2, 2}, std::vector<float>(4, 1.0f));
  Tensor b({1}, {0.0f});
  const Tensor y = conv2d(nullptr, x, k, b, 1, 0);
  REQUIRE(y.shape() == Shape{1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == 4.0f);
}

TEST_CASE("conv2d matches the naive-loop oracle over randomized shapes") {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const int C = 1 + static_cast<int>(rng.below(4));
    const int kernel = 1 + static_cast<int>(rng.below(5));   // 1..5
    const int stride = 1 + static_cast<int>(rng.below(3));   // 1..3
    const int pad = static_cast<int>(rng.below(3));
    const int H = kernel + static_cast<int>(rng.below(14));
    const int W = kernel + static_cast<int>(rng.below(14));
    const int F = 1 + static_cast<int>(rng.below(4));
    Tensor x = random_tensor({C, H, W}, rng);
    Tensor k = random_tensor({F, C, kernel, kernel}, rng);
    Tensor b = random_tensor({F}, rng);
    const Tensor fast = conv2d(nullptr, x, k, b, stride, pad);
    const Tensor direct = conv2d(nullptr, x, k, b, stride, pad, ConvAlgo::direct);
    const Tensor ref = oracle::conv2d_naive(x, k, b, stride, pad);
    REQUIRE(fast.shape() == ref.shape());
    CHECK(oracle::max_abs_diff(fast, ref) <= 1e-5f);
    CHECK(oracle::max_abs_diff(direct, ref) <= 1e-5f);  // both algos behind one contract
  }
}

TEST_CASE("conv3d hand cases and naive oracle") {
  SECTION("1x1x1x1 identity") {
    Tensor x({1, 1, 1, 1}, {2.25f});
    Tensor k({1, 1, 1, 1, 1}, {1.0f});
    const Tensor y = conv3d(nullptr, x, k, Tensor(), 1, 0);
    CHECK(y.data()[0] == 2.25f);
  }
  SECTION("2x2x2 all-ones kernel sums 8 ones") {
    Tensor x({1, 2, 2, 2}, std::vector<float>(8, 1.0f));
    Tensor k({1, 1, 2, 2, 2}, std::vector<float>(8, 1.0f));
    Tensor b({1}, {0.0f});
    const Tensor y = conv3d(nullptr, x, k, b, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.data()[0] == 8.0f);
  }
  SECTION("randomized vs naive") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
      const int C = 1 + static_cast<int>(rng.below(3));
      const int kernel = 1 + static_cast<int>(rng.below(5));
      const int stride = 1 + static_cast<int>(rng.below(3));
      const int pad = static_cast<int>(rng.below(2));
      const int D = kernel + static_cast<int>(rng.below(6));
      const int H = kernel + static_cast<int>(rng.below(8));
      const int W = kernel + static_cast<int>(rng.below(8));
      const int F = 1 + static_cast<int>(rng.below(3));
      Tensor x = random_tensor({C, D, H, W}, rng);
      Tensor k = random_tensor({F, C, kernel, kernel, kernel}, rng);
      Tensor b = random_tensor({F}, rng);
      const Tensor fast = conv3d(nullptr, x, k, b, stride, pad);
      const Tensor ref = oracle::conv3d_naive(x, k, b, stride, pad);
      REQUIRE(fast.shape() == ref.shape());
      CHECK(oracle::max_abs_diff(fast, ref) <= 1e-5f);
    }
  }
}

TEST_CASE("maxpool basics, tie rule, and oracle equivalence") {
  SECTION("window 2 over [[1,2],[3,4]] gives 4") {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    const Tensor y = maxpool(nullptr, x, 2, 2, 2);
    REQUIRE(y.shape() == Shape{1, 1, 1});
    CHECK(y.data()[0] == 4.0f);
  }
  SECTION("constant input: backward routes to the first tie position only") {
    Tensor x({1, 2, 2}, {5, 5, 5, 5});
    x.set_requires_grad(true);
    Graph g;
    Tensor y = maxpool(&g, x, 2, 2, 2);
    Tensor loss = sum(&g, y);
    g.backward(loss);
    const auto gx = g.grad(x);
    CHECK(gx == std::vector<float>{1, 0, 0, 0});
  }
  SECTION("randomized vs naive, 2d and 3d") {
    Rng rng(5150);
    for (int trial = 0; trial < 20; ++trial) {
      const int C = 1 + static_cast<int>(rng.below(3));
      const int window = 1 + static_cast<int>(rng.below(3));
      const int stride = 1 + static_cast<int>(rng.below(3));
      const int H = window + static_cast<int>(rng.below(9));
      const int W = window + static_cast<int>(rng.below(9));
      Tensor x2 = random_tensor({C, H, W}, rng);
      CHECK(oracle::max_abs_diff(maxpool(nullptr, x2, window, stride, 2),
                                 oracle::maxpool2d_naive(x2, window, stride)) == 0.0f);
      const int D = window + static_cast<int>(rng.below(5));
      Tensor x3 = random_tensor({C, D, H, W}, rng);
      CHECK(oracle::max_abs_diff(maxpool(nullptr, x3, window, stride, 3),
                                 oracle::maxpool3d_naive(x3, window, stride)) == 0.0f);
    }
  }
  SECTION("window larger than extent is rejected") {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(maxpool(nullptr, x, 3, 1, 2), Error);
  }
}

TEST_CASE("batchnorm normalizes per channel in train mode") {
  Rng rng(99);
  const int N = 8, C = 3, S = 10;
  Tensor x({N, C, S});
  for (std::int64_t i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(rng.normal(2.0, 3.0));
  Tensor gamma = Tensor::full({C}, 1.0f);
  Tensor beta({C});
  Tensor rmean({C});
  Tensor rvar = Tensor::full({C}, 1.0f);

  const Tensor y = batchnorm(nullptr, x, gamma, beta, rmean, rvar, true);
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int n = 0; n < N; ++n)
      for (int s = 0; s < S; ++s) {
        const float v = y.data()[(n * C + c) * S + s];
        sum += v;
        sumsq += static_cast<double>(v) * v;
      }
    const double mean = sum / (N * S);
    const double var = sumsq / (N * S) - mean * mean;
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }

  SECTION("gamma 0 collapses the output to beta") {
    Tensor zero_gamma({C});
    Tensor beta2({C}, {0.5f, -1.0f, 2.0f});
    const Tensor z = batchnorm(nullptr, x, zero_gamma, beta2, rmean, rvar, true);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int s = 0; s < S; ++s) CHECK(z.data()[(n * C + c) * S + s] == beta2.data()[c]);
  }

  SECTION("train mode requires N >= 2") {
    Tensor single({1, C, S});
    CHECK_THROWS_MATCHES(batchnorm(nullptr, single, gamma, beta, rmean, rvar, true), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::degenerate_batch;
                         }));
  }

  SECTION("running stats feed eval mode") {
    Tensor rm({C}), rv = Tensor::full({C}, 1.0f);
    (void)batchnorm(nullptr, x, gamma, beta, rm, rv, true, 1.0f);  // momentum 1: copy batch stats
    const Tensor e = batchnorm(nullptr, x, gamma, beta, rm, rv, false);
    const Tensor t = batchnorm(nullptr, x, gamma, beta, rm, rv, true);
    CHECK(oracle::max_abs_diff(e, t) < 1e-4f);
  }
}

TEST_CASE("relu, dense, dropout, softmax cross-entropy basics") {
  SECTION("relu clamps negatives") {
    Tensor x({2}, {-1.0f, 2.0f});
    const Tensor y = relu(nullptr, x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 2.0f);
  }
  SECTION("two equal logits give loss ln 2") {
    Tensor logits({2}, {0.7f, 0.7f});
    const Tensor loss = softmax_cross_entropy(nullptr, logits, {1});
    CHECK(loss.item() == Approx(0.6931472).epsilon(1e-5));
  }
  SECTION("dropout zero fraction concentrates at p") {
    Rng rng(4242);
    Tensor x = Tensor::full({1000000}, 1.0f);
    const Tensor y = dropout(nullptr, x, 0.5f, rng, true);
    std::int64_t zeros = 0;
    for (std::int64_t i = 0; i < y.size(); ++i) zeros += y.data()[i] == 0.0f;
    const double frac = static_cast<double>(zeros) / static_cast<double>(y.size());
    CHECK(frac == Approx(0.5).margin(0.002));
    // survivors are scaled by 1/(1-p)
    for (std::int64_t i = 0; i < 100; ++i)
      CHECK((y.data()[i] == 0.0f || y.data()[i] == 2.0f));
  }
  SECTION("dropout identity in eval mode") {
    Rng rng(1);
    Tensor x = Tensor::full({64}, 3.0f);
    const Tensor y = dropout(nullptr, x, 0.5f, rng, false);
    CHECK(y.buffer() == x.buffer());
  }
  SECTION("drop probability 1 is rejected") {
    Rng rng(1);
    Tensor x({4});
    CHECK_THROWS_MATCHES(dropout(nullptr, x, 1.0f, rng, true), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::invalid_drop_probability;
                         }));
  }
  SECTION("dense computes the affine map") {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor w({2, 3}, {1, 0, 0, 0, 1, 0});
    Tensor b({2}, {10.0f, 20.0f});
    const Tensor y = dense(nullptr, x, w, b);
    REQUIRE(y.shape() == Shape{2, 2});
    CHECK(y.data()[0] == 11.0f);
    CHECK(y.data()[1] == 22.0f);
    CHECK(y.data()[2] == 14.0f);
    CHECK(y.data()[3] == 25.0f);
  }
}

TEST_CASE("backward: sum gives ones, product rule holds") {
  SECTION("loss = sum(x) -> grad all ones") {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    x.set_requires_grad(true);
    Graph g;
    Tensor loss = sum(&g, x);
    g.backward(loss);
    CHECK(g.grad(x) == std::vector<float>(6, 1.0f));
  }
  SECTION("loss = x*y at (2,3) -> grads (3,2)") {
    Tensor x = Tensor::scalar(2.0f);
    Tensor y = Tensor::scalar(3.0f);
    Graph g;
    Tensor loss = mul(&g, x, y);
    g.backward(loss);
    CHECK(g.grad(x)[0] == 3.0f);
    CHECK(g.grad(y)[0] == 2.0f);
  }
  SECTION("disconnected tensor reports zeros and a flag") {
    Tensor x = Tensor::scalar(1.0f);
    Tensor unrelated = Tensor::scalar(5.0f);
    Graph g;
    Tensor loss = sum(&g, x);
    g.backward(loss);
    CHECK_FALSE(g.reached(unrelated));
    CHECK(g.grad(unrelated) == std::vector<float>{0.0f});
  }
  SECTION("one backward per graph") {
    Tensor x = Tensor::scalar(1.0f);
    Graph g;
    Tensor loss = sum(&g, x);
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), Error);
  }
}

TEST_CASE("forward is deterministic given seed, dropout included") {
  auto run = [] {
    Rng drop_rng(123);
    Rng init(9);
    Tensor x = random_tensor({4, 16}, init);
    Tensor w = random_tensor({8, 16}, init);
    Tensor b = random_tensor({8}, init);
    Tensor h = dense(nullptr, x, w, b);
    h = relu(nullptr, h);
    h = dropout(nullptr, h, 0.5f, drop_rng, true);
    return h;
  };
  const Tensor a = run();
  const Tensor b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * 4) == 0);
}

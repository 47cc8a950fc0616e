#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "xmae/errors.hpp"
#include "xmae/nn.hpp"

using namespace xmae;
using namespace xmae::nn;

namespace {

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Scalar objective L = Σ c_i y_i with fixed coefficients, so grad_y = c.
double objective(const Mlp& mlp, const Vec& x, const DropoutMasks& masks, const Vec& c) {
  return dot(forward_with_masks(mlp, x, masks).y.span(), c.span());
}

}  // namespace

TEST_CASE("interpolated sizes") {
  CHECK(interpolated_sizes(64, 16) == std::vector<std::size_t>{64, 40, 25, 16});
  CHECK(interpolated_sizes(16, 16) == std::vector<std::size_t>{16, 16, 16, 16});
  CHECK(interpolated_sizes(6, 2, 1) == std::vector<std::size_t>{6, 2});
}

TEST_CASE("init: determinism and the Glorot bound") {
  const std::vector<std::size_t> sizes{1024, 662, 445, 300};
  Rng r1(7), r2(7);
  const Mlp a = init_mlp(sizes, 0.5, r1);
  const Mlp b = init_mlp(sizes, 0.5, r2);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weight.span()[0] == b.layers[l].weight.span()[0]);
    CHECK(std::equal(a.layers[l].weight.span().begin(), a.layers[l].weight.span().end(),
                     b.layers[l].weight.span().begin()));
    const double bound = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
    for (double w : a.layers[l].weight.span()) CHECK_LE(std::abs(w), bound);
    for (double bias : a.layers[l].bias) CHECK(bias == 0.0);
  }
}

TEST_CASE("init: empirical weight mean over a 1024x662 layer") {
  const std::vector<std::size_t> sizes{1024, 662};
  Rng rng(7);
  const Mlp m = init_mlp(sizes, 0.0, rng);
  double sum = 0.0;
  for (double w : m.layers[0].weight.span()) sum += w;
  CHECK(std::abs(sum / static_cast<double>(m.layers[0].weight.span().size())) < 0.005);
}

TEST_CASE("forward: zero network gives zero output") {
  Rng rng(1);
  const std::vector<std::size_t> sizes{5, 4, 3, 2};
  Mlp m = init_mlp(sizes, 0.0, rng);
  for (auto& layer : m.layers) {
    for (double& w : layer.weight.span()) w = 0.0;
  }
  CHECK(infer(m, random_vec(5, rng)) == Vec(2));
}

TEST_CASE("forward: identity path passes nonnegative input through") {
  Rng rng(1);
  const std::vector<std::size_t> sizes{3, 3, 3, 3};
  Mlp m = init_mlp(sizes, 0.0, rng);
  for (auto& layer : m.layers) {
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 3; ++c) layer.weight(r, c) = r == c ? 1.0 : 0.0;
    }
  }
  const Vec x{0.5, 0.0, 2.25};
  CHECK(infer(m, x) == x);
  CHECK(forward(m, x, rng).y == x);  // dropout 0: Train equals Eval
}

TEST_CASE("forward: Monte-Carlo mean of inverted dropout matches Eval") {
  Rng rng(21);
  const std::vector<std::size_t> sizes{6, 5, 4, 3};
  Mlp m = init_mlp(sizes, 0.5, rng);
  // Positive weights keep the ReLUs active so the expectation is linear in the masks.
  for (auto& layer : m.layers) {
    for (double& w : layer.weight.span()) w = std::abs(w);
  }
  Vec x(6);
  for (double& v : x) v = 0.5 + rng.uniform();
  m.mode = Mode::Eval;
  const Vec expected = infer(m, x);
  m.mode = Mode::Train;
  Vec mean(3);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) mean += forward(m, x, rng).y;
  mean *= 1.0 / draws;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(mean[i] - expected[i]) <= 0.02 * std::abs(expected[i]));
  }
}

TEST_CASE("forward: dropout only in Train mode, Eval is deterministic") {
  Rng rng(2);
  const std::vector<std::size_t> sizes{4, 6, 6, 2};
  Mlp m = init_mlp(sizes, 0.5, rng);
  const Vec x = random_vec(4, rng);
  m.mode = Mode::Eval;
  const auto r = forward(m, x, rng);
  CHECK(r.cache.masks.empty());
  CHECK(r.y == infer(m, x));
  m.mode = Mode::Train;
  CHECK_FALSE(forward(m, x, rng).cache.masks.empty());
}

TEST_CASE("backward: zero upstream gradient gives zero gradients") {
  Rng rng(3);
  const std::vector<std::size_t> sizes{4, 3, 3, 2};
  const Mlp m = init_mlp(sizes, 0.0, rng);
  const auto fw = forward(m, random_vec(4, rng), rng);
  const auto bw = backward(m, fw.cache, Vec(2));
  CHECK(bw.grad_x == Vec(4));
  for (const auto& layer : bw.grads.layers) {
    for (double g : layer.weight.span()) CHECK(g == 0.0);
    for (double g : layer.bias) CHECK(g == 0.0);
  }
}

TEST_CASE("backward: single linear layer, L = |y|^2 / 2 gives grad_W = y x^T") {
  Rng rng(4);
  const std::vector<std::size_t> sizes{3, 2};
  const Mlp m = init_mlp(sizes, 0.0, rng);
  const Vec x = random_vec(3, rng);
  const auto fw = forward(m, x, rng);
  const auto bw = backward(m, fw.cache, fw.y);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(bw.grads.layers[0].weight(r, c) == doctest::Approx(fw.y[r] * x[c]).epsilon(1e-14));
    }
    CHECK(bw.grads.layers[0].bias[r] == doctest::Approx(fw.y[r]));
  }
}

TEST_CASE("backward: 6-4-3-2 network matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::vector<std::size_t> sizes{6, 4, 3, 2};
    Mlp m = init_mlp(sizes, 0.3, rng);
    for (auto& layer : m.layers) {
      for (double& b : layer.bias) b = 0.1 * rng.normal();
    }
    const Vec x = random_vec(6, rng);
    const Vec c = random_vec(2, rng);
    const auto fw = forward(m, x, rng);
    const DropoutMasks masks = fw.cache.masks;
    const auto bw = backward(m, fw.cache, c);

    const double eps = 1e-5;
    auto check_param = [&](double& p, double analytic) {
      const double saved = p;
      p = saved + eps;
      const double up = objective(m, x, masks, c);
      p = saved - eps;
      const double down = objective(m, x, masks, c);
      p = saved;
      const double numeric = (up - down) / (2 * eps);
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      CHECK(std::abs(analytic - numeric) / scale <= 1e-4);
    };
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      auto w = m.layers[l].weight.span();
      auto gw = bw.grads.layers[l].weight.span();
      for (std::size_t i = 0; i < w.size(); ++i) check_param(w[i], gw[i]);
      for (std::size_t i = 0; i < m.layers[l].bias.dim(); ++i) {
        check_param(m.layers[l].bias[i], bw.grads.layers[l].bias[i]);
      }
    }
    // Input gradient too.
    Vec xp = x;
    for (std::size_t i = 0; i < x.dim(); ++i) {
      xp[i] = x[i] + eps;
      const double up = objective(m, xp, masks, c);
      xp[i] = x[i] - eps;
      const double down = objective(m, xp, masks, c);
      xp[i] = x[i];
      CHECK(bw.grad_x[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-6));
    }
  }
}

TEST_CASE("backward: invalid cache is a contract violation") {
  Rng rng(5);
  const std::vector<std::size_t> sizes{4, 3, 2};
  const Mlp m = init_mlp(sizes, 0.0, rng);
  ForwardCache empty;
  CHECK_THROWS_AS(backward(m, empty, Vec(2)), ContractViolation);
  const auto fw = forward(m, random_vec(4, rng), rng);
  CHECK_THROWS_AS(backward(m, fw.cache, Vec(3)), InvalidArgument);
}

TEST_CASE("gradient accumulation is additive") {
  Rng rng(6);
  const std::vector<std::size_t> sizes{4, 3, 2};
  const Mlp m = init_mlp(sizes, 0.0, rng);
  const auto f1 = forward(m, random_vec(4, rng), rng);
  const auto f2 = forward(m, random_vec(4, rng), rng);
  const Vec g1 = random_vec(2, rng), g2 = random_vec(2, rng);
  MlpGrads accum = zero_grads(m);
  backward(m, f1.cache, g1, accum);
  backward(m, f2.cache, g2, accum);
  MlpGrads expect = backward(m, f1.cache, g1).grads;
  add_scaled(expect, backward(m, f2.cache, g2).grads, 1.0);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto a = accum.layers[l].weight.span();
    auto b = expect.layers[l].weight.span();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]));
  }
}

TEST_CASE("save/load round trip is exact and returns an Eval-mode net") {
  Rng rng(8);
  const std::vector<std::size_t> sizes{5, 4, 3, 2};
  const Mlp m = init_mlp(sizes, 0.25, rng, true);
  const auto path = (std::filesystem::temp_directory_path() / "xmae_test_mlp.xmae").string();
  save_mlp(path, m, 8);
  const Mlp back = load_mlp(path);
  CHECK(back.mode == Mode::Eval);
  CHECK(back.dropout_rate == 0.25);
  CHECK(back.relu_on_output);
  CHECK(back.sizes() == m.sizes());
  const Vec x = random_vec(5, rng);
  CHECK(infer(back, x) == infer(m, x));
  std::filesystem::remove(path);
}

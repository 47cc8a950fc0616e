#include <doctest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "xmae/errors.hpp"
#include "xmae/losses.hpp"

using namespace xmae;
using namespace xmae::losses;
using xmae::testing::random_vec;

namespace {

// A hand-built forward result; total_loss only reads the outputs.
PairForward outputs(Vec v, Vec t, Vec v_recon, Vec t_recon, Vec v_cross, Vec t_cross, Vec z_v,
                    Vec z_t) {
  PairForward pf;
  pf.v = std::move(v);
  pf.t = std::move(t);
  pf.v_recon = std::move(v_recon);
  pf.t_recon = std::move(t_recon);
  pf.v_cross = std::move(v_cross);
  pf.t_cross = std::move(t_cross);
  pf.z_v = std::move(z_v);
  pf.z_t = std::move(z_t);
  return pf;
}

Vec unit_at(double cos_to_x) { return Vec{cos_to_x, std::sqrt(1.0 - cos_to_x * cos_to_x)}; }

}  // namespace

TEST_CASE("recons_loss") {
  const Vec v{3, 4}, t{1, 2};
  CHECK(recons_loss(v, t, v, t) == 0.0);
  CHECK(recons_loss(v, t, Vec{0, 0}, t) == 5.0);
  CHECK(recons_loss(v, t, Vec{0, 0}, t, true) == 25.0);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Vec a = random_vec(5, rng), b = random_vec(3, rng);
    const Vec ar = random_vec(5, rng), br = random_vec(3, rng);
    CHECK(recons_loss(a, b, ar, br) ==
          doctest::Approx(l2_distance(a, ar) + l2_distance(b, br)).epsilon(1e-14));
  }
}

TEST_CASE("joint_loss") {
  CHECK(joint_loss(Vec{1, 2}, Vec{1, 2}) == 0.0);
  CHECK(joint_loss(Vec{3, 4}, Vec{0, 0}) == 5.0);
  Rng rng(2);
  const Vec a = random_vec(4, rng), b = random_vec(4, rng);
  CHECK(joint_loss(a, b) == doctest::Approx(l2_distance(a, b)));
}

TEST_CASE("cross_loss") {
  const Vec v{1, 1}, t{2, 2};
  CHECK(cross_loss(v, t, v, t) == 0.0);
  CHECK(cross_loss(v, t, v, Vec{2, 7}) == 5.0);
  Rng rng(3);
  const Vec a = random_vec(5, rng), b = random_vec(3, rng);
  const Vec ac = random_vec(5, rng), bc = random_vec(3, rng);
  CHECK(cross_loss(a, b, ac, bc) ==
        doctest::Approx(l2_distance(a, ac) + l2_distance(b, bc)).epsilon(1e-14));
}

TEST_CASE("rank_loss hinge values") {
  CHECK(rank_loss(0.9, 0.1, 0.5) == 0.0);
  CHECK(rank_loss(0.3, 0.3, 0.5) == 0.5);
  CHECK(rank_loss(0.2, 0.1, 0.5) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(rank_loss(0.2, 0.1, 0.0), InvalidArgument);
  CHECK(rank_loss(Vec{1, 0}, unit_at(0.2), Vec{1, 0}, unit_at(0.1), 0.5) ==
        doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("total_loss: weighting arithmetic") {
  // recons 2, cross 3, rank 0.4.
  const auto pf = outputs(Vec{2, 0}, Vec{0, 1}, Vec{0, 0}, Vec{0, 1}, Vec{2, 0}, Vec{3, 1},
                          Vec{1, 0}, unit_at(0.2));
  NegativeLatents neg;
  neg.z_v = Vec{1, 0};
  neg.z_t = unit_at(0.1);
  LossWeights w;  // (1, 0, 1, 1)
  const auto r = total_loss(pf, &neg, w);
  CHECK(r.components.recons == doctest::Approx(2.0));
  CHECK(r.components.cross == doctest::Approx(3.0));
  CHECK(r.components.rank == doctest::Approx(0.4));
  CHECK(r.total == doctest::Approx(5.4));

  LossWeights recons_only{1, 0, 0, 0};
  CHECK(total_loss(pf, nullptr, recons_only).total ==
        recons_loss(pf.v, pf.t, pf.v_recon, pf.t_recon));
}

TEST_CASE("total_loss: validation and missing negatives") {
  const auto pf = outputs(Vec{1}, Vec{1}, Vec{1}, Vec{1}, Vec{1}, Vec{1}, Vec{1}, Vec{1});
  CHECK_THROWS_AS(total_loss(pf, nullptr, LossWeights{}), InvalidArgument);
  CHECK_THROWS_AS(total_loss(pf, nullptr, LossWeights{0, 0, 0, 0}), InvalidArgument);
  CHECK_THROWS_AS(total_loss(pf, nullptr, LossWeights{-1, 0, 1, 0}), InvalidArgument);
  LossWeights bad_margin{1, 0, 0, 0};
  bad_margin.margin = 0.0;
  CHECK_THROWS_AS(total_loss(pf, nullptr, bad_margin), InvalidArgument);
}

TEST_CASE("subgradients: zero at the norm singularity and an inactive hinge") {
  CHECK(norm_gradient(Vec{0, 0, 0}, false) == Vec(3));
  const Vec unit = norm_gradient(Vec{3, 4}, false);
  CHECK(unit[0] == doctest::Approx(0.6));
  CHECK(unit[1] == doctest::Approx(0.8));
  CHECK(norm_gradient(Vec{3, 4}, true) == Vec{6, 8});
  const auto pf = outputs(Vec{1}, Vec{1}, Vec{1}, Vec{1}, Vec{1}, Vec{1}, Vec{1, 0}, Vec{1, 0});
  NegativeLatents neg;
  neg.z_v = Vec{1, 0};
  neg.z_t = Vec{-1, 0};  // s_pos − s_neg = 2 > margin: hinge inactive
  const auto r = total_loss(pf, &neg, LossWeights{1, 1, 1, 1});
  CHECK(r.components.rank == 0.0);
  CHECK(r.grads.z_v == Vec(2));
  CHECK(r.grads.z_v_neg.dim() == 0);
  CHECK(r.total == 0.0);
}

TEST_CASE("cosine gradient matches finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Vec a = random_vec(5, rng);
    const Vec b = random_vec(5, rng);
    const Vec g = cosine_gradient(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
      const double saved = a[i];
      a[i] = saved + 1e-6;
      const double up = cosine_similarity(a, b);
      a[i] = saved - 1e-6;
      const double down = cosine_similarity(a, b);
      a[i] = saved;
      CHECK(g[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("property: every loss composition passes the gradient check") {
  const LossWeights compositions[] = {
      {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {1, 0, 1, 1}, {0.1, 1, 1, 0}, {1, 1, 1, 1}};
  std::uint64_t seed = 300;
  for (const auto& w : compositions) {
    for (bool squared : {false, true}) {
      LossWeights ws = w;
      ws.squared_norms = squared;
      const auto r = xmae::testing::gradient_check(seed++, ws);
      CHECK(r.max_rel_error <= 1e-4);
    }
  }
}

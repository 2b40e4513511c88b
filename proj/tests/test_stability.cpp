#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "imc/stability.hpp"

using namespace imc;

namespace {

GruLayerWeights zero_layer(int n = 3, int m = 2) {
  return GruLayerWeights::zeros(n, m);
}

}  // namespace

TEST_CASE("bounds of the all-zero layer") {
  const auto b = layer_bounds(zero_layer());
  CHECK(b.sigma_z == doctest::Approx(0.5));
  CHECK(b.sigma_f == doctest::Approx(0.5));
  CHECK(b.phi_r == doctest::Approx(0.0));
}

TEST_CASE("sigma bound is the sigmoid of the worst row sum") {
  auto l = zero_layer();
  l.W_z(1, 0) = 1.5;
  l.W_z(1, 1) = -0.5;  // worst row: |1.5| + |-0.5| = 2
  const auto b = layer_bounds(l);
  CHECK(b.sigma_z == doctest::Approx(0.8807970779778823));
}

TEST_CASE("column permutation leaves the bounds unchanged") {
  Rng rng(3);
  auto l = zero_layer(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) l.W_f(i, j) = rng.uniform(-2, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) l.U_f(i, j) = rng.uniform(-2, 2);
  const double before = layer_bounds(l).sigma_f;
  l.W_f.col(0).swap(l.W_f.col(2));
  l.U_f.col(1).swap(l.U_f.col(3));
  CHECK(layer_bounds(l).sigma_f == doctest::Approx(before).epsilon(1e-15));
}

TEST_CASE("residual hand values") {
  SUBCASE("all-zero layer sits at -1") {
    CHECK(delta_iss_residual(zero_layer()) == doctest::Approx(-1.0));
  }
  SUBCASE("||U_r|| = 2 alone is exactly the boundary") {
    auto l = zero_layer();
    l.U_r(0, 0) = 2.0;
    // nu = 2*(0 + sigmoid(tanh-norm... sigma_f stays 0.5)) - 1 = 0
    CHECK(delta_iss_residual(l) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("||U_z|| = 1 alone gives -0.5") {
    auto l = zero_layer();
    l.U_z(2, 1) = 1.0;
    // sigma_z = sigmoid(1), phi_r = 0, so nu = 1/4 * 1/(1-sigmoid(1)) - 1
    const double sz = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(delta_iss_residual(l) == doctest::Approx(0.25 / (1.0 - sz) - 1.0));
  }
}

TEST_CASE("certificate aggregates layers") {
  GruNetwork net = GruNetwork::zeros(2, {3, 3}, 1, OutputActivation::Identity);
  auto cert = certify(net);
  CHECK(cert.certified);
  CHECK(cert.margin == doctest::Approx(1.0));
  REQUIRE(cert.layers.size() == 2);
  CHECK(cert.layers[0].residual == doctest::Approx(-1.0));
  CHECK(cert.layers[0].lhs - cert.layers[0].rhs ==
        doctest::Approx(cert.layers[0].residual));

  net.layers[1].U_r(0, 0) = 2.0;  // boundary layer: nu = 0, not < 0
  cert = certify(net);
  CHECK_FALSE(cert.certified);
}

TEST_CASE("penalty is a hinge with the documented values") {
  CHECK(penalty(-0.1, -0.05, 10.0) == doctest::Approx(0.0));
  CHECK(penalty(0.05, -0.05, 10.0) == doctest::Approx(1.0));
  CHECK(penalty(-0.05, -0.05, 10.0) == doctest::Approx(0.0));
  CHECK(penalty_subgradient(-0.1, -0.05, 10.0) == doctest::Approx(0.0));
  CHECK(penalty_subgradient(0.0, -0.05, 10.0) == doctest::Approx(10.0));
  CHECK_THROWS_AS(penalty(0.0, 0.1, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(penalty(0.0, -0.1, -1.0), std::invalid_argument);

  SUBCASE("convex, piecewise linear, nonnegative") {
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
      const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
      const double t = rng.uniform(0, 1);
      const double lhs = penalty(t * a + (1 - t) * b, -0.05, 10.0);
      const double rhs =
          t * penalty(a, -0.05, 10.0) + (1 - t) * penalty(b, -0.05, 10.0);
      CHECK(lhs <= rhs + 1e-12);
      CHECK(penalty(a, -0.05, 10.0) >= 0.0);
      if (a <= -0.05) CHECK(penalty(a, -0.05, 10.0) == 0.0);
    }
  }
}

TEST_CASE("scaling the recurrent blocks up never decreases a residual") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    GruNetwork net = imctest::random_net(rng, 2, {rng.uniform_int(2, 5)}, 1,
                                         OutputActivation::Identity,
                                         rng.uniform(0.1, 1.5));
    auto& l = net.layers[0];
    const double nu0 = delta_iss_residual(l);
    const double s = rng.uniform(1.0, 3.0);
    l.U_z *= s;
    l.U_f *= s;
    l.U_r *= s;
    CHECK(delta_iss_residual(l) >= nu0 - 1e-12);
  }
}

TEST_CASE("rescale_to_margin lands every layer at or below the target") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    GruNetwork net = imctest::random_net(rng, 2, {4, 4}, 2,
                                         OutputActivation::Identity, 2.0);
    const double factor = rescale_to_margin(net, -0.05);
    CHECK(factor <= 1.0);
    CHECK(factor > 0.0);
    for (const auto& l : net.layers) CHECK(delta_iss_residual(l) <= -0.05 + 1e-9);
  }
  GruNetwork net = GruNetwork::zeros(2, {3}, 1, OutputActivation::Identity);
  CHECK(rescale_to_margin(net, -0.05) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rescale_to_margin(net, -1.5), std::invalid_argument);
}

TEST_CASE("certified nets contract in practice") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    GruNetwork net = imctest::random_certified_net(rng, 2, {3, 3}, 1,
                                                   OutputActivation::Identity);
    GruState a = GruState::zero(net), b = GruState::zero(net);
    for (int i = 0; i < a.xi.size(); ++i) {
      a.xi(i) = rng.uniform(-1, 1);
      b.xi(i) = rng.uniform(-1, 1);
    }
    const double d0 = (a.xi - b.xi).norm();
    VectorXd v(2);
    for (int k = 0; k < 1500; ++k) {
      v << rng.uniform(-1, 1), rng.uniform(-1, 1);
      a = step(net, a, v).first;
      b = step(net, b, v).first;
    }
    CHECK((a.xi - b.xi).norm() < d0);
    CHECK((a.xi - b.xi).norm() / d0 < 1e-2);
  }
}

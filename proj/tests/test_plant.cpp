#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "imc/plant.hpp"
#include "imc/rng.hpp"

using namespace imc;

TEST_CASE("derivatives vanish with empty tanks and pumps off") {
  const TankParams p = TankParams::benchmark();
  TankState s;
  const auto d = tank_derivatives(s, 0.0, 0.0, p);
  CHECK(d.isZero(0.0));
}

TEST_CASE("analytic fourth-tank equilibrium") {
  const TankParams p = TankParams::benchmark();
  const double q_a = 5e-4;
  const double h4 = std::pow((1.0 - p.gamma_a) * q_a / p.a4, 2) / (2.0 * p.g);
  CHECK(h4 == doctest::Approx(0.8026).epsilon(1e-3));

  TankState s;
  s.h << 0.0, 0.0, 0.0, h4;
  const auto d = tank_derivatives(s, q_a, 0.0, p);
  CHECK(d(3) == doctest::Approx(0.0).epsilon(1e-12));

  SUBCASE("settling reproduces it") {
    const TankState settled = tank_settle(p, q_a, 0.0, 25.0);
    CHECK(settled.h(3) == doctest::Approx(h4).epsilon(1e-4 / h4));
  }
}

TEST_CASE("maximum pumps from empty tanks raise every level") {
  const TankParams p = TankParams::benchmark();
  TankState s;
  const auto d = tank_derivatives(s, p.q_max[0], p.q_max[1], p);
  for (int i = 0; i < 4; ++i) CHECK(d(i) > 0.0);
}

TEST_CASE("negative levels are a domain error") {
  const TankParams p = TankParams::benchmark();
  TankState s;
  s.h << 0.1, -0.01, 0.1, 0.1;
  CHECK_THROWS_AS(tank_derivatives(s, 0, 0, p), std::domain_error);
}

TEST_CASE("equilibrium input held keeps the settled state fixed") {
  const TankParams p = TankParams::benchmark();
  const TankState settled = tank_settle(p, 4.5e-4, 6.5e-4, 25.0);
  const TankState next = tank_step(settled, 4.5e-4, 6.5e-4, p, 25.0);
  CHECK((next.h - settled.h).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("pure drainage never raises a level and loses volume") {
  const TankParams p = TankParams::benchmark();
  TankState s;
  s.h << 1.2, 0.8, 1.0, 0.5;
  double volume = p.S * s.h.sum();
  for (int k = 0; k < 40; ++k) {
    const TankState next = tank_step(s, 0.0, 0.0, p, 25.0);
    for (int i = 0; i < 4; ++i) CHECK(next.h(i) <= s.h(i) + 1e-12);
    const double v2 = p.S * next.h.sum();
    CHECK(v2 <= volume + 1e-12);
    volume = v2;
    s = next;
  }
}

TEST_CASE("halving the substep changes a 25 s step by less than 1e-6 m") {
  const TankParams p = TankParams::benchmark();
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    TankState s;
    for (int i = 0; i < 4; ++i) s.h(i) = rng.uniform(0.01, p.h_max[i]);
    const double qa = rng.uniform(0.0, p.q_max[0]);
    const double qb = rng.uniform(0.0, p.q_max[1]);
    const TankState coarse = tank_step(s, qa, qb, p, 25.0, 1.0);
    const TankState fine = tank_step(s, qa, qb, p, 25.0, 0.5);
    CHECK((coarse.h - fine.h).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("levels respect their bounds after stepping") {
  const TankParams p = TankParams::benchmark();
  TankState s;
  s.h << 1.35, 1.35, 1.29, 1.29;
  for (int k = 0; k < 200; ++k) {
    s = tank_step(s, p.q_max[0], p.q_max[1], p, 25.0);
    for (int i = 0; i < 4; ++i) {
      CHECK(s.h(i) >= 0.0);
      CHECK(s.h(i) <= p.h_max[i]);
    }
  }
}

TEST_CASE("settled h1 responds monotonically to q_a") {
  const TankParams p = TankParams::benchmark();
  double prev = -1.0;
  for (double qa : {2e-4, 3.5e-4, 5e-4, 6.5e-4}) {
    const TankState s = tank_settle(p, qa, 5e-4, 25.0);
    CHECK(s.h(0) > prev);
    prev = s.h(0);
  }
}

TEST_CASE("normalizer maps the level bounds onto [-1,1]") {
  const TankParams p = TankParams::benchmark();
  const Normalizer n = Normalizer::benchmark(p);
  CHECK(n.to_unit("h1", 0.0) == doctest::Approx(-1.0));
  CHECK(n.to_unit("h1", 1.36) == doctest::Approx(1.0));
  CHECK(n.to_unit("h1", 0.68) == doctest::Approx(0.0));
  CHECK_THROWS_AS(n.to_unit("h9", 0.0), std::invalid_argument);

  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(0.0, 1.36);
    CHECK(std::abs(n.to_unit("h1", n.from_unit("h1", n.to_unit("h1", x))) -
                   n.to_unit("h1", x)) < 1e-12);
    CHECK(std::abs(n.from_unit("h1", n.to_unit("h1", x)) - x) < 1e-12);
  }
}

TEST_CASE("measurement noise behaves") {
  const TankParams p = TankParams::benchmark();
  const Normalizer n = Normalizer::benchmark(p);
  TankState s;
  s.h << 0.68, 0.34, 0.1, 0.2;

  SUBCASE("noiseless mode is exact") {
    const auto y = measure(s, n, 0.0, nullptr);
    CHECK(y(0) == doctest::Approx(0.0));
    CHECK(y(1) == doctest::Approx(-0.5));
  }
  SUBCASE("fixed seed reproduces the sequence") {
    Rng a(5), b(5);
    for (int k = 0; k < 10; ++k) {
      const auto ya = measure(s, n, 0.01, &a);
      const auto yb = measure(s, n, 0.01, &b);
      CHECK(ya(0) == yb(0));
      CHECK(ya(1) == yb(1));
    }
  }
  SUBCASE("sample mean of the noise is centered") {
    Rng rng(99);
    const int N = 100000;
    double acc = 0.0;
    for (int k = 0; k < N; ++k) acc += measure(s, n, 0.01, &rng)(0) - 0.0;
    const double mean = acc / N;
    CHECK(std::abs(mean) < 3.0 * 0.01 / std::sqrt(static_cast<double>(N)));
  }
}

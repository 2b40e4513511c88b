#include "imc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace imc {

TankParams TankParams::benchmark() {
  TankParams p;
  p.a1 = 1.31e-4;
  p.a2 = 1.51e-4;
  p.a3 = 9.27e-5;
  p.a4 = 8.82e-5;
  p.S = 0.06;
  p.gamma_a = 0.3;
  p.gamma_b = 0.4;
  p.g = 9.81;
  p.h_min = {0.0, 0.0, 0.0, 0.0};
  p.h_max = {1.36, 1.36, 1.3, 1.3};
  p.q_min = {0.0, 0.0};
  p.q_max = {9e-4, 1.3e-3};
  return p;
}

void TankParams::validate() const {
  if (a1 <= 0 || a2 <= 0 || a3 <= 0 || a4 <= 0 || S <= 0)
    throw std::invalid_argument("tank params: areas must be positive");
  if (gamma_a <= 0 || gamma_a >= 1 || gamma_b <= 0 || gamma_b >= 1)
    throw std::invalid_argument("tank params: valve splits must lie in (0,1)");
  for (int i = 0; i < 4; ++i)
    if (h_min[i] >= h_max[i])
      throw std::invalid_argument("tank params: level bounds out of order");
  for (int i = 0; i < 2; ++i)
    if (q_min[i] >= q_max[i])
      throw std::invalid_argument("tank params: flow bounds out of order");
}

Eigen::Vector4d tank_derivatives(const TankState& state, double q_a, double q_b,
                                 const TankParams& p) {
  for (int i = 0; i < 4; ++i)
    if (state.h(i) < 0.0)
      throw std::domain_error("tank derivatives: negative level h" +
                              std::to_string(i + 1));
  auto outflow = [&](double a, double h) { return a * std::sqrt(2.0 * p.g * h); };
  const double o1 = outflow(p.a1, state.h(0));
  const double o2 = outflow(p.a2, state.h(1));
  const double o3 = outflow(p.a3, state.h(2));
  const double o4 = outflow(p.a4, state.h(3));
  Eigen::Vector4d d;
  d(0) = (-o1 + o3 + p.gamma_a * q_a) / p.S;
  d(1) = (-o2 + o4 + p.gamma_b * q_b) / p.S;
  d(2) = (-o3 + (1.0 - p.gamma_b) * q_b) / p.S;
  d(3) = (-o4 + (1.0 - p.gamma_a) * q_a) / p.S;
  return d;
}

namespace {

// derivative with sqrt guarded against round-off below zero
Eigen::Vector4d rhs(const Eigen::Vector4d& h, double q_a, double q_b,
                    const TankParams& p) {
  TankState s;
  s.h = h.cwiseMax(0.0);
  return tank_derivatives(s, q_a, q_b, p);
}

}  // namespace

TankState tank_step(const TankState& state, double q_a, double q_b,
                    const TankParams& p, double tau_s, double substep) {
  if (tau_s <= 0 || substep <= 0)
    throw std::invalid_argument("tank step: periods must be positive");
  q_a = std::clamp(q_a, p.q_min[0], p.q_max[0]);
  q_b = std::clamp(q_b, p.q_min[1], p.q_max[1]);

  const int n = std::max(1, static_cast<int>(std::ceil(tau_s / substep)));
  const double dt = tau_s / n;
  Eigen::Vector4d h = state.h;
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector4d k1 = rhs(h, q_a, q_b, p);
    const Eigen::Vector4d k2 = rhs(h + 0.5 * dt * k1, q_a, q_b, p);
    const Eigen::Vector4d k3 = rhs(h + 0.5 * dt * k2, q_a, q_b, p);
    const Eigen::Vector4d k4 = rhs(h + dt * k3, q_a, q_b, p);
    h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    for (int i = 0; i < 4; ++i) h(i) = std::clamp(h(i), 0.0, p.h_max[i]);
  }
  if (!h.allFinite()) throw std::runtime_error("tank step: non-finite state");
  TankState out;
  out.h = h;
  return out;
}

TankState tank_settle(const TankParams& p, double q_a, double q_b, double tau_s,
                      int max_steps, double tol) {
  TankState s;
  for (int k = 0; k < max_steps; ++k) {
    TankState next = tank_step(s, q_a, q_b, p, tau_s);
    const double delta = (next.h - s.h).lpNorm<Eigen::Infinity>();
    s = next;
    if (delta < tol) break;
  }
  return s;
}

void Normalizer::add_channel(const std::string& name, double lo, double hi) {
  if (lo >= hi) throw std::invalid_argument("normalizer: empty range for " + name);
  channels_[name] = {lo, hi};
}

const Normalizer::Range& Normalizer::channel(const std::string& name) const {
  auto it = channels_.find(name);
  if (it == channels_.end())
    throw std::invalid_argument("normalizer: unknown channel " + name);
  return it->second;
}

double Normalizer::to_unit(const std::string& name, double value) const {
  const Range& r = channel(name);
  return 2.0 * (value - r.lo) / (r.hi - r.lo) - 1.0;
}

double Normalizer::from_unit(const std::string& name, double value) const {
  const Range& r = channel(name);
  return r.lo + 0.5 * (value + 1.0) * (r.hi - r.lo);
}

Normalizer Normalizer::benchmark(const TankParams& p) {
  Normalizer n;
  n.add_channel("q_a", p.q_min[0], p.q_max[0]);
  n.add_channel("q_b", p.q_min[1], p.q_max[1]);
  n.add_channel("h1", p.h_min[0], p.h_max[0]);
  n.add_channel("h2", p.h_min[1], p.h_max[1]);
  n.add_channel("h3", p.h_min[2], p.h_max[2]);
  n.add_channel("h4", p.h_min[3], p.h_max[3]);
  return n;
}

Eigen::Vector2d measure(const TankState& state, const Normalizer& norm,
                        double noise_std, Rng* rng) {
  Eigen::Vector2d y;
  y(0) = norm.to_unit("h1", state.h(0));
  y(1) = norm.to_unit("h2", state.h(1));
  if (rng != nullptr && noise_std > 0.0) {
    y(0) += rng->normal(0.0, noise_std);
    y(1) += rng->normal(0.0, noise_std);
  }
  return y;
}

}  // namespace imc

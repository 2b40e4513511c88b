#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <string>

#include "imc/rng.hpp"

namespace imc {

// Quadruple-tank parameters. Two pumps feed four tanks through triple
// valves: flow q_a splits gamma_a into tank 1 and (1-gamma_a) into tank 4,
// q_b splits gamma_b into tank 2 and (1-gamma_b) into tank 3. Tanks 3 and 4
// drain into tanks 1 and 2.
struct TankParams {
  double a1, a2, a3, a4;  // outlet areas, m^2
  double S;               // tank cross-section, m^2
  double gamma_a, gamma_b;
  double g = 9.81;
  std::array<double, 4> h_min{};  // level bounds, m
  std::array<double, 4> h_max{};
  std::array<double, 2> q_min{};  // pump flow bounds, m^3/s
  std::array<double, 2> q_max{};

  static TankParams benchmark();
  void validate() const;
};

struct TankState {
  Eigen::Vector4d h = Eigen::Vector4d::Zero();  // levels h1..h4, m
};

// Right-hand sides of the level dynamics, e.g.
//   dh1/dt = -(a1/S) sqrt(2 g h1) + (a3/S) sqrt(2 g h3) + (gamma_a/S) q_a
// Throws on negative levels; the integrator clamps before calling.
Eigen::Vector4d tank_derivatives(const TankState& state, double q_a, double q_b,
                                 const TankParams& params);

// Advances one sampling period with fixed-step RK4 (default 1 s substeps),
// clamping flows to the pump bounds and levels into [0, h_max]. Square roots
// are guarded with max(h, 0) against round-off at empty tanks.
TankState tank_step(const TankState& state, double q_a, double q_b,
                    const TankParams& params, double tau_s, double substep = 1.0);

// Runs tank_step with constant flows until the per-step level change drops
// below tol (or max_steps elapse); returns the settled state.
TankState tank_settle(const TankParams& params, double q_a, double q_b,
                      double tau_s, int max_steps = 100000, double tol = 1e-12);

// Per-channel affine maps between physical units and [-1, 1].
class Normalizer {
 public:
  void add_channel(const std::string& name, double lo, double hi);
  double to_unit(const std::string& name, double value) const;
  double from_unit(const std::string& name, double value) const;

  // q_a, q_b, h1..h4 mapped over the Table-style bounds
  static Normalizer benchmark(const TankParams& params);

 private:
  struct Range {
    double lo, hi;
  };
  const Range& channel(const std::string& name) const;
  std::map<std::string, Range> channels_;
};

// Normalized measurement of [h1, h2] with optional white Gaussian noise
// (noise is added in normalized units). Pass rng = nullptr for noiseless.
Eigen::Vector2d measure(const TankState& state, const Normalizer& norm,
                        double noise_std, Rng* rng);

}  // namespace imc

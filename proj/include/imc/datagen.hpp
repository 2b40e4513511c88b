#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "imc/gru.hpp"
#include "imc/rng.hpp"
#include "imc/training.hpp"

namespace imc {

// Multilevel pseudo-random excitation: piecewise-constant channels holding
// random levels for random durations.
struct MprsConfig {
  int levels = 8;      // evenly spaced values across each amplitude range
  int hold_min = 10;   // steps
  int hold_max = 60;
  std::vector<std::pair<double, double>> amplitude;  // per channel, normalized
  std::uint64_t seed = 1;
};

std::vector<VectorXd> gen_mprs(const MprsConfig& cfg, int length);

// Extracts partially overlapping fixed-length training windows from a long
// experiment: offsets 0, stride, 2*stride, ...
std::vector<IoSequence> tbptt_slices(const IoSequence& source, int window,
                                     int stride);

// Discrete first-order lag with unit static gain per channel:
//   y(k+1) = alpha*y(k) + (1-alpha)*u(k),  alpha = exp(-tau_s/tau_r)
// Strictly proper: the emitted sample never sees the same-step input.
struct ReferenceModel {
  VectorXd alpha;

  static ReferenceModel from_time_constants(double tau_s, double tau_r,
                                            int channels);
  // out = state; state <- alpha o state + (1-alpha) o input
  VectorXd advance(VectorXd& state, const VectorXd& input) const;
};

std::vector<VectorXd> filter_reference(const std::vector<VectorXd>& setpoints,
                                       const ReferenceModel& mr,
                                       const VectorXd& initial);

struct Equilibrium {
  VectorXd u_s;  // constant input, in [-1,1]^m
  VectorXd xi_s;
  VectorXd y_s;
  double state_residual = 0.0;   // ||xi_s - f(xi_s, u_s)||_inf
  double output_residual = 0.0;  // ||y_s - y_target||_2 (0 for map samples)
};

enum class EquilibriumStatus { Found, NotFound, Unsettled };

struct EquilibriumResult {
  EquilibriumStatus status = EquilibriumStatus::NotFound;
  std::optional<Equilibrium> eq;
  double best_score = 0.0;  // best output distance seen
};

struct EquilibriumOptions {
  double settle_tol = 1e-9;   // fixed-point tolerance on the state
  double output_tol = 1e-3;   // acceptance tolerance on the output match
  int settle_cap = 50000;     // steps before declaring Unsettled
  int grid = 5;               // warm-start grid points per input channel
  int refine_evals = 150;     // local-search evaluation budget
};

// Finds (u_s, xi_s) with xi_s = f(xi_s, u_s) and g(xi_s) = y_target, for a
// contracting (certified) model: constant-input simulation settles to the
// unique fixed point, a coarse input grid supplies warm starts, and a
// derivative-free local search refines u_s. The grid is settled once per
// solver, so repeated queries are cheap.
class EquilibriumSolver {
 public:
  EquilibriumSolver(const GruNetwork& model, EquilibriumOptions opt = {});

  EquilibriumResult solve(const VectorXd& y_target) const;

  // attainable-output samples from the warm-start grid
  const std::vector<Equilibrium>& grid() const { return grid_; }

 private:
  EquilibriumResult settle(const VectorXd& u, const VectorXd& warm_xi) const;

  GruNetwork model_;
  EquilibriumOptions opt_;
  std::vector<Equilibrium> grid_;
};

EquilibriumResult solve_equilibrium(const GruNetwork& model,
                                    const VectorXd& y_target,
                                    const EquilibriumOptions& opt = {});

// Settles the model over an input grid of the requested density; the
// returned point cloud spans the attainable outputs.
std::vector<Equilibrium> feasible_output_map(const GruNetwork& model,
                                             int grid_density,
                                             const EquilibriumOptions& opt = {});

// Convex hull (two output channels) of attainable outputs, shrunk toward its
// centroid by a safety inset; supports membership tests and rejection
// sampling of interior set-points.
class FeasibleRegion {
 public:
  static FeasibleRegion from_points(const std::vector<VectorXd>& points,
                                    double inset);

  bool contains(const VectorXd& y) const;
  VectorXd sample(Rng& rng) const;
  const std::vector<VectorXd>& hull() const { return hull_; }

 private:
  std::vector<VectorXd> hull_;  // counterclockwise vertices
  double lo_[2] = {0, 0}, hi_[2] = {0, 0};
};

struct ReferenceDatasetConfig {
  int n_train = 380;
  int n_val = 40;
  int n_test = 10;
  int length = 700;    // steps per reference
  int hold_min = 80;   // steps per constant segment
  int hold_max = 400;
  double inset = 0.02;
  std::uint64_t seed = 1;
  double sample_period = 25.0;
};

struct ReferenceDataset {
  std::vector<RefSequence> train, val, test;
};

// Piecewise-constant set-point sequences drawn from the feasible region
// (every segment value screened through the equilibrium solver), filtered by
// the reference model, then split by a seeded shuffle.
ReferenceDataset gen_reference_dataset(const GruNetwork& model,
                                       const ReferenceModel& mr,
                                       const ReferenceDatasetConfig& cfg,
                                       const EquilibriumOptions& eq_opt = {});

// A short schedule of screened set-points for closed-loop experiments, each
// held for `hold` steps.
std::vector<VectorXd> make_setpoint_schedule(const GruNetwork& model,
                                             int n_setpoints, int hold,
                                             std::uint64_t seed,
                                             double inset = 0.05,
                                             const EquilibriumOptions& eq_opt = {});

}  // namespace imc

#pragma once

#include <vector>

#include "imc/gru.hpp"

namespace imc {

// Worst-case gate/candidate magnitudes over unit-bounded inputs and states:
//   sigma_z = sigmoid(||[W_z U_z b_z]||_inf)
//   sigma_f = sigmoid(||[W_f U_f b_f]||_inf)
//   phi_r   = tanh(||[W_r U_r b_r]||_inf)
// where ||.||_inf of the horizontal concatenation is the max absolute row sum.
struct LayerGainBounds {
  double sigma_z;
  double sigma_f;
  double phi_r;
};

LayerGainBounds layer_bounds(const GruLayerWeights& layer);

// max absolute row sum; zero-sized matrices contribute 0
double mat_inf_norm(const MatrixXd& m);

// Contraction residual of one layer:
//   nu = ||U_r||(1/4 ||U_f|| + sigma_f) + 1/4 (1+phi_r)/(1-sigma_z) ||U_z|| - 1
// nu < 0 is the per-layer sufficient condition for incremental
// input-to-state stability of the whole network.
double delta_iss_residual(const GruLayerWeights& layer);

struct LayerStabilityReport {
  int layer;
  LayerGainBounds bounds;
  double lhs;       // ||U_r||(1/4 ||U_f|| + sigma_f)
  double rhs;       // 1 - 1/4 (1+phi_r)/(1-sigma_z) ||U_z||
  double residual;  // lhs - rhs
};

// The condition is sufficient, not necessary: an uncertified network may
// still contract, but a certified one provably does.
struct StabilityCertificate {
  std::vector<LayerStabilityReport> layers;
  bool certified = false;  // every residual < 0
  double margin = 0.0;     // min over layers of -residual
};

StabilityCertificate certify(const GruNetwork& net);

// Piecewise-linear penalty steering residuals below a negative target:
//   rho(nu) = slope * max(0, nu - target), target < 0, slope > 0
double penalty(double nu, double nu_target, double slope);
double penalty_subgradient(double nu, double nu_target, double slope);

// Scales every layer's U_z, U_f, U_r by a common factor in (0, 1] (found by
// bisection; residuals are monotone in that factor) until all residuals are
// <= nu_max. Used to start training inside the certified region and to build
// certified networks in tests. Requires nu_max > -1. Returns the factor used.
double rescale_to_margin(GruNetwork& net, double nu_max);

}  // namespace imc

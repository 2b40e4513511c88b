#include "imc/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace imc {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ||[W U b]||_inf with the blocks stacked horizontally
double concat_inf_norm(const MatrixXd& w, const MatrixXd& u, const VectorXd& b) {
  double worst = 0.0;
  for (int i = 0; i < u.rows(); ++i) {
    const double row =
        w.row(i).cwiseAbs().sum() + u.row(i).cwiseAbs().sum() + std::abs(b(i));
    worst = std::max(worst, row);
  }
  return worst;
}

}  // namespace

double mat_inf_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

LayerGainBounds layer_bounds(const GruLayerWeights& layer) {
  LayerGainBounds b;
  b.sigma_z = sigmoid(concat_inf_norm(layer.W_z, layer.U_z, layer.b_z));
  b.sigma_f = sigmoid(concat_inf_norm(layer.W_f, layer.U_f, layer.b_f));
  b.phi_r = std::tanh(concat_inf_norm(layer.W_r, layer.U_r, layer.b_r));
  return b;
}

double delta_iss_residual(const GruLayerWeights& layer) {
  const LayerGainBounds b = layer_bounds(layer);
  const double ur = mat_inf_norm(layer.U_r);
  const double uf = mat_inf_norm(layer.U_f);
  const double uz = mat_inf_norm(layer.U_z);
  return ur * (0.25 * uf + b.sigma_f) +
         0.25 * (1.0 + b.phi_r) / (1.0 - b.sigma_z) * uz - 1.0;
}

StabilityCertificate certify(const GruNetwork& net) {
  StabilityCertificate cert;
  cert.certified = true;
  cert.margin = std::numeric_limits<double>::infinity();
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const GruLayerWeights& w = net.layers[l];
    LayerStabilityReport r;
    r.layer = static_cast<int>(l);
    r.bounds = layer_bounds(w);
    const double ur = mat_inf_norm(w.U_r);
    const double uf = mat_inf_norm(w.U_f);
    const double uz = mat_inf_norm(w.U_z);
    r.lhs = ur * (0.25 * uf + r.bounds.sigma_f);
    r.rhs = 1.0 - 0.25 * (1.0 + r.bounds.phi_r) / (1.0 - r.bounds.sigma_z) * uz;
    r.residual = r.lhs - r.rhs;
    cert.certified = cert.certified && (r.residual < 0.0);
    cert.margin = std::min(cert.margin, -r.residual);
    cert.layers.push_back(r);
  }
  return cert;
}

double penalty(double nu, double nu_target, double slope) {
  if (nu_target >= 0.0) throw std::invalid_argument("penalty target must be negative");
  if (slope <= 0.0) throw std::invalid_argument("penalty slope must be positive");
  return slope * std::max(0.0, nu - nu_target);
}

double penalty_subgradient(double nu, double nu_target, double slope) {
  if (nu_target >= 0.0) throw std::invalid_argument("penalty target must be negative");
  if (slope <= 0.0) throw std::invalid_argument("penalty slope must be positive");
  return nu > nu_target ? slope : 0.0;
}

double rescale_to_margin(GruNetwork& net, double nu_max) {
  if (nu_max <= -1.0)
    throw std::invalid_argument("rescale_to_margin: target below the nu = -1 floor");

  auto all_below = [&](double s) {
    for (const auto& layer : net.layers) {
      GruLayerWeights scaled = layer;
      scaled.U_z *= s;
      scaled.U_f *= s;
      scaled.U_r *= s;
      if (delta_iss_residual(scaled) > nu_max) return false;
    }
    return true;
  };

  if (all_below(1.0)) return 1.0;
  double lo = 0.0, hi = 1.0;  // residual at s=0 is exactly -1 < nu_max
  for (int it = 0; it < 64; ++it) {
    const double mid = 0.5 * (lo + hi);
    (all_below(mid) ? lo : hi) = mid;
  }
  for (auto& layer : net.layers) {
    layer.U_z *= lo;
    layer.U_f *= lo;
    layer.U_r *= lo;
  }
  return lo;
}

}  // namespace imc

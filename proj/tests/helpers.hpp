#pragma once

#include <cmath>
#include <vector>

#include "imc/gru.hpp"
#include "imc/rng.hpp"
#include "imc/stability.hpp"
#include "imc/training.hpp"

namespace imctest {

// Scalar-by-scalar re-evaluation of the deep GRU recurrence with plain
// loops. Kept independent of the Eigen implementation path on purpose: it is
// the oracle the library is checked against.
inline std::vector<double> oracle_step(const imc::GruNetwork& net,
                                       const std::vector<double>& state,
                                       const std::vector<double>& input,
                                       std::vector<double>* output) {
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  std::vector<double> next(state.size());
  std::vector<double> v = input;
  int off = 0;
  for (const auto& w : net.layers) {
    const int n = w.units();
    const int m = w.input_dim();
    std::vector<double> z(n), f(n), xnew(n);
    for (int i = 0; i < n; ++i) {
      double az = w.b_z(i), af = w.b_f(i);
      for (int j = 0; j < m; ++j) {
        az += w.W_z(i, j) * v[j];
        af += w.W_f(i, j) * v[j];
      }
      for (int j = 0; j < n; ++j) {
        az += w.U_z(i, j) * state[off + j];
        af += w.U_f(i, j) * state[off + j];
      }
      z[i] = sig(az);
      f[i] = sig(af);
    }
    for (int i = 0; i < n; ++i) {
      double ar = w.b_r(i);
      for (int j = 0; j < m; ++j) ar += w.W_r(i, j) * v[j];
      for (int j = 0; j < n; ++j) ar += w.U_r(i, j) * (f[j] * state[off + j]);
      const double cand = std::tanh(ar);
      xnew[i] = z[i] * state[off + i] + (1.0 - z[i]) * cand;
    }
    for (int i = 0; i < n; ++i) next[off + i] = xnew[i];
    v = xnew;
    off += n;
  }
  if (output) {
    const auto& om = net.output;
    const int p = static_cast<int>(om.b_o.size());
    output->assign(p, 0.0);
    for (int i = 0; i < p; ++i) {
      double a = om.b_o(i);
      for (int j = 0; j < static_cast<int>(v.size()); ++j) a += om.U_o(i, j) * v[j];
      (*output)[i] =
          om.activation == imc::OutputActivation::Tanh ? std::tanh(a) : a;
    }
  }
  return next;
}

// Random network with entries ~ U(-scale, scale), biases ~ U(-scale/2, scale/2).
inline imc::GruNetwork random_net(imc::Rng& rng, int input_dim,
                                  const std::vector<int>& widths, int output_dim,
                                  imc::OutputActivation act, double scale = 1.0) {
  imc::GruNetwork net = imc::GruNetwork::zeros(input_dim, widths, output_dim, act);
  auto fill = [&](imc::MatrixXd& m, double s) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-s, s);
  };
  auto fillv = [&](imc::VectorXd& v, double s) {
    for (int i = 0; i < v.size(); ++i) v(i) = rng.uniform(-s, s);
  };
  for (auto& l : net.layers) {
    fill(l.W_z, scale);
    fill(l.U_z, scale);
    fillv(l.b_z, 0.5 * scale);
    fill(l.W_f, scale);
    fill(l.U_f, scale);
    fillv(l.b_f, 0.5 * scale);
    fill(l.W_r, scale);
    fill(l.U_r, scale);
    fillv(l.b_r, 0.5 * scale);
  }
  fill(net.output.U_o, scale);
  fillv(net.output.b_o, 0.5 * scale);
  return net;
}

// Random network rescaled into the certified region with the given margin.
inline imc::GruNetwork random_certified_net(imc::Rng& rng, int input_dim,
                                            const std::vector<int>& widths,
                                            int output_dim,
                                            imc::OutputActivation act,
                                            double margin = 0.05,
                                            double scale = 0.6) {
  imc::GruNetwork net = random_net(rng, input_dim, widths, output_dim, act, scale);
  imc::rescale_to_margin(net, -margin);
  return net;
}

// Central finite differences of an arbitrary scalar functional of the
// weights, in the same canonical array order as GradientSet.
template <class LossFn>
imc::GradientSet fd_gradient(const imc::GruNetwork& net, LossFn&& loss,
                             double h = 1e-6) {
  imc::GruNetwork work = net;
  imc::GradientSet grad = imc::GradientSet::zeros_like(net);
  std::vector<double*> params, slots;
  imc::for_each_array(work, [&](auto& a) {
    for (int i = 0; i < static_cast<int>(a.size()); ++i) params.push_back(a.data() + i);
  });
  imc::for_each_array(grad, [&](auto& a) {
    for (int i = 0; i < static_cast<int>(a.size()); ++i) slots.push_back(a.data() + i);
  });
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + h;
    const double up = loss(work);
    *params[i] = saved - h;
    const double down = loss(work);
    *params[i] = saved;
    *slots[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// sup-norm error of the analytic gradient relative to the FD scale
inline double gradient_rel_error(const imc::GradientSet& analytic,
                                 const imc::GradientSet& fd) {
  double diff = 0.0, scale = 0.0;
  std::vector<const double*> a, b;
  imc::for_each_array(analytic, [&](const auto& m) {
    for (int i = 0; i < static_cast<int>(m.size()); ++i) a.push_back(m.data() + i);
  });
  imc::for_each_array(fd, [&](const auto& m) {
    for (int i = 0; i < static_cast<int>(m.size()); ++i) b.push_back(m.data() + i);
  });
  for (size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(*a[i] - *b[i]));
    scale = std::max(scale, std::abs(*b[i]));
  }
  return diff / std::max(scale, 1e-12);
}

}  // namespace imctest

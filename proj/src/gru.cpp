#include "imc/gru.hpp"

#include <cmath>
#include <stdexcept>

namespace imc {

namespace {

std::string shape(const MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

VectorXd sigmoid(const VectorXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

GruLayerWeights GruLayerWeights::zeros(int units, int input_dim) {
  GruLayerWeights w;
  w.W_z = MatrixXd::Zero(units, input_dim);
  w.W_f = MatrixXd::Zero(units, input_dim);
  w.W_r = MatrixXd::Zero(units, input_dim);
  w.U_z = MatrixXd::Zero(units, units);
  w.U_f = MatrixXd::Zero(units, units);
  w.U_r = MatrixXd::Zero(units, units);
  w.b_z = VectorXd::Zero(units);
  w.b_f = VectorXd::Zero(units);
  w.b_r = VectorXd::Zero(units);
  return w;
}

void GruLayerWeights::validate(int layer_index) const {
  const std::string tag = "layer " + std::to_string(layer_index) + ": ";
  const int n = units();
  const int m = input_dim();
  require(n > 0, tag + "empty layer");
  auto check_mat = [&](const MatrixXd& a, const char* name, int rows, int cols) {
    require(a.rows() == rows && a.cols() == cols,
            tag + name + " is " + shape(a) + ", expected " +
                std::to_string(rows) + "x" + std::to_string(cols));
    require(a.allFinite(), tag + name + " has non-finite entries");
  };
  check_mat(W_z, "W_z", n, m);
  check_mat(W_f, "W_f", n, m);
  check_mat(W_r, "W_r", n, m);
  check_mat(U_z, "U_z", n, n);
  check_mat(U_f, "U_f", n, n);
  check_mat(U_r, "U_r", n, n);
  auto check_vec = [&](const VectorXd& a, const char* name) {
    require(a.size() == n, tag + name + " has " + std::to_string(a.size()) +
                               " entries, expected " + std::to_string(n));
    require(a.allFinite(), tag + name + " has non-finite entries");
  };
  check_vec(b_z, "b_z");
  check_vec(b_f, "b_f");
  check_vec(b_r, "b_r");
}

VectorXd OutputMap::apply(const VectorXd& top_state) const {
  VectorXd y = U_o * top_state + b_o;
  if (activation == OutputActivation::Tanh) {
    y = y.array().tanh().matrix();
  }
  return y;
}

int GruNetwork::state_dim() const {
  int n = 0;
  for (const auto& l : layers) n += l.units();
  return n;
}

std::vector<int> GruNetwork::layer_offsets() const {
  std::vector<int> off(layers.size() + 1, 0);
  for (size_t l = 0; l < layers.size(); ++l) off[l + 1] = off[l] + layers[l].units();
  return off;
}

void GruNetwork::validate() const {
  require(!layers.empty(), "network has no layers");
  for (size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate(static_cast<int>(l));
    if (l > 0) {
      require(layers[l].input_dim() == layers[l - 1].units(),
              "layer " + std::to_string(l) + ": input width " +
                  std::to_string(layers[l].input_dim()) +
                  " does not match previous layer units " +
                  std::to_string(layers[l - 1].units()));
    }
  }
  const int top = layers.back().units();
  require(output.U_o.cols() == top,
          "output map: U_o is " + shape(output.U_o) + ", expected cols " +
              std::to_string(top));
  require(output.U_o.rows() == output.b_o.size(),
          "output map: U_o rows " + std::to_string(output.U_o.rows()) +
              " do not match b_o size " + std::to_string(output.b_o.size()));
  require(output.U_o.allFinite() && output.b_o.allFinite(),
          "output map has non-finite entries");
}

GruNetwork GruNetwork::zeros(int input_dim, const std::vector<int>& widths,
                             int output_dim, OutputActivation act) {
  GruNetwork net;
  int in = input_dim;
  for (int w : widths) {
    net.layers.push_back(GruLayerWeights::zeros(w, in));
    in = w;
  }
  net.output.U_o = MatrixXd::Zero(output_dim, widths.back());
  net.output.b_o = VectorXd::Zero(output_dim);
  net.output.activation = act;
  return net;
}

GruState GruState::zero(const GruNetwork& net) {
  GruState s;
  s.xi = VectorXd::Zero(net.state_dim());
  s.offsets = net.layer_offsets();
  return s;
}

GruState GruState::from_vector(const GruNetwork& net, const VectorXd& xi) {
  require(xi.size() == net.state_dim(),
          "state has " + std::to_string(xi.size()) + " entries, expected " +
              std::to_string(net.state_dim()));
  GruState s;
  s.xi = xi;
  s.offsets = net.layer_offsets();
  return s;
}

GruState step_cached(const GruNetwork& net, const GruState& state,
                     const VectorXd& input, StepCache& cache, VectorXd& output) {
  require(input.size() == net.input_dim(),
          "input has " + std::to_string(input.size()) + " entries, expected " +
              std::to_string(net.input_dim()));
  require(state.dim() == net.state_dim(),
          "state has " + std::to_string(state.dim()) + " entries, expected " +
              std::to_string(net.state_dim()));

  GruState next = state;
  cache.layers.resize(net.layers.size());
  VectorXd v = input;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const GruLayerWeights& w = net.layers[l];
    const VectorXd x = state.layer(static_cast<int>(l));
    const VectorXd z = sigmoid(w.W_z * v + w.U_z * x + w.b_z);
    const VectorXd f = sigmoid(w.W_f * v + w.U_f * x + w.b_f);
    const VectorXd c =
        (w.W_r * v + w.U_r * (f.cwiseProduct(x)) + w.b_r).array().tanh().matrix();
    const VectorXd xp = z.cwiseProduct(x) + (VectorXd::Ones(x.size()) - z).cwiseProduct(c);
    LayerStepCache& lc = cache.layers[l];
    lc.v = v;
    lc.xi = x;
    lc.z = z;
    lc.f = f;
    lc.cand = c;
    next.layer(static_cast<int>(l)) = xp;
    v = xp;  // the updated state feeds the next layer
  }
  cache.top_post = v;
  output = net.output.apply(v);
  return next;
}

std::pair<GruState, VectorXd> step(const GruNetwork& net, const GruState& state,
                                   const VectorXd& input) {
  StepCache cache;
  VectorXd y;
  GruState next = step_cached(net, state, input, cache, y);
  return {std::move(next), std::move(y)};
}

VectorXd output_of(const GruNetwork& net, const GruState& state) {
  require(state.dim() == net.state_dim(),
          "state has " + std::to_string(state.dim()) + " entries, expected " +
              std::to_string(net.state_dim()));
  const int top = static_cast<int>(net.layers.size()) - 1;
  return net.output.apply(state.layer(top));
}

Trajectory simulate(const GruNetwork& net, const GruState& initial,
                    const std::vector<VectorXd>& inputs, double sample_period) {
  require(!inputs.empty(), "simulate: empty input sequence");
  Trajectory traj;
  traj.sample_period = sample_period;
  traj.inputs = inputs;
  traj.states.reserve(inputs.size() + 1);
  traj.outputs.reserve(inputs.size());
  traj.states.push_back(initial.xi);
  GruState s = initial;
  for (size_t k = 0; k < inputs.size(); ++k) {
    try {
      auto [next, y] = step(net, s, inputs[k]);
      s = std::move(next);
      traj.states.push_back(s.xi);
      traj.outputs.push_back(std::move(y));
    } catch (const std::exception& e) {
      throw std::invalid_argument("simulate: step " + std::to_string(k) + ": " + e.what());
    }
  }
  return traj;
}

std::vector<double> clamp_free_convergence_probe(const GruNetwork& net,
                                                 const GruState& initial,
                                                 const std::vector<VectorXd>& inputs) {
  require(initial.inf_norm() > 1.0,
          "convergence probe requires an initial state outside the unit box");
  std::vector<double> norms;
  norms.reserve(inputs.size() + 1);
  norms.push_back(initial.inf_norm());
  GruState s = initial;
  for (const auto& v : inputs) {
    s = step(net, s, v).first;
    norms.push_back(s.inf_norm());
  }
  return norms;
}

void randomize(GruNetwork& net, Rng& rng, double scale) {
  auto fill = [&](MatrixXd& m) {
    const double s = scale / std::sqrt(static_cast<double>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-s, s);
  };
  for (auto& l : net.layers) {
    fill(l.W_z);
    fill(l.U_z);
    fill(l.W_f);
    fill(l.U_f);
    fill(l.W_r);
    fill(l.U_r);
    l.b_z.setZero();
    l.b_f.setZero();
    l.b_r.setZero();
  }
  fill(net.output.U_o);
  net.output.b_o.setZero();
}

}  // namespace imc

#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "imc/rng.hpp"

namespace imc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Weights of one gated recurrent layer. Rows = units everywhere; the W_*
// matrices share the layer's input width as column count.
struct GruLayerWeights {
  MatrixXd W_z, W_f, W_r;  // units x input_dim
  MatrixXd U_z, U_f, U_r;  // units x units
  VectorXd b_z, b_f, b_r;  // units

  int units() const { return static_cast<int>(U_z.rows()); }
  int input_dim() const { return static_cast<int>(W_z.cols()); }

  static GruLayerWeights zeros(int units, int input_dim);

  // Throws std::invalid_argument naming the layer and the offending
  // expected/actual shape, or any non-finite entry.
  void validate(int layer_index) const;
};

enum class OutputActivation { Identity, Tanh };

// Static map from the top layer's state to the network output.
// Identity for plant models, tanh for controllers (output lands in (-1,1)^p).
struct OutputMap {
  MatrixXd U_o;  // outputs x top-layer units
  VectorXd b_o;
  OutputActivation activation = OutputActivation::Identity;

  VectorXd apply(const VectorXd& top_state) const;
};

// Deep GRU in state-space form: stacked layers where layer l > 1 is fed
// the updated state of layer l-1, followed by the output map.
//
// Per layer, with input v and state x:
//   z = sigmoid(W_z v + U_z x + b_z)         update gate
//   f = sigmoid(W_f v + U_f x + b_f)         forget gate
//   c = tanh(W_r v + U_r (f o x) + b_r)      candidate
//   x+ = z o x + (1 - z) o c
struct GruNetwork {
  std::vector<GruLayerWeights> layers;
  OutputMap output;

  int input_dim() const { return layers.front().input_dim(); }
  int output_dim() const { return static_cast<int>(output.b_o.size()); }
  int state_dim() const;
  int num_layers() const { return static_cast<int>(layers.size()); }
  std::vector<int> layer_offsets() const;  // size num_layers()+1, prefix sums

  void validate() const;

  static GruNetwork zeros(int input_dim, const std::vector<int>& widths,
                          int output_dim, OutputActivation act);
};

// Concatenated per-layer state vector with a layer-offset table, so box
// membership and norms are single passes over one contiguous vector.
struct GruState {
  VectorXd xi;
  std::vector<int> offsets;

  static GruState zero(const GruNetwork& net);
  static GruState from_vector(const GruNetwork& net, const VectorXd& xi);

  int dim() const { return static_cast<int>(xi.size()); }
  Eigen::VectorBlock<VectorXd> layer(int l) {
    return xi.segment(offsets[l], offsets[l + 1] - offsets[l]);
  }
  Eigen::VectorBlock<const VectorXd> layer(int l) const {
    return xi.segment(offsets[l], offsets[l + 1] - offsets[l]);
  }

  double inf_norm() const { return xi.size() == 0 ? 0.0 : xi.lpNorm<Eigen::Infinity>(); }
  // membership in the unit hypercube, the network's invariant set
  bool in_unit_box() const { return inf_norm() <= 1.0; }
};

struct Trajectory {
  std::vector<VectorXd> inputs;
  std::vector<VectorXd> states;   // states[0] = initial, states[k+1] after inputs[k]
  std::vector<VectorXd> outputs;  // outputs[k] from the post-step state at k
  double sample_period = 0.0;
};

// Gate activations retained for reverse-mode sweeps.
struct LayerStepCache {
  VectorXd v;     // layer input
  VectorXd xi;    // layer state before the step
  VectorXd z, f, cand;
};

struct StepCache {
  std::vector<LayerStepCache> layers;
  VectorXd top_post;  // updated top-layer state (feeds the output map)
};

// One state transition plus output. Pure; safe to call concurrently.
std::pair<GruState, VectorXd> step(const GruNetwork& net, const GruState& state,
                                   const VectorXd& input);

// As step(), filling the cache needed by backpropagation.
GruState step_cached(const GruNetwork& net, const GruState& state,
                     const VectorXd& input, StepCache& cache, VectorXd& output);

// Output map applied to the current top-layer state (no transition).
VectorXd output_of(const GruNetwork& net, const GruState& state);

// Folds step over the inputs, recording every intermediate state and output.
Trajectory simulate(const GruNetwork& net, const GruState& initial,
                    const std::vector<VectorXd>& inputs, double sample_period = 0.0);

// Inf-norm series (initial included) for a start outside the unit box;
// used to observe the strict decrease and finite-time capture into it.
std::vector<double> clamp_free_convergence_probe(const GruNetwork& net,
                                                 const GruState& initial,
                                                 const std::vector<VectorXd>& inputs);

// Uniform init, entries ~ U(-scale/sqrt(fan_in), +scale/sqrt(fan_in)),
// biases zero. Draw order is fixed so a seed pins the exact network.
void randomize(GruNetwork& net, Rng& rng, double scale);

}  // namespace imc

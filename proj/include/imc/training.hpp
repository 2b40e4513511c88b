#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "imc/gru.hpp"
#include "imc/stability.hpp"

namespace imc {

// Gradient carrier, shape-congruent with one layer's weights.
struct LayerGradients {
  MatrixXd W_z, W_f, W_r;
  MatrixXd U_z, U_f, U_r;
  VectorXd b_z, b_f, b_r;
};

struct GradientSet {
  std::vector<LayerGradients> layers;
  MatrixXd U_o;
  VectorXd b_o;

  static GradientSet zeros_like(const GruNetwork& net);
  void add(const GradientSet& other);
  void scale(double s);
  double squared_norm() const;
  bool all_finite() const;
};

namespace detail {

// GruNetwork keeps the output arrays inside its OutputMap, GradientSet holds
// them directly; these accessors make the iteration templates work for both.
template <class T>
constexpr bool has_output_map = requires(T& t) { t.output.U_o; };

template <class T>
auto& out_u(T& t) {
  if constexpr (has_output_map<T>)
    return t.output.U_o;
  else
    return t.U_o;
}

template <class T>
auto& out_b(T& t) {
  if constexpr (has_output_map<T>)
    return t.output.b_o;
  else
    return t.b_o;
}

}  // namespace detail

// Fixed canonical iteration over every weight array of a network
// (W_z, U_z, b_z, W_f, U_f, b_f, W_r, U_r, b_r per layer, then U_o, b_o).
template <class Net, class F>
void for_each_array(Net&& net, F&& f) {
  for (auto& l : net.layers) {
    f(l.W_z);
    f(l.U_z);
    f(l.b_z);
    f(l.W_f);
    f(l.U_f);
    f(l.b_f);
    f(l.W_r);
    f(l.U_r);
    f(l.b_r);
  }
  f(detail::out_u(net));
  f(detail::out_b(net));
}

// Paired iteration over congruent weight/gradient carriers.
template <class Net, class Grad, class F>
void zip_arrays(Net&& net, Grad&& g, F&& f) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    f(net.layers[l].W_z, g.layers[l].W_z);
    f(net.layers[l].U_z, g.layers[l].U_z);
    f(net.layers[l].b_z, g.layers[l].b_z);
    f(net.layers[l].W_f, g.layers[l].W_f);
    f(net.layers[l].U_f, g.layers[l].U_f);
    f(net.layers[l].b_f, g.layers[l].b_f);
    f(net.layers[l].W_r, g.layers[l].W_r);
    f(net.layers[l].U_r, g.layers[l].U_r);
    f(net.layers[l].b_r, g.layers[l].b_r);
  }
  f(detail::out_u(net), detail::out_u(g));
  f(detail::out_b(net), detail::out_b(g));
}

// One recorded input/output experiment (or an extracted window of one).
struct IoSequence {
  std::string id;
  std::vector<VectorXd> inputs;
  std::vector<VectorXd> outputs;
  double sample_period = 0.0;
};

// One reference trajectory: raw set-point steps and their filtered version.
struct RefSequence {
  std::string id;
  std::vector<VectorXd> setpoints;
  std::vector<VectorXd> refs;
  double sample_period = 0.0;
};

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-8;
  int washout = 50;          // steps excluded from every MSE
  int max_epochs = 200;
  int patience = 20;         // epochs without validation improvement
  double nu_target = -0.05;  // residual target of the stability penalty
  double penalty_slope = 10.0;
  double clip_norm = 10.0;   // global l2 gradient clip; <=0 disables
  std::uint64_t seed = 1;
  int workers = 1;
};

struct TrainReport {
  std::vector<double> train_loss;               // per epoch, mean over batches
  std::vector<double> val_mse;                  // per epoch, penalty excluded
  std::vector<std::vector<double>> residuals;   // per epoch, per layer
  int best_epoch = -1;                          // 0-based
  int stopped_epoch = -1;
  bool diverged = false;
  long clip_events = 0;
  StabilityCertificate final_certificate;
};

struct TrainResult {
  GruNetwork best;
  TrainReport report;
};

// Mean squared output error with the first `washout` steps excluded:
//   1/(T - washout) * sum_{k=washout}^{T-1} ||predicted(k) - measured(k)||^2
double mse_washout(const std::vector<VectorXd>& predicted,
                   const std::vector<VectorXd>& measured, int washout);

struct LossValue {
  double total = 0.0;
  GradientSet grad;
};

// Batch loss for system identification: summed washout-MSE of free-run
// predictions plus the per-layer stability penalty. Gradients by full
// reverse accumulation through every rollout. One initial state per
// sequence. Throws on non-finite loss with learning-rate guidance.
LossValue model_loss(const GruNetwork& net, std::span<const IoSequence> batch,
                     std::span<const GruState> initial_states,
                     const TrainConfig& cfg, int workers = 1);

// Batch loss for inversion learning: the controller drives the frozen model
// and the model output is matched to the reference the controller saw.
// Gradients flow through the frozen model into the controller only.
LossValue controller_loss(const GruNetwork& ctrl, const GruNetwork& frozen_model,
                          std::span<const RefSequence> batch,
                          const TrainConfig& cfg, int workers = 1);

// Free-run model outputs from a zero initial state (validation metric path).
std::vector<VectorXd> free_run_outputs(const GruNetwork& net,
                                       const std::vector<VectorXd>& inputs);

// Reference -> controller -> model composition from zero initial states;
// optionally returns the control sequence.
std::vector<VectorXd> composed_outputs(const GruNetwork& ctrl,
                                       const GruNetwork& model,
                                       const std::vector<VectorXd>& refs,
                                       std::vector<VectorXd>* controls = nullptr);

struct RmspropState {
  GradientSet cache;  // running mean of squared gradients
  static RmspropState zeros_like(const GruNetwork& net);
};

// cache <- decay*cache + (1-decay)*g^2;  w <- w - lr*g/(sqrt(cache)+eps)
void rmsprop_step(GruNetwork& net, const GradientSet& grads, RmspropState& state,
                  double lr, double decay, double eps);

// Epoch loop with seeded shuffling, RMSProp updates, early stopping on the
// validation MSE (penalty excluded there), and divergence abort. Returns the
// best-validation weights; the report embeds the final certificate.
TrainResult train_model(const GruNetwork& init,
                        const std::vector<IoSequence>& train_set,
                        const std::vector<IoSequence>& val_set,
                        const TrainConfig& cfg, std::ostream* progress = nullptr);

TrainResult train_controller(const GruNetwork& init, const GruNetwork& model,
                             const std::vector<RefSequence>& train_set,
                             const std::vector<RefSequence>& val_set,
                             const TrainConfig& cfg,
                             std::ostream* progress = nullptr);

}  // namespace imc

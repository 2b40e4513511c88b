#pragma once

#include <memory>
#include <string>
#include <vector>

#include "imc/datagen.hpp"
#include "imc/gru.hpp"
#include "imc/plant.hpp"

namespace imc {

// Measurement source driven by the closed loop: consumes one normalized
// control vector per period and returns the normalized measurement.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual VectorXd apply(const VectorXd& u_normalized, Rng* noise_rng) = 0;
  virtual std::string describe() const = 0;
};

class TankPlant : public Plant {
 public:
  TankPlant(TankParams params, Normalizer norm, TankState initial,
            double tau_s, double noise_std, double substep = 1.0);

  VectorXd apply(const VectorXd& u_normalized, Rng* noise_rng) override;
  std::string describe() const override { return "quadruple-tank"; }
  const TankState& state() const { return state_; }

 private:
  TankParams params_;
  Normalizer norm_;
  TankState state_;
  double tau_s_, noise_std_, substep_;
};

// The identified model standing in for the plant; with matched initial
// states the modeling-error feedback is exactly zero, so the loop runs the
// controller in open loop.
class ModelPlant : public Plant {
 public:
  ModelPlant(GruNetwork net, GruState initial);

  VectorXd apply(const VectorXd& u_normalized, Rng*) override;
  std::string describe() const override { return "internal-model-mirror"; }

 private:
  GruNetwork net_;
  GruState state_;
};

// Closed loop: reference filter feeding a controller, the plant and the
// internal model driven by the same control, and the plant-model output
// mismatch low-pass filtered back onto the reference.
struct ImcAssembly {
  GruNetwork controller;  // tanh output map
  GruNetwork model;       // identity output map
  ReferenceModel mr;        // desired response to the set-point
  ReferenceModel feedback;  // low-pass on the modeling-error feedback
  std::unique_ptr<Plant> plant;
  double noise_std = 0.0;
  double sample_period = 0.0;

  // loop state
  GruState xi_c, xi_m;
  VectorXd mr_state, f_state;

  // controller/model states zeroed, filters primed to zero
  void reset();
  void validate() const;
};

struct ClosedLoopLog {
  std::vector<VectorXd> setpoint;     // y0
  std::vector<VectorXd> ref;          // filtered reference
  std::vector<VectorXd> em_filtered;  // feedback filter output
  std::vector<VectorXd> ctrl_input;   // ref - filtered mismatch
  std::vector<VectorXd> control;      // u_c
  std::vector<VectorXd> y_plant;
  std::vector<VectorXd> y_model;
  std::vector<VectorXd> xi_c, xi_m;
  double sample_period = 0.0;

  size_t size() const { return setpoint.size(); }
};

// One control period. Ordering: reference filter advances; the controller
// sees the reference minus the filtered mismatch of the PREVIOUS period
// (one-period delay keeps the loop causal); plant and model step on the same
// control; the fresh mismatch enters the feedback filter afterwards.
// Throws on non-finite signals.
void closed_loop_step(ImcAssembly& loop, const VectorXd& y0, Rng* noise_rng,
                      ClosedLoopLog& log);

// Steps the loop over the whole set-point schedule. The seed feeds the
// measurement noise stream; with_noise = false runs noiseless regardless.
ClosedLoopLog run_experiment(ImcAssembly& loop,
                             const std::vector<VectorXd>& schedule,
                             bool with_noise, std::uint64_t seed);

}  // namespace imc

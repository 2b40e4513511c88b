#include "imc/imc_loop.hpp"

#include <stdexcept>

namespace imc {

TankPlant::TankPlant(TankParams params, Normalizer norm, TankState initial,
                     double tau_s, double noise_std, double substep)
    : params_(std::move(params)),
      norm_(std::move(norm)),
      state_(initial),
      tau_s_(tau_s),
      noise_std_(noise_std),
      substep_(substep) {
  params_.validate();
}

VectorXd TankPlant::apply(const VectorXd& u_normalized, Rng* noise_rng) {
  if (u_normalized.size() != 2)
    throw std::invalid_argument("tank plant: expected two control channels");
  const double q_a = norm_.from_unit("q_a", u_normalized(0));
  const double q_b = norm_.from_unit("q_b", u_normalized(1));
  state_ = tank_step(state_, q_a, q_b, params_, tau_s_, substep_);
  return measure(state_, norm_, noise_std_, noise_rng);
}

ModelPlant::ModelPlant(GruNetwork net, GruState initial)
    : net_(std::move(net)), state_(std::move(initial)) {
  net_.validate();
}

VectorXd ModelPlant::apply(const VectorXd& u_normalized, Rng*) {
  auto [next, y] = step(net_, state_, u_normalized);
  state_ = std::move(next);
  return y;
}

void ImcAssembly::reset() {
  xi_c = GruState::zero(controller);
  xi_m = GruState::zero(model);
  mr_state = VectorXd::Zero(mr.alpha.size());
  f_state = VectorXd::Zero(feedback.alpha.size());
}

void ImcAssembly::validate() const {
  controller.validate();
  model.validate();
  if (controller.output.activation != OutputActivation::Tanh)
    throw std::invalid_argument("imc loop: controller must have a tanh output map");
  if (controller.output_dim() != model.input_dim())
    throw std::invalid_argument(
        "imc loop: controller output dim " + std::to_string(controller.output_dim()) +
        " does not match model input dim " + std::to_string(model.input_dim()));
  if (!plant) throw std::invalid_argument("imc loop: no plant attached");
}

void closed_loop_step(ImcAssembly& loop, const VectorXd& y0, Rng* noise_rng,
                      ClosedLoopLog& log) {
  // (1) desired response to the set-point
  const VectorXd ref = loop.mr.advance(loop.mr_state, y0);
  // (2) feedback filter output still holds only past mismatches
  const VectorXd em_f = loop.f_state;
  const VectorXd ctrl_in = ref - em_f;
  // (3) control action
  auto [xc_next, u_c] = step(loop.controller, loop.xi_c, ctrl_in);
  loop.xi_c = std::move(xc_next);
  // (4) plant, (5) internal model, same control
  const VectorXd y_p = loop.plant->apply(u_c, noise_rng);
  auto [xm_next, y_m] = step(loop.model, loop.xi_m, u_c);
  loop.xi_m = std::move(xm_next);
  // (6) fresh mismatch enters the filter for the next period
  const VectorXd e_m = y_p - y_m;
  loop.feedback.advance(loop.f_state, e_m);

  if (!y_p.allFinite() || !y_m.allFinite() || !u_c.allFinite())
    throw std::runtime_error("closed loop: non-finite signal at step " +
                             std::to_string(log.size()));

  log.setpoint.push_back(y0);
  log.ref.push_back(ref);
  log.em_filtered.push_back(em_f);
  log.ctrl_input.push_back(ctrl_in);
  log.control.push_back(u_c);
  log.y_plant.push_back(y_p);
  log.y_model.push_back(y_m);
  log.xi_c.push_back(loop.xi_c.xi);
  log.xi_m.push_back(loop.xi_m.xi);
}

ClosedLoopLog run_experiment(ImcAssembly& loop,
                             const std::vector<VectorXd>& schedule,
                             bool with_noise, std::uint64_t seed) {
  loop.validate();
  loop.reset();
  Rng rng(seed);
  ClosedLoopLog log;
  log.sample_period = loop.sample_period;
  for (size_t k = 0; k < schedule.size(); ++k) {
    try {
      closed_loop_step(loop, schedule[k], with_noise ? &rng : nullptr, log);
    } catch (const std::exception& e) {
      throw std::runtime_error("closed loop: period " + std::to_string(k) + " (t=" +
                               std::to_string(k * loop.sample_period) + "s): " +
                               e.what());
    }
  }
  return log;
}

}  // namespace imc

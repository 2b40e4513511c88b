#include "imc/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace imc {

namespace {

template <class NetA, class NetB, class NetC, class F>
void zip3_arrays(NetA&& a, NetB&& b, NetC&& c, F&& f) {
  for (size_t l = 0; l < a.layers.size(); ++l) {
    f(a.layers[l].W_z, b.layers[l].W_z, c.layers[l].W_z);
    f(a.layers[l].U_z, b.layers[l].U_z, c.layers[l].U_z);
    f(a.layers[l].b_z, b.layers[l].b_z, c.layers[l].b_z);
    f(a.layers[l].W_f, b.layers[l].W_f, c.layers[l].W_f);
    f(a.layers[l].U_f, b.layers[l].U_f, c.layers[l].U_f);
    f(a.layers[l].b_f, b.layers[l].b_f, c.layers[l].b_f);
    f(a.layers[l].W_r, b.layers[l].W_r, c.layers[l].W_r);
    f(a.layers[l].U_r, b.layers[l].U_r, c.layers[l].U_r);
    f(a.layers[l].b_r, b.layers[l].b_r, c.layers[l].b_r);
  }
  f(a.output.U_o, b.U_o, c.U_o);
  f(a.output.b_o, b.b_o, c.b_o);
}

// Runs fn(i) for i in [0, n); results must go to per-i slots so the caller
// can reduce in fixed index order regardless of scheduling.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct RolloutCache {
  std::vector<StepCache> steps;
  std::vector<VectorXd> outputs;
};

void forward_rollout(const GruNetwork& net, const GruState& initial,
                     std::span<const VectorXd> inputs, RolloutCache& cache) {
  const size_t T = inputs.size();
  cache.steps.resize(T);
  cache.outputs.resize(T);
  GruState s = initial;
  for (size_t k = 0; k < T; ++k) {
    s = step_cached(net, s, inputs[k], cache.steps[k], cache.outputs[k]);
  }
}

// Reverse accumulation through a cached rollout. dY[k] = dL/dy(k).
// Weight gradients accumulate into *grads when non-null (frozen networks pass
// nullptr); per-step input gradients land in *input_grads when requested.
void backward_rollout(const GruNetwork& net, const RolloutCache& cache,
                      std::span<const VectorXd> dY, GradientSet* grads,
                      std::vector<VectorXd>* input_grads) {
  const int M = net.num_layers();
  const int T = static_cast<int>(cache.steps.size());
  std::vector<VectorXd> gstate(M);
  for (int l = 0; l < M; ++l) gstate[l] = VectorXd::Zero(net.layers[l].units());
  if (input_grads) input_grads->assign(T, VectorXd());

  for (int k = T - 1; k >= 0; --k) {
    const StepCache& sc = cache.steps[k];
    if (dY[k].size() != 0 && dY[k].squaredNorm() != 0.0) {
      VectorXd dA = dY[k];
      if (net.output.activation == OutputActivation::Tanh) {
        const VectorXd& y = cache.outputs[k];
        dA = dA.cwiseProduct((1.0 - y.array().square()).matrix());
      }
      if (grads) {
        grads->U_o.noalias() += dA * sc.top_post.transpose();
        grads->b_o += dA;
      }
      gstate[M - 1].noalias() += net.output.U_o.transpose() * dA;
    }
    for (int l = M - 1; l >= 0; --l) {
      const GruLayerWeights& w = net.layers[l];
      const LayerStepCache& lc = sc.layers[l];
      const VectorXd& g = gstate[l];

      const VectorXd dz = g.cwiseProduct(lc.xi - lc.cand);
      const VectorXd dc = g.cwiseProduct((1.0 - lc.z.array()).matrix());
      const VectorXd dAr = dc.cwiseProduct((1.0 - lc.cand.array().square()).matrix());
      const VectorXd dAz =
          dz.cwiseProduct(lc.z.cwiseProduct((1.0 - lc.z.array()).matrix()));
      const VectorXd dfx = w.U_r.transpose() * dAr;
      const VectorXd df = dfx.cwiseProduct(lc.xi);
      const VectorXd dAf =
          df.cwiseProduct(lc.f.cwiseProduct((1.0 - lc.f.array()).matrix()));

      VectorXd dx = g.cwiseProduct(lc.z) + dfx.cwiseProduct(lc.f);
      dx.noalias() += w.U_z.transpose() * dAz;
      dx.noalias() += w.U_f.transpose() * dAf;

      VectorXd dv = w.W_z.transpose() * dAz;
      dv.noalias() += w.W_f.transpose() * dAf;
      dv.noalias() += w.W_r.transpose() * dAr;

      if (grads) {
        LayerGradients& gl = grads->layers[l];
        gl.W_z.noalias() += dAz * lc.v.transpose();
        gl.U_z.noalias() += dAz * lc.xi.transpose();
        gl.b_z += dAz;
        gl.W_f.noalias() += dAf * lc.v.transpose();
        gl.U_f.noalias() += dAf * lc.xi.transpose();
        gl.b_f += dAf;
        gl.W_r.noalias() += dAr * lc.v.transpose();
        gl.U_r.noalias() += dAr * lc.f.cwiseProduct(lc.xi).transpose();
        gl.b_r += dAr;
      }

      gstate[l] = dx;
      if (l > 0) {
        gstate[l - 1] += dv;
      } else if (input_grads) {
        (*input_grads)[k] = dv;
      }
    }
  }
}

int argmax_abs_row_sum(const MatrixXd& w, const MatrixXd& u, const VectorXd& b) {
  int best = 0;
  double best_sum = -1.0;
  for (int i = 0; i < u.rows(); ++i) {
    const double s =
        (w.size() ? w.row(i).cwiseAbs().sum() : 0.0) + u.row(i).cwiseAbs().sum() +
        (b.size() ? std::abs(b(i)) : 0.0);
    if (s > best_sum) {
      best_sum = s;
      best = i;
    }
  }
  return best;
}

void add_sign_row(MatrixXd& grad, const MatrixXd& src, int row, double coeff) {
  for (int j = 0; j < src.cols(); ++j) {
    const double v = src(row, j);
    if (v > 0)
      grad(row, j) += coeff;
    else if (v < 0)
      grad(row, j) -= coeff;
  }
}

// Subgradient of the layer's contraction residual, scaled by coeff. The
// matrix inf-norms differentiate onto the sign pattern of their worst row.
void add_residual_subgradient(const GruLayerWeights& w, double coeff,
                              LayerGradients& g) {
  const LayerGainBounds b = layer_bounds(w);
  const double nr = mat_inf_norm(w.U_r);
  const double nf = mat_inf_norm(w.U_f);
  const double nz = mat_inf_norm(w.U_z);

  const double d_nr = 0.25 * nf + b.sigma_f;
  const double d_nf = 0.25 * nr;
  const double d_nz = 0.25 * (1.0 + b.phi_r) / (1.0 - b.sigma_z);
  const double d_sf = nr * b.sigma_f * (1.0 - b.sigma_f);
  const double d_sr = 0.25 * nz / (1.0 - b.sigma_z) * (1.0 - b.phi_r * b.phi_r);
  const double d_sz =
      0.25 * (1.0 + b.phi_r) * nz * b.sigma_z / (1.0 - b.sigma_z);

  const MatrixXd empty_m;
  const VectorXd empty_v;
  add_sign_row(g.U_r, w.U_r, argmax_abs_row_sum(empty_m, w.U_r, empty_v),
               coeff * d_nr);
  add_sign_row(g.U_f, w.U_f, argmax_abs_row_sum(empty_m, w.U_f, empty_v),
               coeff * d_nf);
  add_sign_row(g.U_z, w.U_z, argmax_abs_row_sum(empty_m, w.U_z, empty_v),
               coeff * d_nz);

  const int rz = argmax_abs_row_sum(w.W_z, w.U_z, w.b_z);
  add_sign_row(g.W_z, w.W_z, rz, coeff * d_sz);
  add_sign_row(g.U_z, w.U_z, rz, coeff * d_sz);
  if (w.b_z(rz) > 0)
    g.b_z(rz) += coeff * d_sz;
  else if (w.b_z(rz) < 0)
    g.b_z(rz) -= coeff * d_sz;

  const int rf = argmax_abs_row_sum(w.W_f, w.U_f, w.b_f);
  add_sign_row(g.W_f, w.W_f, rf, coeff * d_sf);
  add_sign_row(g.U_f, w.U_f, rf, coeff * d_sf);
  if (w.b_f(rf) > 0)
    g.b_f(rf) += coeff * d_sf;
  else if (w.b_f(rf) < 0)
    g.b_f(rf) -= coeff * d_sf;

  const int rr = argmax_abs_row_sum(w.W_r, w.U_r, w.b_r);
  add_sign_row(g.W_r, w.W_r, rr, coeff * d_sr);
  add_sign_row(g.U_r, w.U_r, rr, coeff * d_sr);
  if (w.b_r(rr) > 0)
    g.b_r(rr) += coeff * d_sr;
  else if (w.b_r(rr) < 0)
    g.b_r(rr) -= coeff * d_sr;
}

// d(washout MSE)/dy series for one sequence
std::vector<VectorXd> mse_gradient(const std::vector<VectorXd>& predicted,
                                   const std::vector<VectorXd>& measured,
                                   int washout) {
  const int T = static_cast<int>(predicted.size());
  std::vector<VectorXd> dY(T);
  const double scale = 2.0 / (T - washout);
  for (int k = 0; k < T; ++k) {
    dY[k] = k < washout ? VectorXd::Zero(predicted[k].size())
                        : (scale * (predicted[k] - measured[k])).eval();
  }
  return dY;
}

void add_penalty_terms(const GruNetwork& net, const TrainConfig& cfg,
                       double& loss, GradientSet& grad) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const double nu = delta_iss_residual(net.layers[l]);
    loss += penalty(nu, cfg.nu_target, cfg.penalty_slope);
    const double coeff = penalty_subgradient(nu, cfg.nu_target, cfg.penalty_slope);
    if (coeff != 0.0) add_residual_subgradient(net.layers[l], coeff, grad.layers[l]);
  }
}

}  // namespace

GradientSet GradientSet::zeros_like(const GruNetwork& net) {
  GradientSet g;
  g.layers.resize(net.layers.size());
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const auto& w = net.layers[l];
    auto& gl = g.layers[l];
    gl.W_z = MatrixXd::Zero(w.W_z.rows(), w.W_z.cols());
    gl.W_f = MatrixXd::Zero(w.W_f.rows(), w.W_f.cols());
    gl.W_r = MatrixXd::Zero(w.W_r.rows(), w.W_r.cols());
    gl.U_z = MatrixXd::Zero(w.U_z.rows(), w.U_z.cols());
    gl.U_f = MatrixXd::Zero(w.U_f.rows(), w.U_f.cols());
    gl.U_r = MatrixXd::Zero(w.U_r.rows(), w.U_r.cols());
    gl.b_z = VectorXd::Zero(w.b_z.size());
    gl.b_f = VectorXd::Zero(w.b_f.size());
    gl.b_r = VectorXd::Zero(w.b_r.size());
  }
  g.U_o = MatrixXd::Zero(net.output.U_o.rows(), net.output.U_o.cols());
  g.b_o = VectorXd::Zero(net.output.b_o.size());
  return g;
}

void GradientSet::add(const GradientSet& other) {
  zip_arrays(*this, other, [](auto& a, const auto& b) { a += b; });
}

void GradientSet::scale(double s) {
  for_each_array(*this, [s](auto& a) { a *= s; });
}

double GradientSet::squared_norm() const {
  double s = 0.0;
  for_each_array(*this, [&s](const auto& a) { s += a.squaredNorm(); });
  return s;
}

bool GradientSet::all_finite() const {
  bool ok = true;
  for_each_array(*this, [&ok](const auto& a) { ok = ok && a.allFinite(); });
  return ok;
}

double mse_washout(const std::vector<VectorXd>& predicted,
                   const std::vector<VectorXd>& measured, int washout) {
  if (predicted.size() != measured.size())
    throw std::invalid_argument(
        "mse_washout: length mismatch, " + std::to_string(predicted.size()) +
        " vs " + std::to_string(measured.size()));
  const int T = static_cast<int>(predicted.size());
  if (washout < 0 || washout >= T)
    throw std::invalid_argument("mse_washout: washout " + std::to_string(washout) +
                                " must lie in [0, " + std::to_string(T) + ")");
  double acc = 0.0;
  for (int k = washout; k < T; ++k) acc += (predicted[k] - measured[k]).squaredNorm();
  return acc / (T - washout);
}

LossValue model_loss(const GruNetwork& net, std::span<const IoSequence> batch,
                     std::span<const GruState> initial_states,
                     const TrainConfig& cfg, int workers) {
  if (batch.empty()) throw std::invalid_argument("model_loss: empty batch");
  if (initial_states.size() != batch.size())
    throw std::invalid_argument("model_loss: one initial state per sequence required");

  const int n = static_cast<int>(batch.size());
  std::vector<double> seq_loss(n, 0.0);
  std::vector<GradientSet> seq_grad(n);
  parallel_for(n, workers, [&](int i) {
    RolloutCache cache;
    forward_rollout(net, initial_states[i], batch[i].inputs, cache);
    seq_loss[i] = mse_washout(cache.outputs, batch[i].outputs, cfg.washout);
    const auto dY = mse_gradient(cache.outputs, batch[i].outputs, cfg.washout);
    seq_grad[i] = GradientSet::zeros_like(net);
    backward_rollout(net, cache, dY, &seq_grad[i], nullptr);
  });

  LossValue out;
  out.grad = GradientSet::zeros_like(net);
  for (int i = 0; i < n; ++i) {  // fixed-order reduction
    out.total += seq_loss[i];
    out.grad.add(seq_grad[i]);
  }
  add_penalty_terms(net, cfg, out.total, out.grad);
  if (!std::isfinite(out.total) || !out.grad.all_finite())
    throw std::runtime_error(
        "model loss is non-finite; the rollout diverged -- try a smaller "
        "learning rate or tighter gradient clipping");
  return out;
}

LossValue controller_loss(const GruNetwork& ctrl, const GruNetwork& frozen_model,
                          std::span<const RefSequence> batch,
                          const TrainConfig& cfg, int workers) {
  if (batch.empty()) throw std::invalid_argument("controller_loss: empty batch");
  if (ctrl.output_dim() != frozen_model.input_dim())
    throw std::invalid_argument(
        "controller_loss: controller output dim " +
        std::to_string(ctrl.output_dim()) + " does not match model input dim " +
        std::to_string(frozen_model.input_dim()));

  const int n = static_cast<int>(batch.size());
  std::vector<double> seq_loss(n, 0.0);
  std::vector<GradientSet> seq_grad(n);
  parallel_for(n, workers, [&](int i) {
    const auto& refs = batch[i].refs;
    const int T = static_cast<int>(refs.size());

    // series composition: reference -> controller -> frozen model
    RolloutCache ctrl_cache, model_cache;
    ctrl_cache.steps.resize(T);
    ctrl_cache.outputs.resize(T);
    model_cache.steps.resize(T);
    model_cache.outputs.resize(T);
    GruState xc = GruState::zero(ctrl);
    GruState xm = GruState::zero(frozen_model);
    for (int k = 0; k < T; ++k) {
      xc = step_cached(ctrl, xc, refs[k], ctrl_cache.steps[k], ctrl_cache.outputs[k]);
      xm = step_cached(frozen_model, xm, ctrl_cache.outputs[k],
                       model_cache.steps[k], model_cache.outputs[k]);
    }

    seq_loss[i] = mse_washout(model_cache.outputs, refs, cfg.washout);
    const auto dYm = mse_gradient(model_cache.outputs, refs, cfg.washout);

    // model is frozen: only its input sensitivities are kept
    std::vector<VectorXd> dU;
    backward_rollout(frozen_model, model_cache, dYm, nullptr, &dU);
    seq_grad[i] = GradientSet::zeros_like(ctrl);
    backward_rollout(ctrl, ctrl_cache, dU, &seq_grad[i], nullptr);
  });

  LossValue out;
  out.grad = GradientSet::zeros_like(ctrl);
  for (int i = 0; i < n; ++i) {
    out.total += seq_loss[i];
    out.grad.add(seq_grad[i]);
  }
  add_penalty_terms(ctrl, cfg, out.total, out.grad);
  if (!std::isfinite(out.total) || !out.grad.all_finite())
    throw std::runtime_error(
        "controller loss is non-finite; the rollout diverged -- try a smaller "
        "learning rate or tighter gradient clipping");
  return out;
}

std::vector<VectorXd> free_run_outputs(const GruNetwork& net,
                                       const std::vector<VectorXd>& inputs) {
  return simulate(net, GruState::zero(net), inputs).outputs;
}

std::vector<VectorXd> composed_outputs(const GruNetwork& ctrl,
                                       const GruNetwork& model,
                                       const std::vector<VectorXd>& refs,
                                       std::vector<VectorXd>* controls) {
  GruState xc = GruState::zero(ctrl);
  GruState xm = GruState::zero(model);
  std::vector<VectorXd> outputs;
  outputs.reserve(refs.size());
  if (controls) controls->clear();
  for (const auto& r : refs) {
    auto [xc_next, u] = step(ctrl, xc, r);
    xc = std::move(xc_next);
    auto [xm_next, y] = step(model, xm, u);
    xm = std::move(xm_next);
    if (controls) controls->push_back(u);
    outputs.push_back(std::move(y));
  }
  return outputs;
}

RmspropState RmspropState::zeros_like(const GruNetwork& net) {
  RmspropState s;
  s.cache = GradientSet::zeros_like(net);
  return s;
}

void rmsprop_step(GruNetwork& net, const GradientSet& grads, RmspropState& state,
                  double lr, double decay, double eps) {
  zip3_arrays(net, grads, state.cache, [&](auto& w, const auto& g, auto& c) {
    c = decay * c + (1.0 - decay) * g.cwiseProduct(g);
    w -= lr * g.cwiseQuotient((c.cwiseSqrt().array() + eps).matrix());
  });
}

namespace {

// Shared epoch loop. batch_loss gathers the sequences for a span of shuffled
// indices; epoch_begin redraws any per-epoch randomness in dataset order.
template <class EpochBeginFn, class BatchLossFn, class ValFn>
TrainResult train_loop(const GruNetwork& init, int dataset_size,
                       const TrainConfig& cfg, EpochBeginFn&& epoch_begin,
                       BatchLossFn&& batch_loss, ValFn&& validation,
                       std::ostream* progress) {
  if (dataset_size <= 0) throw std::invalid_argument("train: empty dataset");
  if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");

  GruNetwork net = init;
  net.validate();
  RmspropState opt = RmspropState::zeros_like(net);
  Rng rng(cfg.seed);

  TrainResult result;
  result.best = net;
  TrainReport& rep = result.report;

  std::vector<int> order(dataset_size);
  for (int i = 0; i < dataset_size; ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  int over_initial = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    epoch_begin(rng);
    rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < dataset_size; start += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, dataset_size - start);
      LossValue lv = batch_loss(net, std::span<const int>(order.data() + start, len));
      if (cfg.clip_norm > 0.0) {
        const double norm = std::sqrt(lv.grad.squared_norm());
        if (norm > cfg.clip_norm) {
          lv.grad.scale(cfg.clip_norm / norm);
          ++rep.clip_events;
        }
      }
      rmsprop_step(net, lv.grad, opt, cfg.learning_rate, cfg.rmsprop_decay,
                   cfg.rmsprop_eps);
      loss_sum += lv.total;
      ++batches;
    }
    rep.train_loss.push_back(loss_sum / batches);

    const double val = validation(net);
    rep.val_mse.push_back(val);
    std::vector<double> nus;
    for (const auto& l : net.layers) nus.push_back(delta_iss_residual(l));
    rep.residuals.push_back(nus);

    if (progress) {
      *progress << "epoch " << (epoch + 1) << " loss " << rep.train_loss.back()
                << " val " << val << " nu";
      for (double nu : nus) *progress << ' ' << nu;
      *progress << '\n';
    }

    if (val < best_val) {
      best_val = val;
      result.best = net;
      rep.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    rep.stopped_epoch = epoch;

    const double initial_val = rep.val_mse.front();
    if (initial_val > 0.0 && val > 10.0 * initial_val) {
      if (++over_initial >= 5) {
        rep.diverged = true;
        break;
      }
    } else {
      over_initial = 0;
    }
    if (stale >= cfg.patience) break;
  }

  rep.final_certificate = certify(result.best);
  return result;
}

}  // namespace

TrainResult train_model(const GruNetwork& init,
                        const std::vector<IoSequence>& train_set,
                        const std::vector<IoSequence>& val_set,
                        const TrainConfig& cfg, std::ostream* progress) {
  const int n = static_cast<int>(train_set.size());
  // per-sequence initial states, redrawn uniformly over the unit box each epoch
  std::vector<GruState> initials(n, GruState::zero(init));

  auto epoch_begin = [&](Rng& rng) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < initials[i].xi.size(); ++j)
        initials[i].xi(j) = rng.uniform(-1.0, 1.0);
  };
  auto batch_loss = [&](const GruNetwork& net, std::span<const int> idx) {
    std::vector<IoSequence> seqs;
    std::vector<GruState> inits;
    seqs.reserve(idx.size());
    inits.reserve(idx.size());
    for (int i : idx) {
      seqs.push_back(train_set[i]);
      inits.push_back(initials[i]);
    }
    return model_loss(net, seqs, inits, cfg, cfg.workers);
  };
  auto validation = [&](const GruNetwork& net) {
    double acc = 0.0;
    for (const auto& seq : val_set)
      acc += mse_washout(free_run_outputs(net, seq.inputs), seq.outputs, cfg.washout);
    return val_set.empty() ? 0.0 : acc / val_set.size();
  };
  return train_loop(init, n, cfg, epoch_begin, batch_loss, validation, progress);
}

TrainResult train_controller(const GruNetwork& init, const GruNetwork& model,
                             const std::vector<RefSequence>& train_set,
                             const std::vector<RefSequence>& val_set,
                             const TrainConfig& cfg, std::ostream* progress) {
  auto epoch_begin = [](Rng&) {};
  auto batch_loss = [&](const GruNetwork& net, std::span<const int> idx) {
    std::vector<RefSequence> seqs;
    seqs.reserve(idx.size());
    for (int i : idx) seqs.push_back(train_set[i]);
    return controller_loss(net, model, seqs, cfg, cfg.workers);
  };
  auto validation = [&](const GruNetwork& net) {
    double acc = 0.0;
    for (const auto& seq : val_set)
      acc += mse_washout(composed_outputs(net, model, seq.refs), seq.refs,
                         cfg.washout);
    return val_set.empty() ? 0.0 : acc / val_set.size();
  };
  return train_loop(init, static_cast<int>(train_set.size()), cfg, epoch_begin,
                    batch_loss, validation, progress);
}

}  // namespace imc

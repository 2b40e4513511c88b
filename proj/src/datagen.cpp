#include "imc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace imc {

std::vector<VectorXd> gen_mprs(const MprsConfig& cfg, int length) {
  if (length < 1) throw std::invalid_argument("gen_mprs: length must be >= 1");
  if (cfg.levels < 1) throw std::invalid_argument("gen_mprs: need at least one level");
  if (cfg.hold_min < 1 || cfg.hold_max < cfg.hold_min)
    throw std::invalid_argument("gen_mprs: bad hold-time range");
  if (cfg.amplitude.empty())
    throw std::invalid_argument("gen_mprs: no amplitude ranges given");
  for (const auto& [lo, hi] : cfg.amplitude)
    if (lo < -1.0 || hi > 1.0 || lo > hi)
      throw std::invalid_argument("gen_mprs: amplitudes must lie within [-1,1]");

  const int channels = static_cast<int>(cfg.amplitude.size());
  Rng rng(cfg.seed);
  auto draw_level = [&](int ch) {
    const auto [lo, hi] = cfg.amplitude[ch];
    if (cfg.levels == 1) return 0.5 * (lo + hi);
    const int i = rng.uniform_int(0, cfg.levels - 1);
    return lo + i * (hi - lo) / (cfg.levels - 1);
  };

  std::vector<double> value(channels), remaining(channels);
  for (int c = 0; c < channels; ++c) {
    value[c] = draw_level(c);
    remaining[c] = rng.uniform_int(cfg.hold_min, cfg.hold_max);
  }
  std::vector<VectorXd> seq(length);
  for (int k = 0; k < length; ++k) {
    VectorXd v(channels);
    for (int c = 0; c < channels; ++c) {
      if (remaining[c] <= 0) {
        value[c] = draw_level(c);
        remaining[c] = rng.uniform_int(cfg.hold_min, cfg.hold_max);
      }
      v(c) = value[c];
      remaining[c] -= 1;
    }
    seq[k] = std::move(v);
  }
  return seq;
}

std::vector<IoSequence> tbptt_slices(const IoSequence& source, int window,
                                     int stride) {
  const int len = static_cast<int>(source.inputs.size());
  if (window < 1 || window > len)
    throw std::invalid_argument("tbptt_slices: window " + std::to_string(window) +
                                " exceeds sequence length " + std::to_string(len));
  if (stride < 1) throw std::invalid_argument("tbptt_slices: stride must be >= 1");
  const int count = (len - window) / stride + 1;
  std::vector<IoSequence> out;
  out.reserve(count);
  for (int w = 0; w < count; ++w) {
    const int off = w * stride;
    IoSequence s;
    s.id = source.id + "/w" + std::to_string(w);
    s.sample_period = source.sample_period;
    s.inputs.assign(source.inputs.begin() + off, source.inputs.begin() + off + window);
    s.outputs.assign(source.outputs.begin() + off,
                     source.outputs.begin() + off + window);
    out.push_back(std::move(s));
  }
  return out;
}

ReferenceModel ReferenceModel::from_time_constants(double tau_s, double tau_r,
                                                   int channels) {
  if (tau_s <= 0 || tau_r <= 0)
    throw std::invalid_argument("reference model: time constants must be positive");
  ReferenceModel mr;
  mr.alpha = VectorXd::Constant(channels, std::exp(-tau_s / tau_r));
  return mr;
}

VectorXd ReferenceModel::advance(VectorXd& state, const VectorXd& input) const {
  const VectorXd out = state;
  state = alpha.cwiseProduct(state) +
          (VectorXd::Ones(alpha.size()) - alpha).cwiseProduct(input);
  return out;
}

std::vector<VectorXd> filter_reference(const std::vector<VectorXd>& setpoints,
                                       const ReferenceModel& mr,
                                       const VectorXd& initial) {
  VectorXd state = initial;
  std::vector<VectorXd> out;
  out.reserve(setpoints.size());
  for (const auto& y0 : setpoints) out.push_back(mr.advance(state, y0));
  return out;
}

namespace {

// Standard Nelder-Mead on a box-free objective (the caller folds constraints
// into f). Deterministic given the start point.
VectorXd nelder_mead(const std::function<double(const VectorXd&)>& f,
                     const VectorXd& x0, double init_step, int max_evals,
                     double size_tol, double* best_value) {
  const int n = static_cast<int>(x0.size());
  std::vector<VectorXd> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (int i = 0; i < n; ++i) xs[i + 1](i) += init_step;
  int evals = 0;
  for (int i = 0; i <= n; ++i) fs[i] = (++evals, f(xs[i]));

  auto order = [&] {
    std::vector<int> idx(n + 1);
    for (int i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    std::vector<VectorXd> nxs(n + 1);
    std::vector<double> nfs(n + 1);
    for (int i = 0; i <= n; ++i) {
      nxs[i] = xs[idx[i]];
      nfs[i] = fs[idx[i]];
    }
    xs = std::move(nxs);
    fs = std::move(nfs);
  };

  while (evals < max_evals) {
    order();
    double size = 0.0;
    for (int i = 1; i <= n; ++i) size = std::max(size, (xs[i] - xs[0]).norm());
    if (size < size_tol) break;

    VectorXd centroid = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[i];
    centroid /= n;

    const VectorXd xr = centroid + (centroid - xs[n]);
    const double fr = (++evals, f(xr));
    if (fr < fs[0]) {
      const VectorXd xe = centroid + 2.0 * (centroid - xs[n]);
      const double fe = (++evals, f(xe));
      if (fe < fr) {
        xs[n] = xe;
        fs[n] = fe;
      } else {
        xs[n] = xr;
        fs[n] = fr;
      }
    } else if (fr < fs[n - 1]) {
      xs[n] = xr;
      fs[n] = fr;
    } else {
      const VectorXd xc = centroid + 0.5 * (xs[n] - centroid);
      const double fc = (++evals, f(xc));
      if (fc < fs[n]) {
        xs[n] = xc;
        fs[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = (++evals, f(xs[i]));
        }
      }
    }
  }
  order();
  if (best_value) *best_value = fs[0];
  return xs[0];
}

VectorXd clamp_box(const VectorXd& u) {
  return u.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace

EquilibriumSolver::EquilibriumSolver(const GruNetwork& model,
                                     EquilibriumOptions opt)
    : model_(model), opt_(opt) {
  model_.validate();
  const int m = model_.input_dim();
  const int g = std::max(2, opt_.grid);
  std::vector<int> idx(m, 0);
  const GruState zero = GruState::zero(model_);
  while (true) {
    VectorXd u(m);
    for (int c = 0; c < m; ++c) u(c) = -1.0 + 2.0 * idx[c] / (g - 1);
    EquilibriumResult r = settle(u, zero.xi);
    if (r.status == EquilibriumStatus::Found) grid_.push_back(*r.eq);
    int c = 0;
    while (c < m && ++idx[c] == g) idx[c++] = 0;
    if (c == m) break;
  }
  if (grid_.empty())
    throw std::runtime_error("equilibrium solver: no grid point settled; "
                             "is the model contracting?");
}

EquilibriumResult EquilibriumSolver::settle(const VectorXd& u,
                                            const VectorXd& warm_xi) const {
  GruState s = GruState::from_vector(model_, warm_xi);
  bool settled = false;
  for (int k = 0; k < opt_.settle_cap; ++k) {
    GruState next = step(model_, s, u).first;
    const double delta = (next.xi - s.xi).lpNorm<Eigen::Infinity>();
    s = std::move(next);
    if (delta < opt_.settle_tol) {
      settled = true;
      break;
    }
  }
  EquilibriumResult r;
  if (!settled) {
    r.status = EquilibriumStatus::Unsettled;
    return r;
  }
  Equilibrium eq;
  eq.u_s = u;
  eq.xi_s = s.xi;
  eq.y_s = output_of(model_, s);
  eq.state_residual = (step(model_, s, u).first.xi - s.xi).lpNorm<Eigen::Infinity>();
  r.status = EquilibriumStatus::Found;
  r.eq = std::move(eq);
  return r;
}

EquilibriumResult EquilibriumSolver::solve(const VectorXd& y_target) const {
  if (y_target.size() != model_.output_dim())
    throw std::invalid_argument("solve_equilibrium: target has " +
                                std::to_string(y_target.size()) +
                                " entries, expected " +
                                std::to_string(model_.output_dim()));
  EquilibriumResult out;
  if (y_target.lpNorm<Eigen::Infinity>() > 1.0) {
    out.status = EquilibriumStatus::NotFound;  // outside the normalized range
    out.best_score = std::numeric_limits<double>::infinity();
    return out;
  }

  // warm start: closest attainable grid output
  const Equilibrium* warm = &grid_.front();
  for (const auto& eq : grid_)
    if ((eq.y_s - y_target).norm() < (warm->y_s - y_target).norm()) warm = &eq;

  bool hit_cap = false;
  auto score = [&](const VectorXd& u_raw) {
    const VectorXd u = clamp_box(u_raw);
    EquilibriumResult r = settle(u, warm->xi_s);
    if (r.status != EquilibriumStatus::Found) {
      hit_cap = true;
      return 1e12;
    }
    return (r.eq->y_s - y_target).norm() + 10.0 * (u_raw - u).lpNorm<1>();
  };

  const double spacing = 2.0 / std::max(2, opt_.grid - 1);
  double best = 0.0;
  const VectorXd u_best = clamp_box(
      nelder_mead(score, warm->u_s, 0.5 * spacing, opt_.refine_evals, 1e-10, &best));

  if (hit_cap) {
    out.status = EquilibriumStatus::Unsettled;
    out.best_score = best;
    return out;
  }

  EquilibriumResult final_settle = settle(u_best, warm->xi_s);
  if (final_settle.status != EquilibriumStatus::Found) {
    out.status = EquilibriumStatus::Unsettled;
    return out;
  }
  Equilibrium eq = *final_settle.eq;
  eq.output_residual = (eq.y_s - y_target).norm();
  out.best_score = eq.output_residual;
  if (eq.output_residual < opt_.output_tol) {
    out.status = EquilibriumStatus::Found;
    out.eq = std::move(eq);
  } else {
    out.status = EquilibriumStatus::NotFound;
  }
  return out;
}

EquilibriumResult solve_equilibrium(const GruNetwork& model,
                                    const VectorXd& y_target,
                                    const EquilibriumOptions& opt) {
  return EquilibriumSolver(model, opt).solve(y_target);
}

std::vector<Equilibrium> feasible_output_map(const GruNetwork& model,
                                             int grid_density,
                                             const EquilibriumOptions& opt) {
  EquilibriumOptions o = opt;
  o.grid = grid_density;
  return EquilibriumSolver(model, o).grid();
}

namespace {

double cross2(const VectorXd& o, const VectorXd& a, const VectorXd& b) {
  return (a(0) - o(0)) * (b(1) - o(1)) - (a(1) - o(1)) * (b(0) - o(0));
}

}  // namespace

FeasibleRegion FeasibleRegion::from_points(const std::vector<VectorXd>& points,
                                           double inset) {
  if (points.size() < 3)
    throw std::invalid_argument("feasible region: need at least 3 points");
  for (const auto& p : points)
    if (p.size() != 2)
      throw std::invalid_argument("feasible region: two output channels expected");

  // Andrew's monotone chain
  std::vector<VectorXd> pts = points;
  std::sort(pts.begin(), pts.end(), [](const VectorXd& a, const VectorXd& b) {
    return a(0) < b(0) || (a(0) == b(0) && a(1) < b(1));
  });
  std::vector<VectorXd> hull(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const size_t lower = k + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  if (hull.size() < 3)
    throw std::invalid_argument("feasible region: attainable outputs are degenerate");

  VectorXd centroid = VectorXd::Zero(2);
  for (const auto& v : hull) centroid += v;
  centroid /= static_cast<double>(hull.size());

  FeasibleRegion region;
  region.hull_.reserve(hull.size());
  for (const auto& v : hull)
    region.hull_.push_back(centroid + (1.0 - inset) * (v - centroid));
  region.lo_[0] = region.lo_[1] = 1e300;
  region.hi_[0] = region.hi_[1] = -1e300;
  for (const auto& v : region.hull_)
    for (int c = 0; c < 2; ++c) {
      region.lo_[c] = std::min(region.lo_[c], v(c));
      region.hi_[c] = std::max(region.hi_[c], v(c));
    }
  return region;
}

bool FeasibleRegion::contains(const VectorXd& y) const {
  const size_t n = hull_.size();
  for (size_t i = 0; i < n; ++i) {
    if (cross2(hull_[i], hull_[(i + 1) % n], y) < 0) return false;
  }
  return true;
}

VectorXd FeasibleRegion::sample(Rng& rng) const {
  for (int tries = 0; tries < 100000; ++tries) {
    VectorXd y(2);
    y(0) = rng.uniform(lo_[0], hi_[0]);
    y(1) = rng.uniform(lo_[1], hi_[1]);
    if (contains(y)) return y;
  }
  throw std::runtime_error("feasible region: rejection sampling failed");
}

ReferenceDataset gen_reference_dataset(const GruNetwork& model,
                                       const ReferenceModel& mr,
                                       const ReferenceDatasetConfig& cfg,
                                       const EquilibriumOptions& eq_opt) {
  if (cfg.hold_min < 1 || cfg.hold_max < cfg.hold_min)
    throw std::invalid_argument("reference dataset: bad hold range");
  const int total = cfg.n_train + cfg.n_val + cfg.n_test;
  if (total < 1) throw std::invalid_argument("reference dataset: empty split");

  EquilibriumSolver solver(model, eq_opt);
  std::vector<VectorXd> cloud;
  for (const auto& eq : solver.grid()) cloud.push_back(eq.y_s);
  const FeasibleRegion region = FeasibleRegion::from_points(cloud, cfg.inset);

  Rng rng(cfg.seed);

  // screened pool of set-points; segments draw from it
  const int pool_size = 64;
  std::vector<VectorXd> pool;
  int rejected = 0;
  while (static_cast<int>(pool.size()) < pool_size) {
    const VectorXd y = region.sample(rng);
    if (solver.solve(y).status == EquilibriumStatus::Found) {
      pool.push_back(y);
    } else if (++rejected > 50 * pool_size) {
      throw std::runtime_error(
          "reference dataset: insufficient feasible set-points inside the hull");
    }
  }

  std::vector<RefSequence> all;
  all.reserve(total);
  for (int i = 0; i < total; ++i) {
    RefSequence seq;
    seq.id = "ref-" + std::to_string(i);
    seq.sample_period = cfg.sample_period;
    seq.setpoints.reserve(cfg.length);
    while (static_cast<int>(seq.setpoints.size()) < cfg.length) {
      const VectorXd& y = pool[rng.uniform_int(0, pool_size - 1)];
      const int hold = rng.uniform_int(cfg.hold_min, cfg.hold_max);
      for (int k = 0; k < hold && static_cast<int>(seq.setpoints.size()) < cfg.length;
           ++k)
        seq.setpoints.push_back(y);
    }
    seq.refs = filter_reference(seq.setpoints, mr, seq.setpoints.front());
    all.push_back(std::move(seq));
  }

  std::vector<int> order(total);
  for (int i = 0; i < total; ++i) order[i] = i;
  rng.shuffle(order);

  ReferenceDataset ds;
  for (int i = 0; i < total; ++i) {
    RefSequence& s = all[order[i]];
    if (i < cfg.n_train)
      ds.train.push_back(std::move(s));
    else if (i < cfg.n_train + cfg.n_val)
      ds.val.push_back(std::move(s));
    else
      ds.test.push_back(std::move(s));
  }
  return ds;
}

std::vector<VectorXd> make_setpoint_schedule(const GruNetwork& model,
                                             int n_setpoints, int hold,
                                             std::uint64_t seed, double inset,
                                             const EquilibriumOptions& eq_opt) {
  EquilibriumSolver solver(model, eq_opt);
  std::vector<VectorXd> cloud;
  for (const auto& eq : solver.grid()) cloud.push_back(eq.y_s);
  const FeasibleRegion region = FeasibleRegion::from_points(cloud, inset);

  Rng rng(seed);
  std::vector<VectorXd> candidates;
  while (static_cast<int>(candidates.size()) < 8 * n_setpoints) {
    const VectorXd y = region.sample(rng);
    if (solver.solve(y).status == EquilibriumStatus::Found) candidates.push_back(y);
  }

  // greedy max-min dispersion so the schedule spans the feasible map
  std::vector<VectorXd> picked;
  picked.push_back(candidates.front());
  while (static_cast<int>(picked.size()) < n_setpoints) {
    int best = -1;
    double best_dist = -1.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
      double d = 1e300;
      for (const auto& p : picked) d = std::min(d, (candidates[i] - p).norm());
      if (d > best_dist) {
        best_dist = d;
        best = static_cast<int>(i);
      }
    }
    picked.push_back(candidates[best]);
  }

  std::vector<VectorXd> schedule;
  schedule.reserve(picked.size() * hold);
  for (const auto& y : picked)
    for (int k = 0; k < hold; ++k) schedule.push_back(y);
  return schedule;
}

}  // namespace imc

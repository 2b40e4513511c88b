#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "imc/datagen.hpp"

using namespace imc;

TEST_CASE("mprs basics") {
  MprsConfig cfg;
  cfg.levels = 5;
  cfg.amplitude = {{-0.8, 0.8}, {-0.3, 0.9}};
  cfg.seed = 4;

  SUBCASE("single level with hold covering the length is constant") {
    MprsConfig one = cfg;
    one.levels = 1;
    one.hold_min = one.hold_max = 50;
    const auto seq = gen_mprs(one, 50);
    for (const auto& v : seq) {
      CHECK(v(0) == doctest::Approx(0.0));          // midpoint of [-0.8, 0.8]
      CHECK(v(1) == doctest::Approx(0.3));          // midpoint of [-0.3, 0.9]
    }
  }
  SUBCASE("samples stay inside the amplitude ranges") {
    cfg.hold_min = 3;
    cfg.hold_max = 10;
    const auto seq = gen_mprs(cfg, 500);
    for (const auto& v : seq) {
      CHECK(v(0) >= -0.8);
      CHECK(v(0) <= 0.8);
      CHECK(v(1) >= -0.3);
      CHECK(v(1) <= 0.9);
    }
  }
  SUBCASE("the seed pins the byte-identical sequence") {
    cfg.hold_min = 2;
    cfg.hold_max = 9;
    const auto a = gen_mprs(cfg, 300);
    const auto b = gen_mprs(cfg, 300);
    for (int k = 0; k < 300; ++k) CHECK((a[k] == b[k]));
  }
  SUBCASE("bad configs are rejected") {
    CHECK_THROWS_AS(gen_mprs(cfg, 0), std::invalid_argument);
    MprsConfig bad = cfg;
    bad.amplitude = {{-2.0, 0.5}};
    CHECK_THROWS_AS(gen_mprs(bad, 10), std::invalid_argument);
  }
}

TEST_CASE("tbptt window extraction") {
  IoSequence longseq;
  longseq.id = "exp";
  longseq.sample_period = 25.0;
  for (int k = 0; k < 1000; ++k) {
    longseq.inputs.push_back(VectorXd::Constant(1, static_cast<double>(k)));
    longseq.outputs.push_back(VectorXd::Constant(1, static_cast<double>(-k)));
  }

  SUBCASE("window equal to the length gives exactly one slice") {
    IoSequence small = longseq;
    small.inputs.resize(700);
    small.outputs.resize(700);
    const auto slices = tbptt_slices(small, 700, 100);
    CHECK(slices.size() == 1);
  }
  SUBCASE("1000/700/100 gives four windows") {
    const auto slices = tbptt_slices(longseq, 700, 100);
    REQUIRE(slices.size() == 4);
    CHECK(slices[3].inputs.front()(0) == doctest::Approx(300.0));
    CHECK(slices[3].inputs.back()(0) == doctest::Approx(999.0));
  }
  SUBCASE("adjacent windows share window-stride samples") {
    const auto slices = tbptt_slices(longseq, 700, 100);
    for (int k = 0; k < 600; ++k)
      CHECK(slices[0].inputs[100 + k](0) == slices[1].inputs[k](0));
  }
  SUBCASE("stride-length prefixes reconstruct the source") {
    const auto slices = tbptt_slices(longseq, 700, 100);
    int at = 0;
    for (const auto& s : slices)
      for (int k = 0; k < 100; ++k)
        CHECK(s.inputs[k](0) == longseq.inputs[at++](0));
  }
  SUBCASE("window larger than the source is an error") {
    CHECK_THROWS_AS(tbptt_slices(longseq, 1001, 100), std::invalid_argument);
  }
}

TEST_CASE("first-order reference filter") {
  const ReferenceModel mr = ReferenceModel::from_time_constants(25.0, 2000.0, 1);
  CHECK(mr.alpha(0) == doctest::Approx(0.9875778004938814).epsilon(1e-12));

  SUBCASE("unit step reaches 1 - 1/e after one time constant") {
    std::vector<VectorXd> y0(81, VectorXd::Constant(1, 1.0));
    const auto ref = filter_reference(y0, mr, VectorXd::Zero(1));
    // 80 steps of 25 s = 2000 s
    CHECK(ref[80](0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("constant input from a matching initial state is the identity") {
    std::vector<VectorXd> y0(40, VectorXd::Constant(1, 0.37));
    const auto ref = filter_reference(y0, mr, VectorXd::Constant(1, 0.37));
    for (const auto& r : ref) CHECK(r(0) == doctest::Approx(0.37));
  }
  SUBCASE("unit DC gain: a constant settles exactly") {
    std::vector<VectorXd> y0(800, VectorXd::Constant(1, -0.6));  // 10 tau_r
    const auto ref = filter_reference(y0, mr, VectorXd::Zero(1));
    CHECK(std::abs(ref.back()(0) - (-0.6)) < 1e-3);
    VectorXd state = VectorXd::Zero(1);
    for (int k = 0; k < 8000; ++k) mr.advance(state, VectorXd::Constant(1, -0.6));
    CHECK(std::abs(state(0) - (-0.6)) < 1e-9);
  }
}

TEST_CASE("equilibrium solving on certified networks") {
  Rng rng(606);
  GruNetwork model = imctest::random_certified_net(rng, 2, {4}, 2,
                                                   OutputActivation::Identity);
  // keep attainable outputs well inside the unit box
  model.output.U_o *= 0.4 / std::max(1.0, mat_inf_norm(model.output.U_o));
  model.output.b_o *= 0.1;

  EquilibriumOptions opt;
  opt.grid = 5;
  EquilibriumSolver solver(model, opt);

  SUBCASE("round trip recovers a known input") {
    for (int trial = 0; trial < 5; ++trial) {
      VectorXd u_true(2);
      u_true << rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8);
      GruState s = GruState::zero(model);
      for (int k = 0; k < 30000; ++k) {
        GruState next = step(model, s, u_true).first;
        const double d = (next.xi - s.xi).lpNorm<Eigen::Infinity>();
        s = std::move(next);
        if (d < 1e-12) break;
      }
      const VectorXd y_target = output_of(model, s);
      const auto r = solver.solve(y_target);
      REQUIRE(r.status == EquilibriumStatus::Found);
      CHECK((r.eq->u_s - u_true).lpNorm<Eigen::Infinity>() < 1e-3);
      CHECK(r.eq->state_residual < opt.settle_tol);
    }
  }
  SUBCASE("two different warm-start grids agree") {
    VectorXd u_true(2);
    u_true << 0.31, -0.47;
    GruState s = GruState::zero(model);
    for (int k = 0; k < 30000; ++k) s = step(model, s, u_true).first;
    const VectorXd y_target = output_of(model, s);

    EquilibriumOptions o2 = opt;
    o2.grid = 4;
    const auto a = solver.solve(y_target);
    const auto b = EquilibriumSolver(model, o2).solve(y_target);
    REQUIRE(a.status == EquilibriumStatus::Found);
    REQUIRE(b.status == EquilibriumStatus::Found);
    CHECK((a.eq->u_s - b.eq->u_s).lpNorm<Eigen::Infinity>() < 1e-3);
  }
  SUBCASE("targets outside the normalized box are infeasible") {
    VectorXd y(2);
    y << 1.5, 0.0;
    CHECK(solver.solve(y).status == EquilibriumStatus::NotFound);
  }
  SUBCASE("unreachable targets inside the box are NotFound") {
    VectorXd y(2);
    y << 0.99, 0.99;  // outputs were scaled to ~0.5 max
    const auto r = solver.solve(y);
    CHECK(r.status == EquilibriumStatus::NotFound);
    CHECK(r.best_score >= 1e-3);
  }
}

TEST_CASE("feasible output map and hull sampling") {
  Rng rng(707);
  GruNetwork model = imctest::random_certified_net(rng, 2, {4}, 2,
                                                   OutputActivation::Identity);
  model.output.U_o *= 0.4 / std::max(1.0, mat_inf_norm(model.output.U_o));
  model.output.b_o *= 0.1;

  EquilibriumOptions opt;
  const auto corners = feasible_output_map(model, 2, opt);
  CHECK(corners.size() == 4);
  for (const auto& eq : corners) {
    CHECK(eq.state_residual < opt.settle_tol);
    CHECK(eq.y_s.lpNorm<Eigen::Infinity>() <= 1.0);
  }

  const auto cloud = feasible_output_map(model, 5, opt);
  std::vector<VectorXd> pts;
  for (const auto& eq : cloud) pts.push_back(eq.y_s);
  const FeasibleRegion region = FeasibleRegion::from_points(pts, 0.02);
  Rng srng(1);
  for (int i = 0; i < 50; ++i) {
    const VectorXd y = region.sample(srng);
    CHECK(region.contains(y));
    CHECK(y.lpNorm<Eigen::Infinity>() <= 1.0);
  }
}

TEST_CASE("reference dataset generation") {
  Rng rng(808);
  GruNetwork model = imctest::random_certified_net(rng, 2, {4}, 2,
                                                   OutputActivation::Identity);
  model.output.U_o *= 0.4 / std::max(1.0, mat_inf_norm(model.output.U_o));
  model.output.b_o *= 0.1;

  const ReferenceModel mr = ReferenceModel::from_time_constants(25.0, 2000.0, 2);
  ReferenceDatasetConfig cfg;
  cfg.n_train = 6;
  cfg.n_val = 2;
  cfg.n_test = 2;
  cfg.length = 60;
  cfg.hold_min = 10;
  cfg.hold_max = 30;
  cfg.seed = 77;

  EquilibriumOptions opt;
  opt.settle_tol = 1e-9;
  const auto ds = gen_reference_dataset(model, mr, cfg, opt);
  CHECK(ds.train.size() == 6);
  CHECK(ds.val.size() == 2);
  CHECK(ds.test.size() == 2);

  EquilibriumSolver solver(model, opt);
  for (const auto& seq : ds.train) {
    REQUIRE(seq.setpoints.size() == 60);
    REQUIRE(seq.refs.size() == 60);
    CHECK((seq.refs.front() == seq.setpoints.front()));  // filter starts settled
    // every distinct segment value passes the feasibility screen
    VectorXd prev = seq.setpoints.front();
    CHECK(solver.solve(prev).status == EquilibriumStatus::Found);
    for (const auto& y : seq.setpoints) {
      if (y != prev) {
        CHECK(solver.solve(y).status == EquilibriumStatus::Found);
        prev = y;
      }
    }
  }

  SUBCASE("same seed, same dataset") {
    const auto ds2 = gen_reference_dataset(model, mr, cfg, opt);
    REQUIRE(ds2.train.size() == ds.train.size());
    for (size_t i = 0; i < ds.train.size(); ++i) {
      CHECK(ds.train[i].id == ds2.train[i].id);
      for (size_t k = 0; k < ds.train[i].refs.size(); ++k)
        CHECK((ds.train[i].refs[k] == ds2.train[i].refs[k]));
    }
  }
}

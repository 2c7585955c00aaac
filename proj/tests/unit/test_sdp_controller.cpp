#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "convctl/feasible_region.hpp"
#include "convctl/presets.hpp"
#include "convctl/sdp_controller.hpp"
#include "oracles.hpp"

using namespace convctl;

namespace {

constexpr TrackingMode kModes[] = {TrackingMode::PQ, TrackingMode::PV2, TrackingMode::QV2};

Eigen::Matrix3d random_symmetric(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) a(i, j) = a(j, i) = n(rng);
  return a;
}

EquivalentNetwork random_network(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> r(0.0, 0.2), x(-0.2, 0.2), mag(0.5, 1.5), ang(-3.0, 3.0);
  const double m = mag(rng), a = ang(rng);
  return EquivalentNetwork::from_rx(r(rng), x(rng), {m * std::cos(a), m * std::sin(a)});
}

ControllerConfig reference_converter_config() {
  ControllerConfig cfg;
  cfg.mode = TrackingMode::PV2;
  cfg.setpoint = {1.0, 1.0};
  cfg.gamma = 1.0;
  cfg.rho = 1e-3;
  cfg.step_size = 1.0;
  cfg.i_max = 1.0;
  return cfg;
}

}  // namespace

TEST(Lift, Examples) {
  EXPECT_TRUE(lift({0, 0}).m.isApprox(Eigen::Vector3d(0, 0, 1).asDiagonal().toDenseMatrix()));
  Eigen::Matrix3d want;
  want << 1, 0, 1, 0, 0, 0, 1, 0, 1;
  EXPECT_EQ(lift({1, 0}).m, want);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 100; ++k) {
    const DqVector i{u(rng), u(rng)};
    const auto w = lift(i);
    EXPECT_NEAR(w.trace(), i.squared_norm() + 1.0, 1e-14);
    EXPECT_EQ(w.in_feasible_set(1.0), i.norm() <= 1.0 + kMembershipTol) << i.norm();
  }
}

TEST(ObjectiveMatrices, TracesReproduceOutputs) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 100; ++k) {
    const auto net = random_network(rng);
    const DqVector i{u(rng), u(rng)};
    const auto o = compute_outputs(i, net);
    for (auto m : kModes) {
      const auto mats = build_objective_matrices(m, net);
      const OutputPoint s = mats.outputs(lift(i).m);
      EXPECT_LE((s - select_outputs(m, o)).cwiseAbs().maxCoeff(), 1e-12);
      // structure: scalar top-left block, symmetric
      EXPECT_EQ(mats.m1(0, 1), 0.0);
      EXPECT_EQ(mats.m1(0, 0), mats.m1(1, 1));
      EXPECT_TRUE(mats.m2.isApprox(mats.m2.transpose()));
    }
  }
}

TEST(ObjectiveMatrices, ZeroCurrentVoltage) {
  const auto net = presets::reference_converter_network();
  const auto mats = build_objective_matrices(TrackingMode::PV2, net);
  EXPECT_NEAR(mats.outputs(lift({0, 0}).m)(1), net.e_dq.squared_norm(), 1e-15);
  // active power matrix: [k R I2, k E / 2; k E^T / 2, 0]
  EXPECT_NEAR(mats.m1(0, 2), 0.5 * net.power_scale * net.e_dq.d, 1e-15);
  EXPECT_NEAR(mats.m1(0, 0), net.power_scale * net.r_eq, 1e-15);
  EXPECT_EQ(mats.m1(2, 2), 0.0);
}

TEST(ObjectiveGradient, ZeroTrackingErrorLeavesRegularizer) {
  const auto net = presets::reference_converter_network();
  const auto mats = build_objective_matrices(TrackingMode::PV2, net);
  auto cfg = reference_converter_config();
  const auto w = lift({0.4, -0.1}).m;
  cfg.setpoint = mats.outputs(w);
  const auto og = objective_and_gradient(w, mats, cfg);
  EXPECT_TRUE(og.gradient.isApprox(cfg.rho * Eigen::Matrix3d::Identity(), 1e-12));
  EXPECT_NEAR(og.value, cfg.rho * w.trace(), 1e-15);
}

TEST(ObjectiveGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto net = random_network(rng);
    const auto mats = build_objective_matrices(kModes[k % 3], net);
    ControllerConfig cfg;
    cfg.setpoint = {u(rng), u(rng)};
    cfg.gamma = std::abs(u(rng));
    cfg.rho = 1e-3;
    const Eigen::Matrix3d w = random_symmetric(rng);
    const auto og = objective_and_gradient(w, mats, cfg);
    const double h = 1e-6;
    Eigen::Matrix3d fd;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
        e(i, j) = h;
        fd(i, j) = (objective_value(w + e, mats, cfg) - objective_value(w - e, mats, cfg)) / (2 * h);
      }
    worst = std::max(worst, (fd - og.gradient).norm() / std::max(1e-12, og.gradient.norm()));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(ObjectiveGradient, ZeroGammaIgnoresSecondOutput) {
  const auto net = presets::reference_converter_network();
  const auto mats = build_objective_matrices(TrackingMode::PV2, net);
  auto cfg = reference_converter_config();
  cfg.gamma = 0.0;
  const Eigen::Matrix3d w = lift({0.5, 0.5}).m;
  auto other = mats;
  other.m2 *= 7.0;
  EXPECT_TRUE(objective_and_gradient(w, mats, cfg).gradient.isApprox(objective_and_gradient(w, other, cfg).gradient));
}

TEST(ProjectPsd, Examples) {
  EXPECT_TRUE(project_psd(Eigen::Vector3d(1, -1, 1).asDiagonal().toDenseMatrix())
                  .isApprox(Eigen::Vector3d(1, 0, 1).asDiagonal().toDenseMatrix(), 1e-15));
  const Eigen::Matrix3d psd = lift({0.3, 0.4}).m + 0.1 * Eigen::Matrix3d::Identity();
  EXPECT_LE((project_psd(psd) - psd).norm(), 1e-12);
}

TEST(ProjectPsd, Complementarity) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 500; ++k) {
    const Eigen::Matrix3d a = random_symmetric(rng);
    const Eigen::Matrix3d r = project_psd(a);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> ref(r);
    EXPECT_GE(ref.eigenvalues().minCoeff(), -1e-12);
    EXPECT_NEAR((a - r).cwiseProduct(r).sum(), 0.0, 1e-12);
  }
}

TEST(ProjectOntoW, FixedPoint) {
  const Eigen::Matrix3d a = lift({0.2, 0.5}).m;
  EXPECT_LE((project_onto_w(a, 1.0).m - a).norm(), 1e-10);
}

TEST(ProjectOntoW, ActivatesCurrentLimit) {
  const auto w = project_onto_w(lift({2.0, 0.0}).m, 1.0);
  EXPECT_NEAR(w.current_trace(), 1.0, 1e-9);
  EXPECT_NEAR(w.m(2, 2), 1.0, 1e-9);
  EXPECT_TRUE(w.in_feasible_set(1.0));
}

TEST(ProjectOntoW, VariationalInequality) {
  std::mt19937_64 rng(5);
  std::vector<Eigen::Matrix3d> probes;
  while (probes.size() < 1000) {
    const auto x = project_onto_w(random_symmetric(rng, 2.0), 1.0);
    if (x.in_feasible_set(1.0)) probes.push_back(x.m);
  }
  double worst = -1e300;
  for (int k = 0; k < 100; ++k) {
    const Eigen::Matrix3d a = random_symmetric(rng, 2.0);
    const Eigen::Matrix3d r = project_onto_w(a, 1.0).m;
    for (const auto& x : probes) worst = std::max(worst, (x - r).cwiseProduct(a - r).sum());
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(ProjectOntoW, NonFiniteThrows) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
  a(0, 0) = std::nan("");
  EXPECT_THROW(project_onto_w(a, 1.0), NumericalError);
}

TEST(ProjectOntoW, SweepCapReportsResidual) {
  try {
    project_onto_w(10.0 * Eigen::Matrix3d::Ones() - 30.0 * Eigen::Matrix3d::Identity(), 1.0, nullptr, 1e-10, 1);
    FAIL() << "expected a convergence failure";
  } catch (const NumericalError& e) {
    EXPECT_GT(e.residual(), 1e-10);
  }
}

TEST(ExtractCurrent, ZeroImpedanceIsLinear) {
  const auto c = coeffs_for_mode(TrackingMode::PQ, EquivalentNetwork::from_rx(0, 0, {1.0, 0.2}));
  const DqVector i{0.3, -0.6};
  const OutputPoint s = c.evaluate(i);
  const auto ep = solve_extraction(s, c);
  EXPECT_NEAR(ep.mu1, i.squared_norm(), 1e-14);
  EXPECT_NEAR(ep.current().d, i.d, 1e-14);
  EXPECT_NEAR(ep.current().q, i.q, 1e-14);
}

TEST(ExtractCurrent, RoundTripOnReferenceConverter) {
  const auto net = presets::reference_converter_network();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto m : kModes) {
    const auto c = coeffs_for_mode(m, net);
    for (int k = 0; k < 1000; ++k) {
      const DqVector i{u(rng), u(rng)};
      const OutputPoint s = c.evaluate(i);
      const auto ep = solve_extraction(s, c);
      const auto x = ep.current();
      EXPECT_LE((c.evaluate(x) - s).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_NEAR(x.squared_norm(), ep.mu1, 1e-9);
      EXPECT_LE(ep.mu1, ep.mu2);
      if (i.norm() <= 1.0) {
        EXPECT_NEAR(x.d, i.d, 1e-8);
        EXPECT_NEAR(x.q, i.q, 1e-8);
      }
    }
  }
}

TEST(ExtractCurrent, TraceDominanceForRankTwoMembers) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1), w(0, 1);
  const auto net = presets::reference_converter_network();
  for (auto m : kModes) {
    const auto c = coeffs_for_mode(m, net);
    const auto mats = objective_matrices(c);
    for (int k = 0; k < 300; ++k) {
      // convex combination of two lifted currents in the disk: a rank-2 member
      DqVector i1{u(rng), u(rng)}, i2{u(rng), u(rng)};
      if (i1.norm() > 1) i1 = i1 * (1.0 / i1.norm());
      if (i2.norm() > 1) i2 = i2 * (1.0 / i2.norm());
      const double lam = w(rng);
      const Eigen::Matrix3d wm = lam * lift(i1).m + (1 - lam) * lift(i2).m;
      const OutputPoint s = mats.outputs(wm);
      const auto x = extract_current(s(0), s(1), c);
      EXPECT_LE(x.squared_norm(), wm(0, 0) + wm(1, 1) + 1e-8);
      EXPECT_LE(x.squared_norm() + 1.0, wm.trace() + 1e-8);
      EXPECT_LE((c.evaluate(x) - s).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(ExtractCurrent, UnreachableOutputsThrow) {
  // lossy network: P cannot go below its minimum over all currents
  const auto c = coeffs_for_mode(TrackingMode::PQ, EquivalentNetwork::from_rx(0.1, 0.0, {1.0, 0.0}));
  EXPECT_THROW(extract_current(-100.0, 0.0, c), NumericalError);
}

TEST(Estimator, OneShotAndGeometric) {
  const auto net = EquivalentNetwork::from_rx(0.04, 0.1, {0.9, 0.05});
  const DqVector i{0.4, -0.2};
  const DqVector v = terminal_voltage(i, net);
  const auto e1 = estimate_grid_voltage({0, 0}, v, i, net, 1.0);
  EXPECT_NEAR(e1.d, net.e_dq.d, 1e-15);
  EXPECT_NEAR(e1.q, net.e_dq.q, 1e-15);
  DqVector e{2.0, -1.0};
  double err = (e - net.e_dq).norm();
  for (int k = 0; k < 20; ++k) {
    e = estimate_grid_voltage(e, v, i, net, 0.5);
    const double next = (e - net.e_dq).norm();
    EXPECT_NEAR(next, 0.5 * err, 1e-12);
    err = next;
  }
}

TEST(Estimator, DecayingNoiseSettles) {
  // variance 0.1 |E| decaying with tau = 10 dt, gain 0.3
  auto net = presets::reference_converter_network();
  net.e_dq = net.e_dq * presets::kDropFactor;
  const double dt = presets::kStepDt, tau = 10 * dt, var0 = 0.1 * net.e_dq.norm();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  const DqVector i{0.6, 0.2};
  DqVector e = net.e_dq * (1.0 / presets::kDropFactor);
  for (int k = 0; k < 200; ++k) {
    const double sd = std::sqrt(var0 * std::exp(-k * dt / tau));
    const DqVector v = terminal_voltage(i, net) + DqVector{sd * n(rng), sd * n(rng)};
    e = estimate_grid_voltage(e, v, i, net, presets::kDropEstimatorGain);
  }
  EXPECT_LE((e - net.e_dq).norm(), 0.01 * net.e_dq.norm());
}

TEST(ControllerConfig, Validation) {
  ControllerConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.rho = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.step_size = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.estimator_gain = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ControllerStep, SetpointStepReachesReportedOptimum) {
  const auto net = presets::reference_converter_network();
  const auto cfg = reference_converter_config();
  auto st = ControllerState::initial(presets::kStepInitialCurrent, net.e_dq);
  double prev_f = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 500; ++k) {
    const auto v = terminal_voltage(st.current, net);
    const auto r = controller_step(st, v, st.current, cfg, net);
    ASSERT_FALSE(r.flagged) << r.error;
    EXPECT_LE(r.objective_before, prev_f + 1e-10);
    EXPECT_LE(r.command.norm(), cfg.i_max + 1e-9);
    EXPECT_EQ(r.state.w.m, lift(r.command).m);
    prev_f = r.objective_before;
    st = r.state;
  }
  const auto out = select_outputs(cfg.mode, compute_outputs(st.current, net));
  EXPECT_NEAR(out(0), 0.99, 0.02);
  EXPECT_NEAR(out(1), 1.05, 0.02);
}

TEST(ControllerStep, OptimalStateBarelyMoves) {
  const auto net = presets::reference_converter_network();
  auto cfg = reference_converter_config();
  const DqVector i{0.4, 0.1};
  cfg.setpoint = select_outputs(cfg.mode, compute_outputs(i, net));
  const auto st = ControllerState::initial(i, net.e_dq);
  const auto r = controller_step(st, terminal_voltage(i, net), i, cfg, net);
  ASSERT_FALSE(r.flagged);
  // only the trace regularizer pulls: one step moves by O(alpha rho)
  EXPECT_LE((r.command - i).norm(), 10 * cfg.step_size * cfg.rho);
  const auto mats = build_objective_matrices(cfg.mode, net);
  EXPECT_LE(objective_value(r.state.w.m, mats, cfg), r.objective_before + 1e-12);
}

TEST(ControllerStep, FeasibleSetpointUnconstrainedOptimum) {
  const auto net = presets::reference_converter_network();
  auto cfg = reference_converter_config();
  cfg.setpoint = select_outputs(cfg.mode, compute_outputs({0.5, -0.3}, net));
  auto st = ControllerState::initial({0.0, 0.0}, net.e_dq);
  StepResult r;
  for (int k = 0; k < 3000; ++k) {
    r = controller_step(st, terminal_voltage(st.current, net), st.current, cfg, net);
    st = r.state;
  }
  const auto mats = build_objective_matrices(cfg.mode, net);
  const double f = objective_value(st.w.m, mats, cfg);
  // the regularizer trades a little tracking error for a smaller current,
  // so compare against the rank-1 minimum rather than rho Tr(W)
  const auto ref = oracle::rank_one_minimum(mats, cfg);
  EXPECT_GE(f, ref.value - 1e-10);
  EXPECT_NEAR(f, ref.value, 1e-8);
  EXPECT_LE((st.current - ref.current).norm(), 1e-3);
  const auto out = select_outputs(cfg.mode, compute_outputs(st.current, net));
  EXPECT_NEAR(out(0), cfg.setpoint(0), 1e-2);
  EXPECT_NEAR(out(1), cfg.setpoint(1), 1e-2);
}

TEST(ControllerStep, RankOneAtConvergence) {
  const auto net = presets::reference_converter_network();
  const auto cfg = reference_converter_config();
  auto st = ControllerState::initial(presets::kStepInitialCurrent, net.e_dq);
  StepResult r;
  int still = 0;
  for (int k = 0; k < 5000 && still < 10; ++k) {
    r = controller_step(st, terminal_voltage(st.current, net), st.current, cfg, net);
    still = (r.command - st.current).norm() <= 1e-9 ? still + 1 : 0;
    st = r.state;
  }
  ASSERT_GE(still, 10);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(r.w_pgd);
  EXPECT_LE(eig.eigenvalues()(1), 1e-6 * r.w_pgd.trace());
}

TEST(ControllerStep, FailSafeHoldsPreviousCurrent) {
  const auto net = presets::reference_converter_network();
  const auto cfg = reference_converter_config();
  const auto st = ControllerState::initial({0.3, 0.3}, net.e_dq);
  const DqVector bad{std::nan(""), 0.0};
  const auto r = controller_step(st, bad, st.current, cfg, net);
  EXPECT_TRUE(r.flagged);
  EXPECT_FALSE(r.error.empty());
  EXPECT_EQ(r.command, st.current);
}

TEST(ControllerStep, VoltageCommandIsConsistent) {
  const auto net = presets::reference_converter_network();
  const auto cfg = reference_converter_config();
  const auto st = ControllerState::initial(presets::kStepInitialCurrent, net.e_dq);
  const auto r = controller_step(st, terminal_voltage(st.current, net), st.current, cfg, net);
  const auto v_next = terminal_voltage(r.command, net);
  EXPECT_NEAR(r.voltage_command.d, v_next.d, 1e-12);
  EXPECT_NEAR(r.voltage_command.q, v_next.q, 1e-12);
}

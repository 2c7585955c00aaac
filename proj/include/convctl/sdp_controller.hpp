#pragma once

// Optimal converter controller: projected gradient descent on the lifted,
// trace-regularised problem
//
//   min  0.5 (<M1,W> - S1bar)^2 + gamma 0.5 (<M2,W> - S2bar)^2 + rho Tr(W)
//   s.t. W PSD, W11 + W22 <= I_max^2, W33 = 1
//
// followed, every step, by extraction of the smallest current reproducing the
// projected iterate's outputs and re-lifting it to a rank-1 matrix.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "convctl/dq_network.hpp"
#include "convctl/errors.hpp"
#include "convctl/feasible_region.hpp"
#include "convctl/symmetric_eigen.hpp"

namespace convctl {

inline constexpr double kMembershipTol = 1e-9;

struct LiftedMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

  double trace() const { return m.trace(); }
  double current_trace() const { return m(0, 0) + m(1, 1); }

  bool symmetric(double tol = 1e-14) const {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
  }

  /// Membership in {W PSD, W11 + W22 <= i_max^2, W33 = 1} up to `tol`.
  bool in_feasible_set(double i_max, double tol = kMembershipTol) const {
    if (!symmetric(1e-12)) return false;
    if (current_trace() > i_max * i_max + tol) return false;
    if (std::abs(m(2, 2) - 1.0) > tol) return false;
    return symmetric_eigen(m).values(2) >= -tol;
  }
};

/// [I; 1][I; 1]^T
inline LiftedMatrix lift(const DqVector& i) {
  const Eigen::Vector3d v{i.d, i.q, 1.0};
  return {v * v.transpose()};
}

struct ObjectiveMatrices {
  Eigen::Matrix3d m1 = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d m2 = Eigen::Matrix3d::Zero();

  OutputPoint outputs(const Eigen::Matrix3d& w) const {
    return {(m1.cwiseProduct(w)).sum(), (m2.cwiseProduct(w)).sum()};
  }
};

namespace detail {
inline Eigen::Matrix3d lifted_form(double quad, const Eigen::Vector2d& lin, double constant) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  m(0, 0) = m(1, 1) = quad;
  m.block<2, 1>(0, 2) = 0.5 * lin;
  m.block<1, 2>(2, 0) = 0.5 * lin.transpose();
  m(2, 2) = constant;
  return m;
}
}  // namespace detail

inline ObjectiveMatrices objective_matrices(const QuadraticCoeffs& c) {
  return {detail::lifted_form(c.alpha, c.a, c.zeta1), detail::lifted_form(c.beta, c.b, c.zeta2)};
}

inline ObjectiveMatrices build_objective_matrices(TrackingMode mode, const EquivalentNetwork& net) {
  return objective_matrices(coeffs_for_mode(mode, net));
}

struct ControllerConfig {
  TrackingMode mode = TrackingMode::PV2;
  OutputPoint setpoint = OutputPoint::Zero();
  double gamma = 1.0;
  double rho = 1e-3;
  double step_size = 1.0;
  double i_max = 1.0;
  double estimator_gain = 1.0;

  void validate() const {
    if (!(gamma >= 0)) throw ConfigError("controller: gamma must be >= 0");
    if (!(rho > 0)) throw ConfigError("controller: rho must be > 0");
    if (!(step_size > 0)) throw ConfigError("controller: step size must be > 0");
    if (!(i_max > 0)) throw ConfigError("controller: i_max must be > 0");
    if (!(estimator_gain > 0 && estimator_gain <= 1)) throw ConfigError("controller: estimator gain must be in (0, 1]");
  }
};

struct ObjectiveGradient {
  double value = 0.0;
  Eigen::Matrix3d gradient = Eigen::Matrix3d::Zero();
};

inline ObjectiveGradient objective_and_gradient(const Eigen::Matrix3d& w, const ObjectiveMatrices& mats,
                                                const ControllerConfig& cfg) {
  const OutputPoint s = mats.outputs(w);
  const double e1 = s(0) - cfg.setpoint(0);
  const double e2 = s(1) - cfg.setpoint(1);
  ObjectiveGradient out;
  out.value = 0.5 * e1 * e1 + cfg.gamma * 0.5 * e2 * e2 + cfg.rho * w.trace();
  out.gradient = e1 * mats.m1 + cfg.gamma * e2 * mats.m2 + cfg.rho * Eigen::Matrix3d::Identity();
  return out;
}

inline double objective_value(const Eigen::Matrix3d& w, const ObjectiveMatrices& mats, const ControllerConfig& cfg) {
  return objective_and_gradient(w, mats, cfg).value;
}

/// Upper bound on the Lipschitz constant of the objective gradient (Frobenius).
inline double smoothness_bound(const ObjectiveMatrices& mats, double gamma) {
  return mats.m1.squaredNorm() + gamma * mats.m2.squaredNorm();
}

/// Frobenius-nearest PSD matrix.
inline Eigen::Matrix3d project_psd(const Eigen::Matrix3d& a) {
  const auto eig = symmetric_eigen(a);
  Eigen::Matrix3d out = Eigen::Matrix3d::Zero();
  for (int k = 0; k < 3; ++k)
    if (eig.values(k) > 0) out += eig.values(k) * eig.vectors.col(k) * eig.vectors.col(k).transpose();
  return 0.5 * (out + out.transpose());
}

struct ProjectionStats {
  int sweeps = 0;
  double last_change = 0.0;
};

inline constexpr double kProjectionTol = 1e-10;
inline constexpr int kProjectionMaxSweeps = 10000;

/// Dykstra's alternating projections onto the PSD cone, {W33 = 1} and
/// {W11 + W22 <= i_max^2}.
inline LiftedMatrix project_onto_w(const Eigen::Matrix3d& a, double i_max, ProjectionStats* stats = nullptr,
                                   double tol = kProjectionTol, int max_sweeps = kProjectionMaxSweeps) {
  if (!a.allFinite()) throw NumericalError("project_onto_w: non-finite input");
  const double cap = i_max * i_max;
  Eigen::Matrix3d x = 0.5 * (a + a.transpose());
  Eigen::Matrix3d inc_psd = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d inc_aff = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d inc_half = Eigen::Matrix3d::Zero();

  double change = 0.0;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    const Eigen::Matrix3d prev = x;
    const Eigen::Matrix3d prev_psd = inc_psd, prev_aff = inc_aff, prev_half = inc_half;

    Eigen::Matrix3d y = x + inc_psd;
    x = project_psd(y);
    inc_psd = y - x;

    y = x + inc_aff;
    x = y;
    x(2, 2) = 1.0;
    inc_aff = y - x;

    y = x + inc_half;
    x = y;
    const double excess = x(0, 0) + x(1, 1) - cap;
    if (excess > 0) {
      x(0, 0) -= 0.5 * excess;
      x(1, 1) -= 0.5 * excess;
    }
    inc_half = y - x;

    // the iterate can stall for a sweep while the corrections still move
    change = std::sqrt((x - prev).squaredNorm() + (inc_psd - prev_psd).squaredNorm() +
                       (inc_aff - prev_aff).squaredNorm() + (inc_half - prev_half).squaredNorm());
    if (change <= tol) {
      if (stats) *stats = {sweep, change};
      LiftedMatrix w{x};
      if (!w.in_feasible_set(i_max))
        throw NumericalError("project_onto_w: result violates membership tolerances", change);
      return w;
    }
  }
  if (stats) *stats = {max_sweeps, change};
  throw NumericalError("project_onto_w: Dykstra did not converge", change);
}

/// Minimal-magnitude preimage of (S1, S2): x = d - mu c with
/// d = P^-1 (S - zeta), c = P^-1 [alpha; beta], P = [a^T; b^T] and mu = |x|^2
/// the smaller root of |c|^2 mu^2 - (2 d.c + 1) mu + |d|^2 = 0.
struct ExtractionProblem {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  Eigen::Vector2d d = Eigen::Vector2d::Zero();
  double mu1 = 0.0;
  double mu2 = 0.0;  ///< +inf when the quadratic degenerates to a line

  DqVector current() const { return DqVector::from_eigen(d - mu1 * c); }
};

inline constexpr double kDiscriminantClamp = -1e-9;

inline ExtractionProblem solve_extraction(const OutputPoint& s, const QuadraticCoeffs& q) {
  Eigen::Matrix2d p;
  p.row(0) = q.a.transpose();
  p.row(1) = q.b.transpose();
  const double det = p.determinant();
  if (std::abs(det) <= 1e-14 * std::max(1.0, p.squaredNorm()))
    throw NumericalError("extract_current: output directions a and b are dependent");
  const Eigen::Matrix2d p_inv = p.inverse();

  ExtractionProblem ep;
  ep.d = p_inv * Eigen::Vector2d{s(0) - q.zeta1, s(1) - q.zeta2};
  ep.c = p_inv * Eigen::Vector2d{q.alpha, q.beta};
  const double qa = ep.c.squaredNorm();
  const double qb = 2.0 * ep.d.dot(ep.c) + 1.0;
  const double qc = ep.d.squaredNorm();

  if (qb <= 0.0) {
    if (qc == 0.0) return ep;  // x = 0
    throw NumericalError("extract_current: both roots negative, outputs not reachable", qb);
  }
  if (qa <= 1e-300) {
    ep.mu1 = qc / qb;
    ep.mu2 = std::numeric_limits<double>::infinity();
    return ep;
  }
  double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) {
    if (disc < kDiscriminantClamp) throw NumericalError("extract_current: outputs not reachable by any current", disc);
    disc = 0.0;
  }
  const double root = std::sqrt(disc);
  ep.mu1 = 2.0 * qc / (qb + root);
  ep.mu2 = (qb + root) / (2.0 * qa);
  return ep;
}

inline DqVector extract_current(double s1, double s2, const QuadraticCoeffs& q) {
  return solve_extraction({s1, s2}, q).current();
}

/// First-order tracking of E = V - Z I.
inline DqVector estimate_grid_voltage(const DqVector& prev, const DqVector& v_meas, const DqVector& i_meas,
                                      const EquivalentNetwork& net, double gain) {
  const DqVector inst = v_meas - impedance_matrix(net).apply(i_meas);
  return prev + gain * (inst - prev);
}

struct ControllerState {
  DqVector current;
  DqVector e_hat;
  LiftedMatrix w;
  std::uint64_t step_count = 0;

  static ControllerState initial(const DqVector& i0, const DqVector& e_hat0) { return {i0, e_hat0, lift(i0), 0}; }
};

struct StepResult {
  ControllerState state;
  DqVector command;
  DqVector voltage_command;  ///< V_meas + Z (I_cmd - I_prev)
  Eigen::Matrix3d w_pgd = Eigen::Matrix3d::Zero();
  double objective_before = 0.0;  ///< f at the incoming W with the updated estimate
  int projection_sweeps = 0;
  bool flagged = false;
  std::string error;
};

/// One iteration of the optimal controller. `model` supplies Z_eq and the
/// power scale; its source voltage is replaced by the running estimate.
inline StepResult controller_step(const ControllerState& state, const DqVector& v_meas, const DqVector& i_meas,
                                  const ControllerConfig& cfg, const EquivalentNetwork& model) {
  StepResult out;
  const DqVector e_hat = estimate_grid_voltage(state.e_hat, v_meas, i_meas, model, cfg.estimator_gain);
  const EquivalentNetwork net = model.with_source(e_hat);

  DqVector command = state.current;
  try {
    const QuadraticCoeffs coeffs = coeffs_for_mode(cfg.mode, net);
    const ObjectiveMatrices mats = objective_matrices(coeffs);
    const ObjectiveGradient og = objective_and_gradient(state.w.m, mats, cfg);
    out.objective_before = og.value;

    ProjectionStats stats;
    const LiftedMatrix w_pgd = project_onto_w(state.w.m - cfg.step_size * og.gradient, cfg.i_max, &stats);
    out.w_pgd = w_pgd.m;
    out.projection_sweeps = stats.sweeps;

    const DqVector x = extract_current(mats.outputs(w_pgd.m)(0), mats.outputs(w_pgd.m)(1), coeffs);
    if (!x.finite() || x.norm() > cfg.i_max + kMembershipTol)
      throw NumericalError("controller_step: extracted current exceeds the limit", x.norm());
    command = x;
  } catch (const std::exception& e) {
    out.flagged = true;
    out.error = e.what();
    command = state.current;
  }

  out.command = command;
  out.voltage_command = v_meas + impedance_matrix(net).apply(command - state.current);
  out.state = {command, e_hat, lift(command), state.step_count + 1};
  return out;
}

}  // namespace convctl

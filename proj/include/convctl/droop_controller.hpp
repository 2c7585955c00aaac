#pragma once

// Saturated droop baseline: frequency droop on filtered P, magnitude droop on
// filtered Q (PQ) or V^2 (PV2), candidate current from the quasi-static plant
// relation, and a direction-preserving magnitude cap.

#include <cmath>
#include <numbers>

#include "convctl/dq_network.hpp"
#include "convctl/errors.hpp"
#include "convctl/feasible_region.hpp"

namespace convctl {

struct DroopParams {
  double m_p_hz = 0.5;   ///< Hz per pu active power
  double m_q = 0.05;     ///< pu voltage per pu reactive power
  double m_v2 = 0.05;    ///< pu V^2 per pu V^2
  double omega_nom = kNominalOmega;
  double v_nom = 1.0;
  double filter_tau = 0.016;  ///< [s]
  double i_max = 1.0;

  void validate() const {
    if (m_p_hz < 0 || m_q < 0 || m_v2 < 0) throw ConfigError("droop: gains must be nonnegative");
    if (!(filter_tau > 0)) throw ConfigError("droop: filter time constant must be positive");
    if (!(i_max > 0)) throw ConfigError("droop: i_max must be positive");
  }
};

struct DroopState {
  double theta = 0.0;  ///< voltage angle relative to the grid frame, (-pi, pi]
  double p_f = 0.0;
  double q_f = 0.0;
  double v2_f = 0.0;
  DqVector i_prev;
};

/// Forward-Euler first-order filter.
inline double lowpass(double prev, double sample, double dt, double tau) {
  return prev + (dt / tau) * (sample - prev);
}

inline DqVector saturate(const DqVector& i, double i_max) {
  const double n = i.norm();
  if (n <= i_max) return i;
  return i * (i_max / n);
}

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

/// Droop state at an operating current: filters preloaded with its outputs and
/// the angle of the terminal voltage it produces.
inline DroopState droop_initial(const DqVector& i0, const EquivalentNetwork& net) {
  const DqVector v = terminal_voltage(i0, net);
  const Outputs o = compute_outputs(i0, net);
  return {std::atan2(v.q, v.d), o.p, o.q, o.v2, i0};
}

struct DroopStepResult {
  DroopState state;
  DqVector command;
  DqVector candidate;
  bool flagged = false;  ///< V_ref square-root argument went negative and was clamped
};

/// `net` is the plant the droop voltage is applied to; the grid frame rotates
/// at omega_nom so theta integrates the frequency mismatch only.
inline DroopStepResult droop_step(const DroopState& state, const Outputs& meas, const OutputPoint& setpoint,
                                  const DroopParams& params, const EquivalentNetwork& net, double dt,
                                  TrackingMode mode) {
  if (mode == TrackingMode::QV2) throw ConfigError("droop: only PQ and PV2 modes are supported");
  if (!(dt > 0)) throw ConfigError("droop: dt must be positive");
  DroopStepResult out;

  const double omega = params.omega_nom - params.m_p_hz * 2.0 * std::numbers::pi * (state.p_f - setpoint(0));
  const double theta = wrap_angle(state.theta + (omega - params.omega_nom) * dt);

  double v_ref = 0.0;
  if (mode == TrackingMode::PQ) {
    v_ref = params.v_nom - params.m_q * (state.q_f - setpoint(1));
    if (v_ref < 0) {
      v_ref = 0;
      out.flagged = true;
    }
  } else {
    const double arg = params.v_nom * params.v_nom - params.m_v2 * (state.v2_f - setpoint(1));
    if (arg < 0) out.flagged = true;
    v_ref = std::sqrt(std::max(arg, 0.0));
  }

  const DqVector v_cmd{v_ref * std::cos(theta), v_ref * std::sin(theta)};
  out.candidate = current_for_voltage(v_cmd, net);
  out.command = saturate(out.candidate, params.i_max);

  out.state.theta = theta;
  out.state.p_f = lowpass(state.p_f, meas.p, dt, params.filter_tau);
  out.state.q_f = lowpass(state.q_f, meas.q, dt, params.filter_tau);
  out.state.v2_f = lowpass(state.v2_f, meas.v2, dt, params.filter_tau);
  out.state.i_prev = out.command;
  return out;
}

}  // namespace convctl

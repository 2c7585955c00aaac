#pragma once

// Quasi-static dq-frame model of a converter behind an equivalent impedance:
//
//   V_dq = Z_eq I_dq + E_dq,   Z_eq = [[R, -X], [X, R]],  X = w_pu * L
//
// Per-unit throughout. `power_scale` is the factor in P = k I^T V and
// Q = k I^T J V: 3/2 for amplitude-invariant dq quantities on a per-phase
// base, 1 when the base already absorbs it (the bundled scenarios).

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Dense>

#include "convctl/errors.hpp"

namespace convctl {

inline constexpr double kNominalOmega = 2.0 * std::numbers::pi * 60.0;

struct DqVector {
  double d = 0.0;
  double q = 0.0;

  constexpr DqVector() = default;
  constexpr DqVector(double d_, double q_) : d(d_), q(q_) {}

  static DqVector from_eigen(const Eigen::Vector2d& v) { return {v(0), v(1)}; }
  static DqVector from_complex(std::complex<double> z) { return {z.real(), z.imag()}; }

  Eigen::Vector2d eigen() const { return {d, q}; }
  std::complex<double> complex() const { return {d, q}; }

  double norm() const { return std::hypot(d, q); }
  double squared_norm() const { return d * d + q * q; }
  double dot(const DqVector& o) const { return d * o.d + q * o.q; }
  bool finite() const { return std::isfinite(d) && std::isfinite(q); }

  DqVector& operator+=(const DqVector& o) { d += o.d; q += o.q; return *this; }
  DqVector& operator-=(const DqVector& o) { d -= o.d; q -= o.q; return *this; }
  DqVector& operator*=(double s) { d *= s; q *= s; return *this; }

  friend DqVector operator+(DqVector a, const DqVector& b) { return a += b; }
  friend DqVector operator-(DqVector a, const DqVector& b) { return a -= b; }
  friend DqVector operator*(DqVector a, double s) { return a *= s; }
  friend DqVector operator*(double s, DqVector a) { return a *= s; }
  friend DqVector operator-(DqVector a) { return {-a.d, -a.q}; }
  friend bool operator==(const DqVector&, const DqVector&) = default;
};

/// J = [[0, 1], [-1, 0]]
inline const Eigen::Matrix2d& rotation_j() {
  static const Eigen::Matrix2d j = (Eigen::Matrix2d() << 0.0, 1.0, -1.0, 0.0).finished();
  return j;
}

/// RLC filter plus RL line of a single converter on an infinite bus.
struct FilterLineParams {
  double r_f = 0.0;
  double l_f = 0.0;
  double c_f = 0.0;  ///< 0 means no shunt branch
  double r_g = 0.0;
  double l_g = 0.0;
  double omega = kNominalOmega;  ///< electrical frequency [rad/s]
  double omega_base = kNominalOmega;

  double omega_pu() const { return omega / omega_base; }

  void validate() const {
    if (r_f < 0 || r_g < 0 || l_f < 0 || l_g < 0 || c_f < 0)
      throw ConfigError("filter/line parameters must be nonnegative");
    if (!(omega > 0) || !(omega_base > 0)) throw ConfigError("omega must be positive");
  }
};

/// Thevenin equivalent seen by the converter: Z_eq = R_eq + j w L_eq behind E_dq.
struct EquivalentNetwork {
  double r_eq = 0.0;
  double l_eq = 0.0;  ///< may be negative (capacitive)
  double omega = kNominalOmega;
  double omega_base = kNominalOmega;
  DqVector e_dq{1.0, 0.0};
  double power_scale = 1.5;

  double omega_pu() const { return omega / omega_base; }
  /// Per-unit reactance w_pu * L_eq.
  double x_eq() const { return omega_pu() * l_eq; }
  double impedance_sq() const { return r_eq * r_eq + x_eq() * x_eq(); }
  std::complex<double> z_eq() const { return {r_eq, x_eq()}; }

  /// Network with the given per-unit reactance at nominal frequency.
  static EquivalentNetwork from_rx(double r, double x, DqVector e, double power_scale = 1.5) {
    EquivalentNetwork net;
    net.r_eq = r;
    net.l_eq = x;
    net.e_dq = e;
    net.power_scale = power_scale;
    return net;
  }

  EquivalentNetwork with_source(DqVector e) const {
    EquivalentNetwork n = *this;
    n.e_dq = e;
    return n;
  }
};

/// [[R, -X], [X, R]]
struct ImpedanceMatrix {
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();

  DqVector apply(const DqVector& i) const { return DqVector::from_eigen(m * i.eigen()); }
  double determinant() const { return m.determinant(); }
};

inline ImpedanceMatrix impedance_matrix(const EquivalentNetwork& net) {
  const double r = net.r_eq;
  const double x = net.x_eq();
  ImpedanceMatrix z;
  z.m << r, -x, x, r;
  return z;
}

/// Reduces filter + shunt capacitor + line to a single impedance behind a
/// (scaled, rotated) source. With c_f == 0 this is the plain series sum.
inline EquivalentNetwork thevenin_reduce(const FilterLineParams& p, DqVector e_inf,
                                         double power_scale = 1.5) {
  p.validate();
  using cplx = std::complex<double>;
  const double w = p.omega_pu();
  const cplx z_f{p.r_f, w * p.l_f};
  const cplx z_g{p.r_g, w * p.l_g};

  cplx z_eq = z_f + z_g;
  cplx e_scale{1.0, 0.0};
  if (p.c_f > 0.0) {
    const cplx z_sh = 1.0 / cplx{0.0, w * p.c_f};
    const cplx loop = z_sh + z_g;
    if (std::abs(loop) < 1e-12 * std::max(1.0, std::abs(z_sh)))
      throw ConfigError("thevenin_reduce: shunt branch resonates with the line (|Z_sh + Z_g| ~ 0)");
    z_eq = z_f + z_sh * z_g / loop;
    e_scale = z_sh / loop;
  }

  EquivalentNetwork net;
  net.omega = p.omega;
  net.omega_base = p.omega_base;
  net.r_eq = z_eq.real();
  net.l_eq = z_eq.imag() / w;
  net.e_dq = DqVector::from_complex(e_scale * e_inf.complex());
  net.power_scale = power_scale;
  return net;
}

inline DqVector terminal_voltage(const DqVector& i, const EquivalentNetwork& net) {
  return impedance_matrix(net).apply(i) + net.e_dq;
}

/// Inverse of terminal_voltage for a nonsingular impedance.
inline DqVector current_for_voltage(const DqVector& v, const EquivalentNetwork& net) {
  const auto z = impedance_matrix(net);
  if (std::abs(z.determinant()) < 1e-300) throw ConfigError("zero impedance has no inverse");
  return DqVector::from_eigen(z.m.inverse() * (v - net.e_dq).eigen());
}

struct Outputs {
  double p = 0.0;
  double q = 0.0;
  double v2 = 0.0;
};

/// P, Q and |V|^2 as explicit quadratics in the current.
inline Outputs compute_outputs(const DqVector& i, const EquivalentNetwork& net) {
  const double k = net.power_scale;
  const Eigen::Vector2d e = net.e_dq.eigen();
  const Eigen::Vector2d x = i.eigen();
  const double i2 = x.squaredNorm();
  const auto z = impedance_matrix(net).m;
  Outputs o;
  o.p = k * net.r_eq * i2 + k * e.dot(x);
  o.q = k * net.x_eq() * i2 + k * e.dot(rotation_j().transpose() * x);
  o.v2 = net.impedance_sq() * i2 + 2.0 * e.dot(z * x) + e.squaredNorm();
  return o;
}

/// Same quantities from the defining forms P = k I.V, Q = k I.J V, V2 = V.V.
inline Outputs outputs_from_voltage(const DqVector& i, const DqVector& v, double power_scale) {
  const Eigen::Vector2d x = i.eigen();
  const Eigen::Vector2d vv = v.eigen();
  return {power_scale * x.dot(vv), power_scale * x.dot(rotation_j() * vv), vv.squaredNorm()};
}

}  // namespace convctl

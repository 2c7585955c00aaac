#pragma once

// Feasible output region of a single converter: the image of the current disk
// ||I|| <= I_max under a pair of the quadratic output maps (P, Q, V^2).
//
// Every output is  s(I) = c ||I||^2 + v^T I + z, so a tracking mode is fully
// described by two (c, v, z) triples. The helpers here sample the region,
// certify convexity of the samples and brute-force the nearest feasible point.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "convctl/dq_network.hpp"
#include "convctl/errors.hpp"

namespace convctl {

enum class TrackingMode { PQ, PV2, QV2 };

inline std::string_view to_string(TrackingMode m) {
  switch (m) {
    case TrackingMode::PQ: return "pq";
    case TrackingMode::PV2: return "pv2";
    case TrackingMode::QV2: return "qv2";
  }
  return "?";
}

inline std::optional<TrackingMode> parse_tracking_mode(std::string_view s) {
  if (s == "pq" || s == "PQ") return TrackingMode::PQ;
  if (s == "pv2" || s == "PV2") return TrackingMode::PV2;
  if (s == "qv2" || s == "QV2") return TrackingMode::QV2;
  return std::nullopt;
}

using OutputPoint = Eigen::Vector2d;

/// (S1, S2)(x) = (alpha |x|^2 + a.x + zeta1, beta |x|^2 + b.x + zeta2)
struct QuadraticCoeffs {
  double alpha = 0.0;
  double beta = 0.0;
  Eigen::Vector2d a = Eigen::Vector2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  double zeta1 = 0.0;
  double zeta2 = 0.0;

  OutputPoint evaluate(const DqVector& i) const {
    const Eigen::Vector2d x = i.eigen();
    const double n2 = x.squaredNorm();
    return {alpha * n2 + a.dot(x) + zeta1, beta * n2 + b.dot(x) + zeta2};
  }

  /// det [a^T; b^T]
  double independence() const { return a(0) * b(1) - a(1) * b(0); }
};

namespace detail {

struct OutputSlot {
  double quad;
  Eigen::Vector2d lin;
  double constant;
};

enum class Quantity { P, Q, V2 };

inline OutputSlot output_slot(Quantity which, const EquivalentNetwork& net) {
  const double k = net.power_scale;
  const Eigen::Vector2d e = net.e_dq.eigen();
  switch (which) {
    case Quantity::P: return {k * net.r_eq, k * e, 0.0};
    case Quantity::Q: return {k * net.x_eq(), k * (rotation_j() * e), 0.0};
    case Quantity::V2:
      return {net.impedance_sq(), 2.0 * impedance_matrix(net).m.transpose() * e, e.squaredNorm()};
  }
  return {};
}

inline std::array<Quantity, 2> mode_quantities(TrackingMode mode) {
  switch (mode) {
    case TrackingMode::PQ: return {Quantity::P, Quantity::Q};
    case TrackingMode::PV2: return {Quantity::P, Quantity::V2};
    case TrackingMode::QV2: return {Quantity::Q, Quantity::V2};
  }
  return {Quantity::P, Quantity::Q};
}

}  // namespace detail

/// Selected output pair of an Outputs triple.
inline OutputPoint select_outputs(TrackingMode mode, const Outputs& o) {
  switch (mode) {
    case TrackingMode::PQ: return {o.p, o.q};
    case TrackingMode::PV2: return {o.p, o.v2};
    case TrackingMode::QV2: return {o.q, o.v2};
  }
  return {};
}

inline QuadraticCoeffs coeffs_for_mode(TrackingMode mode, const EquivalentNetwork& net) {
  if (net.e_dq.norm() < 1e-12) throw ConfigError("coeffs_for_mode: grid voltage is (numerically) zero");
  const auto [first, second] = detail::mode_quantities(mode);
  const auto s1 = detail::output_slot(first, net);
  const auto s2 = detail::output_slot(second, net);
  return {s1.quad, s2.quad, s1.lin, s2.lin, s1.constant, s2.constant};
}

struct RegionSamples {
  std::vector<OutputPoint> points;  ///< boundary-circle images first, then the interior grid
  std::size_t boundary_count = 0;

  std::span<const OutputPoint> boundary() const { return {points.data(), boundary_count}; }
  std::span<const OutputPoint> interior() const {
    return {points.data() + boundary_count, points.size() - boundary_count};
  }
};

inline constexpr std::size_t kDefaultBoundarySamples = 720;
inline constexpr std::size_t kDefaultInteriorGrid = 100;

/// Images of n equally spaced points of ||I|| = i_max, followed by a polar
/// grid of radii i_max*k/radial (k < radial) times `angular` angles.
inline RegionSamples sample_boundary(TrackingMode mode, const EquivalentNetwork& net, double i_max,
                                     std::size_t n = kDefaultBoundarySamples,
                                     std::size_t radial = kDefaultInteriorGrid,
                                     std::size_t angular = kDefaultInteriorGrid) {
  if (n < 4) throw ConfigError("sample_boundary: need at least 4 boundary samples");
  if (!(i_max > 0)) throw ConfigError("sample_boundary: i_max must be positive");
  const auto c = coeffs_for_mode(mode, net);
  RegionSamples out;
  out.points.reserve(n + radial * angular);
  for (std::size_t k = 0; k < n; ++k) {
    const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    out.points.push_back(c.evaluate({i_max * std::cos(th), i_max * std::sin(th)}));
  }
  out.boundary_count = n;
  for (std::size_t ir = 0; ir < radial; ++ir) {
    const double r = i_max * static_cast<double>(ir) / static_cast<double>(radial);
    for (std::size_t ia = 0; ia < angular; ++ia) {
      const double th = 2.0 * std::numbers::pi * static_cast<double>(ia) / static_cast<double>(angular);
      out.points.push_back(c.evaluate({r * std::cos(th), r * std::sin(th)}));
    }
  }
  return out;
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
inline std::vector<OutputPoint> convex_hull(std::span<const OutputPoint> pts) {
  std::vector<OutputPoint> p(pts.begin(), pts.end());
  std::sort(p.begin(), p.end(), [](const OutputPoint& l, const OutputPoint& r) {
    return l(0) < r(0) || (l(0) == r(0) && l(1) < r(1));
  });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  auto cross = [](const OutputPoint& o, const OutputPoint& a, const OutputPoint& b) {
    return (a(0) - o(0)) * (b(1) - o(1)) - (a(1) - o(1)) * (b(0) - o(0));
  };
  std::vector<OutputPoint> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

/// Euclidean distance from `x` to a CCW convex polygon (0 inside).
inline double distance_outside(const std::vector<OutputPoint>& hull, const OutputPoint& x) {
  const std::size_t m = hull.size();
  bool inside = true;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const OutputPoint& a = hull[i];
    const OutputPoint& b = hull[(i + 1) % m];
    const OutputPoint ab = b - a;
    const OutputPoint ax = x - a;
    if (ab(0) * ax(1) - ab(1) * ax(0) < 0) inside = false;
    const double t = std::clamp(ax.dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (ax - t * ab).norm());
  }
  return inside ? 0.0 : best;
}

struct ConvexityReport {
  bool is_convex = false;
  bool degenerate = false;
  double max_violation = 0.0;  ///< absolute, output units
  double diameter = 0.0;
};

inline constexpr double kConvexityRelTol = 1e-9;

/// Hull of the first `boundary_count` points (the boundary-circle images) and
/// the largest distance by which any other sample falls outside of it.
/// boundary_count == 0 means "all points".
inline ConvexityReport convexity_check(std::span<const OutputPoint> points, std::size_t boundary_count = 0) {
  if (points.size() < 8) throw ConfigError("convexity_check: need at least 8 points");
  if (boundary_count == 0 || boundary_count > points.size()) boundary_count = points.size();
  ConvexityReport rep;
  const auto hull = convex_hull(points.first(boundary_count));
  if (hull.size() < 3) {
    rep.degenerate = true;
    return rep;
  }
  for (std::size_t i = 0; i < hull.size(); ++i)
    for (std::size_t j = i + 1; j < hull.size(); ++j) rep.diameter = std::max(rep.diameter, (hull[i] - hull[j]).norm());
  for (std::size_t i = boundary_count; i < points.size(); ++i)
    rep.max_violation = std::max(rep.max_violation, distance_outside(hull, points[i]));
  rep.is_convex = rep.max_violation <= kConvexityRelTol * rep.diameter;
  return rep;
}

inline ConvexityReport convexity_check(const RegionSamples& s) {
  return convexity_check(s.points, s.boundary_count);
}

struct NearestFeasible {
  OutputPoint outputs = OutputPoint::Zero();
  DqVector current;
  double objective = 0.0;
};

/// 0.5 (S1 - S1bar)^2 + gamma 0.5 (S2 - S2bar)^2
inline double tracking_objective(const OutputPoint& s, const OutputPoint& target, double gamma) {
  const double e1 = s(0) - target(0);
  const double e2 = s(1) - target(1);
  return 0.5 * e1 * e1 + gamma * 0.5 * e2 * e2;
}

/// Brute-force minimiser of the tracking objective over the current disk:
/// a polar grid (the ring r = i_max sampled exactly) followed by repeated
/// zoomed subgrids around the best cell. Ties go to the lowest index.
inline NearestFeasible nearest_feasible(TrackingMode mode, const EquivalentNetwork& net, double i_max,
                                        const OutputPoint& target, double gamma,
                                        std::size_t radial = 400, std::size_t angular = 720) {
  if (!(gamma >= 0)) throw ConfigError("nearest_feasible: gamma must be nonnegative");
  if (!(i_max > 0)) throw ConfigError("nearest_feasible: i_max must be positive");
  const auto c = coeffs_for_mode(mode, net);
  auto eval = [&](double r, double th) {
    return tracking_objective(c.evaluate({r * std::cos(th), r * std::sin(th)}), target, gamma);
  };

  double best_r = 0.0, best_th = 0.0;
  double best = eval(0.0, 0.0);
  const double dth = 2.0 * std::numbers::pi / static_cast<double>(angular);
  const double dr = i_max / static_cast<double>(radial - 1);
  for (std::size_t ir = 1; ir < radial; ++ir) {
    const double r = dr * static_cast<double>(ir);
    for (std::size_t ia = 0; ia < angular; ++ia) {
      const double th = dth * static_cast<double>(ia);
      const double f = eval(r, th);
      if (f < best) { best = f; best_r = r; best_th = th; }
    }
  }

  // zoom: 21x21 subgrid over +-1 cell; shrink by 4 unless the best point
  // landed on the subgrid edge, in which case recentre at the same scale
  double wr = dr, wth = dth;
  constexpr int half = 10;
  for (int round = 0; round < 2000 && (wr > 1e-15 || wth > 1e-15); ++round) {
    const double cr = best_r, cth = best_th;
    int bi = 0, bj = 0;
    for (int i = -half; i <= half; ++i) {
      const double r = std::clamp(cr + wr * i / half, 0.0, i_max);
      for (int j = -half; j <= half; ++j) {
        const double th = cth + wth * j / half;
        const double f = eval(r, th);
        if (f < best) { best = f; best_r = r; best_th = th; bi = i; bj = j; }
      }
    }
    const bool edge = (std::abs(bi) == half && best_r < i_max && best_r > 0.0) || std::abs(bj) == half;
    if (!edge) {
      wr *= 0.25;
      wth *= 0.25;
    }
  }

  NearestFeasible out;
  out.current = {best_r * std::cos(best_th), best_r * std::sin(best_th)};
  out.outputs = c.evaluate(out.current);
  out.objective = best;
  return out;
}

}  // namespace convctl

#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "intercept/errors.hpp"
#include "intercept/stats.hpp"

namespace intercept {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Below this closing speed the crossing time is numerically meaningless and
/// the belief is declared degenerate.
inline constexpr double kMinClosingSpeed = 0.5;

inline constexpr double kCovSymTol = 1e-9;
inline constexpr double kCovEigFloor = -1e-9;

/// Variances at or below this are treated as exact Dirac dimensions.
inline constexpr double kDiracVar = 1e-16;

/// Gaussian belief over the projectile state (X, Y, Z, Vx, Vy, Vz), expressed
/// in the plane frame: X along the plane normal pointing at the robot, Z up.
struct ProjectileBelief {
  Vec6 mean = Vec6::Zero();
  Mat6 cov = Mat6::Zero();
};

/// Intercept plane x = x_star; gravity acts on Z, negative pointing down.
struct PlaneSpec {
  double x_star = 0.0;
  double gravity = -9.81;
};

/// Joint Gaussian over (Y, Z, tau): where on the plane the projectile
/// crosses, and when.
struct CrossingBelief {
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Zero();
};

/// Axis-aligned shield footprint on the plane, centered on (y, z).
struct RectFootprint {
  double y_center = 0.0;
  double z_center = 0.0;
  double half_y = 0.0;
  double half_z = 0.0;
};

template <typename Mat>
inline void require_covariance(const Mat& cov, const char* who) {
  if (!cov.allFinite() ||
      (cov - cov.transpose()).cwiseAbs().maxCoeff() > kCovSymTol)
    throw ConfigError(std::string(who) + ": covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < kCovEigFloor)
    throw ConfigError(std::string(who) + ": covariance not positive semidefinite");
}

/// Crossing map for a single deterministic state: lateral coordinates and
/// time at which the ballistic trajectory hits the plane.
inline Vec3 crossing_map(const Vec6& s, const PlaneSpec& plane) {
  const double vx = s(3);
  if (std::abs(vx) < kMinClosingSpeed)
    throw DegenerateCrossingError("crossing_map: closing speed too small");
  const double tau = (plane.x_star - s(0)) / vx;
  if (!(tau > 0.0))
    throw DegenerateCrossingError("crossing_map: state at or past the plane");
  Vec3 o;
  o(0) = s(1) + s(4) * tau;
  o(1) = s(2) + s(5) * tau + 0.5 * plane.gravity * tau * tau;
  o(2) = tau;
  return o;
}

/// Jacobian of the crossing map at s, rows ordered (Y, Z, tau).
inline Eigen::Matrix<double, 3, 6> crossing_jacobian(const Vec6& s,
                                                     const PlaneSpec& plane) {
  const double vx = s(3), vy = s(4), vz = s(5);
  const double g = plane.gravity;
  const double tau = (plane.x_star - s(0)) / vx;
  Eigen::Matrix<double, 3, 6> J = Eigen::Matrix<double, 3, 6>::Zero();
  J(0, 0) = -vy / vx;
  J(0, 1) = 1.0;
  J(0, 3) = -vy * tau / vx;
  J(0, 4) = tau;
  J(1, 0) = -vz / vx - g * tau / vx;
  J(1, 2) = 1.0;
  J(1, 3) = -vz * tau / vx - g * tau * tau / vx;
  J(1, 5) = tau;
  J(2, 0) = -1.0 / vx;
  J(2, 3) = -(plane.x_star - s(0)) / (vx * vx);
  return J;
}

struct CrossingTimeStats {
  double mean = 0.0;
  double variance = 0.0;
};

/// First-order mean and variance of the plane-crossing time.
inline CrossingTimeStats crossing_time_stats(const ProjectileBelief& b,
                                             const PlaneSpec& plane) {
  if (!b.mean.allFinite())
    throw ConfigError("crossing_time_stats: mean not finite");
  require_covariance(b.cov, "crossing_time_stats");
  const double vx = b.mean(3);
  if (std::abs(vx) < kMinClosingSpeed)
    throw DegenerateCrossingError("crossing_time_stats: closing speed too small");
  const double dx = plane.x_star - b.mean(0);
  const double tau = dx / vx;
  if (!(tau > 0.0))
    throw DegenerateCrossingError("crossing_time_stats: mean at or past the plane");
  Vec6 g = Vec6::Zero();
  g(0) = -1.0 / vx;
  g(3) = -dx / (vx * vx);
  const double var = g.dot(b.cov * g);
  return {tau, std::max(var, 0.0)};
}

/// Linearize the crossing map at the belief mean and push the covariance
/// through it. Tiny negative eigenvalues from roundoff are clamped to zero;
/// anything clearly indefinite is an upstream bug and is reported.
inline CrossingBelief project_to_plane(const ProjectileBelief& b,
                                       const PlaneSpec& plane) {
  if (!b.mean.allFinite())
    throw ConfigError("project_to_plane: mean not finite");
  require_covariance(b.cov, "project_to_plane");
  CrossingBelief cb;
  cb.mean = crossing_map(b.mean, plane);
  const Eigen::Matrix<double, 3, 6> J = crossing_jacobian(b.mean, plane);
  Mat3 cov = J * b.cov * J.transpose();
  cov = (0.5 * (cov + cov.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  if (es.eigenvalues().minCoeff() < kCovEigFloor)
    throw NumericFailureError("project_to_plane: projected covariance indefinite");
  if (es.eigenvalues().minCoeff() < 0.0) {
    const Vec3 ev = es.eigenvalues().cwiseMax(0.0);
    cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    cov = (0.5 * (cov + cov.transpose())).eval();
  }
  cb.cov = cov;
  return cb;
}

namespace detail {

/// P[(Y, Z) in rect] for a 2-D Gaussian. Zero-variance axes collapse to
/// indicator checks on the mean.
inline double gaussian_rect_prob(double my, double mz, double vyy, double vzz,
                                 double vyz, const RectFootprint& rect) {
  const double ylo = rect.y_center - rect.half_y;
  const double yhi = rect.y_center + rect.half_y;
  const double zlo = rect.z_center - rect.half_z;
  const double zhi = rect.z_center + rect.half_z;
  const bool dirac_y = vyy <= kDiracVar;
  const bool dirac_z = vzz <= kDiracVar;
  if (dirac_y && dirac_z)
    return (my >= ylo && my <= yhi && mz >= zlo && mz <= zhi) ? 1.0 : 0.0;
  if (dirac_y) {
    if (my < ylo || my > yhi) return 0.0;
    const double sz = std::sqrt(vzz);
    return std::clamp(norm_cdf((zhi - mz) / sz) - norm_cdf((zlo - mz) / sz), 0.0, 1.0);
  }
  if (dirac_z) {
    if (mz < zlo || mz > zhi) return 0.0;
    const double sy = std::sqrt(vyy);
    return std::clamp(norm_cdf((yhi - my) / sy) - norm_cdf((ylo - my) / sy), 0.0, 1.0);
  }
  const double sy = std::sqrt(vyy);
  const double sz = std::sqrt(vzz);
  const double rho = std::clamp(vyz / (sy * sz), -1.0, 1.0);
  return bvn_rectangle((ylo - my) / sy, (yhi - my) / sy, (zlo - mz) / sz,
                       (zhi - mz) / sz, rho);
}

/// The (Y, Z) distribution conditioned on the crossing time: linear-Gaussian
/// shift of the mean, fixed conditional covariance.
struct TauConditional {
  double my = 0.0, mz = 0.0, mt = 0.0, st = 0.0;
  double ky = 0.0, kz = 0.0;
  double cyy = 0.0, czz = 0.0, cyz = 0.0;

  static TauConditional from(const CrossingBelief& cb) {
    TauConditional c;
    c.my = cb.mean(0);
    c.mz = cb.mean(1);
    c.mt = cb.mean(2);
    const double vtt = std::max(cb.cov(2, 2), 0.0);
    c.st = std::sqrt(vtt);
    c.ky = cb.cov(0, 2) / vtt;
    c.kz = cb.cov(1, 2) / vtt;
    c.cyy = std::max(cb.cov(0, 0) - cb.cov(0, 2) * cb.cov(0, 2) / vtt, 0.0);
    c.czz = std::max(cb.cov(1, 1) - cb.cov(1, 2) * cb.cov(1, 2) / vtt, 0.0);
    c.cyz = cb.cov(0, 1) - cb.cov(0, 2) * cb.cov(1, 2) / vtt;
    return c;
  }

  /// Crossing-time density times the conditional footprint probability.
  double integrand(double t, const RectFootprint& rect) const {
    const double dz = (t - mt) / st;
    const double cmy = my + ky * (t - mt);
    const double cmz = mz + kz * (t - mt);
    return (norm_pdf(dz) / st) * gaussian_rect_prob(cmy, cmz, cyy, czz, cyz, rect);
  }
};

struct QuadRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline const QuadRule& crossing_quad_rule() {
  static const QuadRule rule = [] {
    QuadRule r;
    gauss_legendre(48, r.nodes, r.weights);
    return r;
  }();
  return rule;
}

}  // namespace detail

/// P[(Y, Z) lands inside the footprint and the crossing happens after the
/// shield has arrived]. Conditions on the crossing time and integrates the
/// conditional rectangle probability over its +-6 sigma window.
inline double success_probability(const CrossingBelief& cb,
                                  const RectFootprint& rect,
                                  double arrival_time) {
  require_covariance(cb.cov, "success_probability");
  const double my = cb.mean(0);
  const double mz = cb.mean(1);
  const double mt = cb.mean(2);
  const double vtt = std::max(cb.cov(2, 2), 0.0);
  if (vtt <= kDiracVar) {
    if (!(mt > arrival_time)) return 0.0;
    return detail::gaussian_rect_prob(my, mz, std::max(cb.cov(0, 0), 0.0),
                                      std::max(cb.cov(1, 1), 0.0), cb.cov(0, 1),
                                      rect);
  }
  const double st = std::sqrt(vtt);
  const double lo = std::max(arrival_time, mt - 6.0 * st);
  const double hi = mt + 6.0 * st;
  if (!(lo < hi)) return 0.0;
  const detail::TauConditional cond = detail::TauConditional::from(cb);

  const detail::QuadRule& q = detail::crossing_quad_rule();
  const double mid = 0.5 * (lo + hi);
  const double halfw = 0.5 * (hi - lo);
  double p = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double t = mid + halfw * q.nodes[i];
    p += q.weights[i] * halfw * cond.integrand(t, rect);
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace intercept

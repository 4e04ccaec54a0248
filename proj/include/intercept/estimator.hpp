#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "intercept/belief.hpp"
#include "intercept/errors.hpp"
#include "intercept/stats.hpp"

namespace intercept {

/// Adaptive Kalman filter over the constant-gravity flight model. Measurement
/// noise is re-estimated from a window of innovations; innovations that fail a
/// per-axis chi-square test are exponentially down-weighted before they touch
/// the state.
struct FilterConfig {
  Mat6 process_noise = [] {
    Mat6 q = Mat6::Zero();
    q.diagonal() << 1e-8, 1e-8, 1e-8, 1e-6, 1e-6, 1e-6;
    return q;
  }();
  Mat3 initial_measurement_noise = 2.5e-5 * Mat3::Identity();
  double confidence = 0.95;
  int window = 10;
  int min_window = 3;
  double dt_nominal = 0.02;
  double gravity = -9.81;
  /// Adaptation and gating off turns this into a plain Kalman filter on the
  /// initial measurement noise (the comparison baseline).
  bool adapt = true;
  /// State update uses the gated innovation; raw is kept for ablation.
  bool update_with_revised = true;
};

struct Measurement {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
};

struct FilterState {
  Vec6 x = Vec6::Zero();
  Mat6 P = Mat6::Identity();
  Mat3 R = Mat3::Zero();
  Mat3 Cv = Mat3::Zero();
  std::deque<Vec3> window;
  long k = 0;
  Vec3 last_raw = Vec3::Zero();
  Vec3 last_revised = Vec3::Zero();
};

struct TimedBelief {
  double timestamp = 0.0;
  ProjectileBelief belief;
};

inline void validate_filter_config(const FilterConfig& cfg) {
  if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0))
    throw ConfigError("filter: confidence outside (0,1)");
  if (cfg.window < 2) throw ConfigError("filter: window must hold at least 2 samples");
  if (cfg.min_window < 1) throw ConfigError("filter: min_window must be positive");
  if (!(cfg.dt_nominal > 0.0)) throw ConfigError("filter: dt_nominal must be positive");
  if ((cfg.process_noise - cfg.process_noise.transpose()).cwiseAbs().maxCoeff() > kCovSymTol ||
      (cfg.initial_measurement_noise - cfg.initial_measurement_noise.transpose())
              .cwiseAbs()
              .maxCoeff() > kCovSymTol)
    throw ConfigError("filter: noise matrices must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat6> eq(cfg.process_noise, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Mat3> er(cfg.initial_measurement_noise,
                                         Eigen::EigenvaluesOnly);
  if (eq.eigenvalues().minCoeff() < kCovEigFloor ||
      er.eigenvalues().minCoeff() < kCovEigFloor)
    throw ConfigError("filter: noise matrices must be positive semidefinite");
}

namespace detail {

inline Mat6 clamp_psd6(const Mat6& m) {
  Mat6 s = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat6> es(s);
  if (es.eigenvalues().minCoeff() >= 0.0) return s;
  const Vec6 ev = es.eigenvalues().cwiseMax(0.0);
  s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (s + s.transpose()).eval();
}

}  // namespace detail

/// Propagate mean and covariance through dt of ballistic flight.
inline FilterState predict(const FilterState& fs, double dt, const FilterConfig& cfg) {
  if (!(dt > 0.0)) throw ConfigError("predict: dt must be positive");
  FilterState out = fs;
  out.x.head<3>() += dt * fs.x.tail<3>();
  out.x(2) += 0.5 * cfg.gravity * dt * dt;
  out.x(5) += cfg.gravity * dt;
  Mat6 F = Mat6::Identity();
  F.topRightCorner<3, 3>() = dt * Mat3::Identity();
  out.P = detail::clamp_psd6(F * fs.P * F.transpose() + cfg.process_noise);
  return out;
}

/// Measurement update. Position measurements only; the innovation is gated
/// per axis against the windowed innovation covariance before the state sees
/// it, and the measurement noise estimate is refreshed from the window.
inline FilterState update(const FilterState& fs, const Measurement& m,
                          const FilterConfig& cfg) {
  FilterState out = fs;
  const Vec3 nu = m.position - fs.x.head<3>();
  Vec3 nu_hat = nu;

  const bool warm =
      cfg.adapt && static_cast<int>(fs.window.size()) >= cfg.min_window;
  if (warm) {
    const double gate = chi2_quantile(cfg.confidence, 1.0);
    const bool full = static_cast<int>(fs.window.size()) >= cfg.window;
    for (int i = 0; i < 3; ++i) {
      if (nu(i) == 0.0) continue;
      double denom = std::max(fs.Cv(i, i), 1e-30);
      // A partially filled window is a noisy scale estimate: a low draw must
      // not clip honest innovations (each clipped entry shrinks the window
      // average further, and the state stops responding). Floor it by the
      // filter's own predicted innovation variance while R0 is in force.
      if (!full)
        denom = std::max(
            denom, fs.P(i, i) + cfg.initial_measurement_noise(i, i));
      const double kappa = nu(i) * nu(i) / denom;
      if (kappa >= gate) nu_hat(i) = nu(i) * std::exp(-(kappa - gate) / gate);
    }
  }

  Mat3 r_used = cfg.initial_measurement_noise;
  if (cfg.adapt) {
    out.window.push_back(nu_hat);
    while (static_cast<int>(out.window.size()) > cfg.window) out.window.pop_front();
    Mat3 cv = Mat3::Zero();
    for (const Vec3& v : out.window) cv += v * v.transpose();
    cv /= static_cast<double>(out.window.size());
    out.Cv = cv;
    // The windowed estimate only replaces R once the window is full. Engaging
    // earlier loses a race: the estimate then averages start-up transients,
    // chokes the gain, and the velocity error that caused those transients is
    // never corrected.
    if (static_cast<int>(out.window.size()) >= cfg.window) {
      Mat3 r = cv - fs.P.topLeftCorner<3, 3>();
      r = 0.5 * (r + r.transpose()).eval();
      const double floor = 1e-8 * cv.trace() / 3.0;
      Eigen::SelfAdjointEigenSolver<Mat3> es(r);
      Vec3 ev = es.eigenvalues();
      for (int i = 0; i < 3; ++i)
        if (ev(i) < 0.0) ev(i) = floor;
      r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      out.R = 0.5 * (r + r.transpose()).eval();
      r_used = out.R;
    } else {
      out.R = cfg.initial_measurement_noise;
    }
  } else {
    out.R = cfg.initial_measurement_noise;
  }

  const Mat3 S = fs.P.topLeftCorner<3, 3>() + r_used;
  Eigen::LDLT<Mat3> ldlt(S);
  if (ldlt.info() != Eigen::Success)
    throw NumericFailureError("update: innovation covariance not decomposable");
  const Eigen::Matrix<double, 6, 3> K =
      ldlt.solve(fs.P.leftCols<3>().transpose()).transpose();
  if (!K.allFinite()) throw NumericFailureError("update: gain not finite");

  const Vec3 applied = cfg.update_with_revised ? nu_hat : nu;
  out.x = fs.x + K * applied;
  Mat6 A = Mat6::Identity();
  A.leftCols<3>() -= K;
  out.P = detail::clamp_psd6(A * fs.P * A.transpose() +
                             K * r_used * K.transpose());
  out.last_raw = nu;
  out.last_revised = nu_hat;
  out.k = fs.k + 1;
  return out;
}

/// Feed a measurement stream through the filter: the first sample pins the
/// position, the second adds a finite-difference velocity, the rest run
/// predict/update. One belief per measurement.
inline std::vector<TimedBelief> run_filter(const std::vector<Measurement>& ms,
                                           const FilterConfig& cfg,
                                           FilterState* final_state = nullptr) {
  validate_filter_config(cfg);
  if (ms.empty()) throw ConfigError("run_filter: empty measurement stream");
  std::vector<TimedBelief> out;
  out.reserve(ms.size());

  FilterState fs;
  fs.x.head<3>() = ms[0].position;
  fs.P.setZero();
  fs.P.topLeftCorner<3, 3>() = cfg.initial_measurement_noise;
  fs.P.bottomRightCorner<3, 3>() = 25.0 * Mat3::Identity();
  fs.R = cfg.initial_measurement_noise;
  out.push_back({ms[0].timestamp, {fs.x, fs.P}});

  for (std::size_t i = 1; i < ms.size(); ++i) {
    const double dt = ms[i].timestamp - ms[i - 1].timestamp;
    if (!(dt > 0.0))
      throw ConfigError("run_filter: timestamps must be strictly increasing");
    if (i == 1) {
      // Finite-difference velocity; its error is correlated with the position
      // error through the shared second sample. The raw difference in z
      // contains the 0.5*g*dt^2 fall, so the velocity at the second sample is
      // the difference quotient plus 0.5*g*dt.
      fs.x.tail<3>() = (ms[1].position - ms[0].position) / dt;
      fs.x(5) += 0.5 * cfg.gravity * dt;
      fs.x.head<3>() = ms[1].position;
      const Mat3 r0 = cfg.initial_measurement_noise;
      fs.P.topLeftCorner<3, 3>() = r0;
      fs.P.topRightCorner<3, 3>() = r0 / dt;
      fs.P.bottomLeftCorner<3, 3>() = r0 / dt;
      fs.P.bottomRightCorner<3, 3>() = 2.0 * r0 / (dt * dt);
    } else {
      fs = predict(fs, dt, cfg);
      fs = update(fs, ms[i], cfg);
    }
    out.push_back({ms[i].timestamp, {fs.x, fs.P}});
  }
  if (final_state) *final_state = fs;
  return out;
}

/// Replay log, one record per line: timestamp x y z. Blank lines and lines
/// starting with # are skipped.
inline std::vector<Measurement> read_measurement_log(std::istream& is) {
  std::vector<Measurement> out;
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Measurement m;
    if (!(ls >> m.timestamp >> m.position(0) >> m.position(1) >> m.position(2)))
      throw ConfigError("measurement log: malformed line: " + line);
    out.push_back(m);
  }
  return out;
}

inline void write_measurement_log(std::ostream& os,
                                  const std::vector<Measurement>& ms) {
  char buf[160];
  for (const Measurement& m : ms) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", m.timestamp,
                  m.position(0), m.position(1), m.position(2));
    os << buf;
  }
}

}  // namespace intercept

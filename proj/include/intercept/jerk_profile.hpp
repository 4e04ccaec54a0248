#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "intercept/errors.hpp"

namespace intercept {

inline constexpr double kTolState = 1e-6;
inline constexpr double kTolTime = 1e-5;

struct JointLimits {
  double p_min = -1e9;
  double p_max = 1e9;
  double v_min = -1.0;
  double v_max = 1.0;
  double a_min = -1.0;
  double a_max = 1.0;
  double u_max = 1.0;
};

struct JointState1D {
  double p = 0.0;
  double v = 0.0;
  double a = 0.0;
};

/// One constant-jerk piece.
struct Segment {
  double u = 0.0;
  double dt = 0.0;
};

/// Closed-form triple-integrator step under constant jerk.
inline JointState1D advance(const JointState1D& s, double u, double dt) {
  JointState1D r;
  r.p = s.p + s.v * dt + 0.5 * s.a * dt * dt + u * dt * dt * dt / 6.0;
  r.v = s.v + s.a * dt + 0.5 * u * dt * dt;
  r.a = s.a + u * dt;
  return r;
}

class JerkProfile1D {
 public:
  JointState1D start;
  std::vector<Segment> segments;
  double total_duration = 0.0;

  JointState1D state_at(double t) const {
    JointState1D s = start;
    double rem = std::clamp(t, 0.0, total_duration);
    for (const Segment& seg : segments) {
      if (rem <= seg.dt) return advance(s, seg.u, rem);
      s = advance(s, seg.u, seg.dt);
      rem -= seg.dt;
    }
    return s;
  }

  JointState1D terminal() const {
    JointState1D s = start;
    for (const Segment& seg : segments) s = advance(s, seg.u, seg.dt);
    return s;
  }

  void append(double u, double dt) {
    if (dt <= 0.0) return;
    segments.push_back({u, dt});
    total_duration += dt;
  }

  /// Cut the profile at time t; terminal becomes the state reached at t.
  void truncate(double t) {
    if (t >= total_duration) return;
    std::vector<Segment> kept;
    double acc = 0.0;
    for (const Segment& seg : segments) {
      if (acc + seg.dt < t) {
        kept.push_back(seg);
        acc += seg.dt;
      } else {
        const double cut = t - acc;
        if (cut > 0.0) kept.push_back({seg.u, cut});
        break;
      }
    }
    segments = std::move(kept);
    total_duration = t;
  }
};

struct JointSpaceState {
  std::vector<JointState1D> joints;

  JointSpaceState() = default;
  explicit JointSpaceState(std::size_t n) : joints(n) {}
  JointSpaceState(std::initializer_list<JointState1D> l) : joints(l) {}

  std::size_t size() const { return joints.size(); }
  JointState1D& operator[](std::size_t i) { return joints[i]; }
  const JointState1D& operator[](std::size_t i) const { return joints[i]; }
};

struct MotionPrimitive {
  std::vector<JerkProfile1D> profiles;
  double duration = 0.0;
  bool truncated = false;

  JointSpaceState terminal() const {
    JointSpaceState s(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) s[i] = profiles[i].terminal();
    return s;
  }
};

namespace detail {

// Minimum-time steering of the (v, a) subsystem from (v0, a0) to (v1, a1)
// under |u| <= U and a in [amin, amax]. At most three segments: ramp, hold,
// ramp. Candidates: unsaturated peak (either sqrt branch), saturated hold at
// a_max or a_min. The families tile the whole delta-v axis, so a solution
// always exists for admissible endpoint accelerations.
struct Leg {
  Segment s[3];
  int n = 0;
  double t = 0.0;
  bool ok = false;
};

inline void leg_try(Leg& best, std::initializer_list<Segment> segs) {
  Leg cand;
  for (const Segment& sg : segs) {
    if (sg.dt < -1e-9) return;
    const double dt = std::max(sg.dt, 0.0);
    if (dt > 0.0) {
      cand.s[cand.n++] = {sg.u, dt};
      cand.t += dt;
    }
  }
  cand.ok = true;
  if (!best.ok || cand.t < best.t) best = cand;
}

inline Leg min_time_leg(double v0, double a0, double v1, double a1, double U,
                        double amin, double amax) {
  Leg best;
  const double dv = v1 - v0;
  const double half_sq = 0.5 * (a0 * a0 + a1 * a1);
  const double hi = std::max(a0, a1);
  const double lo = std::min(a0, a1);

  const double q_up = half_sq + U * dv;
  if (q_up >= 0.0) {
    const double r = std::sqrt(q_up);
    for (const double ap : {-r, r}) {
      if (ap >= hi - 1e-12 && ap <= amax + 1e-12) {
        const double apc = std::clamp(ap, hi, amax);
        leg_try(best, {{+U, (apc - a0) / U}, {-U, (apc - a1) / U}});
      }
    }
  }
  if (amax >= hi - 1e-12) {
    const double dv_sat = (2.0 * amax * amax - a0 * a0 - a1 * a1) / (2.0 * U);
    const double th = (dv - dv_sat) / amax;
    if (th >= -1e-9)
      leg_try(best, {{+U, (amax - a0) / U}, {0.0, th}, {-U, (amax - a1) / U}});
  }

  const double q_dn = half_sq - U * dv;
  if (q_dn >= 0.0) {
    const double r = std::sqrt(q_dn);
    for (const double ap : {r, -r}) {
      if (ap <= lo + 1e-12 && ap >= amin - 1e-12) {
        const double apc = std::clamp(ap, amin, lo);
        leg_try(best, {{-U, (a0 - apc) / U}, {+U, (a1 - apc) / U}});
      }
    }
  }
  if (amin <= lo + 1e-12) {
    const double dv_sat = (a0 * a0 + a1 * a1 - 2.0 * amin * amin) / (2.0 * U);
    const double th = (dv - dv_sat) / amin;
    if (th >= -1e-9)
      leg_try(best, {{-U, (a0 - amin) / U}, {0.0, th}, {+U, (a1 - amin) / U}});
  }
  return best;
}

// Full profile at a chosen cruise velocity vp: leg to (vp, 0), optional
// cruise, leg to the goal. tc < 0 marks an invalid choice of vp.
struct VpSolution {
  Leg head;  // start -> (vp, 0)
  Leg tail;  // (vp, 0) -> goal
  double legs_time = 0.0;
  double legs_disp = 0.0;
  double tc = 0.0;
  bool ok = false;
  double total_time() const { return legs_time + std::max(tc, 0.0); }

  void emit(std::vector<Segment>& out, double cruise) const {
    for (int i = 0; i < head.n; ++i) out.push_back(head.s[i]);
    if (cruise > 0.0) out.push_back({0.0, cruise});
    for (int i = 0; i < tail.n; ++i) out.push_back(tail.s[i]);
  }
};

inline VpSolution profile_at_vp(const JointState1D& s, const JointState1D& g,
                                double vp, double U, double amin, double amax) {
  VpSolution out;
  out.head = min_time_leg(s.v, s.a, vp, 0.0, U, amin, amax);
  out.tail = min_time_leg(vp, 0.0, g.v, g.a, U, amin, amax);
  if (!out.head.ok || !out.tail.ok) return out;

  JointState1D cur{0.0, s.v, s.a};
  for (int i = 0; i < out.head.n; ++i) cur = advance(cur, out.head.s[i].u, out.head.s[i].dt);
  JointState1D mid{0.0, vp, 0.0};
  for (int i = 0; i < out.tail.n; ++i) mid = advance(mid, out.tail.s[i].u, out.tail.s[i].dt);

  out.legs_time = out.head.t + out.tail.t;
  out.legs_disp = cur.p + mid.p;
  const double need = (g.p - s.p) - out.legs_disp;
  if (std::abs(vp) > 1e-12) {
    out.tc = need / vp;
  } else {
    out.tc = (std::abs(need) < 1e-9) ? 0.0 : -1.0;
  }
  out.ok = true;
  return out;
}

// The junction profile above forces a = 0 somewhere in the interior. When the
// optimum keeps the acceleration away from zero (monotone-velocity moves with
// like-signed endpoint accelerations), the fastest profile is a short pulse
// train instead: three jerk pulses {sU, -sU, sU} with free peaks, or four
// segments holding the first peak on the acceleration bound. Running the
// scans on the time-reversed problem covers holds at the second peak. Each
// family reduces to one scalar unknown once the velocity match is
// substituted, so roots come from a bracketing scan plus bisection on the
// terminal position error.
struct PulseCand {
  Segment seg[4];
  int n = 0;
  double T = std::numeric_limits<double>::infinity();
  bool ok = false;
};

inline void profile_extrema(const JerkProfile1D& prof, double& p_lo, double& p_hi,
                            double& v_lo, double& v_hi, double& a_lo, double& a_hi);

inline void pulse_consider(PulseCand& best, const JointState1D& s,
                           const JointState1D& g, double vmin, double vmax,
                           double amin, double amax, double pmin, double pmax,
                           const Segment* seg, int n) {
  JerkProfile1D prof;
  prof.start = s;
  for (int i = 0; i < n; ++i) {
    if (seg[i].dt < -1e-9) return;
    prof.append(seg[i].u, seg[i].dt);
  }
  const double T = prof.total_duration;
  if (!(T < best.T)) return;
  const JointState1D e = prof.terminal();
  const double sc = 1.0 + std::abs(g.p) + std::abs(g.v);
  if (std::abs(e.p - g.p) > 1e-7 * sc || std::abs(e.v - g.v) > 1e-7 * sc ||
      std::abs(e.a - g.a) > 1e-6 * (1.0 + std::abs(g.a)))
    return;
  double p_lo, p_hi, v_lo, v_hi, a_lo, a_hi;
  profile_extrema(prof, p_lo, p_hi, v_lo, v_hi, a_lo, a_hi);
  if (v_lo < vmin - 1e-9 || v_hi > vmax + 1e-9 || a_lo < amin - 1e-9 ||
      a_hi > amax + 1e-9 || p_lo < pmin - 1e-9 || p_hi > pmax + 1e-9)
    return;
  best.n = 0;
  for (const Segment& ps : prof.segments) best.seg[best.n++] = ps;
  best.T = T;
  best.ok = true;
}

// Terminal position error of a candidate as a function of the remaining
// unknown; < 0 half of a bracket comes from the scan below. The candidate
// family can cut out mid-range (discriminants, sign constraints), and roots
// may hide between the cut and the next sample, so validity edges are located
// by bisection and probed from just inside.
template <class Eval>
inline void scan_and_bisect(double ylo, double yhi, const Eval& eval) {
  if (!(yhi > ylo)) return;
  constexpr int kSamples = 64;
  auto refine = [&](double a, double b, double fa) {
    for (int it = 0; it < 90; ++it) {
      const double m = 0.5 * (a + b);
      double fm;
      if (!eval(m, &fm, false)) break;
      if ((fa <= 0.0 && fm <= 0.0) || (fa >= 0.0 && fm >= 0.0)) {
        a = m;
        fa = fm;
      } else {
        b = m;
      }
    }
    double fr;
    eval(0.5 * (a + b), &fr, true);
  };
  auto edge_point = [&](double yi, double yv, double* y_edge,
                        double* f_edge) -> bool {
    for (int it = 0; it < 60; ++it) {
      const double m = 0.5 * (yi + yv);
      double fm;
      if (eval(m, &fm, false))
        yv = m;
      else
        yi = m;
    }
    *y_edge = yv;
    return eval(yv, f_edge, false);
  };
  bool have_prev = false, prev_invalid = false;
  double y_prev = 0.0, f_prev = 0.0, y_invalid = 0.0;
  for (int i = 0; i <= kSamples; ++i) {
    const double y = ylo + (yhi - ylo) * i / kSamples;
    double f;
    if (!eval(y, &f, false)) {
      if (have_prev) {
        double ye, fe;
        if (edge_point(y, y_prev, &ye, &fe) &&
            ((f_prev <= 0.0 && fe >= 0.0) || (f_prev >= 0.0 && fe <= 0.0)))
          refine(y_prev, ye, f_prev);
      }
      have_prev = false;
      prev_invalid = true;
      y_invalid = y;
      continue;
    }
    if (prev_invalid) {
      double ye, fe;
      if (edge_point(y_invalid, y, &ye, &fe) &&
          ((fe <= 0.0 && f >= 0.0) || (fe >= 0.0 && f <= 0.0)))
        refine(ye, y, fe);
      prev_invalid = false;
    }
    if (have_prev && ((f_prev <= 0.0 && f >= 0.0) || (f_prev >= 0.0 && f <= 0.0)))
      refine(y_prev, y, f_prev);
    have_prev = true;
    y_prev = y;
    f_prev = f;
  }
}

// {sU, -sU, sU} with free peaks A1, A2; unknown y = s*A1.
inline void three_pulse_scan(const JointState1D& s, const JointState1D& g,
                             double sg, double U, double vmin, double vmax,
                             double amin, double amax, double pmin, double pmax,
                             PulseCand& best) {
  const double q = 0.5 * (g.a * g.a - s.a * s.a) - sg * U * (g.v - s.v);
  const double ylo = sg * s.a;
  const double yhi = sg > 0 ? amax : -amin;
  for (const double root : {1.0, -1.0}) {
    auto eval = [&](double y, double* f, bool accept) {
      const double a1 = sg * y;
      const double a2sq = a1 * a1 + q;
      if (a2sq < 0.0) return false;
      const double A2 = root * std::sqrt(a2sq);
      if (sg * A2 > y + 1e-12 || sg * A2 > sg * g.a + 1e-12) return false;
      if (A2 < amin - 1e-12 || A2 > amax + 1e-12) return false;
      const Segment segs[3] = {{sg * U, (y - sg * s.a) / U},
                               {-sg * U, (y - sg * A2) / U},
                               {sg * U, (sg * g.a - sg * A2) / U}};
      JointState1D e = s;
      for (const Segment& ps : segs)
        e = advance(e, ps.u, std::max(ps.dt, 0.0));
      *f = e.p - g.p;
      if (accept)
        pulse_consider(best, s, g, vmin, vmax, amin, amax, pmin, pmax, segs, 3);
      return true;
    };
    scan_and_bisect(ylo, yhi, eval);
  }
}

// {sU, hold at the bound, -sU, sU}; hold time from the velocity match,
// unknown y = s*A2 (the free valley).
inline void peak_hold_scan(const JointState1D& s, const JointState1D& g,
                           double sg, double U, double vmin, double vmax,
                           double amin, double amax, double pmin, double pmax,
                           PulseCand& best) {
  const double AP = sg > 0 ? amax : amin;
  const double t1 = (AP - s.a) / (sg * U);
  if (t1 < -1e-9) return;
  const double dv = g.v - s.v;
  const double ylo = sg > 0 ? amin : -amax;
  const double yhi = std::min(sg * AP, sg * g.a);
  auto eval = [&](double y, double* f, bool accept) {
    const double A2 = sg * y;
    const double base =
        (2.0 * AP * AP - s.a * s.a - 2.0 * A2 * A2 + g.a * g.a) / (2.0 * sg * U);
    const double th = (dv - base) / AP;
    if (th < -1e-9) return false;
    const Segment segs[4] = {{sg * U, std::max(t1, 0.0)},
                             {0.0, std::max(th, 0.0)},
                             {-sg * U, (sg * AP - y) / U},
                             {sg * U, (sg * g.a - y) / U}};
    JointState1D e = s;
    for (const Segment& ps : segs) e = advance(e, ps.u, std::max(ps.dt, 0.0));
    *f = e.p - g.p;
    if (accept)
      pulse_consider(best, s, g, vmin, vmax, amin, amax, pmin, pmax, segs, 4);
    return true;
  };
  scan_and_bisect(ylo, yhi, eval);
}

inline PulseCand pulse_candidates(const JointState1D& s, const JointState1D& g,
                                  double vmin, double vmax, double amin,
                                  double amax, double U, double pmin,
                                  double pmax) {
  PulseCand best;
  for (const double sg : {1.0, -1.0}) {
    three_pulse_scan(s, g, sg, U, vmin, vmax, amin, amax, pmin, pmax, best);
    peak_hold_scan(s, g, sg, U, vmin, vmax, amin, amax, pmin, pmax, best);
  }
  // Time-reversed holds: reversing swaps the roles of the two peaks.
  const JointState1D rs{g.p, -g.v, g.a}, rg{s.p, -s.v, s.a};
  PulseCand rb;
  for (const double sg : {1.0, -1.0})
    peak_hold_scan(rs, rg, sg, U, -vmax, -vmin, amin, amax, pmin, pmax, rb);
  if (rb.ok) {
    Segment fwd[4];
    int n = 0;
    for (int i = rb.n - 1; i >= 0; --i) fwd[n++] = {-rb.seg[i].u, rb.seg[i].dt};
    pulse_consider(best, s, g, vmin, vmax, amin, amax, pmin, pmax, fwd, n);
  }
  return best;
}

// Minimum time over vp. Displacement of the no-cruise profile grows with vp,
// so either a bound is the optimum (with cruise) or bisection pins the
// zero-cruise vp.
struct CoreSolution {
  std::vector<Segment> segs;
  double T = 0.0;
  double vp = 0.0;
  bool ok = false;
};

inline CoreSolution core_min_time(const JointState1D& s, const JointState1D& g,
                                  double vmin, double vmax, double amin,
                                  double amax, double U, double pmin,
                                  double pmax) {
  CoreSolution out;
  const double dp = g.p - s.p;
  const VpSolution at_hi = profile_at_vp(s, g, vmax, U, amin, amax);
  const VpSolution at_lo = profile_at_vp(s, g, vmin, U, amin, amax);
  if (!at_hi.ok || !at_lo.ok) return out;

  if (dp >= at_hi.legs_disp) {
    at_hi.emit(out.segs, std::max(at_hi.tc, 0.0));
    out.T = at_hi.total_time();
    out.vp = vmax;
    out.ok = at_hi.tc >= -1e-9;
  } else if (dp <= at_lo.legs_disp) {
    at_lo.emit(out.segs, std::max(at_lo.tc, 0.0));
    out.T = at_lo.total_time();
    out.vp = vmin;
    out.ok = at_lo.tc >= -1e-9;
  } else {
    double lo = vmin, hi = vmax;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const VpSolution v = profile_at_vp(s, g, mid, U, amin, amax);
      if (!v.ok) return out;
      if (v.legs_disp < dp)
        lo = mid;
      else
        hi = mid;
      if (hi - lo < 1e-15 * (1.0 + std::abs(hi))) break;
    }
    const double vp = 0.5 * (lo + hi);
    const VpSolution v = profile_at_vp(s, g, vp, U, amin, amax);
    if (!v.ok) return out;
    v.emit(out.segs, std::max(v.tc, 0.0));
    out.T = v.total_time();
    out.vp = vp;
    out.ok = true;
  }

  const PulseCand pc =
      pulse_candidates(s, g, vmin, vmax, amin, amax, U, pmin, pmax);
  if (pc.ok && (!out.ok || pc.T < out.T)) {
    out.segs.assign(pc.seg, pc.seg + pc.n);
    out.T = pc.T;
    out.ok = true;
  }
  return out;
}

inline bool states_coincide(const JointState1D& a, const JointState1D& b) {
  return std::abs(a.p - b.p) < 1e-12 && std::abs(a.v - b.v) < 1e-12 &&
         std::abs(a.a - b.a) < 1e-12;
}

// Reject states from which the velocity bound is violated no matter what
// (forward for starts, backward for goals): zeroing the acceleration at full
// jerk already sweeps |a|^2 / 2U of velocity.
inline void check_state(const JointState1D& x, const JointLimits& L, bool as_goal,
                        const char* which) {
  const std::string w(which);
  if (x.p < L.p_min - kTolState || x.p > L.p_max + kTolState)
    throw InfeasibleError(w + " position outside bounds");
  if (x.v < L.v_min - kTolState || x.v > L.v_max + kTolState)
    throw InfeasibleError(w + " velocity outside bounds");
  if (x.a < L.a_min - kTolState || x.a > L.a_max + kTolState)
    throw InfeasibleError(w + " acceleration outside bounds");
  const double sweep = x.a * x.a / (2.0 * L.u_max);
  if (!as_goal) {
    if (x.a > 0.0 && x.v + sweep > L.v_max + kTolState)
      throw InfeasibleError(w + ": unavoidable velocity overshoot");
    if (x.a < 0.0 && x.v - sweep < L.v_min - kTolState)
      throw InfeasibleError(w + ": unavoidable velocity undershoot");
  } else {
    if (x.a > 0.0 && x.v - sweep < L.v_min - kTolState)
      throw InfeasibleError(w + ": unreachable without velocity undershoot");
    if (x.a < 0.0 && x.v + sweep > L.v_max + kTolState)
      throw InfeasibleError(w + ": unreachable without velocity overshoot");
  }
}

inline void check_limits(const JointLimits& L) {
  if (!(L.p_min < L.p_max) || !(L.v_min < 0.0) || !(L.v_max > 0.0) ||
      !(L.a_min < 0.0) || !(L.a_max > 0.0) || !(L.u_max > 0.0))
    throw ConfigError("malformed joint limits");
}

// Per-segment analytic extrema of a, v, p.
inline void profile_extrema(const JerkProfile1D& prof, double& p_lo, double& p_hi,
                            double& v_lo, double& v_hi, double& a_lo, double& a_hi) {
  JointState1D s = prof.start;
  p_lo = p_hi = s.p;
  v_lo = v_hi = s.v;
  a_lo = a_hi = s.a;
  auto note = [](double x, double& lo, double& hi) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  };
  for (const Segment& seg : prof.segments) {
    const JointState1D e = advance(s, seg.u, seg.dt);
    note(e.a, a_lo, a_hi);
    note(e.v, v_lo, v_hi);
    note(e.p, p_lo, p_hi);
    if (seg.u != 0.0) {
      const double tv = -s.a / seg.u;  // v extremum where a = 0
      if (tv > 0.0 && tv < seg.dt) {
        const JointState1D m = advance(s, seg.u, tv);
        note(m.v, v_lo, v_hi);
        note(m.p, p_lo, p_hi);
      }
      // p extrema where v = 0: roots of v0 + a0 t + u t^2 / 2
      const double disc = s.a * s.a - 2.0 * seg.u * s.v;
      if (disc >= 0.0) {
        const double rt = std::sqrt(disc);
        for (const double t0 : {(-s.a - rt) / seg.u, (-s.a + rt) / seg.u}) {
          if (t0 > 0.0 && t0 < seg.dt) note(advance(s, seg.u, t0).p, p_lo, p_hi);
        }
      }
    } else {
      if (s.a != 0.0) {
        const double t0 = -s.v / s.a;  // v linear, p extremum at v = 0
        if (t0 > 0.0 && t0 < seg.dt) note(advance(s, 0.0, t0).p, p_lo, p_hi);
      }
    }
    s = e;
  }
}

inline void validate_profile(const JerkProfile1D& prof, const JointState1D& goal,
                             const JointLimits& L, bool check_goal) {
  double p_lo, p_hi, v_lo, v_hi, a_lo, a_hi;
  profile_extrema(prof, p_lo, p_hi, v_lo, v_hi, a_lo, a_hi);
  if (p_lo < L.p_min - kTolState || p_hi > L.p_max + kTolState)
    throw InfeasibleError("trajectory overshoots a position bound");
  if (v_lo < L.v_min - kTolState || v_hi > L.v_max + kTolState ||
      a_lo < L.a_min - kTolState || a_hi > L.a_max + kTolState)
    throw NumericFailureError("constructed profile violates velocity/acceleration bounds");
  if (check_goal) {
    const JointState1D e = prof.terminal();
    if (std::abs(e.p - goal.p) > kTolState || std::abs(e.v - goal.v) > kTolState ||
        std::abs(e.a - goal.a) > kTolState)
      throw NumericFailureError("terminal state did not converge");
  }
}

}  // namespace detail

/// Minimum-time jerk-limited steering of one triple-integrator joint.
inline JerkProfile1D solve_min_time_1d(const JointState1D& start,
                                       const JointState1D& goal,
                                       const JointLimits& limits) {
  detail::check_limits(limits);
  detail::check_state(start, limits, false, "start");
  detail::check_state(goal, limits, true, "goal");

  JerkProfile1D prof;
  prof.start = start;
  if (detail::states_coincide(start, goal)) return prof;

  const detail::CoreSolution sol = detail::core_min_time(
      start, goal, limits.v_min, limits.v_max, limits.a_min, limits.a_max,
      limits.u_max, limits.p_min, limits.p_max);
  if (!sol.ok) throw NumericFailureError("min-time search failed to bracket");
  for (const Segment& sg : sol.segs) prof.append(sg.u, sg.dt);
  detail::validate_profile(prof, goal, limits, true);
  return prof;
}

/// Steer start to goal arriving exactly at T_target >= the pair's min-time.
/// Strategy: walk the cruise velocity down from the optimum (arrival time
/// grows without bound as the cruise slows), bisect on arrival time; if the
/// cruise branch degenerates, uniformly scale jerk and acceleration down and
/// bisect the scale instead.
inline JerkProfile1D solve_fixed_time_1d(const JointState1D& start,
                                         const JointState1D& goal,
                                         const JointLimits& limits,
                                         double T_target) {
  detail::check_limits(limits);
  if (T_target < 0.0) throw InfeasibleError("negative target duration");

  if (detail::states_coincide(start, goal) && std::abs(start.v) < 1e-12 &&
      std::abs(start.a) < 1e-12) {
    JerkProfile1D prof;
    prof.start = start;
    prof.append(0.0, T_target);
    return prof;
  }

  JerkProfile1D mt = solve_min_time_1d(start, goal, limits);
  if (T_target < mt.total_duration - kTolTime)
    throw InfeasibleError("target duration below minimum time");
  if (std::abs(T_target - mt.total_duration) <= kTolTime) return mt;

  const double U = limits.u_max;
  const double amin = limits.a_min, amax = limits.a_max;

  const detail::CoreSolution opt = detail::core_min_time(
      start, goal, limits.v_min, limits.v_max, amin, amax, U, limits.p_min,
      limits.p_max);

  // Cruise-velocity branch: the coast absorbs unbounded time as |vp| -> 0 on
  // whichever side of zero keeps the legs short of the displacement, so both
  // signs of vp are swept. A bracket endpoint may sit where the decomposition
  // cuts out (legs overshoot, tc < 0); bisection then walks that endpoint to
  // the validity edge from inside.
  auto try_emit = [&](double vp) -> std::optional<JerkProfile1D> {
    const detail::VpSolution v =
        detail::profile_at_vp(start, goal, vp, U, amin, amax);
    if (!v.ok || v.tc < 0.0) return std::nullopt;
    // Absorb the bisection residual into the cruise so the duration is
    // exact; the position slip this causes is far below tol_state.
    double tc = v.tc;
    const double tc_exact = T_target - v.legs_time;
    if (tc_exact >= 0.0 && std::abs(tc_exact - tc) < 1e-6) tc = tc_exact;
    JerkProfile1D prof;
    prof.start = start;
    std::vector<Segment> segs;
    v.emit(segs, tc);
    for (const Segment& sg : segs) prof.append(sg.u, sg.dt);
    if (std::abs(prof.total_duration - T_target) > kTolTime) return std::nullopt;
    detail::validate_profile(prof, goal, limits, true);
    return prof;
  };
  struct VpBracket {
    double below, above;  // total < T side, total >= T side
    int invalid_end;      // 0 none, 1 'above' is past the edge, 2 'below' is
  };
  auto cruise_side = [&](double vp_start) -> std::optional<JerkProfile1D> {
    std::vector<VpBracket> brackets;
    bool have_prev = false, pv = false, pb = false;
    double prev = 0.0;
    double vp = vp_start;
    for (int k = 0; k < 400 && std::abs(vp) > 1e-12 && brackets.size() < 4;
         ++k, vp *= 0.7) {
      const detail::VpSolution v =
          detail::profile_at_vp(start, goal, vp, U, amin, amax);
      const bool valid = v.ok && v.tc >= 0.0;
      const bool below = valid && v.total_time() < T_target;
      if (have_prev) {
        if (valid && pv && below != pb)
          brackets.push_back(below ? VpBracket{vp, prev, 0}
                                   : VpBracket{prev, vp, 0});
        else if (valid && !pv && !below)
          brackets.push_back({prev, vp, 2});
        else if (!valid && pv)
          brackets.push_back(pb ? VpBracket{prev, vp, 1}
                                : VpBracket{vp, prev, 2});
      }
      have_prev = true;
      prev = vp;
      pv = valid;
      pb = below;
    }
    for (const VpBracket& br : brackets) {
      double lo = br.below, hi = br.above;
      int inv = br.invalid_end;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const detail::VpSolution v =
            detail::profile_at_vp(start, goal, mid, U, amin, amax);
        if (!v.ok || v.tc < 0.0) {
          if (inv == 2)
            lo = mid;
          else
            hi = mid;
        } else if (v.total_time() >= T_target) {
          hi = mid;
          if (inv == 1) inv = 0;
        } else {
          lo = mid;
          if (inv == 2) inv = 0;
        }
        if (std::abs(hi - lo) < 1e-16 * (1.0 + std::abs(hi))) break;
      }
      for (const double cand : {hi, 0.5 * (lo + hi), lo})
        if (auto prof = try_emit(cand)) return prof;
    }
    return std::nullopt;
  };
  if (opt.ok && std::abs(opt.vp) > 1e-9) {
    if (auto prof = cruise_side(opt.vp)) return *prof;
    const double other = opt.vp > 0.0 ? limits.v_min : limits.v_max;
    if (other * opt.vp < -1e-18 && std::abs(other) > 1e-9)
      if (auto prof = cruise_side(other * (1.0 - 1e-9))) return *prof;
  }

  // Actuation-scaling fallback.
  double s_hi = 1.0;
  double s_lo = -1.0;
  const double a_need = std::max(std::abs(start.a), std::abs(goal.a));
  const double s_floor =
      std::max(1e-6, a_need / std::min(amax, -amin) + 1e-9);
  double s = 1.0;
  for (int k = 0; k < 200 && s > s_floor; ++k) {
    s *= 0.8;
    if (s < s_floor) break;
    try {
      detail::check_state(start, {limits.p_min, limits.p_max, limits.v_min,
                                  limits.v_max, amin * s, amax * s, U * s},
                          false, "start");
      detail::check_state(goal, {limits.p_min, limits.p_max, limits.v_min,
                                 limits.v_max, amin * s, amax * s, U * s},
                          true, "goal");
    } catch (const InfeasibleError&) {
      break;
    }
    const detail::CoreSolution c = detail::core_min_time(
        start, goal, limits.v_min, limits.v_max, amin * s, amax * s, U * s,
        limits.p_min, limits.p_max);
    if (!c.ok) break;
    if (c.T >= T_target) {
      s_lo = s;
      break;
    }
    s_hi = s;
  }
  if (s_lo > 0.0) {
    for (int it = 0; it < 120; ++it) {
      const double mid = 0.5 * (s_lo + s_hi);
      const detail::CoreSolution c = detail::core_min_time(
          start, goal, limits.v_min, limits.v_max, amin * mid, amax * mid,
          U * mid, limits.p_min, limits.p_max);
      if (!c.ok) break;
      if (c.T >= T_target)
        s_lo = mid;
      else
        s_hi = mid;
    }
    const double sf = 0.5 * (s_lo + s_hi);
    const detail::CoreSolution c = detail::core_min_time(
        start, goal, limits.v_min, limits.v_max, amin * sf, amax * sf, U * sf,
        limits.p_min, limits.p_max);
    if (c.ok && std::abs(c.T - T_target) <= kTolTime) {
      JerkProfile1D prof;
      prof.start = start;
      for (const Segment& sg : c.segs) prof.append(sg.u, sg.dt);
      detail::validate_profile(prof, goal, limits, true);
      return prof;
    }
  }
  throw NumericFailureError("fixed-time stretch failed to converge");
}

/// Multi-joint synchronized steering with duration cap.
inline MotionPrimitive steer(const JointSpaceState& start, const JointSpaceState& goal,
                             const std::vector<JointLimits>& limits, double eps) {
  if (start.size() != goal.size() || start.size() != limits.size())
    throw ConfigError("steer: joint count mismatch");
  if (start.size() == 0) throw ConfigError("steer: no joints");

  const std::size_t n = start.size();
  std::vector<JerkProfile1D> min_profiles(n);
  double t_sync = 0.0;
  std::size_t slowest = 0;
  for (std::size_t i = 0; i < n; ++i) {
    min_profiles[i] = solve_min_time_1d(start[i], goal[i], limits[i]);
    if (min_profiles[i].total_duration > t_sync) {
      t_sync = min_profiles[i].total_duration;
      slowest = i;
    }
  }

  MotionPrimitive prim;
  prim.profiles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == slowest || std::abs(min_profiles[i].total_duration - t_sync) <= kTolTime)
      prim.profiles[i] = min_profiles[i];
    else
      prim.profiles[i] = solve_fixed_time_1d(start[i], goal[i], limits[i], t_sync);
  }
  prim.duration = t_sync;
  prim.truncated = false;

  if (t_sync > eps) {
    for (JerkProfile1D& p : prim.profiles) p.truncate(eps);
    prim.duration = eps;
    prim.truncated = true;
  }
  return prim;
}

/// Piecewise-polynomial evaluation of a primitive at time t in [0, duration].
inline JointSpaceState sample_profile(const MotionPrimitive& prim, double t) {
  if (t < -1e-12 || t > prim.duration + 1e-12)
    throw std::out_of_range("sample_profile: t outside [0, duration]");
  const double tc = std::clamp(t, 0.0, prim.duration);
  JointSpaceState s(prim.profiles.size());
  for (std::size_t i = 0; i < prim.profiles.size(); ++i)
    s[i] = prim.profiles[i].state_at(tc);
  return s;
}

}  // namespace intercept

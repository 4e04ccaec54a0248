#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "intercept/action_tree.hpp"
#include "intercept/belief.hpp"

namespace intercept {

enum class DecisionMode { kBeliefQmdp, kNaiveBaseline };

struct PolicyConfig {
  DecisionMode decision_mode = DecisionMode::kBeliefQmdp;
  bool hold_on_degenerate = true;
  /// Rank goals for the terminal fallback (and the MAP readout) by the
  /// footprint-integrated probability; false ranks by the plane density at
  /// the goal center, the metric the naive baseline always uses.
  bool fallback_integrates_footprint = true;
};

/// Where the executor is on the tree: decisions happen only when the
/// committed primitive has been played out.
struct ExecutionState {
  int current_node = 0;
  double elapsed = 0.0;
  MotionPrimitive committed;
  double committed_start = 0.0;
  bool has_commitment = false;

  bool at_node_boundary() const {
    return !has_commitment ||
           elapsed >= committed_start + committed.duration - 1e-12;
  }
};

inline RectFootprint goal_footprint(const GoalSpec& g) {
  return RectFootprint{g.plane_y, g.plane_z, g.shield_half_y, g.shield_half_z};
}

/// Probability that the crossing lands on this terminal's shield after the
/// arm has parked there.
inline double terminal_value(const TreeNode& node, const GoalSpec& goal,
                             const CrossingBelief& cb) {
  if (node.goal_id < 0) throw ConfigError("terminal_value: node is not terminal");
  return success_probability(cb, goal_footprint(goal), node.time_to_come);
}

/// Density of the (Y, Z) crossing marginal at a plane point. Used only to
/// rank goals, so near-singular covariance just degenerates to a sharp peak.
inline double plane_density(const CrossingBelief& cb, double y, double z) {
  const double vyy = std::max(cb.cov(0, 0), kDiracVar);
  const double vzz = std::max(cb.cov(1, 1), kDiracVar);
  const double vyz = cb.cov(0, 1);
  const double det = std::max(vyy * vzz - vyz * vyz, 1e-300);
  const double dy = y - cb.mean(0);
  const double dz = z - cb.mean(1);
  const double q = (dy * dy * vzz - 2.0 * dy * dz * vyz + dz * dz * vyy) / det;
  return std::exp(-0.5 * q) / (kTwoPi * std::sqrt(det));
}

/// Goal the crossing is most likely headed for; ties go to the lowest index.
inline int most_probable_goal(const CrossingBelief& cb,
                              const std::vector<GoalSpec>& goals,
                              bool integrate_footprint) {
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < goals.size(); ++i) {
    const double s =
        integrate_footprint
            ? success_probability(cb, goal_footprint(goals[i]),
                                  -std::numeric_limits<double>::infinity())
            : plane_density(cb, goals[i].plane_y, goals[i].plane_z);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) throw ConfigError("most_probable_goal: no goals");
  return best;
}

namespace detail {

/// Per-goal quadrature table for the terminal reward as a function of the
/// arrival time. The crossing-time window is split into panels; each panel
/// stores the Legendre coefficients of the integrand, so the tail integral
/// from any arrival time costs a short polynomial evaluation instead of a
/// fresh quadrature. Matches success_probability to quadrature accuracy.
class CrossingRewardTable {
 public:
  static constexpr int kPanels = 32;
  static constexpr int kOrder = 8;

  CrossingRewardTable(const CrossingBelief& cb, const std::vector<GoalSpec>& goals) {
    require_covariance(cb.cov, "reward table");
    mt_ = cb.mean(2);
    const double vtt = std::max(cb.cov(2, 2), 0.0);
    dirac_ = vtt <= kDiracVar;
    const std::size_t ng = goals.size();
    if (dirac_) {
      full_.resize(ng);
      for (std::size_t g = 0; g < ng; ++g)
        full_[g] = gaussian_rect_prob(cb.mean(0), cb.mean(1),
                                      std::max(cb.cov(0, 0), 0.0),
                                      std::max(cb.cov(1, 1), 0.0), cb.cov(0, 1),
                                      goal_footprint(goals[g]));
      return;
    }
    const double st = std::sqrt(vtt);
    lo_ = mt_ - 6.0 * st;
    hi_ = mt_ + 6.0 * st;
    panel_width_ = (hi_ - lo_) / kPanels;
    const TauConditional cond = TauConditional::from(cb);
    const QuadRule& q = panel_rule();
    const std::vector<double>& T = legendre_transform();

    coef_.assign(ng * kPanels * kOrder, 0.0);
    suffix_.assign(ng * (kPanels + 1), 0.0);
    const double half = 0.5 * panel_width_;
    std::vector<double> f(static_cast<std::size_t>(kOrder));
    for (std::size_t g = 0; g < ng; ++g) {
      const RectFootprint rect = goal_footprint(goals[g]);
      for (int p = 0; p < kPanels; ++p) {
        const double mid = lo_ + (static_cast<double>(p) + 0.5) * panel_width_;
        for (int i = 0; i < kOrder; ++i)
          f[static_cast<std::size_t>(i)] =
              cond.integrand(mid + half * q.nodes[static_cast<std::size_t>(i)], rect);
        double* c = &coef_[(g * kPanels + static_cast<std::size_t>(p)) * kOrder];
        for (int j = 0; j < kOrder; ++j) {
          double s = 0.0;
          for (int i = 0; i < kOrder; ++i)
            s += T[static_cast<std::size_t>(j * kOrder + i)] *
                 f[static_cast<std::size_t>(i)];
          c[j] = s;
        }
      }
      double acc = 0.0;
      suffix_[g * (kPanels + 1) + kPanels] = 0.0;
      for (int p = kPanels - 1; p >= 0; --p) {
        acc += 2.0 * half * coef_[(g * kPanels + static_cast<std::size_t>(p)) * kOrder];
        suffix_[g * (kPanels + 1) + static_cast<std::size_t>(p)] = acc;
      }
    }
  }

  /// Tail integral from the arrival time: reward of parking at goal g at t.
  double value(std::size_t goal, double t) const {
    if (dirac_) return mt_ > t ? full_[goal] : 0.0;
    if (t >= hi_) return 0.0;
    if (t <= lo_) return std::clamp(suffix_[goal * (kPanels + 1)], 0.0, 1.0);
    int p = static_cast<int>((t - lo_) / panel_width_);
    p = std::clamp(p, 0, kPanels - 1);
    const double a = lo_ + static_cast<double>(p) * panel_width_;
    const double x = std::clamp(2.0 * (t - a) / panel_width_ - 1.0, -1.0, 1.0);
    const double half = 0.5 * panel_width_;

    // Legendre values P_0..P_kOrder at x; the tail integral of P_j over
    // [x, 1] is (P_{j-1} - P_{j+1}) / (2j + 1), and 1 - x for j = 0.
    double P[kOrder + 1];
    P[0] = 1.0;
    P[1] = x;
    for (int j = 1; j < kOrder; ++j)
      P[j + 1] = ((2.0 * j + 1.0) * x * P[j] - static_cast<double>(j) * P[j - 1]) /
                 (static_cast<double>(j) + 1.0);
    const double* c = &coef_[(goal * kPanels + static_cast<std::size_t>(p)) * kOrder];
    double partial = c[0] * (1.0 - x);
    for (int j = 1; j < kOrder; ++j)
      partial += c[j] * (P[j - 1] - P[j + 1]) / (2.0 * j + 1.0);
    partial *= half;
    const double tail = suffix_[goal * (kPanels + 1) + static_cast<std::size_t>(p) + 1];
    return std::clamp(partial + tail, 0.0, 1.0);
  }

 private:
  static const QuadRule& panel_rule() {
    static const QuadRule rule = [] {
      QuadRule r;
      gauss_legendre(kOrder, r.nodes, r.weights);
      return r;
    }();
    return rule;
  }

  /// T[j][i] maps node values to Legendre coefficients:
  /// c_j = (2j+1)/2 * sum_i w_i P_j(x_i) f(x_i).
  static const std::vector<double>& legendre_transform() {
    static const std::vector<double> T = [] {
      const QuadRule& q = panel_rule();
      std::vector<double> t(static_cast<std::size_t>(kOrder * kOrder));
      for (int i = 0; i < kOrder; ++i) {
        const double x = q.nodes[static_cast<std::size_t>(i)];
        const double w = q.weights[static_cast<std::size_t>(i)];
        double pm = 1.0, pc = x;
        for (int j = 0; j < kOrder; ++j) {
          const double pj = j == 0 ? pm : pc;
          t[static_cast<std::size_t>(j * kOrder + i)] =
              0.5 * (2.0 * j + 1.0) * w * pj;
          if (j >= 1) {
            const double pn =
                ((2.0 * j + 1.0) * x * pc - static_cast<double>(j) * pm) /
                (static_cast<double>(j) + 1.0);
            pm = pc;
            pc = pn;
          }
        }
      }
      return t;
    }();
    return T;
  }

  bool dirac_ = false;
  double mt_ = 0.0, lo_ = 0.0, hi_ = 0.0, panel_width_ = 0.0;
  std::vector<double> full_;
  std::vector<double> coef_;
  std::vector<double> suffix_;
};

}  // namespace detail

struct BackupReport {
  double seconds = 0.0;
  std::size_t visited = 0;
};

/// Recompute internal values from whatever the terminal values currently
/// are: every internal node takes the max over its children, childless
/// internal nodes fall to zero. Nodes are stored parents-first, so one
/// reverse sweep is a full backward pass.
inline void backup_from_terminal_values(ActionTree& tree) {
  for (std::size_t i = tree.nodes.size(); i-- > 0;) {
    TreeNode& n = tree.nodes[i];
    if (n.goal_id >= 0) continue;
    double v = 0.0;
    for (int c : n.children)
      v = std::max(v, tree.nodes[static_cast<std::size_t>(c)].value);
    n.value = v;
  }
}

/// Score every terminal against the current crossing belief and propagate
/// maxima to the root. One pass, each node visited once.
inline BackupReport backup_values(ActionTree& tree,
                                  const std::vector<GoalSpec>& goals,
                                  const CrossingBelief& cb) {
  if (tree.terminals_by_goal.size() != goals.size())
    throw ConfigError("backup_values: goal count mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  const detail::CrossingRewardTable table(cb, goals);
  BackupReport rep;
  for (std::size_t i = tree.nodes.size(); i-- > 0;) {
    TreeNode& n = tree.nodes[i];
    double v = 0.0;
    if (n.goal_id >= 0) {
      v = table.value(static_cast<std::size_t>(n.goal_id), n.time_to_come);
    } else {
      for (int c : n.children)
        v = std::max(v, tree.nodes[static_cast<std::size_t>(c)].value);
    }
    if (!(v >= 0.0 && v <= 1.0))
      throw NumericFailureError("backup_values: value outside [0, 1]");
    n.value = v;
    ++rep.visited;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
  return rep;
}

enum class DecisionKind { kContinue, kAdvance, kGoalCommit, kHold };

struct Decision {
  DecisionKind kind = DecisionKind::kHold;
  int child = -1;
  int goal_id = -1;
  MotionPrimitive primitive;
};

/// Pick the next edge from the current node: highest child value, ties to
/// the earlier arrival and then the lower child index. A terminal current
/// node (measurements still arriving) turns into a commitment to the most
/// probable goal; a childless internal node holds.
inline Decision select_action(const ExecutionState& exec, const ActionTree& tree,
                              const std::vector<GoalSpec>& goals,
                              const CrossingBelief& cb, const PolicyConfig& cfg) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(exec.current_node)];
  Decision d;
  if (n.goal_id >= 0) {
    d.kind = DecisionKind::kGoalCommit;
    d.goal_id = most_probable_goal(cb, goals, cfg.fallback_integrates_footprint);
    return d;
  }
  if (n.children.empty()) {
    d.kind = DecisionKind::kHold;
    return d;
  }
  int best = -1;
  double best_value = -1.0;
  double best_ttc = std::numeric_limits<double>::infinity();
  for (int c : n.children) {
    const TreeNode& ch = tree.nodes[static_cast<std::size_t>(c)];
    if (ch.value > best_value ||
        (ch.value == best_value && ch.time_to_come < best_ttc)) {
      best = c;
      best_value = ch.value;
      best_ttc = ch.time_to_come;
    }
  }
  d.kind = DecisionKind::kAdvance;
  d.child = best;
  d.goal_id = tree.nodes[static_cast<std::size_t>(best)].goal_id;
  d.primitive = tree.nodes[static_cast<std::size_t>(best)].incoming;
  return d;
}

struct NaiveDecision {
  int goal = -1;
  MotionPrimitive primitive;
};

/// Race to wherever the crossing density is highest right now, preempting
/// whatever was in flight.
inline NaiveDecision naive_policy(const JointSpaceState& current,
                                  const CrossingBelief& cb,
                                  const std::vector<GoalSpec>& goals,
                                  const std::vector<JointLimits>& limits) {
  NaiveDecision d;
  d.goal = most_probable_goal(cb, goals, false);
  d.primitive =
      steer(current, detail::goal_state(goals[static_cast<std::size_t>(d.goal)]),
            limits, std::numeric_limits<double>::infinity());
  return d;
}

struct CycleResult {
  Decision decision;
  double root_value = 0.0;
  int map_goal = -1;
  double seconds = 0.0;
  bool degenerate = false;
};

/// One planner beat: project the flight belief onto the plane, refresh all
/// tree values, and pick an action if the executor sits at a node boundary.
/// A degenerate crossing holds the last commitment when configured to.
inline CycleResult planning_cycle(const ExecutionState& exec, ActionTree& tree,
                                  const ProjectileBelief& belief,
                                  const PlaneSpec& plane,
                                  const std::vector<GoalSpec>& goals,
                                  const PolicyConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  CycleResult r;
  CrossingBelief cb;
  try {
    cb = project_to_plane(belief, plane);
  } catch (const DegenerateCrossingError&) {
    if (!cfg.hold_on_degenerate) throw;
    r.degenerate = true;
    r.decision.kind = exec.at_node_boundary() ? DecisionKind::kHold
                                              : DecisionKind::kContinue;
    r.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }
  backup_values(tree, goals, cb);
  r.root_value = tree.root().value;
  r.map_goal = most_probable_goal(cb, goals, cfg.fallback_integrates_footprint);
  if (exec.at_node_boundary())
    r.decision = select_action(exec, tree, goals, cb, cfg);
  else
    r.decision.kind = DecisionKind::kContinue;
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// One decision-log line.
inline std::string format_decision_record(double timestamp, const CycleResult& r) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", timestamp);
  os << "t " << buf;
  std::snprintf(buf, sizeof buf, "%.6f", r.seconds);
  os << " latency " << buf;
  os << " kind ";
  switch (r.decision.kind) {
    case DecisionKind::kContinue: os << "continue"; break;
    case DecisionKind::kAdvance: os << "advance"; break;
    case DecisionKind::kGoalCommit: os << "goal_commit"; break;
    case DecisionKind::kHold: os << "hold"; break;
  }
  os << " child " << r.decision.child;
  std::snprintf(buf, sizeof buf, "%.9g", r.root_value);
  os << " root_value " << buf;
  os << " map_goal " << r.map_goal;
  if (r.degenerate) os << " degenerate";
  return os.str();
}

}  // namespace intercept

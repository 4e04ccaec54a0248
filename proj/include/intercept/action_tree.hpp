#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "intercept/errors.hpp"
#include "intercept/jerk_profile.hpp"

namespace intercept {

/// Axis-aligned keep-out box in joint space.
struct KeepOutBox {
  std::vector<double> lo;
  std::vector<double> hi;
};

/// A candidate interception posture: where the arm parks and which patch of
/// the crossing plane its shield covers there.
struct GoalSpec {
  std::vector<double> q_goal;
  double plane_y = 0.0;
  double plane_z = 0.0;
  double shield_half_y = 0.0;
  double shield_half_z = 0.0;
};

/// Sub-goal discretization: a fixed position grid plus the fraction of v_max
/// each sub-goal's velocity is pointed at.
struct SubGoalRegions {
  std::vector<int> counts;
  std::vector<double> lo;
  std::vector<double> hi;
  double velocity_fraction = 0.6;
};

struct TreeConfig {
  JointSpaceState start;
  std::vector<GoalSpec> goals;
  SubGoalRegions regions;
  std::vector<JointLimits> limits;
  double max_primitive_duration = 0.25;
  int max_depth = 2;
  /// Negative means: derive from the goal set (75th percentile of pairwise
  /// goal distances; a single goal gets an unbounded radius).
  double goal_connect_radius = -1.0;
  std::vector<KeepOutBox> keep_out;
  double collision_dt = 0.01;
};

struct TreeNode {
  JointSpaceState state;
  double time_to_come = 0.0;
  int depth = 0;
  int parent = -1;
  /// Empty (no profiles) at the root.
  MotionPrimitive incoming;
  std::vector<int> children;
  /// >= 0 tags a terminal node with the goal it parks at.
  int goal_id = -1;
  /// Rewritten by every planner value pass; everything else is frozen after
  /// construction.
  double value = 0.0;
};

struct BuildStats {
  std::int64_t discarded_collision = 0;
  std::int64_t discarded_infeasible = 0;
  std::int64_t skipped_goal_connects = 0;
  std::vector<std::int64_t> depth_histogram;
};

struct ActionTree {
  std::vector<TreeNode> nodes;
  /// terminals_by_goal[g] lists the node ids parked at goal g.
  std::vector<std::vector<int>> terminals_by_goal;
  BuildStats stats;

  const TreeNode& root() const { return nodes.front(); }
};

inline double joint_position_distance(const JointSpaceState& a,
                                      const std::vector<double>& q) {
  double sum = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    const double d = a[j].p - q[j];
    sum += d * d;
  }
  return std::sqrt(sum);
}

/// 75th percentile (nearest rank) of pairwise goal distances. Fewer than two
/// goals leaves the radius unbounded.
inline double default_goal_connect_radius(const std::vector<GoalSpec>& goals) {
  std::vector<double> dists;
  for (std::size_t i = 0; i < goals.size(); ++i)
    for (std::size_t j = i + 1; j < goals.size(); ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < goals[i].q_goal.size(); ++k) {
        const double d = goals[i].q_goal[k] - goals[j].q_goal[k];
        sum += d * d;
      }
      dists.push_back(std::sqrt(sum));
    }
  if (dists.empty()) return std::numeric_limits<double>::infinity();
  std::sort(dists.begin(), dists.end());
  const std::size_t rank =
      static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(dists.size())));
  return dists[rank - 1];
}

/// Grid coordinate of point i of c along [lo, hi]; a single point sits at the
/// midpoint.
inline double grid_coord(double lo, double hi, int i, int c) {
  if (c == 1) return 0.5 * (lo + hi);
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(c - 1);
}

/// Sub-goals for expanding from s: positions on the fixed grid, velocities a
/// fraction of v_max pointing from s toward the grid point per joint (zero
/// when the point coincides with s in that joint), accelerations zero.
/// Row-major over the grid, last joint fastest.
inline std::vector<JointSpaceState> sub_goals(const JointSpaceState& s,
                                              const SubGoalRegions& regions,
                                              const std::vector<JointLimits>& limits) {
  const std::size_t n = regions.counts.size();
  if (n == 0 || regions.lo.size() != n || regions.hi.size() != n ||
      limits.size() != n || s.size() != n)
    throw ConfigError("sub_goals: joint count mismatch");

  std::size_t total = 1;
  for (int c : regions.counts) {
    if (c < 1) throw ConfigError("sub_goals: grid count must be >= 1");
    total *= static_cast<std::size_t>(c);
  }

  std::vector<JointSpaceState> out;
  out.reserve(total);
  std::vector<int> idx(n, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    JointSpaceState g(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double q = grid_coord(regions.lo[j], regions.hi[j], idx[j],
                                  regions.counts[j]);
      g[j].p = q;
      const double dir = q - s[j].p;
      double v = 0.0;
      if (dir > 0.0) v = regions.velocity_fraction * limits[j].v_max;
      if (dir < 0.0) v = -regions.velocity_fraction * limits[j].v_max;
      g[j].v = std::clamp(v, limits[j].v_min, limits[j].v_max);
      g[j].a = 0.0;
    }
    out.push_back(g);
    for (std::size_t j = n; j-- > 0;) {
      if (++idx[j] < regions.counts[j]) break;
      idx[j] = 0;
    }
  }
  return out;
}

/// Samples the primitive every dt (plus the endpoint) and reports whether any
/// sampled joint-position vector falls inside a keep-out box.
inline bool is_colliding(const MotionPrimitive& prim,
                         const std::vector<KeepOutBox>& boxes, double dt) {
  if (boxes.empty()) return false;
  if (dt <= 0.0) throw ConfigError("is_colliding: sampling step must be > 0");
  const std::size_t n = prim.profiles.size();
  auto inside = [&](const std::vector<double>& p) {
    for (const KeepOutBox& b : boxes) {
      if (b.lo.size() != n || b.hi.size() != n)
        throw ConfigError("is_colliding: keep-out box joint count mismatch");
      bool in = true;
      for (std::size_t j = 0; j < n && in; ++j)
        in = b.lo[j] <= p[j] && p[j] <= b.hi[j];
      if (in) return true;
    }
    return false;
  };
  std::vector<double> p(n);
  const std::size_t steps =
      static_cast<std::size_t>(std::floor(prim.duration / dt));
  for (std::size_t k = 0; k <= steps + 1; ++k) {
    const double t = std::min(static_cast<double>(k) * dt, prim.duration);
    for (std::size_t j = 0; j < n; ++j) p[j] = prim.profiles[j].state_at(t).p;
    if (inside(p)) return true;
    if (t >= prim.duration) break;
  }
  return false;
}

namespace detail {

inline void validate_tree_config(const TreeConfig& cfg) {
  const std::size_t n = cfg.limits.size();
  if (n == 0) throw ConfigError("tree: no joints");
  if (cfg.start.size() != n) throw ConfigError("tree: start joint count mismatch");
  if (cfg.goals.empty()) throw ConfigError("tree: goal list is empty");
  if (cfg.max_depth < 1) throw ConfigError("tree: max_depth must be >= 1");
  if (!(cfg.max_primitive_duration > 0.0))
    throw ConfigError("tree: max_primitive_duration must be > 0");
  if (!(cfg.collision_dt > 0.0))
    throw ConfigError("tree: collision_dt must be > 0");
  if (cfg.regions.counts.size() != n || cfg.regions.lo.size() != n ||
      cfg.regions.hi.size() != n)
    throw ConfigError("tree: sub-goal region joint count mismatch");
  if (cfg.regions.velocity_fraction < 0.0 || cfg.regions.velocity_fraction > 1.0)
    throw ConfigError("tree: velocity_fraction must be in [0, 1]");
  for (std::size_t j = 0; j < n; ++j) {
    if (cfg.regions.counts[j] < 1)
      throw ConfigError("tree: grid count must be >= 1");
    if (cfg.regions.lo[j] > cfg.regions.hi[j])
      throw ConfigError("tree: sub-goal region is inverted");
    if (cfg.regions.lo[j] < cfg.limits[j].p_min ||
        cfg.regions.hi[j] > cfg.limits[j].p_max)
      throw ConfigError("tree: sub-goal region exceeds position limits");
    const JointState1D& s = cfg.start[j];
    if (s.p < cfg.limits[j].p_min || s.p > cfg.limits[j].p_max ||
        s.v < cfg.limits[j].v_min || s.v > cfg.limits[j].v_max ||
        s.a < cfg.limits[j].a_min || s.a > cfg.limits[j].a_max)
      throw ConfigError("tree: start state violates limits");
  }
  for (const GoalSpec& g : cfg.goals) {
    if (g.q_goal.size() != n) throw ConfigError("tree: goal joint count mismatch");
    if (!(g.shield_half_y > 0.0) || !(g.shield_half_z > 0.0))
      throw ConfigError("tree: shield half extents must be > 0");
    for (std::size_t j = 0; j < n; ++j)
      if (g.q_goal[j] < cfg.limits[j].p_min || g.q_goal[j] > cfg.limits[j].p_max)
        throw ConfigError("tree: goal position violates limits");
  }
  for (const KeepOutBox& b : cfg.keep_out) {
    if (b.lo.size() != n || b.hi.size() != n)
      throw ConfigError("tree: keep-out box joint count mismatch");
    for (std::size_t j = 0; j < n; ++j)
      if (b.lo[j] > b.hi[j]) throw ConfigError("tree: keep-out box is inverted");
  }
}

inline JointSpaceState goal_state(const GoalSpec& g) {
  JointSpaceState s(g.q_goal.size());
  for (std::size_t j = 0; j < g.q_goal.size(); ++j) s[j].p = g.q_goal[j];
  return s;
}

}  // namespace detail

/// Attaches terminal nodes for every goal within the connect radius of the
/// node's joint positions. The connecting move is a full (untruncated) steer;
/// solves that fail or collide are skipped and counted.
inline void connect_to_close_goals(ActionTree& tree, int node_id,
                                   const TreeConfig& cfg, double radius) {
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < cfg.goals.size(); ++g) {
    const double dist =
        joint_position_distance(tree.nodes[node_id].state, cfg.goals[g].q_goal);
    if (dist > radius) continue;
    MotionPrimitive prim;
    try {
      prim = steer(tree.nodes[node_id].state, detail::goal_state(cfg.goals[g]),
                   cfg.limits, inf);
    } catch (const InfeasibleError&) {
      ++tree.stats.skipped_goal_connects;
      continue;
    } catch (const NumericFailureError&) {
      ++tree.stats.skipped_goal_connects;
      continue;
    }
    if (is_colliding(prim, cfg.keep_out, cfg.collision_dt)) {
      ++tree.stats.discarded_collision;
      continue;
    }
    TreeNode child;
    child.state = prim.terminal();
    child.parent = node_id;
    child.depth = tree.nodes[node_id].depth + 1;
    child.time_to_come = tree.nodes[node_id].time_to_come + prim.duration;
    child.incoming = std::move(prim);
    child.goal_id = static_cast<int>(g);
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(std::move(child));
    tree.nodes[node_id].children.push_back(id);
    tree.terminals_by_goal[g].push_back(id);
  }
}

/// Breadth-first construction: interior nodes expand toward every sub-goal
/// with a duration-capped steer, nodes at the depth cap connect to nearby
/// goals instead. Colliding primitives are dropped. Throws EmptyTreeError if
/// the root cannot expand at all.
inline ActionTree build_action_tree(const TreeConfig& cfg) {
  detail::validate_tree_config(cfg);
  const double radius = cfg.goal_connect_radius >= 0.0
                            ? cfg.goal_connect_radius
                            : default_goal_connect_radius(cfg.goals);

  ActionTree tree;
  tree.terminals_by_goal.assign(cfg.goals.size(), {});
  TreeNode root;
  root.state = cfg.start;
  tree.nodes.push_back(std::move(root));

  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    if (tree.nodes[id].depth == cfg.max_depth) {
      connect_to_close_goals(tree, id, cfg, radius);
      continue;
    }
    const std::vector<JointSpaceState> targets =
        sub_goals(tree.nodes[id].state, cfg.regions, cfg.limits);
    for (const JointSpaceState& g : targets) {
      MotionPrimitive prim;
      try {
        prim = steer(tree.nodes[id].state, g, cfg.limits,
                     cfg.max_primitive_duration);
      } catch (const InfeasibleError&) {
        ++tree.stats.discarded_infeasible;
        continue;
      } catch (const NumericFailureError&) {
        ++tree.stats.discarded_infeasible;
        continue;
      }
      if (is_colliding(prim, cfg.keep_out, cfg.collision_dt)) {
        ++tree.stats.discarded_collision;
        continue;
      }
      TreeNode child;
      child.state = prim.terminal();
      child.parent = id;
      child.depth = tree.nodes[id].depth + 1;
      child.time_to_come = tree.nodes[id].time_to_come + prim.duration;
      child.incoming = std::move(prim);
      const int cid = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back(std::move(child));
      tree.nodes[id].children.push_back(cid);
      queue.push_back(cid);
    }
  }

  if (tree.nodes.front().children.empty())
    throw EmptyTreeError("no feasible expansion from the root");

  for (const TreeNode& n : tree.nodes) {
    if (tree.stats.depth_histogram.size() <= static_cast<std::size_t>(n.depth))
      tree.stats.depth_histogram.resize(static_cast<std::size_t>(n.depth) + 1, 0);
    ++tree.stats.depth_histogram[static_cast<std::size_t>(n.depth)];
  }
  return tree;
}

/// Build report: node count, drop counters, nodes per depth.
inline std::string format_build_stats(const ActionTree& tree) {
  std::ostringstream os;
  os << "nodes " << tree.nodes.size() << "\n";
  std::size_t terminals = 0;
  for (const auto& ids : tree.terminals_by_goal) terminals += ids.size();
  os << "terminals " << terminals << "\n";
  os << "discarded_collision " << tree.stats.discarded_collision << "\n";
  os << "discarded_infeasible " << tree.stats.discarded_infeasible << "\n";
  os << "skipped_goal_connects " << tree.stats.skipped_goal_connects << "\n";
  for (std::size_t d = 0; d < tree.stats.depth_histogram.size(); ++d)
    os << "depth " << d << " " << tree.stats.depth_histogram[d] << "\n";
  return os.str();
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_i64(std::ostream& os, std::int64_t v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ConfigError("tree file: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::int64_t get_i64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw ConfigError("tree file: truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  std::int64_t v;
  std::memcpy(&v, &u, 8);
  return v;
}

inline double get_f64(std::istream& is) {
  std::uint64_t u = static_cast<std::uint64_t>(get_i64(is));
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

inline constexpr std::uint32_t kTreeMagic = 0x45525449u;  // "ITRE"
inline constexpr std::uint32_t kTreeVersion = 1;

}  // namespace detail

/// Versioned little-endian binary image of the tree. Doubles are written
/// bit-exact, so save -> load -> save reproduces the byte stream.
inline void save_tree(std::ostream& os, const ActionTree& tree) {
  using namespace detail;
  put_u32(os, kTreeMagic);
  put_u32(os, kTreeVersion);
  const std::uint32_t joints =
      tree.nodes.empty() ? 0u
                         : static_cast<std::uint32_t>(tree.nodes.front().state.size());
  put_u32(os, joints);
  put_u32(os, static_cast<std::uint32_t>(tree.nodes.size()));
  put_u32(os, static_cast<std::uint32_t>(tree.terminals_by_goal.size()));
  for (const TreeNode& n : tree.nodes) {
    put_u32(os, static_cast<std::uint32_t>(n.parent + 1));
    put_u32(os, static_cast<std::uint32_t>(n.depth));
    put_u32(os, static_cast<std::uint32_t>(n.goal_id + 1));
    put_f64(os, n.time_to_come);
    put_f64(os, n.value);
    for (std::size_t j = 0; j < n.state.size(); ++j) {
      put_f64(os, n.state[j].p);
      put_f64(os, n.state[j].v);
      put_f64(os, n.state[j].a);
    }
    put_u32(os, static_cast<std::uint32_t>(n.incoming.profiles.size()));
    put_f64(os, n.incoming.duration);
    put_u32(os, n.incoming.truncated ? 1u : 0u);
    for (const JerkProfile1D& pr : n.incoming.profiles) {
      put_f64(os, pr.start.p);
      put_f64(os, pr.start.v);
      put_f64(os, pr.start.a);
      put_f64(os, pr.total_duration);
      put_u32(os, static_cast<std::uint32_t>(pr.segments.size()));
      for (const Segment& seg : pr.segments) {
        put_f64(os, seg.u);
        put_f64(os, seg.dt);
      }
    }
  }
  put_i64(os, tree.stats.discarded_collision);
  put_i64(os, tree.stats.discarded_infeasible);
  put_i64(os, tree.stats.skipped_goal_connects);
  put_u32(os, static_cast<std::uint32_t>(tree.stats.depth_histogram.size()));
  for (std::int64_t c : tree.stats.depth_histogram) put_i64(os, c);
}

inline ActionTree load_tree(std::istream& is) {
  using namespace detail;
  if (get_u32(is) != kTreeMagic) throw ConfigError("tree file: bad magic");
  if (get_u32(is) != kTreeVersion) throw ConfigError("tree file: unknown version");
  const std::uint32_t joints = get_u32(is);
  const std::uint32_t node_count = get_u32(is);
  const std::uint32_t goal_count = get_u32(is);
  if (node_count == 0) throw ConfigError("tree file: empty tree");

  ActionTree tree;
  tree.nodes.reserve(node_count);
  tree.terminals_by_goal.assign(goal_count, {});
  for (std::uint32_t i = 0; i < node_count; ++i) {
    TreeNode n;
    const std::uint32_t parent = get_u32(is);
    if (parent > i) throw ConfigError("tree file: parent out of order");
    n.parent = static_cast<int>(parent) - 1;
    if ((i == 0) != (n.parent < 0))
      throw ConfigError("tree file: root parent mismatch");
    n.depth = static_cast<int>(get_u32(is));
    const std::uint32_t goal = get_u32(is);
    if (goal > goal_count) throw ConfigError("tree file: goal id out of range");
    n.goal_id = static_cast<int>(goal) - 1;
    n.time_to_come = get_f64(is);
    n.value = get_f64(is);
    n.state = JointSpaceState(joints);
    for (std::uint32_t j = 0; j < joints; ++j) {
      n.state[j].p = get_f64(is);
      n.state[j].v = get_f64(is);
      n.state[j].a = get_f64(is);
    }
    const std::uint32_t profs = get_u32(is);
    if (profs != 0 && profs != joints)
      throw ConfigError("tree file: profile count mismatch");
    n.incoming.duration = get_f64(is);
    n.incoming.truncated = get_u32(is) != 0;
    n.incoming.profiles.resize(profs);
    for (std::uint32_t j = 0; j < profs; ++j) {
      JerkProfile1D& pr = n.incoming.profiles[j];
      pr.start.p = get_f64(is);
      pr.start.v = get_f64(is);
      pr.start.a = get_f64(is);
      pr.total_duration = get_f64(is);
      const std::uint32_t segs = get_u32(is);
      pr.segments.resize(segs);
      for (std::uint32_t k = 0; k < segs; ++k) {
        pr.segments[k].u = get_f64(is);
        pr.segments[k].dt = get_f64(is);
      }
    }
    if (n.parent >= 0) tree.nodes[static_cast<std::size_t>(n.parent)].children.push_back(static_cast<int>(i));
    if (n.goal_id >= 0) tree.terminals_by_goal[static_cast<std::size_t>(n.goal_id)].push_back(static_cast<int>(i));
    tree.nodes.push_back(std::move(n));
  }
  tree.stats.discarded_collision = get_i64(is);
  tree.stats.discarded_infeasible = get_i64(is);
  tree.stats.skipped_goal_connects = get_i64(is);
  const std::uint32_t hist = get_u32(is);
  tree.stats.depth_histogram.resize(hist);
  for (std::uint32_t d = 0; d < hist; ++d) tree.stats.depth_histogram[d] = get_i64(is);
  return tree;
}

}  // namespace intercept

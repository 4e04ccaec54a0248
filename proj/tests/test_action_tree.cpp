#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <tuple>
#include <vector>

#include "intercept/action_tree.hpp"

using namespace intercept;

namespace {

std::vector<JointLimits> arm_limits(std::size_t n) {
  JointLimits L;
  L.p_min = -5.0;
  L.p_max = 5.0;
  L.v_min = -1.0;
  L.v_max = 1.0;
  L.a_min = -2.0;
  L.a_max = 2.0;
  L.u_max = 10.0;
  return std::vector<JointLimits>(n, L);
}

GoalSpec make_goal(std::vector<double> q) {
  GoalSpec g;
  g.q_goal = std::move(q);
  g.plane_y = 0.0;
  g.plane_z = 1.0;
  g.shield_half_y = 0.4;
  g.shield_half_z = 0.4;
  return g;
}

TreeConfig two_joint_config() {
  TreeConfig cfg;
  cfg.start = JointSpaceState(2);
  cfg.goals = {make_goal({0.4, -0.3}), make_goal({-0.2, 0.5})};
  cfg.regions.counts = {3, 3};
  cfg.regions.lo = {-0.5, -0.5};
  cfg.regions.hi = {0.5, 0.5};
  cfg.regions.velocity_fraction = 0.6;
  cfg.limits = arm_limits(2);
  cfg.max_primitive_duration = 0.25;
  cfg.max_depth = 2;
  return cfg;
}

struct FlatNode {
  int depth;
  double ttc;
  std::vector<double> coords;

  bool operator<(const FlatNode& o) const {
    return std::tie(depth, ttc, coords) < std::tie(o.depth, o.ttc, o.coords);
  }
  bool operator==(const FlatNode& o) const {
    return depth == o.depth && ttc == o.ttc && coords == o.coords;
  }
};

FlatNode flatten(int depth, double ttc, const JointSpaceState& s) {
  FlatNode f;
  f.depth = depth;
  f.ttc = ttc;
  for (std::size_t j = 0; j < s.size(); ++j) {
    f.coords.push_back(s[j].p);
    f.coords.push_back(s[j].v);
    f.coords.push_back(s[j].a);
  }
  return f;
}

// Depth-first re-enumeration of the reachable set under the same expansion
// rules. The builder is breadth-first, so agreement here checks the wiring,
// not just the per-edge math.
void enumerate(const JointSpaceState& s, int depth, double ttc,
               const TreeConfig& cfg, double radius, std::vector<FlatNode>& out) {
  out.push_back(flatten(depth, ttc, s));
  if (depth == cfg.max_depth) {
    for (const GoalSpec& g : cfg.goals) {
      if (joint_position_distance(s, g.q_goal) > radius) continue;
      JointSpaceState gs(g.q_goal.size());
      for (std::size_t j = 0; j < g.q_goal.size(); ++j) gs[j].p = g.q_goal[j];
      MotionPrimitive prim;
      try {
        prim = steer(s, gs, cfg.limits, std::numeric_limits<double>::infinity());
      } catch (const InfeasibleError&) {
        continue;
      } catch (const NumericFailureError&) {
        continue;
      }
      if (is_colliding(prim, cfg.keep_out, cfg.collision_dt)) continue;
      out.push_back(flatten(depth + 1, ttc + prim.duration, prim.terminal()));
    }
    return;
  }
  for (const JointSpaceState& g : sub_goals(s, cfg.regions, cfg.limits)) {
    MotionPrimitive prim;
    try {
      prim = steer(s, g, cfg.limits, cfg.max_primitive_duration);
    } catch (const InfeasibleError&) {
      continue;
    } catch (const NumericFailureError&) {
      continue;
    }
    if (is_colliding(prim, cfg.keep_out, cfg.collision_dt)) continue;
    enumerate(prim.terminal(), depth + 1, ttc + prim.duration, cfg, radius, out);
  }
}

}  // namespace

TEST_CASE("sub-goal grid is deterministic and row-major") {
  SubGoalRegions regions;
  regions.counts = {3, 3};
  regions.lo = {-1.0, -1.0};
  regions.hi = {1.0, 1.0};
  regions.velocity_fraction = 0.6;
  const auto limits = arm_limits(2);
  const JointSpaceState s(2);

  const auto a = sub_goals(s, regions, limits);
  const auto b = sub_goals(s, regions, limits);
  REQUIRE(a.size() == 9);
  REQUIRE(b.size() == 9);

  // Row-major, last joint fastest.
  const double grid[3] = {-1.0, 0.0, 1.0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const auto& g = a[static_cast<std::size_t>(3 * i + j)];
      CHECK(g[0].p == grid[i]);
      CHECK(g[1].p == grid[j]);
      // Velocity points from s toward the grid point, scaled off v_max;
      // a point left of s gets a non-positive velocity.
      CHECK(g[0].v == 0.6 * static_cast<double>(i - 1));
      CHECK(g[1].v == 0.6 * static_cast<double>(j - 1));
      CHECK(g[0].a == 0.0);
      CHECK(g[1].a == 0.0);
      // Same call, same answer, bit for bit.
      const auto& g2 = b[static_cast<std::size_t>(3 * i + j)];
      CHECK(g[0].p == g2[0].p);
      CHECK(g[0].v == g2[0].v);
      CHECK(g[1].p == g2[1].p);
      CHECK(g[1].v == g2[1].v);
    }
}

TEST_CASE("a grid point at the expansion state gets zero velocity") {
  SubGoalRegions regions;
  regions.counts = {1, 1};
  regions.lo = {0.25, -0.75};
  regions.hi = {0.25, -0.75};
  JointSpaceState s(2);
  s[0].p = 0.25;
  s[1].p = -0.75;

  const auto gs = sub_goals(s, regions, arm_limits(2));
  REQUIRE(gs.size() == 1);
  CHECK(gs[0][0].p == 0.25);
  CHECK(gs[0][1].p == -0.75);
  CHECK(gs[0][0].v == 0.0);
  CHECK(gs[0][1].v == 0.0);
}

TEST_CASE("zero velocity fraction parks every sub-goal") {
  SubGoalRegions regions;
  regions.counts = {2, 2};
  regions.lo = {-1.0, -1.0};
  regions.hi = {1.0, 1.0};
  regions.velocity_fraction = 0.0;

  for (const auto& g : sub_goals(JointSpaceState(2), regions, arm_limits(2))) {
    CHECK(g[0].v == 0.0);
    CHECK(g[1].v == 0.0);
  }
}

TEST_CASE("collision test on boxes") {
  const auto limits = arm_limits(1);
  JointSpaceState s(1), g(1);
  g[0].p = 1.0;
  const MotionPrimitive prim =
      steer(s, g, limits, std::numeric_limits<double>::infinity());

  SECTION("no boxes means no collision") {
    CHECK_FALSE(is_colliding(prim, {}, 0.01));
  }
  SECTION("a box containing the start point collides at t = 0") {
    KeepOutBox b{{-0.1}, {0.1}};
    CHECK(is_colliding(prim, {b}, 0.01));
  }
  SECTION("a box strictly inside the swept interval collides") {
    KeepOutBox b{{0.4}, {0.6}};
    CHECK(is_colliding(prim, {b}, 0.01));
  }
  SECTION("a box beyond the swept interval does not collide") {
    KeepOutBox b{{2.0}, {3.0}};
    CHECK_FALSE(is_colliding(prim, {b}, 0.01));
  }
  SECTION("the endpoint is sampled even when dt does not divide the duration") {
    KeepOutBox b{{0.999}, {1.5}};
    CHECK(is_colliding(prim, {b}, 0.8));
  }
}

TEST_CASE("single stage to one goal") {
  TreeConfig cfg;
  cfg.start = JointSpaceState(2);
  cfg.goals = {make_goal({0.5, 0.5})};
  cfg.regions.counts = {1, 1};
  cfg.regions.lo = {0.5, 0.5};
  cfg.regions.hi = {0.5, 0.5};
  cfg.limits = arm_limits(2);
  cfg.max_primitive_duration = 10.0;
  cfg.max_depth = 1;

  const ActionTree tree = build_action_tree(cfg);

  REQUIRE(tree.nodes.size() == 3);
  const TreeNode& mid = tree.nodes[1];
  const TreeNode& leaf = tree.nodes[2];
  CHECK(mid.parent == 0);
  CHECK(mid.depth == 1);
  CHECK(mid.goal_id == -1);
  CHECK_FALSE(mid.incoming.truncated);
  CHECK(leaf.parent == 1);
  CHECK(leaf.depth == 2);
  CHECK(leaf.goal_id == 0);
  CHECK(leaf.children.empty());

  // Time to come is the plain sum of the incoming durations.
  CHECK(leaf.time_to_come == mid.incoming.duration + leaf.incoming.duration);
  CHECK(leaf.time_to_come > 0.0);

  // The terminal parks at the goal with zero velocity and acceleration.
  for (int j = 0; j < 2; ++j) {
    CHECK(leaf.state[static_cast<std::size_t>(j)].p == Catch::Approx(0.5).margin(kTolState));
    CHECK(std::abs(leaf.state[static_cast<std::size_t>(j)].v) <= kTolState);
    CHECK(std::abs(leaf.state[static_cast<std::size_t>(j)].a) <= kTolState);
  }

  REQUIRE(tree.terminals_by_goal.size() == 1);
  REQUIRE(tree.terminals_by_goal[0] == std::vector<int>{2});
  REQUIRE(tree.stats.depth_histogram == std::vector<std::int64_t>{1, 1, 1});
}

TEST_CASE("tree size matches the expansion arithmetic and an independent enumeration") {
  const TreeConfig cfg = two_joint_config();
  const ActionTree tree = build_action_tree(cfg);

  // Nothing is discarded here, so the interior is exactly 1 + 9 + 81 nodes.
  CHECK(tree.stats.discarded_collision == 0);
  CHECK(tree.stats.discarded_infeasible == 0);
  CHECK(tree.stats.skipped_goal_connects == 0);
  std::size_t terminals = 0;
  for (const auto& ids : tree.terminals_by_goal) terminals += ids.size();
  CHECK(terminals > 0);
  CHECK(tree.nodes.size() == 91 + terminals);
  REQUIRE(tree.stats.depth_histogram.size() == 4);
  CHECK(tree.stats.depth_histogram[0] == 1);
  CHECK(tree.stats.depth_histogram[1] == 9);
  CHECK(tree.stats.depth_histogram[2] == 81);
  CHECK(tree.stats.depth_histogram[3] == static_cast<std::int64_t>(terminals));

  const double radius = default_goal_connect_radius(cfg.goals);
  std::vector<FlatNode> expected;
  enumerate(cfg.start, 0, 0.0, cfg, radius, expected);

  std::vector<FlatNode> got;
  for (const TreeNode& n : tree.nodes)
    got.push_back(flatten(n.depth, n.time_to_come, n.state));

  std::sort(expected.begin(), expected.end());
  std::sort(got.begin(), got.end());
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expected[i]);
}

TEST_CASE("time-to-come, depth, and child links are consistent") {
  const ActionTree tree = build_action_tree(two_joint_config());

  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const TreeNode& n = tree.nodes[i];
    if (n.parent < 0) {
      CHECK(i == 0);
      CHECK(n.depth == 0);
      CHECK(n.time_to_come == 0.0);
      CHECK(n.incoming.profiles.empty());
    } else {
      const TreeNode& p = tree.nodes[static_cast<std::size_t>(n.parent)];
      CHECK(n.depth == p.depth + 1);
      CHECK(n.time_to_come == p.time_to_come + n.incoming.duration);
      const auto& sibs = p.children;
      CHECK(std::find(sibs.begin(), sibs.end(), static_cast<int>(i)) != sibs.end());
    }
    if (n.goal_id >= 0) {
      CHECK(n.depth == 3);
      CHECK(n.children.empty());
      const auto& ids = tree.terminals_by_goal[static_cast<std::size_t>(n.goal_id)];
      CHECK(std::find(ids.begin(), ids.end(), static_cast<int>(i)) != ids.end());
    } else {
      CHECK(n.depth <= 2);
    }
    for (int c : n.children)
      CHECK(tree.nodes[static_cast<std::size_t>(c)].parent == static_cast<int>(i));
  }
}

TEST_CASE("blocked expansion from the root raises the empty-tree error") {
  TreeConfig cfg = two_joint_config();
  KeepOutBox everywhere{{-5.0, -5.0}, {5.0, 5.0}};
  cfg.keep_out = {everywhere};
  CHECK_THROWS_AS(build_action_tree(cfg), EmptyTreeError);
}

TEST_CASE("goal connection radius defaults to the upper quartile of goal spacing") {
  std::vector<GoalSpec> goals = {make_goal({0.0, 0.0}), make_goal({1.0, 0.0}),
                                 make_goal({0.0, 1.0}), make_goal({1.0, 1.0})};
  // Pairwise distances: four sides of 1 and two diagonals of sqrt(2); the
  // 75th percentile by nearest rank is the fifth smallest.
  CHECK(default_goal_connect_radius(goals) == std::sqrt(2.0));
  CHECK(default_goal_connect_radius({make_goal({0.3, 0.1})}) ==
        std::numeric_limits<double>::infinity());
}

TEST_CASE("terminal connection behavior") {
  TreeConfig cfg;
  cfg.start = JointSpaceState(1);
  cfg.goals = {make_goal({0.3})};
  cfg.regions.counts = {1};
  cfg.regions.lo = {0.3};
  cfg.regions.hi = {0.3};
  cfg.limits = arm_limits(1);
  cfg.max_depth = 1;

  SECTION("a node already parked at the goal gets a duration-zero terminal") {
    ActionTree tree;
    tree.terminals_by_goal.assign(1, {});
    TreeNode n;
    n.state = JointSpaceState(1);
    n.state[0].p = 0.3;
    tree.nodes.push_back(n);
    connect_to_close_goals(tree, 0, cfg, 1.0);
    REQUIRE(tree.nodes.size() == 2);
    CHECK(tree.nodes[1].incoming.duration == 0.0);
    CHECK(tree.nodes[1].goal_id == 0);
    CHECK(tree.nodes[1].state[0].p == 0.3);
  }

  SECTION("a goal outside the radius is not connected") {
    ActionTree tree;
    tree.terminals_by_goal.assign(1, {});
    TreeNode n;
    n.state = JointSpaceState(1);
    n.state[0].p = -0.65;
    tree.nodes.push_back(n);
    connect_to_close_goals(tree, 0, cfg, 1.0);
    CHECK(tree.nodes.size() == 2);

    ActionTree far;
    far.terminals_by_goal.assign(1, {});
    far.nodes.push_back(n);
    connect_to_close_goals(far, 0, cfg, 0.9);
    CHECK(far.nodes.size() == 1);
    CHECK(far.terminals_by_goal[0].empty());
  }

  SECTION("moving toward the goal arrives no later than moving away") {
    ActionTree toward, away;
    toward.terminals_by_goal.assign(1, {});
    away.terminals_by_goal.assign(1, {});
    TreeNode a, b;
    a.state = JointSpaceState(1);
    a.state[0].p = -0.3;
    a.state[0].v = 0.5;
    b.state = JointSpaceState(1);
    b.state[0].p = 0.9;
    b.state[0].v = 0.5;
    toward.nodes.push_back(a);
    away.nodes.push_back(b);
    connect_to_close_goals(toward, 0, cfg, 1.0);
    connect_to_close_goals(away, 0, cfg, 1.0);
    REQUIRE(toward.nodes.size() == 2);
    REQUIRE(away.nodes.size() == 2);
    CHECK(toward.nodes[1].incoming.duration <= away.nodes[1].incoming.duration);
  }
}

TEST_CASE("construction is deterministic and the binary image round-trips") {
  const TreeConfig cfg = two_joint_config();
  const ActionTree t1 = build_action_tree(cfg);
  const ActionTree t2 = build_action_tree(cfg);

  std::ostringstream s1, s2;
  save_tree(s1, t1);
  save_tree(s2, t2);
  REQUIRE(s1.str() == s2.str());

  std::istringstream in(s1.str());
  const ActionTree loaded = load_tree(in);
  REQUIRE(loaded.nodes.size() == t1.nodes.size());
  for (std::size_t i = 0; i < t1.nodes.size(); ++i) {
    const TreeNode& x = t1.nodes[i];
    const TreeNode& y = loaded.nodes[i];
    CHECK(x.parent == y.parent);
    CHECK(x.depth == y.depth);
    CHECK(x.goal_id == y.goal_id);
    CHECK(x.time_to_come == y.time_to_come);
    CHECK(x.children == y.children);
    CHECK(x.incoming.duration == y.incoming.duration);
    CHECK(x.incoming.truncated == y.incoming.truncated);
    REQUIRE(x.incoming.profiles.size() == y.incoming.profiles.size());
    for (std::size_t j = 0; j < x.state.size(); ++j) {
      CHECK(x.state[j].p == y.state[j].p);
      CHECK(x.state[j].v == y.state[j].v);
      CHECK(x.state[j].a == y.state[j].a);
    }
    for (std::size_t j = 0; j < x.incoming.profiles.size(); ++j) {
      const JerkProfile1D& px = x.incoming.profiles[j];
      const JerkProfile1D& py = y.incoming.profiles[j];
      CHECK(px.total_duration == py.total_duration);
      REQUIRE(px.segments.size() == py.segments.size());
      for (std::size_t k = 0; k < px.segments.size(); ++k) {
        CHECK(px.segments[k].u == py.segments[k].u);
        CHECK(px.segments[k].dt == py.segments[k].dt);
      }
    }
  }
  CHECK(loaded.terminals_by_goal == t1.terminals_by_goal);

  std::ostringstream s3;
  save_tree(s3, loaded);
  CHECK(s3.str() == s1.str());
}

TEST_CASE("corrupt tree files are rejected") {
  const ActionTree tree = build_action_tree(two_joint_config());
  std::ostringstream os;
  save_tree(os, tree);
  std::string bytes = os.str();

  SECTION("bad magic") {
    bytes[0] = 'X';
    std::istringstream in(bytes);
    CHECK_THROWS_AS(load_tree(in), ConfigError);
  }
  SECTION("truncated stream") {
    std::istringstream in(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_tree(in), ConfigError);
  }
}

TEST_CASE("build stats report") {
  const ActionTree tree = build_action_tree(two_joint_config());
  const std::string text = format_build_stats(tree);
  CHECK(text.find("nodes " + std::to_string(tree.nodes.size())) == 0);
  CHECK(text.find("depth 0 1\n") != std::string::npos);
  CHECK(text.find("discarded_collision 0\n") != std::string::npos);
}

TEST_CASE("tree configuration validation") {
  TreeConfig good = two_joint_config();
  CHECK_NOTHROW(build_action_tree(good));

  TreeConfig c = good;
  c.goals.clear();
  CHECK_THROWS_AS(build_action_tree(c), ConfigError);

  c = good;
  c.max_depth = 0;
  CHECK_THROWS_AS(build_action_tree(c), ConfigError);

  c = good;
  c.max_primitive_duration = 0.0;
  CHECK_THROWS_AS(build_action_tree(c), ConfigError);

  c = good;
  c.regions.hi = {6.0, 0.5};
  CHECK_THROWS_AS(build_action_tree(c), ConfigError);

  c = good;
  c.goals[0].shield_half_y = 0.0;
  CHECK_THROWS_AS(build_action_tree(c), ConfigError);

  c = good;
  c.goals[0].q_goal = {0.1};
  CHECK_THROWS_AS(build_action_tree(c), ConfigError);

  c = good;
  c.start[0].v = 2.0;
  CHECK_THROWS_AS(build_action_tree(c), ConfigError);
}

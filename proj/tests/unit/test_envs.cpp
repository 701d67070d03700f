#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include "plab/envs/envs.hpp"
#include "plab/error.hpp"

using namespace plab;
using namespace plab::envs;

namespace {

TaskSpec grid(std::uint64_t seed, std::size_t horizon = 100) {
  TaskSpec t;
  t.family = Family::gridworld;
  t.level_seed = seed;
  t.horizon = horizon;
  return t;
}

TaskSpec point(std::string variant, std::uint64_t seed = 0, std::size_t horizon = 1000) {
  TaskSpec t;
  t.family = Family::pointmass;
  t.variant = std::move(variant);
  t.level_seed = seed;
  t.horizon = horizon;
  return t;
}

// Breadth-first search over cells that are neither walls nor hazards.
std::optional<std::size_t> bfs(const GridWorld& g) {
  const std::size_t n = g.size();
  std::vector<int> dist(n * n, -1);
  std::queue<std::size_t> q;
  dist[g.start()] = 0;
  q.push(g.start());
  while (!q.empty()) {
    const std::size_t c = q.front();
    q.pop();
    if (c == g.goal()) return static_cast<std::size_t>(dist[c]);
    const std::size_t r = c / n, k = c % n;
    const std::pair<long, long> moves[] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    for (auto [dr, dc] : moves) {
      const long nr = static_cast<long>(r) + dr, nc = static_cast<long>(k) + dc;
      if (nr < 0 || nc < 0 || nr >= static_cast<long>(n) || nc >= static_cast<long>(n)) continue;
      const std::size_t next = static_cast<std::size_t>(nr) * n + static_cast<std::size_t>(nc);
      if (g.cell(nr, nc) != GridWorld::empty || dist[next] >= 0) continue;
      dist[next] = dist[c] + 1;
      q.push(next);
    }
  }
  return std::nullopt;
}

}  // namespace

TEST(GridWorld, LayoutIsAPureFunctionOfTheSeed) {
  std::set<std::uint64_t> hashes;
  for (std::uint64_t s = 0; s < 40; ++s) {
    GridWorld a(grid(s)), b(grid(s));
    EXPECT_EQ(a.layout_hash(), b.layout_hash());
    hashes.insert(a.layout_hash());
  }
  EXPECT_GT(hashes.size(), 35u);
}

TEST(GridWorld, EveryLevelIsSolvable) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    GridWorld g(grid(s));
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(g.cell(0, i), GridWorld::wall);
      EXPECT_EQ(g.cell(n - 1, i), GridWorld::wall);
      EXPECT_EQ(g.cell(i, 0), GridWorld::wall);
      EXPECT_EQ(g.cell(i, n - 1), GridWorld::wall);
    }
    EXPECT_NE(g.start(), g.goal());
    const auto d = bfs(g);
    ASSERT_TRUE(d.has_value()) << s;
    EXPECT_EQ(*d, g.shortest_path()) << s;
  }
}

TEST(GridWorld, ObservationPlanes) {
  GridWorld g(grid(3));
  const auto obs = g.reset();
  const std::size_t cells = g.size() * g.size();
  ASSERT_EQ(obs.size(), 4 * cells);
  EXPECT_EQ(obs[g.start()], 1.0);
  EXPECT_EQ(obs[cells + g.goal()], 1.0);
  double agent = 0, goal = 0, hazard = 0, wall = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    agent += obs[i];
    goal += obs[cells + i];
    hazard += obs[2 * cells + i];
    wall += obs[3 * cells + i];
    EXPECT_EQ(obs[2 * cells + i], g.cell(i / g.size(), i % g.size()) == GridWorld::hazard ? 1.0 : 0.0);
  }
  EXPECT_EQ(agent, 1.0);
  EXPECT_EQ(goal, 1.0);
  EXPECT_EQ(hazard, 2.0);
  EXPECT_GE(wall, 4.0 * (g.size() - 1));
}

TEST(GridWorld, TransitionsAndRewards) {
  GridWorld g(grid(5, 3));
  const std::size_t n = g.size();
  // Find an interior empty cell with a wall neighbour to test blocking.
  g.reset();
  g.place_agent(n + 1);  // top-left interior corner, wall above and to the left
  if (g.cell(1, 1) == GridWorld::empty) {
    auto r = g.step_discrete(GridWorld::up);
    EXPECT_EQ(g.agent(), n + 1);
    EXPECT_EQ(r.reward, GridWorld::kStepReward);
    r = g.step_discrete(GridWorld::stay);
    EXPECT_EQ(g.agent(), n + 1);
    r = g.step_discrete(GridWorld::left);
    EXPECT_TRUE(r.truncated);
    EXPECT_FALSE(r.terminated);
  }
  EXPECT_THROW(g.step_discrete(5), InvalidInput);

  // Step into the goal from a neighbour.
  GridWorld h(grid(5));
  h.reset();
  const std::size_t goal = h.goal();
  const std::pair<std::size_t, std::size_t> from[] = {{goal + n, GridWorld::up}, {goal - n, GridWorld::down},
                                                      {goal + 1, GridWorld::left}, {goal - 1, GridWorld::right}};
  bool tested = false;
  for (auto [cell, move] : from) {
    if (h.cell(cell / n, cell % n) != GridWorld::empty) continue;
    h.place_agent(cell);
    const auto r = h.step_discrete(move);
    EXPECT_EQ(r.reward, GridWorld::kGoalReward);
    EXPECT_TRUE(r.terminated);
    tested = true;
    break;
  }
  EXPECT_TRUE(tested);
}

TEST(GridWorld, HazardTerminates) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    GridWorld g(grid(s));
    const std::size_t n = g.size();
    for (std::size_t c = 0; c < n * n; ++c) {
      if (g.cell(c / n, c % n) != GridWorld::hazard) continue;
      if (g.cell((c + n) / n, (c + n) % n) != GridWorld::empty || c + n == g.goal()) continue;
      g.reset();
      g.place_agent(c + n);
      const auto r = g.step_discrete(GridWorld::up);
      EXPECT_EQ(r.reward, GridWorld::kHazardReward);
      EXPECT_TRUE(r.terminated);
      return;
    }
  }
  FAIL() << "no hazard with an empty cell below it";
}

TEST(PointMass, ExplicitEulerAndReward) {
  PointMass p(point("walk"));
  p.set_state(0.2, -0.3, 0.4, -0.6);
  const std::vector<double> a{0.5, -1.0};
  const auto r = p.step_continuous(a);
  const auto s = p.state();
  EXPECT_NEAR(s[0], 0.2 + 0.05 * 0.4, 1e-15);
  EXPECT_NEAR(s[1], -0.3 + 0.05 * -0.6, 1e-15);
  EXPECT_NEAR(s[2], 0.4 + 0.05 * 0.5, 1e-15);
  EXPECT_NEAR(s[3], -0.6 - 0.05, 1e-15);
  const double speed = std::hypot(s[2], s[3]);
  EXPECT_NEAR(r.reward, std::exp(-(speed - 0.5) * (speed - 0.5) / 0.1) - 0.01 * 1.25, 1e-14);
  EXPECT_EQ(r.observation, s);
}

TEST(PointMass, PositionsWrap) {
  PointMass p(point("run"));
  p.set_state(0.99, -0.99, 1.0, -1.0);
  const std::vector<double> zero{0.0, 0.0};
  p.step_continuous(zero);
  const auto s = p.state();
  EXPECT_NEAR(s[0], -0.96, 1e-12);
  EXPECT_NEAR(s[1], 0.96, 1e-12);
  for (double v : {s[0], s[1]}) {
    EXPECT_GE(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(PointMass, VariantsHorizonAndValidation) {
  EXPECT_EQ(target_speed("stand"), 0.0);
  EXPECT_EQ(target_speed("walk"), 0.5);
  EXPECT_EQ(target_speed("trot"), 0.75);
  EXPECT_EQ(target_speed("run"), 1.0);
  EXPECT_THROW(target_speed("gallop"), SpecError);
  PointMass p(point("stand", 0, 2));
  const std::vector<double> a{0.0, 0.0};
  EXPECT_FALSE(p.step_continuous(a).done());
  EXPECT_TRUE(p.step_continuous(a).truncated);
  const std::vector<double> bad{1.5, 0.0}, nan{NAN, 0.0}, short_a{0.0};
  EXPECT_THROW(p.step_continuous(bad), InvalidInput);
  EXPECT_THROW(p.step_continuous(nan), InvalidInput);
  EXPECT_THROW(p.step_continuous(short_a), InvalidInput);
  EXPECT_THROW(p.step_discrete(0), InvalidInput);
}

TEST(PointMass, ResetsFollowTheStream) {
  PointMass a(point("walk", 7)), b(point("walk", 7));
  EXPECT_EQ(a.reset(), b.reset());
  const RngStream s(3, 3);
  a.reseed(s);
  b.reseed(s);
  EXPECT_EQ(a.reset(), b.reset());
}

TEST(FrameStack, ConcatenatesOldestFirst) {
  FrameStack f(std::make_unique<PointMass>(point("walk")), 3);
  EXPECT_EQ(f.obs_dim(), 12u);
  const auto first = f.reset();
  ASSERT_EQ(first.size(), 12u);
  for (std::size_t k = 1; k < 3; ++k)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(first[4 * k + i], first[i]);
  const std::vector<double> a{1.0, 1.0};
  const auto s1 = f.step_continuous(a).observation;
  const auto s2 = f.step_continuous(a).observation;
  // The newest frame moves to the back and the window slides by one frame.
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(s2[i], s1[4 + i]);
  EXPECT_EQ(std::vector<double>(s2.begin() + 8, s2.end()),
            static_cast<PointMass&>(f.inner()).state());
  EXPECT_THROW(FrameStack(std::make_unique<PointMass>(point("walk")), 0), SpecError);
}

TEST(RewardScaler, UnitScaleOnStationaryRewards) {
  RewardScaler rs(0.0);  // gamma 0: the return is the reward itself
  RngStream s(1, 1);
  double m = 0.0, m2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double r = rs.scale(s.normal(0.0, 3.0), false);
    m += r;
    m2 += r * r;
  }
  EXPECT_NEAR(std::sqrt(m2 / n - (m / n) * (m / n)), 1.0, 0.05);
}

TEST(Schedule, LevelShiftAndTaskChain) {
  ScheduleParams p;
  p.mode = Mode::level_shift;
  p.base = grid(3);
  p.segments = 4;
  p.segment_length = 100;
  p.level_offset = 20;
  const auto sched = make_schedule(p);
  ASSERT_EQ(sched.segments.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(sched.segments[i].level_seed, 3 + 20 * i);
  auto at = [&](std::size_t t) { return schedule_shift(sched, t); };
  EXPECT_TRUE(at(0).switched);
  EXPECT_EQ(at(0).segment, 0u);
  EXPECT_FALSE(at(99).switched);
  EXPECT_TRUE(at(100).switched);
  EXPECT_EQ(at(100).segment, 1u);
  EXPECT_EQ(at(250).segment, 2u);
  EXPECT_EQ(at(10000).segment, 3u);  // the last segment persists
  EXPECT_FALSE(at(10000).switched);
  EXPECT_EQ(at(250).spec->level_seed, 43u);

  ScheduleParams c;
  c.mode = Mode::task_chain;
  c.base = point("stand");
  c.segments = 6;
  const auto chain = make_schedule(c);
  const char* want[] = {"stand", "walk", "run", "trot", "stand", "walk"};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(chain.segments[i].variant, want[i]);

  ScheduleParams s;
  s.base = grid(1);
  EXPECT_EQ(make_schedule(s).segments.size(), 1u);
  EXPECT_EQ(parse_mode("task_chain"), Mode::task_chain);
  EXPECT_THROW(parse_mode("random"), SpecError);
}

TEST(ProbeTask, PermutationsAndTargets) {
  const auto id = ProbeTask::permutation(0, 10);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(id[i], i);
  auto p = ProbeTask::permutation(5, 10);
  EXPECT_EQ(p, ProbeTask::permutation(5, 10));
  EXPECT_NE(p, id);
  std::sort(p.begin(), p.end());
  EXPECT_EQ(p, id);

  ProbeTask task(1, 6, 16, 2);
  RngStream s(2, 2);
  const auto b = task.batch(0, 32, s);
  EXPECT_EQ(b.targets.rows(), 32u);
  EXPECT_EQ(b.targets.cols(), 2u);
  const auto direct = task.teacher().predict(b.inputs);
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_EQ(b.targets.storage()[i], direct.storage()[i]);

  const auto perm = ProbeTask::permutation(9, 6);
  Matrix shuffled(b.inputs.rows(), 6);
  for (std::size_t r = 0; r < b.inputs.rows(); ++r)
    for (std::size_t c = 0; c < 6; ++c) shuffled(r, c) = b.inputs(r, perm[c]);
  const auto permuted = task.targets(9, b.inputs);
  const auto want = task.teacher().predict(shuffled);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(permuted.storage()[i], want.storage()[i]);
}

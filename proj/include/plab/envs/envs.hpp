#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "plab/net/network.hpp"
#include "plab/numkit/rng.hpp"

namespace plab::envs {

using net::Matrix;
using numkit::RngStream;

enum class Family { gridworld, pointmass, probe };
std::string_view to_string(Family f) noexcept;
Family parse_family(std::string_view name);

struct TaskSpec {
  Family family = Family::gridworld;
  std::uint64_t level_seed = 0;
  std::string variant;        // pointmass: stand | walk | run | trot
  std::size_t horizon = 100;
  std::size_t grid_size = 9;  // gridworld side, border walls included
  std::size_t hazards = 2;
  double wall_density = 0.1;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  bool done() const noexcept { return terminated || truncated; }
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::size_t obs_dim() const noexcept = 0;
  virtual bool continuous() const noexcept = 0;
  /// Number of discrete actions, or the action dimension.
  virtual std::size_t action_dim() const noexcept = 0;
  virtual std::vector<double> reset() = 0;
  virtual StepResult step_discrete(std::size_t action);
  virtual StepResult step_continuous(std::span<const double> action);
  virtual const TaskSpec& spec() const noexcept = 0;
  /// Replaces the stream behind stochastic resets; deterministic layouts ignore it.
  virtual void reseed(const RngStream&) {}
};

/// Walled square grid with an agent, a goal and hazards. The layout is a pure
/// function of level_seed and always admits a hazard-free path to the goal.
/// Observation: four one-hot planes (agent, goal, hazard, wall), flattened.
class GridWorld final : public Env {
 public:
  enum Cell : unsigned char { empty = 0, wall = 1, hazard = 2 };
  enum Move : std::size_t { up = 0, down = 1, left = 2, right = 3, stay = 4 };
  static constexpr std::size_t kActions = 5;
  static constexpr double kGoalReward = 1.0;
  static constexpr double kHazardReward = -1.0;
  static constexpr double kStepReward = -0.01;

  explicit GridWorld(TaskSpec spec);

  std::size_t obs_dim() const noexcept override { return 4 * n_ * n_; }
  bool continuous() const noexcept override { return false; }
  std::size_t action_dim() const noexcept override { return kActions; }
  std::vector<double> reset() override;
  StepResult step_discrete(std::size_t action) override;
  const TaskSpec& spec() const noexcept override { return spec_; }

  std::size_t size() const noexcept { return n_; }
  Cell cell(std::size_t r, std::size_t c) const { return grid_[r * n_ + c]; }
  std::size_t agent() const noexcept { return agent_; }
  std::size_t start() const noexcept { return start_; }
  std::size_t goal() const noexcept { return goal_; }
  /// Length of the shortest hazard-free path from start to goal.
  std::size_t shortest_path() const noexcept { return shortest_; }
  /// Stable hash of the layout.
  std::uint64_t layout_hash() const noexcept;
  /// Places the agent (tests and hand-built scenarios).
  void place_agent(std::size_t cell_index);
  std::vector<double> observation() const;

 private:
  bool generate(RngStream& stream);

  TaskSpec spec_;
  std::size_t n_;
  std::vector<Cell> grid_;
  std::size_t start_ = 0, goal_ = 0, agent_ = 0, shortest_ = 0, t_ = 0;
};

/// Planar point mass: state (x, y, vx, vy), v += dt * a, positions wrapped to [-1, 1).
/// Reward exp(-(|v| - target)^2 / 0.1) - 0.01 |a|^2.
class PointMass final : public Env {
 public:
  static constexpr double kDt = 0.05;
  explicit PointMass(TaskSpec spec);

  std::size_t obs_dim() const noexcept override { return 4; }
  bool continuous() const noexcept override { return true; }
  std::size_t action_dim() const noexcept override { return 2; }
  std::vector<double> reset() override;
  StepResult step_continuous(std::span<const double> action) override;
  const TaskSpec& spec() const noexcept override { return spec_; }

  void reseed(const RngStream& stream) override { stream_ = stream; }
  double target_speed() const noexcept { return target_; }
  std::vector<double> state() const { return {x_, y_, vx_, vy_}; }
  void set_state(double x, double y, double vx, double vy);

 private:
  TaskSpec spec_;
  RngStream stream_;
  double target_ = 0.0;
  double x_ = 0, y_ = 0, vx_ = 0, vy_ = 0;
  std::size_t t_ = 0;
};

double target_speed(std::string_view variant);

std::unique_ptr<Env> make_env(const TaskSpec& spec);

/// Concatenates the last k observations, oldest first; reset repeats the first frame.
class FrameStack final : public Env {
 public:
  FrameStack(std::unique_ptr<Env> inner, std::size_t k);
  std::size_t obs_dim() const noexcept override { return inner_->obs_dim() * k_; }
  bool continuous() const noexcept override { return inner_->continuous(); }
  std::size_t action_dim() const noexcept override { return inner_->action_dim(); }
  std::vector<double> reset() override;
  StepResult step_discrete(std::size_t action) override;
  StepResult step_continuous(std::span<const double> action) override;
  const TaskSpec& spec() const noexcept override { return inner_->spec(); }
  void reseed(const RngStream& stream) override { inner_->reseed(stream); }
  Env& inner() noexcept { return *inner_; }

 private:
  StepResult push(StepResult r);
  std::vector<double> stacked() const;
  std::unique_ptr<Env> inner_;
  std::size_t k_;
  std::deque<std::vector<double>> frames_;
};

/// Divides rewards by the running standard deviation of the discounted return.
class RewardScaler {
 public:
  explicit RewardScaler(double gamma = 0.99, double eps = 1e-8) : gamma_(gamma), eps_(eps) {}
  double scale(double reward, bool done);
  double variance() const noexcept { return count_ > 1 ? m2_ / count_ : 1.0; }

 private:
  double gamma_, eps_;
  double ret_ = 0.0;
  double count_ = 0.0, mean_ = 0.0, m2_ = 0.0;
};

enum class Mode { standard, level_shift, task_chain };
std::string_view to_string(Mode m) noexcept;
Mode parse_mode(std::string_view name);

struct ScenarioSchedule {
  Mode mode = Mode::standard;
  std::size_t segment_length = 20000;
  std::vector<TaskSpec> segments;
};

struct ScheduleParams {
  Mode mode = Mode::standard;
  TaskSpec base{};
  std::size_t segments = 10;
  std::size_t segment_length = 20000;
  std::uint64_t level_offset = 20;
  std::vector<std::string> variants{"stand", "walk", "run", "trot"};
};

/// standard: one segment. level_shift: level_seed = base + i * offset.
/// task_chain: variants cycled in order.
ScenarioSchedule make_schedule(const ScheduleParams& p);

struct ShiftResult {
  const TaskSpec* spec = nullptr;
  std::size_t segment = 0;
  bool switched = false;  // true at step 0 and at every later segment boundary
};
ShiftResult schedule_shift(const ScenarioSchedule& sched, std::size_t global_step);

/// Supervised stream for fast plasticity probes: a frozen random teacher
/// network composed with an input permutation drawn from perm_seed (0 is the
/// identity permutation).
class ProbeTask {
 public:
  ProbeTask(std::uint64_t teacher_seed, std::size_t in_dim, std::size_t hidden, std::size_t out_dim);
  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }
  const net::Network& teacher() const noexcept { return teacher_; }

  static std::vector<std::size_t> permutation(std::uint64_t perm_seed, std::size_t n);
  struct Batch {
    Matrix inputs;
    Matrix targets;
  };
  /// n standard-normal inputs; targets = teacher(inputs with columns permuted).
  Batch batch(std::uint64_t perm_seed, std::size_t n, RngStream& stream) const;
  Matrix targets(std::uint64_t perm_seed, const Matrix& inputs) const;

 private:
  std::size_t in_dim_, out_dim_;
  net::Network teacher_;
};

}  // namespace plab::envs

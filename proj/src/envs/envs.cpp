#include "plab/envs/envs.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "plab/error.hpp"

namespace plab::envs {

std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::gridworld: return "gridworld";
    case Family::pointmass: return "pointmass";
    case Family::probe: return "probe";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  for (auto f : {Family::gridworld, Family::pointmass, Family::probe})
    if (to_string(f) == name) return f;
  throw SpecError("unknown environment family '" + std::string(name) + "'");
}

StepResult Env::step_discrete(std::size_t) { throw InvalidInput("this environment takes continuous actions"); }
StepResult Env::step_continuous(std::span<const double>) {
  throw InvalidInput("this environment takes discrete actions");
}

// --- gridworld ------------------------------------------------------------------

GridWorld::GridWorld(TaskSpec spec) : spec_(std::move(spec)), n_(spec_.grid_size) {
  if (spec_.family != Family::gridworld) throw SpecError("gridworld: wrong family");
  if (n_ < 4) throw SpecError("gridworld: grid_size must be >= 4");
  if (spec_.horizon < 1) throw SpecError("gridworld: horizon must be >= 1");
  if (!(spec_.wall_density >= 0.0 && spec_.wall_density < 0.5)) throw SpecError("gridworld: wall_density in [0, 0.5)");
  const std::size_t interior = (n_ - 2) * (n_ - 2);
  if (spec_.hazards + 2 > interior) throw SpecError("gridworld: too many hazards for the grid");
  RngStream stream(spec_.level_seed, numkit::label_hash("gridworld"));
  for (int attempt = 0; attempt < 10000; ++attempt)
    if (generate(stream)) {
      reset();
      return;
    }
  throw SpecError("gridworld: could not generate a solvable layout");
}

bool GridWorld::generate(RngStream& stream) {
  grid_.assign(n_ * n_, empty);
  std::vector<std::size_t> free;
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t c = 0; c < n_; ++c) {
      const bool border = r == 0 || c == 0 || r + 1 == n_ || c + 1 == n_;
      const double u = stream.uniform01();  // drawn for every cell to keep the stream layout-independent
      if (border || u < spec_.wall_density)
        grid_[r * n_ + c] = wall;
      else
        free.push_back(r * n_ + c);
    }
  if (free.size() < spec_.hazards + 2) return false;
  auto pick = [&]() {
    const std::size_t k = stream.below(free.size());
    const std::size_t cell = free[k];
    free.erase(free.begin() + static_cast<std::ptrdiff_t>(k));
    return cell;
  };
  start_ = pick();
  goal_ = pick();
  for (std::size_t h = 0; h < spec_.hazards; ++h) grid_[pick()] = hazard;

  std::vector<std::size_t> dist(n_ * n_, SIZE_MAX);
  std::queue<std::size_t> q;
  dist[start_] = 0;
  q.push(start_);
  while (!q.empty()) {
    const std::size_t cur = q.front();
    q.pop();
    for (std::size_t next : {cur - n_, cur + n_, cur - 1, cur + 1}) {
      if (next >= grid_.size() || grid_[next] != empty || dist[next] != SIZE_MAX) continue;
      dist[next] = dist[cur] + 1;
      q.push(next);
    }
  }
  if (dist[goal_] == SIZE_MAX) return false;
  shortest_ = dist[goal_];
  return true;
}

std::vector<double> GridWorld::reset() {
  agent_ = start_;
  t_ = 0;
  return observation();
}

void GridWorld::place_agent(std::size_t cell_index) {
  if (cell_index >= grid_.size() || grid_[cell_index] == wall) throw InvalidInput("gridworld: cannot place agent there");
  agent_ = cell_index;
}

std::vector<double> GridWorld::observation() const {
  const std::size_t cells = n_ * n_;
  std::vector<double> obs(4 * cells, 0.0);
  obs[agent_] = 1.0;
  obs[cells + goal_] = 1.0;
  for (std::size_t i = 0; i < cells; ++i) {
    if (grid_[i] == hazard) obs[2 * cells + i] = 1.0;
    if (grid_[i] == wall) obs[3 * cells + i] = 1.0;
  }
  return obs;
}

StepResult GridWorld::step_discrete(std::size_t action) {
  if (action >= kActions) throw InvalidInput("gridworld: action must be in 0..4");
  std::size_t next = agent_;
  switch (action) {
    case up: next = agent_ - n_; break;
    case down: next = agent_ + n_; break;
    case left: next = agent_ - 1; break;
    case right: next = agent_ + 1; break;
    default: break;
  }
  if (grid_[next] != wall) agent_ = next;  // the border keeps every move in range
  ++t_;
  StepResult r;
  if (agent_ == goal_) {
    r.reward = kGoalReward;
    r.terminated = true;
  } else if (grid_[agent_] == hazard) {
    r.reward = kHazardReward;
    r.terminated = true;
  } else {
    r.reward = kStepReward;
    r.truncated = t_ >= spec_.horizon;
  }
  r.observation = observation();
  return r;
}

std::uint64_t GridWorld::layout_hash() const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (auto c : grid_) mix(c);
  mix(start_);
  mix(goal_);
  return h;
}

// --- pointmass ------------------------------------------------------------------

double target_speed(std::string_view variant) {
  if (variant == "stand") return 0.0;
  if (variant == "walk") return 0.5;
  if (variant == "run") return 1.0;
  if (variant == "trot") return 0.75;
  throw SpecError("pointmass: unknown variant '" + std::string(variant) + "'");
}

PointMass::PointMass(TaskSpec spec)
    : spec_(std::move(spec)), stream_(spec_.level_seed, numkit::label_hash("pointmass")) {
  if (spec_.family != Family::pointmass) throw SpecError("pointmass: wrong family");
  if (spec_.horizon < 1) throw SpecError("pointmass: horizon must be >= 1");
  target_ = envs::target_speed(spec_.variant.empty() ? "stand" : spec_.variant);
  reset();
}

namespace {
double wrap(double p) {
  double w = std::fmod(p + 1.0, 2.0);
  if (w < 0.0) w += 2.0;
  return w - 1.0;
}
}  // namespace

std::vector<double> PointMass::reset() {
  x_ = stream_.uniform(-1.0, 1.0);
  y_ = stream_.uniform(-1.0, 1.0);
  vx_ = vy_ = 0.0;
  t_ = 0;
  return state();
}

void PointMass::set_state(double x, double y, double vx, double vy) {
  x_ = wrap(x);
  y_ = wrap(y);
  vx_ = vx;
  vy_ = vy;
}

StepResult PointMass::step_continuous(std::span<const double> a) {
  if (a.size() != 2) throw InvalidInput("pointmass: action must have 2 components");
  for (double v : a)
    if (!(v >= -1.0 && v <= 1.0)) throw InvalidInput("pointmass: action components must lie in [-1, 1]");
  x_ = wrap(x_ + kDt * vx_);
  y_ = wrap(y_ + kDt * vy_);
  vx_ += kDt * a[0];
  vy_ += kDt * a[1];
  ++t_;
  const double speed = std::hypot(vx_, vy_);
  const double gap = speed - target_;
  StepResult r;
  r.reward = std::exp(-gap * gap / 0.1) - 0.01 * (a[0] * a[0] + a[1] * a[1]);
  r.truncated = t_ >= spec_.horizon;
  r.observation = state();
  return r;
}

std::unique_ptr<Env> make_env(const TaskSpec& spec) {
  switch (spec.family) {
    case Family::gridworld: return std::make_unique<GridWorld>(spec);
    case Family::pointmass: return std::make_unique<PointMass>(spec);
    case Family::probe: break;
  }
  throw SpecError("make_env: the probe family is a supervised task, not an environment");
}

// --- wrappers -------------------------------------------------------------------

FrameStack::FrameStack(std::unique_ptr<Env> inner, std::size_t k) : inner_(std::move(inner)), k_(k) {
  if (!inner_ || k_ == 0) throw SpecError("frame stack: need an environment and k >= 1");
}

std::vector<double> FrameStack::stacked() const {
  std::vector<double> out;
  out.reserve(obs_dim());
  for (const auto& f : frames_) out.insert(out.end(), f.begin(), f.end());
  return out;
}

std::vector<double> FrameStack::reset() {
  auto first = inner_->reset();
  frames_.assign(k_, first);
  return stacked();
}

StepResult FrameStack::push(StepResult r) {
  frames_.pop_front();
  frames_.push_back(r.observation);
  r.observation = stacked();
  return r;
}

StepResult FrameStack::step_discrete(std::size_t action) { return push(inner_->step_discrete(action)); }
StepResult FrameStack::step_continuous(std::span<const double> action) {
  return push(inner_->step_continuous(action));
}

double RewardScaler::scale(double reward, bool done) {
  ret_ = ret_ * gamma_ + reward;
  count_ += 1.0;
  const double d = ret_ - mean_;
  mean_ += d / count_;
  m2_ += d * (ret_ - mean_);
  const double out = reward / std::sqrt(variance() + eps_);
  if (done) ret_ = 0.0;
  return out;
}

// --- schedules ------------------------------------------------------------------

std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::standard: return "standard";
    case Mode::level_shift: return "level_shift";
    case Mode::task_chain: return "task_chain";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (auto m : {Mode::standard, Mode::level_shift, Mode::task_chain})
    if (to_string(m) == name) return m;
  throw SpecError("unknown scenario mode '" + std::string(name) + "'");
}

ScenarioSchedule make_schedule(const ScheduleParams& p) {
  if (p.segment_length == 0) throw SpecError("schedule: segment_length must be >= 1");
  ScenarioSchedule s{p.mode, p.segment_length, {}};
  switch (p.mode) {
    case Mode::standard: s.segments.push_back(p.base); break;
    case Mode::level_shift:
      if (p.segments == 0) throw SpecError("schedule: need at least one segment");
      for (std::size_t i = 0; i < p.segments; ++i) {
        TaskSpec t = p.base;
        t.level_seed = p.base.level_seed + i * p.level_offset;
        s.segments.push_back(t);
      }
      break;
    case Mode::task_chain:
      if (p.segments == 0 || p.variants.empty()) throw SpecError("schedule: task_chain needs segments and variants");
      for (std::size_t i = 0; i < p.segments; ++i) {
        TaskSpec t = p.base;
        t.variant = p.variants[i % p.variants.size()];
        s.segments.push_back(t);
      }
      break;
  }
  return s;
}

ShiftResult schedule_shift(const ScenarioSchedule& sched, std::size_t global_step) {
  if (sched.segments.empty()) throw SpecError("schedule_shift: empty schedule");
  if (sched.segment_length == 0) throw SpecError("schedule_shift: segment_length must be >= 1");
  const std::size_t raw = global_step / sched.segment_length;
  const std::size_t n = sched.segments.size();
  ShiftResult r;
  r.segment = std::min(raw, n - 1);
  r.spec = &sched.segments[r.segment];
  r.switched = global_step == 0 || (global_step % sched.segment_length == 0 && raw < n);
  return r;
}

// --- probe ----------------------------------------------------------------------

ProbeTask::ProbeTask(std::uint64_t teacher_seed, std::size_t in_dim, std::size_t hidden, std::size_t out_dim)
    : in_dim_(in_dim), out_dim_(out_dim) {
  if (in_dim == 0 || hidden == 0 || out_dim == 0) throw SpecError("probe: dimensions must be positive");
  std::vector<net::LayerSpec> specs{
      {in_dim, hidden, net::Activation::tanh, false, net::InitScheme::normal(0.0, 1.0 / std::sqrt(double(in_dim)))},
      {hidden, out_dim, net::Activation::linear, false,
       net::InitScheme::normal(0.0, 1.0 / std::sqrt(double(hidden)))}};
  RngStream stream(teacher_seed, numkit::label_hash("probe-teacher"));
  teacher_ = net::Network::create(std::move(specs), stream);
}

std::vector<std::size_t> ProbeTask::permutation(std::uint64_t perm_seed, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  if (perm_seed == 0) return p;
  RngStream s(perm_seed, numkit::label_hash("probe-permutation"));
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[s.below(i)]);
  return p;
}

Matrix ProbeTask::targets(std::uint64_t perm_seed, const Matrix& inputs) const {
  if (inputs.cols() != in_dim_) throw InvalidInput("probe: input width mismatch");
  const auto perm = permutation(perm_seed, in_dim_);
  Matrix permuted(inputs.rows(), in_dim_);
  for (std::size_t r = 0; r < inputs.rows(); ++r)
    for (std::size_t c = 0; c < in_dim_; ++c) permuted(r, c) = inputs(r, perm[c]);
  return teacher_.predict(permuted);
}

ProbeTask::Batch ProbeTask::batch(std::uint64_t perm_seed, std::size_t n, RngStream& stream) const {
  if (n == 0) throw InvalidInput("probe: batch size must be >= 1");
  Matrix x(n, in_dim_, numkit::rng_draw(stream, numkit::NormalDist{0.0, 1.0}, n * in_dim_));
  auto y = targets(perm_seed, x);
  return {std::move(x), std::move(y)};
}

}  // namespace plab::envs

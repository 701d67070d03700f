#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "plab/learners/common.hpp"

namespace plab::learners {

/// Evenly spaced atoms v_min .. v_max inclusive. Throws InvalidInput unless n >= 2 and v_max > v_min.
std::vector<double> c51_support(double v_min, double v_max, std::size_t n);

struct CategoricalHead {
  double v_min = -10.0;
  double v_max = 10.0;
  std::vector<double> atoms;
  double delta_z = 0.0;

  static CategoricalHead make(double v_min, double v_max, std::size_t n);
  std::size_t n_atoms() const noexcept { return atoms.size(); }
};

/// Distributional Bellman target of next_dist shifted by r and shrunk by gamma,
/// projected back onto the support by splitting each atom's mass between its
/// two neighbours. Throws InvalidInput unless next_dist is a distribution
/// (within 1e-6) over the head's atoms.
std::vector<double> categorical_projection(std::span<const double> next_dist, double r, bool done, double gamma,
                                           const CategoricalHead& head);

struct C51Loss {
  double loss = 0.0;
  std::vector<double> d_logits;  // softmax(logits) - m
};

/// Cross-entropy -sum_i m_i log softmax(logits)_i.
C51Loss c51_loss(std::span<const double> projected, std::span<const double> logits);

/// Linear ramp from start to end over fraction * total steps, then end.
double epsilon_schedule(std::size_t step, double start, double end, double fraction, std::size_t total);

/// Ring of transitions. Storage grows with use up to capacity.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim);

  void add(std::span<const double> obs, std::size_t action, double reward, std::span<const double> next_obs,
           bool done);
  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t obs_dim() const noexcept { return obs_dim_; }
  /// Uniform indices with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, RngStream& stream) const;

  std::span<const double> obs(std::size_t i) const { return {obs_.data() + i * obs_dim_, obs_dim_}; }
  std::span<const double> next_obs(std::size_t i) const { return {next_obs_.data() + i * obs_dim_, obs_dim_}; }
  std::size_t action(std::size_t i) const { return actions_[i]; }
  double reward(std::size_t i) const { return rewards_[i]; }
  bool done(std::size_t i) const { return dones_[i] != 0; }

 private:
  std::size_t capacity_;
  std::size_t obs_dim_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  std::vector<double> obs_, next_obs_;
  std::vector<std::size_t> actions_;
  std::vector<double> rewards_;
  std::vector<unsigned char> dones_;
};

/// Per-action atom probabilities from one output row laid out action-major.
std::vector<double> action_distribution(std::span<const double> row, std::size_t action, std::size_t n_atoms);
/// sum_i z_i p_i for every action.
std::vector<double> expected_values(std::span<const double> row, const CategoricalHead& head);

struct C51Gradients {
  double loss = 0.0;
  net::ForwardTrace trace;
  net::BackwardResult back;
};

/// Loss and gradients on one sampled mini-batch. The greedy next action comes
/// from the target network, or from the online one when select_with_online.
/// Returns nullopt (not ready) while the buffer holds fewer than
/// max(batch_size, learning_starts) transitions.
std::optional<C51Gradients> c51_update(const ReplayBuffer& buffer, const Network& online, const Network& target,
                                       const CategoricalHead& head, std::size_t batch_size, double gamma,
                                       RngStream& stream, std::size_t learning_starts = 0,
                                       bool select_with_online = false);

struct C51Config {
  double v_min = -10.0;
  double v_max = 10.0;
  std::size_t n_atoms = 51;
  double gamma = 0.99;
  double lr = 2.5e-4;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 1000000;
  std::size_t learning_starts = 80000;
  std::size_t train_frequency = 4;
  std::size_t target_frequency = 10000;
  double eps_start = 1.0;
  double eps_end = 0.01;
  double exploration_fraction = 0.10;
  bool select_with_online = false;
  double max_grad_norm = 0.0;  // 0 disables clipping
};

struct C51Stats {
  double loss = 0.0;
  double reg_loss = 0.0;
  double grad_norm = 0.0;
};

class C51Agent {
 public:
  C51Agent(Network online, std::size_t n_actions, C51Config cfg, std::unique_ptr<mitigations::Optimizer> opt);

  /// Epsilon-greedy on expected values.
  std::size_t act(std::span<const double> observation, double epsilon, RngStream& stream) const;
  std::vector<double> q_values(std::span<const double> observation) const;

  /// One gradient step on a replay mini-batch; nullopt while not ready.
  std::optional<C51Stats> train_step(const ReplayBuffer& buffer, RngStream& stream, const UpdateHooks& hooks = {});
  /// Hard copy online -> target.
  void sync_target() { target_ = online_; }

  Network& network() noexcept { return online_; }
  const Network& network() const noexcept { return online_; }
  const Network& target() const noexcept { return target_; }
  const CategoricalHead& head() const noexcept { return head_; }
  const C51Config& config() const noexcept { return cfg_; }
  mitigations::Optimizer& optimizer() noexcept { return *opt_; }
  void reset_optimizer() { opt_->reset(online_); }
  const std::optional<ParamSet>& last_gradients() const noexcept { return last_grads_; }
  std::size_t n_actions() const noexcept { return n_actions_; }

 private:
  Network online_;
  Network target_;
  std::size_t n_actions_;
  C51Config cfg_;
  CategoricalHead head_;
  std::unique_ptr<mitigations::Optimizer> opt_;
  std::optional<ParamSet> last_grads_;
};

}  // namespace plab::learners

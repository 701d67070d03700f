#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "plab/learners/common.hpp"

namespace plab::learners {

/// One rollout. Discrete actions live in `actions`; continuous ones in
/// `action_vectors` (one row per step). dones marks the last step of an episode.
struct TrajectoryBatch {
  Matrix observations;
  std::vector<std::size_t> actions;
  Matrix action_vectors;
  std::vector<double> rewards;
  std::vector<bool> dones;
  std::vector<double> log_probs;
  std::vector<double> values;

  std::size_t size() const noexcept { return rewards.size(); }
  /// Throws InvalidInput on unequal lengths or non-finite rewards.
  void validate() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

GaeResult gae(std::span<const double> rewards, std::span<const double> values, const std::vector<bool>& dones,
              double bootstrap_value, double gamma, double lam);

struct PpoLossConfig {
  double clip_eps = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
  double value_clip = 0.2;  // <= 0 disables value clipping
  bool normalize_advantages = true;
};

struct PpoLoss {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;  // mean entropy
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  std::vector<double> d_log_prob;  // dTotal / d new_log_prob_i
  std::vector<double> d_value;     // dTotal / d new_value_i
  double d_entropy = 0.0;          // dTotal / d entropy_i (same for every sample)
};

/// Clipped-ratio policy loss plus the (optionally clipped) squared value error
/// and an entropy bonus, each averaged over the batch:
///   total = policy + vf_coef * value - ent_coef * entropy.
/// old_log_probs, old_values, advantages and returns are per sample.
PpoLoss ppo_loss(std::span<const double> old_log_probs, std::span<const double> old_values,
                 std::span<const double> advantages, std::span<const double> returns,
                 std::span<const double> new_log_probs, std::span<const double> new_values,
                 std::span<const double> entropy, const PpoLossConfig& cfg);

/// Log-probability of action under softmax(logits), entropy, and both gradients.
struct CategoricalEval {
  double log_prob = 0.0;
  double entropy = 0.0;
  std::vector<double> d_log_prob;  // d log_prob / d logits
  std::vector<double> d_entropy;   // d entropy / d logits
};
CategoricalEval categorical_policy(std::span<const double> logits, std::size_t action);
std::size_t sample_categorical(std::span<const double> logits, RngStream& stream);

/// Diagonal Gaussian with state-independent log_std.
struct GaussianEval {
  double log_prob = 0.0;
  double entropy = 0.0;
  std::vector<double> d_mean;     // d log_prob / d mean
  std::vector<double> d_log_std;  // d log_prob / d log_std
};
GaussianEval gaussian_policy(std::span<const double> mean, std::span<const double> log_std,
                             std::span<const double> action);
std::vector<double> sample_gaussian(std::span<const double> mean, std::span<const double> log_std,
                                    RngStream& stream);

struct PpoConfig {
  PpoLossConfig loss{};
  double lr = 1e-3;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double max_grad_norm = 0.5;
  std::size_t epochs = 4;
  std::size_t minibatches = 8;
  double init_log_std = 0.0;
};

struct PpoUpdateStats {
  double loss = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double reg_loss = 0.0;
  double grad_norm = 0.0;
  std::size_t gradient_steps = 0;
};

struct PolicyStep {
  std::size_t action = 0;
  std::vector<double> action_vector;
  double log_prob = 0.0;
  double value = 0.0;
};

/// Shared-torso actor-critic. The network output is [logits | value] for
/// discrete control and [mean | value] for continuous control.
class PpoAgent {
 public:
  /// action_dim is the number of actions (discrete) or the action dimension.
  PpoAgent(Network net, std::size_t action_dim, bool continuous, PpoConfig cfg,
           std::unique_ptr<mitigations::Optimizer> opt);

  PolicyStep act(std::span<const double> observation, RngStream& stream) const;
  /// Deterministic action: argmax logits or the mean.
  PolicyStep act_greedy(std::span<const double> observation) const;
  double value(std::span<const double> observation) const;

  PpoUpdateStats update(const TrajectoryBatch& batch, double bootstrap_value, RngStream& stream,
                        const UpdateHooks& hooks = {});

  Network& network() noexcept { return net_; }
  const Network& network() const noexcept { return net_; }
  mitigations::Optimizer& optimizer() noexcept { return *opt_; }
  std::vector<double>& log_std() noexcept { return log_std_; }
  const std::vector<double>& log_std() const noexcept { return log_std_; }
  /// Gradients of the most recent optimizer step (after regularizers, before clipping).
  const std::optional<ParamSet>& last_gradients() const noexcept { return last_grads_; }
  const PpoConfig& config() const noexcept { return cfg_; }
  bool continuous() const noexcept { return continuous_; }
  std::size_t action_dim() const noexcept { return action_dim_; }
  /// Restores fresh optimizer state (all moments, including log_std's).
  void reset_optimizer();

 private:
  PolicyStep evaluate_row(std::span<const double> out, RngStream* stream) const;

  Network net_;
  std::size_t action_dim_;
  bool continuous_;
  PpoConfig cfg_;
  std::unique_ptr<mitigations::Optimizer> opt_;
  std::vector<double> log_std_;
  std::vector<double> log_std_m_, log_std_v_;
  std::size_t log_std_t_ = 0;
  std::optional<ParamSet> last_grads_;
};

}  // namespace plab::learners

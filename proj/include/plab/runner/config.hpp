#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "plab/envs/envs.hpp"
#include "plab/learners/c51.hpp"
#include "plab/learners/ppo.hpp"
#include "plab/mitigations/plan.hpp"
#include "plab/net/layer.hpp"

namespace plab::runner {

enum class Algo { ppo, c51, supervised };
std::string_view to_string(Algo a) noexcept;

struct NetworkConfig {
  std::vector<std::size_t> hidden{64, 64};
  net::Activation activation = net::Activation::relu;
  net::InitScheme::Kind init = net::InitScheme::Kind::orthogonal;
  double head_gain = 1.0;
};

struct ProbeConfig {
  std::size_t in_dim = 16;
  std::size_t teacher_hidden = 32;
  std::size_t out_dim = 1;
  std::uint64_t teacher_seed = 1;
  std::size_t eval_batch = 1024;
  std::size_t adaptation_window = 500;
};

struct ScenarioConfig {
  envs::Mode mode = envs::Mode::standard;
  envs::Family env = envs::Family::gridworld;
  std::size_t segment_length = 0;
  std::size_t segments = 1;
  std::uint64_t level_seed = 0;
  std::uint64_t level_offset = 20;
  std::vector<std::string> variants;
  std::size_t horizon = 100;
  std::size_t grid_size = 9;
  std::size_t hazards = 2;
  double wall_density = 0.1;
  std::size_t frame_stack = 1;
  ProbeConfig probe{};
};

struct SupervisedConfig {
  double lr = 1e-3;
  std::size_t batch_size = 64;
};

struct LoggingConfig {
  std::size_t metric_interval = 2000;
  std::size_t probe_batch = 256;
  double tau = 0.025;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t total_steps = 0;
  Algo algo = Algo::ppo;
  ScenarioConfig scenario{};
  NetworkConfig network{};
  learners::PpoConfig ppo{};
  std::size_t rollout_length = 1000;
  bool reward_normalization = true;
  learners::C51Config c51{};
  SupervisedConfig supervised{};
  mitigations::MitigationPlan plan{};
  LoggingConfig logging{};
  std::size_t checkpoint_interval = 0;
  /// Every key with defaults filled in; written verbatim as the run's config snapshot.
  nlohmann::ordered_json resolved;
};

/// Defaults depend on the algorithm and environment: one set for c51, one for
/// ppo on gridworld, one for ppo on pointmass and one for the supervised probe.
/// Unknown keys are rejected with their full path.
/// Throws ValidationError.
ExperimentConfig parse_config(const nlohmann::json& user);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Rewrites the seed in both the struct and the resolved snapshot.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace plab::runner

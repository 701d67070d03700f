#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "plab/metrics/metrics.hpp"
#include "plab/runner/config.hpp"

namespace plab::runner {

struct RunArtifacts {
  std::filesystem::path dir;
  std::filesystem::path metrics;          // metrics.jsonl
  std::filesystem::path episodes;         // episodes.csv
  std::filesystem::path config_snapshot;  // config.json
  std::vector<std::filesystem::path> checkpoints;
  nlohmann::ordered_json summary;         // also written to summary.json
};

/// Runs one experiment into out_dir (created if needed).
///
/// Order of events at global step t: task switch, triggered interventions,
/// metric report (every logging.metric_interval steps and at the end), scheduled
/// checkpoint, then one environment step and any learner update it completes.
/// On a non-finite loss the run writes diagnostic.json next to the logs and
/// rethrows the NumericError.
RunArtifacts run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Human-readable registry listing, or the registry as JSON.
std::string list_methods(bool as_json);
nlohmann::ordered_json registry_json();

/// Recomputes the metric suite stored with a checkpoint, using the probe batch
/// recorded by the run. Throws CheckpointError when anything is missing.
std::vector<metrics::MetricRecord> replay_metrics(const std::filesystem::path& checkpoint);

/// Parses "a..b" (inclusive).
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text);

}  // namespace plab::runner

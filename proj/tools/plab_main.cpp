#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "plab/error.hpp"
#include "plab/metrics/metrics.hpp"
#include "plab/runner/runner.hpp"

namespace fs = std::filesystem;
using namespace plab;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kValidation = 2;
constexpr int kDivergence = 3;

fs::path default_out(const fs::path& config, std::uint64_t seed) {
  return fs::path("runs") / config.stem() / ("seed_" + std::to_string(seed));
}

int do_run(const fs::path& config, std::optional<std::uint64_t> seed, std::optional<fs::path> out) {
  auto cfg = runner::load_config(config);
  if (seed) runner::override_seed(cfg, *seed);
  const auto dir = out ? *out : default_out(config, cfg.seed);
  const auto art = runner::run_experiment(cfg, dir);
  std::cout << art.summary.dump() << '\n';
  return kOk;
}

int do_sweep(const fs::path& config, const std::string& seeds, std::optional<fs::path> out) {
  const auto [first, last] = runner::parse_seed_range(seeds);
  auto base = runner::load_config(config);  // validate once before any run starts
  const fs::path root = out ? *out : fs::path("runs") / config.stem();
  int status = kOk;
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  for (std::uint64_t s = first; s <= last; ++s) {
    auto cfg = base;
    runner::override_seed(cfg, s);
    const auto dir = root / ("seed_" + std::to_string(s));
    nlohmann::ordered_json row{{"seed", s}, {"dir", dir.string()}};
    try {
      row["summary"] = runner::run_experiment(cfg, dir).summary;
      row["status"] = "ok";
    } catch (const NumericError& e) {
      std::cerr << "seed " << s << " diverged: " << e.what() << '\n';
      row["status"] = "diverged";
      status = kDivergence;
    }
    std::cout << row.dump() << '\n';
    index.push_back(row);
  }
  fs::create_directories(root);
  std::ofstream(root / "sweep.json") << index.dump(2) << '\n';
  return status;
}

int do_replay(const fs::path& checkpoint) {
  for (const auto& r : runner::replay_metrics(checkpoint)) std::cout << metrics::to_jsonl(r) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plab: plasticity-loss experiments"};
  app.require_subcommand(1);

  fs::path run_config;
  std::optional<std::uint64_t> run_seed;
  std::optional<fs::path> run_out;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("config", run_config, "Experiment config (JSON)")->required();
  run->add_option("--seed", run_seed, "Override the config seed");
  run->add_option("--out", run_out, "Output directory (default runs/<config>/seed_<n>)");

  fs::path sweep_config;
  std::string sweep_seeds;
  std::optional<fs::path> sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per seed, sequentially");
  sweep->add_option("config", sweep_config, "Experiment config (JSON)")->required();
  sweep->add_option("--seeds", sweep_seeds, "Inclusive range a..b")->required();
  sweep->add_option("--out", sweep_out, "Root directory (default runs/<config>)");

  bool as_json = false;
  auto* list = app.add_subcommand("list-methods", "Show the mitigation registry");
  list->add_flag("--json", as_json, "Emit JSON");

  fs::path checkpoint;
  auto* replay = app.add_subcommand("replay-metrics", "Recompute the metric suite from a checkpoint");
  replay->add_option("checkpoint", checkpoint, "Checkpoint manifest (.json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*run) return do_run(run_config, run_seed, run_out);
    if (*sweep) return do_sweep(sweep_config, sweep_seeds, sweep_out);
    if (*list) {
      std::cout << runner::list_methods(as_json);
      return kOk;
    }
    if (*replay) return do_replay(checkpoint);
  } catch (const ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kValidation;
  } catch (const SpecError& e) {
    std::cerr << "invalid setup: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericError& e) {
    std::cerr << "numeric divergence at " << e.where() << ": " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

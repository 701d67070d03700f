#include "plab/runner/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "plab/error.hpp"

namespace plab::runner {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Algo a) noexcept {
  switch (a) {
    case Algo::ppo: return "ppo";
    case Algo::c51: return "c51";
    case Algo::supervised: return "supervised";
  }
  return "?";
}

namespace {

Algo parse_algo(const std::string& s) {
  for (auto a : {Algo::ppo, Algo::c51, Algo::supervised})
    if (to_string(a) == s) return a;
  throw ValidationError("algo: expected one of ppo, c51, supervised; got '" + s + "'");
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

/// Overwrites defaults with user values, rejecting keys the defaults do not know.
void strict_merge(ordered_json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) throw ValidationError((path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [key, value] : src.items()) {
    const auto here = join(path, key);
    if (!dst.contains(key)) throw ValidationError("unknown key '" + here + "'");
    auto& slot = dst[key];
    if (slot.is_object()) {
      strict_merge(slot, value, here);
    } else {
      slot = value;
    }
  }
}

template <class T>
T get(const ordered_json& j, const std::string& path) {
  const ordered_json* cur = &j;
  std::string::size_type start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) throw ValidationError("missing key '" + path + "'");
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (cur->is_number_float()) {
        const double d = cur->get<double>();
        if (d < 0 || std::floor(d) != d || d > 1.8e19) throw ValidationError("key '" + path + "': expected a non-negative integer");
        return static_cast<T>(d);
      }
      if (!cur->is_number_integer() || (cur->is_number_integer() && !cur->is_number_unsigned() && cur->get<long long>() < 0))
        throw ValidationError("key '" + path + "': expected a non-negative integer");
    }
    return cur->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("key '" + path + "': " + e.what());
  }
}

void require(bool ok, const std::string& rule) {
  if (!ok) throw ValidationError(rule);
}

ordered_json mitigation_to_json(const mitigations::PlanEntry& e) {
  ordered_json j;
  j["method"] = e.method;
  ordered_json params = ordered_json::object();
  for (const auto& [k, v] : mitigations::resolved_params(e)) {
    if (const auto* d = std::get_if<double>(&v))
      params[k] = *d;
    else
      params[k] = std::get<std::string>(v);
  }
  j["params"] = params;
  const auto t = mitigations::resolved_trigger(e);
  ordered_json trig;
  trig["kind"] = std::string(mitigations::to_string(t.kind));
  if (t.kind == mitigations::Trigger::Kind::every_k_steps) trig["k"] = t.k;
  if (t.kind == mitigations::Trigger::Kind::once_at) trig["step"] = t.step;
  j["trigger"] = trig;
  return j;
}

mitigations::PlanEntry parse_mitigation(const json& j, std::size_t i) {
  const std::string path = "mitigations[" + std::to_string(i) + "]";
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (key != "method" && key != "params" && key != "trigger")
      throw ValidationError("unknown key '" + path + "." + key + "'");
  if (!j.contains("method") || !j["method"].is_string()) throw ValidationError(path + ".method: expected a string");
  mitigations::PlanEntry e;
  e.method = j["method"].get<std::string>();
  if (j.contains("params")) {
    if (!j["params"].is_object()) throw ValidationError(path + ".params: expected an object");
    for (const auto& [key, v] : j["params"].items()) {
      if (v.is_number())
        e.params[key] = v.get<double>();
      else if (v.is_string())
        e.params[key] = v.get<std::string>();
      else
        throw ValidationError(path + ".params." + key + ": expected a number or string");
    }
  }
  if (j.contains("trigger")) {
    const auto& t = j["trigger"];
    mitigations::Trigger trig;
    if (t.is_string()) {
      trig.kind = mitigations::parse_trigger_kind(t.get<std::string>());
    } else if (t.is_object()) {
      for (const auto& [key, _] : t.items())
        if (key != "kind" && key != "k" && key != "step")
          throw ValidationError("unknown key '" + path + ".trigger." + key + "'");
      if (!t.contains("kind") || !t["kind"].is_string()) throw ValidationError(path + ".trigger.kind: expected a string");
      trig.kind = mitigations::parse_trigger_kind(t["kind"].get<std::string>());
      auto count = [&](const char* key, std::size_t fallback) -> std::size_t {
        if (!t.contains(key)) return fallback;
        const auto& v = t[key];
        if (!v.is_number_integer() || v.get<long long>() < 0)
          throw ValidationError(path + ".trigger." + key + ": expected a non-negative integer");
        return v.get<std::size_t>();
      };
      trig.k = count("k", 1);
      trig.step = count("step", 0);
      if (trig.kind == mitigations::Trigger::Kind::every_k_steps && !t.contains("k"))
        throw ValidationError(path + ".trigger: every_k_steps needs k");
    } else {
      throw ValidationError(path + ".trigger: expected a string or object");
    }
    e.trigger = trig;
  }
  return e;
}

ordered_json default_tree(Algo algo, envs::Mode mode, envs::Family env) {
  ordered_json d;
  d["seed"] = 1;
  d["total_steps"] = nullptr;  // filled from the scenario below
  d["algo"] = std::string(to_string(algo));

  ordered_json s;
  s["mode"] = std::string(envs::to_string(mode));
  s["env"] = std::string(envs::to_string(env));
  s["segments"] = 1;
  s["segment_length"] = nullptr;
  s["level_seed"] = 0;
  s["level_offset"] = 20;
  s["variants"] = ordered_json::array({"stand", "walk", "run", "trot"});
  s["horizon"] = env == envs::Family::pointmass ? 1000 : 100;
  s["grid_size"] = 9;
  s["hazards"] = 2;
  s["wall_density"] = 0.1;
  s["frame_stack"] = 1;
  if (env == envs::Family::probe) {
    ordered_json p;
    p["in_dim"] = 16;
    p["teacher_hidden"] = 32;
    p["out_dim"] = 1;
    p["teacher_seed"] = 1;
    p["eval_batch"] = 1024;
    p["adaptation_window"] = 500;
    s["probe"] = p;
  }

  ordered_json n;
  n["hidden"] = ordered_json::array({64, 64});
  n["activation"] = "relu";
  n["init"] = "orthogonal";
  n["head_gain"] = algo == Algo::ppo ? 0.01 : 1.0;

  ordered_json l;
  std::size_t total = 10000000;
  switch (algo) {
    case Algo::c51:
      l["lr"] = 2.5e-4;
      l["gamma"] = 0.99;
      l["n_atoms"] = 51;
      l["v_min"] = -10.0;
      l["v_max"] = 10.0;
      l["buffer_size"] = 1000000;
      l["batch_size"] = 32;
      l["target_frequency"] = 10000;
      l["learning_starts"] = 80000;
      l["train_frequency"] = 4;
      l["eps_start"] = 1.0;
      l["eps_end"] = 0.01;
      l["exploration_fraction"] = 0.10;
      l["select_with_online"] = false;
      l["max_grad_norm"] = 0.0;
      break;
    case Algo::ppo:
      if (env == envs::Family::pointmass) {
        l["lr"] = 3e-4;
        l["ent_coef"] = 0.0;
        l["rollout_length"] = 2048;
        l["minibatches"] = 32;
        l["init_log_std"] = 0.0;
        s["segment_length"] = 1000000;
        total = 0;
      } else {
        l["lr"] = 1e-3;
        l["ent_coef"] = 0.01;
        l["rollout_length"] = 1000;
        l["minibatches"] = 8;
        l["init_log_std"] = 0.0;
        s["frame_stack"] = 4;
        s["segment_length"] = 2000000;
        total = 0;
      }
      l["gamma"] = 0.99;
      l["gae_lambda"] = 0.95;
      l["vf_coef"] = 0.5;
      l["clip_eps"] = 0.2;
      l["value_clip"] = 0.2;
      l["max_grad_norm"] = 0.5;
      l["epochs"] = 4;
      l["reward_normalization"] = true;
      break;
    case Algo::supervised:
      l["lr"] = 1e-3;
      l["batch_size"] = 64;
      s["segment_length"] = 2000;
      total = 0;
      break;
  }
  if (mode == envs::Mode::level_shift) s["segments"] = 10;
  if (mode == envs::Mode::task_chain) s["segments"] = 4;
  if (total != 0) d["total_steps"] = total;
  d["scenario"] = s;
  d["network"] = n;
  d["learner"] = l;
  d["mitigations"] = ordered_json::array();
  ordered_json lg;
  lg["metric_interval"] = 2000;
  lg["probe_batch"] = 256;
  lg["tau"] = 0.025;
  d["logging"] = lg;
  d["checkpoint_interval"] = 0;
  return d;
}

}  // namespace

ExperimentConfig parse_config(const json& user_in) {
  if (!user_in.is_object()) throw ValidationError("config: expected an object at the top level");
  json user = user_in;
  if (!user.contains("algo") || !user["algo"].is_string()) throw ValidationError("algo: required string");
  const Algo algo = parse_algo(user["algo"].get<std::string>());
  if (user.contains("scenario") && user["scenario"].is_string())
    user["scenario"] = json{{"mode", user["scenario"].get<std::string>()}};

  envs::Mode mode = envs::Mode::standard;
  std::optional<envs::Family> family;
  try {
    if (user.contains("scenario")) {
      const auto& s = user["scenario"];
      if (!s.is_object()) throw ValidationError("scenario: expected a string or object");
      if (s.contains("mode")) mode = envs::parse_mode(s["mode"].get<std::string>());
      if (s.contains("env")) family = envs::parse_family(s["env"].get<std::string>());
    }
  } catch (const SpecError& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
  if (!family) {
    if (algo == Algo::supervised)
      family = envs::Family::probe;
    else if (algo == Algo::ppo && mode == envs::Mode::task_chain)
      family = envs::Family::pointmass;
    else
      family = envs::Family::gridworld;
  }

  require(!(algo == Algo::c51 && *family == envs::Family::pointmass),
          "c51 requires a discrete-action environment (gridworld)");
  require(!(*family == envs::Family::pointmass && algo != Algo::ppo), "continuous control (pointmass) requires ppo");
  require((*family == envs::Family::probe) == (algo == Algo::supervised),
          "the probe family and the supervised algo go together");
  require(!(mode == envs::Mode::task_chain && *family != envs::Family::pointmass),
          "task_chain cycles pointmass variants; use level_shift for gridworld or probe");

  ordered_json tree = default_tree(algo, mode, *family);
  json rest = user;
  json plan_json = json::array();
  if (rest.contains("mitigations")) {
    plan_json = rest["mitigations"];
    rest.erase("mitigations");
    if (!plan_json.is_array()) throw ValidationError("mitigations: expected an array");
  }
  strict_merge(tree, rest, "");

  ExperimentConfig cfg;
  cfg.algo = algo;
  cfg.seed = get<std::uint64_t>(tree, "seed");

  auto& sc = cfg.scenario;
  sc.mode = mode;
  sc.env = *family;
  sc.segments = get<std::size_t>(tree, "scenario.segments");
  if (mode == envs::Mode::standard) {
    require(sc.segments == 1, "scenario.segments must be 1 in standard mode");
  }
  require(sc.segments >= 1, "scenario.segments must be >= 1");
  sc.level_seed = get<std::uint64_t>(tree, "scenario.level_seed");
  sc.level_offset = get<std::uint64_t>(tree, "scenario.level_offset");
  sc.variants = get<std::vector<std::string>>(tree, "scenario.variants");
  require(!sc.variants.empty(), "scenario.variants must be nonempty");
  for (const auto& v : sc.variants) {
    try {
      (void)envs::target_speed(v);
    } catch (const SpecError& e) {
      throw ValidationError(std::string("scenario.variants: ") + e.what());
    }
  }
  sc.horizon = get<std::size_t>(tree, "scenario.horizon");
  require(sc.horizon >= 1, "scenario.horizon must be >= 1");
  sc.grid_size = get<std::size_t>(tree, "scenario.grid_size");
  require(sc.grid_size >= 4, "scenario.grid_size must be >= 4");
  sc.hazards = get<std::size_t>(tree, "scenario.hazards");
  sc.wall_density = get<double>(tree, "scenario.wall_density");
  require(sc.wall_density >= 0.0 && sc.wall_density < 0.5, "scenario.wall_density must lie in [0, 0.5)");
  sc.frame_stack = get<std::size_t>(tree, "scenario.frame_stack");
  require(sc.frame_stack >= 1, "scenario.frame_stack must be >= 1");
  if (sc.env == envs::Family::probe) {
    auto& p = sc.probe;
    p.in_dim = get<std::size_t>(tree, "scenario.probe.in_dim");
    p.teacher_hidden = get<std::size_t>(tree, "scenario.probe.teacher_hidden");
    p.out_dim = get<std::size_t>(tree, "scenario.probe.out_dim");
    p.teacher_seed = get<std::uint64_t>(tree, "scenario.probe.teacher_seed");
    p.eval_batch = get<std::size_t>(tree, "scenario.probe.eval_batch");
    p.adaptation_window = get<std::size_t>(tree, "scenario.probe.adaptation_window");
    require(p.in_dim >= 1 && p.teacher_hidden >= 1 && p.out_dim >= 1 && p.eval_batch >= 1,
            "scenario.probe dimensions and eval_batch must be >= 1");
    require(sc.frame_stack == 1, "scenario.frame_stack applies to environments, not the probe task");
  }

  // An explicit total with no explicit segment length splits the total evenly.
  const bool user_total = user.contains("total_steps");
  const bool user_length = user.contains("scenario") && user["scenario"].contains("segment_length");
  if (user_total && !user_length) tree["scenario"]["segment_length"] = nullptr;
  if (tree["total_steps"].is_null()) {
    require(!tree["scenario"]["segment_length"].is_null(), "total_steps or scenario.segment_length is required");
    const auto len = get<std::size_t>(tree, "scenario.segment_length");
    tree["total_steps"] = len * sc.segments;
  }
  cfg.total_steps = get<std::size_t>(tree, "total_steps");
  require(cfg.total_steps >= 1, "total_steps must be >= 1");
  if (tree["scenario"]["segment_length"].is_null())
    tree["scenario"]["segment_length"] = std::max<std::size_t>(1, cfg.total_steps / sc.segments);
  sc.segment_length = get<std::size_t>(tree, "scenario.segment_length");
  require(sc.segment_length >= 1, "scenario.segment_length must be >= 1");
  if (mode == envs::Mode::standard) {
    sc.segment_length = cfg.total_steps;
    tree["scenario"]["segment_length"] = cfg.total_steps;
  }

  auto& nc = cfg.network;
  nc.hidden = get<std::vector<std::size_t>>(tree, "network.hidden");
  for (auto h : nc.hidden) require(h >= 1, "network.hidden widths must be >= 1");
  try {
    nc.activation = net::parse_activation(get<std::string>(tree, "network.activation"));
    nc.init = net::parse_init_kind(get<std::string>(tree, "network.init"));
  } catch (const SpecError& e) {
    throw ValidationError(std::string("network: ") + e.what());
  }
  require(nc.init != net::InitScheme::Kind::normal, "network.init must be orthogonal or uniform_fan_in");
  require(nc.activation != net::Activation::crelu && nc.activation != net::Activation::fourier,
          "network.activation: crelu and fourier are enabled through the mitigation plan");
  nc.head_gain = get<double>(tree, "network.head_gain");
  require(nc.head_gain > 0.0, "network.head_gain must be > 0");

  auto positive = [&](double v, const char* key) { require(v > 0.0 && std::isfinite(v), std::string(key) + " must be > 0"); };
  auto unit = [&](double v, const char* key) { require(v >= 0.0 && v <= 1.0, std::string(key) + " must lie in [0, 1]"); };
  switch (algo) {
    case Algo::ppo: {
      auto& p = cfg.ppo;
      p.lr = get<double>(tree, "learner.lr");
      positive(p.lr, "learner.lr");
      p.gamma = get<double>(tree, "learner.gamma");
      unit(p.gamma, "learner.gamma");
      p.gae_lambda = get<double>(tree, "learner.gae_lambda");
      unit(p.gae_lambda, "learner.gae_lambda");
      p.loss.ent_coef = get<double>(tree, "learner.ent_coef");
      require(p.loss.ent_coef >= 0.0, "learner.ent_coef must be >= 0");
      p.loss.vf_coef = get<double>(tree, "learner.vf_coef");
      require(p.loss.vf_coef >= 0.0, "learner.vf_coef must be >= 0");
      p.loss.clip_eps = get<double>(tree, "learner.clip_eps");
      positive(p.loss.clip_eps, "learner.clip_eps");
      p.loss.value_clip = get<double>(tree, "learner.value_clip");
      p.max_grad_norm = get<double>(tree, "learner.max_grad_norm");
      p.epochs = get<std::size_t>(tree, "learner.epochs");
      p.minibatches = get<std::size_t>(tree, "learner.minibatches");
      require(p.epochs >= 1 && p.minibatches >= 1, "learner.epochs and learner.minibatches must be >= 1");
      p.init_log_std = get<double>(tree, "learner.init_log_std");
      cfg.rollout_length = get<std::size_t>(tree, "learner.rollout_length");
      require(cfg.rollout_length >= p.minibatches, "learner.rollout_length must be >= learner.minibatches");
      cfg.reward_normalization = get<bool>(tree, "learner.reward_normalization");
      break;
    }
    case Algo::c51: {
      auto& c = cfg.c51;
      c.lr = get<double>(tree, "learner.lr");
      positive(c.lr, "learner.lr");
      c.gamma = get<double>(tree, "learner.gamma");
      unit(c.gamma, "learner.gamma");
      c.n_atoms = get<std::size_t>(tree, "learner.n_atoms");
      require(c.n_atoms >= 2, "learner.n_atoms must be >= 2");
      c.v_min = get<double>(tree, "learner.v_min");
      c.v_max = get<double>(tree, "learner.v_max");
      require(c.v_max > c.v_min, "learner.v_max must exceed learner.v_min");
      c.buffer_capacity = get<std::size_t>(tree, "learner.buffer_size");
      c.batch_size = get<std::size_t>(tree, "learner.batch_size");
      require(c.buffer_capacity >= 1 && c.batch_size >= 1, "learner.buffer_size and batch_size must be >= 1");
      c.target_frequency = get<std::size_t>(tree, "learner.target_frequency");
      c.learning_starts = get<std::size_t>(tree, "learner.learning_starts");
      c.train_frequency = get<std::size_t>(tree, "learner.train_frequency");
      require(c.target_frequency >= 1 && c.train_frequency >= 1,
              "learner.target_frequency and train_frequency must be >= 1");
      c.eps_start = get<double>(tree, "learner.eps_start");
      c.eps_end = get<double>(tree, "learner.eps_end");
      unit(c.eps_start, "learner.eps_start");
      unit(c.eps_end, "learner.eps_end");
      c.exploration_fraction = get<double>(tree, "learner.exploration_fraction");
      require(c.exploration_fraction > 0.0 && c.exploration_fraction <= 1.0,
              "learner.exploration_fraction must lie in (0, 1]");
      c.select_with_online = get<bool>(tree, "learner.select_with_online");
      c.max_grad_norm = get<double>(tree, "learner.max_grad_norm");
      break;
    }
    case Algo::supervised:
      cfg.supervised.lr = get<double>(tree, "learner.lr");
      positive(cfg.supervised.lr, "learner.lr");
      cfg.supervised.batch_size = get<std::size_t>(tree, "learner.batch_size");
      require(cfg.supervised.batch_size >= 1, "learner.batch_size must be >= 1");
      break;
  }

  auto& lg = cfg.logging;
  lg.metric_interval = get<std::size_t>(tree, "logging.metric_interval");
  lg.probe_batch = get<std::size_t>(tree, "logging.probe_batch");
  lg.tau = get<double>(tree, "logging.tau");
  require(lg.metric_interval >= 1, "logging.metric_interval must be >= 1");
  require(lg.probe_batch >= 1, "logging.probe_batch must be >= 1");
  require(lg.tau >= 0.0, "logging.tau must be >= 0");
  cfg.checkpoint_interval = get<std::size_t>(tree, "checkpoint_interval");

  ordered_json resolved_plan = ordered_json::array();
  for (std::size_t i = 0; i < plan_json.size(); ++i) cfg.plan.entries.push_back(parse_mitigation(plan_json[i], i));
  mitigations::validate_plan(cfg.plan);
  for (const auto& e : cfg.plan.entries) resolved_plan.push_back(mitigation_to_json(e));
  tree["mitigations"] = resolved_plan;

  cfg.resolved = std::move(tree);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.resolved["seed"] = seed;
}

}  // namespace plab::runner

#include "plab/runner/runner.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "plab/error.hpp"
#include "plab/mitigations/regularizers.hpp"
#include "plab/mitigations/resets.hpp"
#include "plab/net/checkpoint.hpp"

namespace plab::runner {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using mitigations::Category;
using mitigations::Trigger;
using net::Matrix;
using net::Network;
using net::ParamSet;
using numkit::RngStream;

namespace {

constexpr std::size_t kRecentEpisodes = 20;

struct ActiveEntry {
  std::string method;
  Category category{};
  bool structural = false;
  Trigger trigger;
  std::map<std::string, mitigations::ParamValue> params;
  std::string scope;
  std::size_t fires = 0;
};

/// One experiment in flight.
class Experiment {
 public:
  Experiment(const ExperimentConfig& cfg, fs::path dir);
  RunArtifacts run();

 private:
  // setup
  std::vector<net::LayerSpec> build_specs(std::size_t in, std::size_t out) const;
  std::unique_ptr<mitigations::Optimizer> make_optimizer() const;
  std::unique_ptr<envs::Env> make_segment_env(std::size_t segment, RngStream stream) const;
  void collect_probe();

  // plan
  learners::UpdateHooks hooks();
  void fire_interventions(std::size_t t, bool task_switch);
  void apply(ActiveEntry& e, std::size_t t, bool per_gradient_step);

  // logging
  void write(const std::vector<metrics::MetricRecord>& records);
  void log_metrics(std::size_t t);
  void log_episode(std::size_t t, double ret, std::size_t len);
  void save(std::size_t t, const std::string& name);
  void write_diagnostic(const NumericError& e);

  /// Switch, interventions, metrics and checkpoint for step t. Returns the schedule position.
  envs::ShiftResult before_step(std::size_t t);

  void run_ppo();
  void run_c51();
  void run_supervised();

  Network& network();
  mitigations::Optimizer& optimizer();
  void reset_optimizer();
  const ParamSet* gradients() const;

  const ExperimentConfig& cfg_;
  fs::path dir_;
  RngStream env_stream_, init_stream_, learner_stream_, mitigation_stream_, probe_stream_;
  envs::ScenarioSchedule schedule_;
  Matrix probe_;
  std::vector<ActiveEntry> entries_;

  std::unique_ptr<learners::PpoAgent> ppo_;
  std::unique_ptr<learners::C51Agent> c51_;
  Network sup_net_;
  std::unique_ptr<mitigations::Optimizer> sup_opt_;
  std::optional<ParamSet> sup_grads_;

  std::ofstream metrics_out_, episodes_out_;
  RunArtifacts artifacts_;
  std::vector<metrics::MetricRecord> last_report_;
  std::deque<double> recent_returns_;
  std::size_t episodes_ = 0;
  std::size_t current_segment_ = 0;
  std::size_t step_ = 0;
  double last_loss_ = std::nan("");
  double last_reg_loss_ = 0.0;
  std::optional<learners::PpoUpdateStats> last_ppo_;
  ordered_json adaptation_ = ordered_json::array();
};

Experiment::Experiment(const ExperimentConfig& cfg, fs::path dir)
    : cfg_(cfg),
      dir_(std::move(dir)),
      env_stream_(cfg.seed, numkit::label_hash("env")),
      init_stream_(cfg.seed, numkit::label_hash("init")),
      learner_stream_(cfg.seed, numkit::label_hash("learner")),
      mitigation_stream_(cfg.seed, numkit::label_hash("mitigation")),
      probe_stream_(cfg.seed, numkit::label_hash("probe")) {
  const auto& sc = cfg_.scenario;
  envs::ScheduleParams sp;
  sp.mode = sc.mode;
  sp.base.family = sc.env;
  sp.base.level_seed = sc.level_seed;
  sp.base.variant = sc.variants.front();
  sp.base.horizon = sc.horizon;
  sp.base.grid_size = sc.grid_size;
  sp.base.hazards = sc.hazards;
  sp.base.wall_density = sc.wall_density;
  sp.segments = sc.segments;
  sp.segment_length = sc.segment_length;
  sp.level_offset = sc.level_offset;
  sp.variants = sc.variants;
  schedule_ = envs::make_schedule(sp);

  for (std::size_t i = 0; i < cfg_.plan.entries.size(); ++i) {
    const auto& pe = cfg_.plan.entries[i];
    const auto* info = mitigations::find_method(pe.method);
    ActiveEntry e{pe.method,
                  info->category,
                  info->structural,
                  mitigations::resolved_trigger(pe),
                  mitigations::resolved_params(pe),
                  "plan." + std::to_string(i) + "." + pe.method,
                  0};
    if (e.structural || e.category == Category::optimizer) e.fires = 1;  // active from construction
    entries_.push_back(std::move(e));
  }
}

std::vector<net::LayerSpec> Experiment::build_specs(std::size_t in, std::size_t out) const {
  net::Activation act = cfg_.network.activation;
  bool ln = false;
  for (const auto& e : entries_) {
    if (e.method == "crelu") act = net::Activation::crelu;
    if (e.method == "fourier") act = net::Activation::fourier;
    if (e.method == "layer_norm" || e.method == "nap") ln = true;
  }
  const bool ortho = cfg_.network.init == net::InitScheme::Kind::orthogonal;
  std::vector<net::LayerSpec> specs;
  std::size_t prev = in;
  for (std::size_t h : cfg_.network.hidden) {
    net::LayerSpec s{prev, h, act, ln,
                     ortho ? net::InitScheme::orthogonal(std::sqrt(2.0)) : net::InitScheme::uniform_fan_in()};
    specs.push_back(s);
    prev = s.width();
  }
  specs.push_back({prev, out, net::Activation::linear, false,
                   ortho ? net::InitScheme::orthogonal(cfg_.network.head_gain) : net::InitScheme::uniform_fan_in()});
  return specs;
}

std::unique_ptr<mitigations::Optimizer> Experiment::make_optimizer() const {
  for (const auto& e : entries_) {
    if (e.method == "trac") {
      mitigations::TracConfig tc;
      tc.eps = mitigations::real_param(e.params, "eps");
      return std::make_unique<mitigations::Trac>(tc);
    }
    if (e.method == "kron") {
      mitigations::KronConfig kc;
      kc.damping = mitigations::real_param(e.params, "damping");
      kc.ema_decay = mitigations::real_param(e.params, "ema_decay");
      kc.inverse_interval = static_cast<std::size_t>(mitigations::real_param(e.params, "inverse_interval"));
      return std::make_unique<mitigations::Kron>(kc);
    }
  }
  return std::make_unique<mitigations::Adam>();
}

std::unique_ptr<envs::Env> Experiment::make_segment_env(std::size_t segment, RngStream stream) const {
  auto env = envs::make_env(schedule_.segments.at(segment));
  if (cfg_.scenario.frame_stack > 1) env = std::make_unique<envs::FrameStack>(std::move(env), cfg_.scenario.frame_stack);
  env->reseed(stream);
  return env;
}

void Experiment::collect_probe() {
  if (cfg_.scenario.env == envs::Family::probe) return;  // set by run_supervised
  auto env = make_segment_env(0, probe_stream_.derive("env"));
  const std::size_t n = cfg_.logging.probe_batch;
  probe_ = Matrix(n, env->obs_dim());
  auto obs = env->reset();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(obs.begin(), obs.end(), probe_.row(i).begin());
    envs::StepResult r;
    if (env->continuous()) {
      std::vector<double> a(env->action_dim());
      for (double& x : a) x = probe_stream_.uniform(-1.0, 1.0);
      r = env->step_continuous(a);
    } else {
      r = env->step_discrete(probe_stream_.below(env->action_dim()));
    }
    obs = r.done() ? env->reset() : r.observation;
  }
}

Network& Experiment::network() {
  if (ppo_) return ppo_->network();
  if (c51_) return c51_->network();
  return sup_net_;
}

mitigations::Optimizer& Experiment::optimizer() {
  if (ppo_) return ppo_->optimizer();
  if (c51_) return c51_->optimizer();
  return *sup_opt_;
}

void Experiment::reset_optimizer() {
  if (ppo_)
    ppo_->reset_optimizer();
  else if (c51_)
    c51_->reset_optimizer();
  else
    sup_opt_->reset(sup_net_);
}

const ParamSet* Experiment::gradients() const {
  const std::optional<ParamSet>* g = ppo_ ? &ppo_->last_gradients() : c51_ ? &c51_->last_gradients() : &sup_grads_;
  // A structural change since the last update leaves stale gradients behind.
  if (!g->has_value() || !net::same_layout(**g, const_cast<Experiment*>(this)->network().params())) return nullptr;
  return &**g;
}

learners::UpdateHooks Experiment::hooks() {
  learners::UpdateHooks h;
  h.regularize = [this](const Network& net, ParamSet& grads) {
    double total = 0.0;
    for (auto& e : entries_) {
      if (e.category != Category::regularization) continue;
      const double alpha = mitigations::real_param(e.params, "alpha");
      const double s = e.method == "parseval" ? mitigations::real_param(e.params, "s") : 1.0;
      const auto term = mitigations::reg_loss(mitigations::parse_reg_kind(e.method), net, alpha, s);
      net::axpy(grads, 1.0, term.grad);
      total += term.value;
      ++e.fires;
    }
    last_reg_loss_ = total;
    return total;
  };
  h.after_step = [this](Network&) {
    for (auto& e : entries_)
      if (e.trigger.kind == Trigger::Kind::per_gradient_step && e.category != Category::regularization)
        apply(e, step_, true);
  };
  return h;
}

void Experiment::apply(ActiveEntry& e, std::size_t t, bool per_gradient_step) {
  Network& net = network();
  double value = 1.0;
  if (e.method == "shrink_perturb") {
    mitigations::shrink_perturb(net, mitigations::real_param(e.params, "beta"), mitigation_stream_);
    optimizer().sync(net);
  } else if (e.method == "plasticity_injection") {
    mitigations::inject_plasticity(net, mitigation_stream_);
    optimizer().sync(net);
  } else if (e.method == "redo") {
    value = static_cast<double>(
        mitigations::redo_reset(net, probe_, mitigations::real_param(e.params, "tau"), mitigation_stream_));
    optimizer().sync(net);
  } else if (e.method == "reset_layers") {
    mitigations::reset_layers(net, mitigations::parse_reset_scope(mitigations::choice_param(e.params, "scope")),
                              mitigation_stream_);
    reset_optimizer();
  } else if (e.method == "nap") {
    mitigations::nap_project(net);
    optimizer().sync(net);
  } else {
    throw SpecError("method '" + e.method + "' is not an intervention");
  }
  ++e.fires;
  if (!per_gradient_step) write({{t, e.scope, "fired", value}});
}

void Experiment::fire_interventions(std::size_t t, bool task_switch) {
  for (auto& e : entries_) {
    if (e.structural || e.category == Category::optimizer || e.category == Category::regularization) continue;
    bool fire = false;
    switch (e.trigger.kind) {
      case Trigger::Kind::every_k_steps: fire = t > 0 && t % e.trigger.k == 0; break;
      case Trigger::Kind::once_at: fire = t == e.trigger.step; break;
      case Trigger::Kind::on_task_switch: fire = task_switch; break;
      case Trigger::Kind::per_gradient_step: break;
    }
    if (fire) apply(e, t, false);
  }
}

void Experiment::write(const std::vector<metrics::MetricRecord>& records) {
  for (const auto& r : records) metrics_out_ << metrics::to_jsonl(r) << '\n';
  metrics_out_.flush();
}

void Experiment::log_metrics(std::size_t t) {
  metrics::CollectOptions opts;
  opts.tau = cfg_.logging.tau;
  opts.step = t;
  opts.strict_ranks = false;
  auto records = metrics::to_records(metrics::collect_metrics(network(), probe_, gradients(), nullptr, opts));
  last_report_ = records;
  if (std::isfinite(last_loss_)) records.push_back({t, "train", "loss", last_loss_});
  if (!entries_.empty()) records.push_back({t, "train", "reg_loss", last_reg_loss_});
  if (last_ppo_) {
    records.push_back({t, "train", "entropy", last_ppo_->entropy});
    records.push_back({t, "train", "approx_kl", last_ppo_->approx_kl});
    records.push_back({t, "train", "clip_fraction", last_ppo_->clip_fraction});
  }
  if (!recent_returns_.empty()) {
    double mean = 0.0;
    for (double r : recent_returns_) mean += r;
    records.push_back({t, "train", "episode_return", mean / static_cast<double>(recent_returns_.size())});
  }
  for (const auto& e : entries_) records.push_back({t, e.scope, "fires", static_cast<double>(e.fires)});
  write(records);
}

void Experiment::log_episode(std::size_t t, double ret, std::size_t len) {
  ++episodes_;
  std::ostringstream line;
  line << t << ',' << episodes_ << ',' << std::setprecision(17) << ret << ',' << len << '\n';
  episodes_out_ << line.str();
  episodes_out_.flush();
  recent_returns_.push_back(ret);
  if (recent_returns_.size() > kRecentEpisodes) recent_returns_.pop_front();
}

void Experiment::save(std::size_t t, const std::string& name) {
  fs::create_directories(dir_ / "checkpoints");
  nlohmann::json meta;
  meta["step"] = t;
  meta["seed"] = cfg_.seed;
  meta["algo"] = std::string(to_string(cfg_.algo));
  meta["probe_file"] = "../probe.bin";
  meta["probe_rows"] = probe_.rows();
  meta["probe_cols"] = probe_.cols();
  meta["tau"] = cfg_.logging.tau;
  if (ppo_ && ppo_->continuous()) meta["log_std"] = ppo_->log_std();
  const auto path = dir_ / "checkpoints" / (name + ".json");
  net::save_checkpoint(path, network(), meta, gradients());
  artifacts_.checkpoints.push_back(path);
}

void Experiment::write_diagnostic(const NumericError& e) {
  ordered_json d;
  d["step"] = step_;
  d["error"] = e.what();
  d["where"] = e.where();
  ordered_json last = ordered_json::array();
  for (const auto& r : last_report_)
    last.push_back(ordered_json{{"step", r.step}, {"scope", r.scope}, {"metric", r.metric}, {"value", r.value}});
  d["last_report"] = last;
  std::ofstream(dir_ / "diagnostic.json") << d.dump(2) << '\n';
}

envs::ShiftResult Experiment::before_step(std::size_t t) {
  step_ = t;
  const auto shift = envs::schedule_shift(schedule_, t);
  fire_interventions(t, shift.switched && shift.segment > 0);
  if (t % cfg_.logging.metric_interval == 0) log_metrics(t);
  if (cfg_.checkpoint_interval > 0 && t > 0 && t % cfg_.checkpoint_interval == 0)
    save(t, "step_" + std::to_string(t));
  return shift;
}

void Experiment::run_ppo() {
  auto env = make_segment_env(0, env_stream_.derive("segment0"));
  const bool cont = env->continuous();
  learners::PpoConfig pc = cfg_.ppo;
  ppo_ = std::make_unique<learners::PpoAgent>(
      Network::create(build_specs(env->obs_dim(), env->action_dim() + 1), init_stream_), env->action_dim(), cont, pc,
      make_optimizer());
  collect_probe();
  net::save_matrix(dir_ / "probe.bin", probe_);
  const auto h = hooks();
  std::optional<envs::RewardScaler> scaler;
  if (cfg_.reward_normalization) scaler.emplace(pc.gamma);

  learners::TrajectoryBatch batch;
  std::vector<double> obs_rows, act_rows;
  auto obs = env->reset();
  double ep_ret = 0.0;
  std::size_t ep_len = 0;
  const std::size_t obs_dim = env->obs_dim();
  const std::size_t act_dim = env->action_dim();

  for (std::size_t t = 0; t < cfg_.total_steps; ++t) {
    const auto shift = before_step(t);
    if (shift.segment != current_segment_) {
      current_segment_ = shift.segment;
      env = make_segment_env(current_segment_, env_stream_.derive("segment" + std::to_string(current_segment_)));
      obs = env->reset();
      ep_ret = 0.0;
      ep_len = 0;
      if (!batch.dones.empty()) batch.dones.back() = true;
    }
    const auto step = ppo_->act(obs, learner_stream_);
    envs::StepResult r;
    if (cont) {
      std::vector<double> squashed(step.action_vector.size());
      for (std::size_t i = 0; i < squashed.size(); ++i) squashed[i] = std::tanh(step.action_vector[i]);
      r = env->step_continuous(squashed);
      act_rows.insert(act_rows.end(), step.action_vector.begin(), step.action_vector.end());
    } else {
      r = env->step_discrete(step.action);
      batch.actions.push_back(step.action);
    }
    obs_rows.insert(obs_rows.end(), obs.begin(), obs.end());
    batch.rewards.push_back(scaler ? scaler->scale(r.reward, r.done()) : r.reward);
    batch.dones.push_back(r.done());
    batch.log_probs.push_back(step.log_prob);
    batch.values.push_back(step.value);
    ep_ret += r.reward;
    ++ep_len;
    if (r.done()) {
      log_episode(t + 1, ep_ret, ep_len);
      ep_ret = 0.0;
      ep_len = 0;
      obs = env->reset();
    } else {
      obs = std::move(r.observation);
    }

    if (batch.rewards.size() == cfg_.rollout_length) {
      const std::size_t n = batch.rewards.size();
      batch.observations = Matrix(n, obs_dim, std::move(obs_rows));
      if (cont) batch.action_vectors = Matrix(n, act_dim, std::move(act_rows));
      const double bootstrap = batch.dones.back() ? 0.0 : ppo_->value(obs);
      step_ = t + 1;
      const auto stats = ppo_->update(batch, bootstrap, learner_stream_, h);
      last_loss_ = stats.loss;
      last_ppo_ = stats;
      batch = learners::TrajectoryBatch{};
      obs_rows.clear();
      act_rows.clear();
    }
  }
}

void Experiment::run_c51() {
  auto env = make_segment_env(0, env_stream_.derive("segment0"));
  const auto& c = cfg_.c51;
  c51_ = std::make_unique<learners::C51Agent>(
      Network::create(build_specs(env->obs_dim(), env->action_dim() * c.n_atoms), init_stream_), env->action_dim(), c,
      make_optimizer());
  collect_probe();
  net::save_matrix(dir_ / "probe.bin", probe_);
  const auto h = hooks();
  learners::ReplayBuffer buffer(c.buffer_capacity, env->obs_dim());
  auto obs = env->reset();
  double ep_ret = 0.0;
  std::size_t ep_len = 0;

  for (std::size_t t = 0; t < cfg_.total_steps; ++t) {
    const auto shift = before_step(t);
    if (shift.segment != current_segment_) {
      current_segment_ = shift.segment;
      env = make_segment_env(current_segment_, env_stream_.derive("segment" + std::to_string(current_segment_)));
      obs = env->reset();
      ep_ret = 0.0;
      ep_len = 0;
    }
    const double eps = learners::epsilon_schedule(t, c.eps_start, c.eps_end, c.exploration_fraction, cfg_.total_steps);
    const std::size_t a = c51_->act(obs, eps, learner_stream_);
    auto r = env->step_discrete(a);
    buffer.add(obs, a, r.reward, r.observation, r.terminated);
    ep_ret += r.reward;
    ++ep_len;
    if (r.done()) {
      log_episode(t + 1, ep_ret, ep_len);
      ep_ret = 0.0;
      ep_len = 0;
      obs = env->reset();
    } else {
      obs = std::move(r.observation);
    }
    if (t >= c.learning_starts && t % c.train_frequency == 0) {
      if (auto s = c51_->train_step(buffer, learner_stream_, h)) last_loss_ = s->loss;
    }
    if (t % c.target_frequency == 0) c51_->sync_target();
  }
}

void Experiment::run_supervised() {
  const auto& p = cfg_.scenario.probe;
  const envs::ProbeTask task(p.teacher_seed, p.in_dim, p.teacher_hidden, p.out_dim);
  sup_net_ = Network::create(build_specs(p.in_dim, p.out_dim), init_stream_);
  sup_opt_ = make_optimizer();
  sup_opt_->reset(sup_net_);
  // The metric probe doubles as the first rows of the evaluation set.
  RngStream eval_stream = probe_stream_.derive("eval");
  const Matrix eval_x(p.eval_batch, p.in_dim,
                      numkit::rng_draw(eval_stream, numkit::NormalDist{0.0, 1.0}, p.eval_batch * p.in_dim));
  probe_ = numkit::slice_rows(eval_x, 0, std::min(cfg_.logging.probe_batch, p.eval_batch));
  net::save_matrix(dir_ / "probe.bin", probe_);
  const auto h = hooks();

  Matrix eval_y;
  auto eval_loss = [&]() {
    const auto out = sup_net_.predict(eval_x);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = out.storage()[i] - eval_y.storage()[i];
      s += d * d;
    }
    return s / static_cast<double>(out.size());
  };

  std::optional<std::size_t> segment;
  std::size_t task_start = 0;
  double start_loss = 0.0;
  bool pending = false;
  auto close_window = [&](std::size_t t) {
    const double end_loss = eval_loss();
    const double speed = start_loss - end_loss;
    write({{t, "task" + std::to_string(*segment), "initial_loss", start_loss},
           {t, "task" + std::to_string(*segment), "window_loss", end_loss},
           {t, "task" + std::to_string(*segment), "adaptation_speed", speed}});
    adaptation_.push_back(speed);
    pending = false;
  };

  for (std::size_t t = 0; t <= cfg_.total_steps; ++t) {
    if (pending && t - task_start == p.adaptation_window) close_window(t);
    if (t == cfg_.total_steps) break;
    const auto shift = before_step(t);
    const std::uint64_t perm = shift.spec->level_seed;
    if (!segment || shift.segment != *segment) {
      if (pending) close_window(t);
      segment = shift.segment;
      current_segment_ = shift.segment;
      eval_y = task.targets(perm, eval_x);
      task_start = t;
      start_loss = eval_loss();
      pending = p.adaptation_window > 0;
    }
    if (t % cfg_.logging.metric_interval == 0) write({{t, "train", "eval_loss", eval_loss()}});

    const auto b = task.batch(perm, cfg_.supervised.batch_size, learner_stream_);
    const auto trace = sup_net_.forward(b.inputs);
    Matrix g(trace.output.rows(), trace.output.cols());
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = trace.output.storage()[i] - b.targets.storage()[i];
      loss += d * d * inv;
      g.storage()[i] = 2.0 * d * inv;
    }
    if (!std::isfinite(loss)) throw NumericError("supervised: loss is not finite", "mse");
    auto back = sup_net_.backward(trace, g);
    sup_grads_ = back.grads;
    step_ = t + 1;
    learners::apply_gradients(sup_net_, trace, back, *sup_opt_, cfg_.supervised.lr, 0.0, h);
    last_loss_ = loss;
  }
}

RunArtifacts Experiment::run() {
  fs::create_directories(dir_);
  artifacts_.dir = dir_;
  artifacts_.config_snapshot = dir_ / "config.json";
  artifacts_.metrics = dir_ / "metrics.jsonl";
  artifacts_.episodes = dir_ / "episodes.csv";
  std::ofstream(artifacts_.config_snapshot) << cfg_.resolved.dump(2) << '\n';
  metrics_out_.open(artifacts_.metrics, std::ios::trunc);
  episodes_out_.open(artifacts_.episodes, std::ios::trunc);
  if (!metrics_out_ || !episodes_out_) throw Error("cannot create logs in " + dir_.string());
  episodes_out_ << "step,episode,return,length\n";
  episodes_out_.flush();

  try {
    switch (cfg_.algo) {
      case Algo::ppo: run_ppo(); break;
      case Algo::c51: run_c51(); break;
      case Algo::supervised: run_supervised(); break;
    }
    step_ = cfg_.total_steps;
    log_metrics(cfg_.total_steps);
    save(cfg_.total_steps, "final");
  } catch (const NumericError& e) {
    write_diagnostic(e);
    throw;
  }

  auto& s = artifacts_.summary;
  s["algo"] = std::string(to_string(cfg_.algo));
  s["seed"] = cfg_.seed;
  s["total_steps"] = cfg_.total_steps;
  s["episodes"] = episodes_;
  if (!recent_returns_.empty()) {
    double mean = 0.0;
    for (double r : recent_returns_) mean += r;
    s["mean_recent_return"] = mean / static_cast<double>(recent_returns_.size());
  }
  if (std::isfinite(last_loss_)) s["final_loss"] = last_loss_;
  ordered_json fires = ordered_json::object();
  for (const auto& e : entries_) fires[e.scope] = e.fires;
  s["fires"] = fires;
  if (cfg_.algo == Algo::supervised) s["adaptation_speed"] = adaptation_;
  std::ofstream(dir_ / "summary.json") << s.dump(2) << '\n';
  return artifacts_;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  Experiment ex(cfg, out_dir);
  return ex.run();
}

ordered_json registry_json() {
  ordered_json cats = ordered_json::array();
  std::size_t count = 0;
  for (auto c : {Category::reset, Category::normalization, Category::regularization, Category::activation,
                 Category::optimizer}) {
    ordered_json methods = ordered_json::array();
    for (const auto& m : mitigations::method_registry()) {
      if (m.category != c) continue;
      ordered_json jm;
      jm["name"] = m.name;
      jm["summary"] = m.summary;
      jm["citation"] = m.citation;
      ordered_json params = ordered_json::array();
      for (const auto& p : m.params) {
        ordered_json jp;
        jp["name"] = p.name;
        jp["type"] = p.type == mitigations::ParamSchema::Type::real      ? "real"
                     : p.type == mitigations::ParamSchema::Type::integer ? "integer"
                                                                         : "choice";
        if (const auto* d = std::get_if<double>(&p.default_value))
          jp["default"] = *d;
        else
          jp["default"] = std::get<std::string>(p.default_value);
        if (p.type == mitigations::ParamSchema::Type::choice) {
          jp["choices"] = p.choices;
        } else {
          jp["min"] = p.min;
          jp["max"] = p.max;
        }
        if (p.per_gradient_step_default) jp["per_gradient_step_default"] = *p.per_gradient_step_default;
        jp["description"] = p.description;
        params.push_back(jp);
      }
      jm["params"] = params;
      ordered_json trig;
      trig["kind"] = std::string(mitigations::to_string(m.default_trigger.kind));
      if (m.default_trigger.kind == Trigger::Kind::every_k_steps) trig["k"] = m.default_trigger.k;
      if (m.default_trigger.kind == Trigger::Kind::once_at) trig["step"] = m.default_trigger.step;
      jm["default_trigger"] = trig;
      ordered_json allowed = ordered_json::array();
      for (auto k : m.allowed_triggers) allowed.push_back(std::string(mitigations::to_string(k)));
      jm["allowed_triggers"] = allowed;
      jm["structural"] = m.structural;
      methods.push_back(jm);
      ++count;
    }
    cats.push_back(ordered_json{{"category", std::string(mitigations::to_string(c))}, {"methods", methods}});
  }
  return ordered_json{{"count", count}, {"categories", cats}};
}

std::string list_methods(bool as_json) {
  const auto reg = registry_json();
  if (as_json) return reg.dump(2) + "\n";
  std::ostringstream os;
  for (const auto& cat : reg["categories"]) {
    os << cat["category"].get<std::string>() << '\n';
    for (const auto& m : cat["methods"]) {
      os << "  " << m["name"].get<std::string>() << "\n      " << m["summary"].get<std::string>() << '\n';
      for (const auto& p : m["params"]) {
        os << "      param " << p["name"].get<std::string>() << " = " << p["default"].dump();
        if (p.contains("choices"))
          os << " of " << p["choices"].dump();
        else
          os << " in [" << p["min"].dump() << ", " << p["max"].dump() << "]";
        if (p.contains("per_gradient_step_default"))
          os << " (per_gradient_step default " << p["per_gradient_step_default"].dump() << ")";
        os << '\n';
      }
      os << "      trigger " << m["default_trigger"]["kind"].get<std::string>();
      if (m["default_trigger"].contains("k")) os << " k=" << m["default_trigger"]["k"].dump();
      if (m["default_trigger"].contains("step")) os << " step=" << m["default_trigger"]["step"].dump();
      os << " (allowed:";
      for (const auto& k : m["allowed_triggers"]) os << ' ' << k.get<std::string>();
      os << ")\n      ref " << m["citation"].get<std::string>() << '\n';
    }
  }
  os << reg["count"].get<std::size_t>() << " methods in " << reg["categories"].size() << " categories\n";
  return os.str();
}

std::vector<metrics::MetricRecord> replay_metrics(const fs::path& checkpoint) {
  const auto ck = net::load_checkpoint(checkpoint);
  const auto& meta = ck.meta;
  for (const char* key : {"step", "probe_file", "probe_rows", "probe_cols", "tau"})
    if (!meta.contains(key)) throw CheckpointError(std::string("checkpoint meta lacks '") + key + "'");
  const auto probe = net::load_matrix(checkpoint.parent_path() / meta["probe_file"].get<std::string>(),
                                      meta["probe_rows"].get<std::size_t>(), meta["probe_cols"].get<std::size_t>());
  metrics::CollectOptions opts;
  opts.tau = meta["tau"].get<double>();
  opts.step = meta["step"].get<std::size_t>();
  opts.strict_ranks = false;
  const ParamSet* grads = ck.gradients ? &*ck.gradients : nullptr;
  return metrics::to_records(metrics::collect_metrics(ck.network, probe, grads, nullptr, opts));
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      std::size_t used = 0;
      const auto v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return {v, v};
    }
    std::size_t used_a = 0, used_b = 0;
    const auto a_text = text.substr(0, dots);
    const auto b_text = text.substr(dots + 2);
    const auto a = std::stoull(a_text, &used_a);
    const auto b = std::stoull(b_text, &used_b);
    if (used_a != a_text.size() || used_b != b_text.size()) throw std::invalid_argument(text);
    if (b < a) throw ValidationError("seed range '" + text + "' is empty");
    return {a, b};
  } catch (const std::logic_error&) {
    throw ValidationError("seed range must look like a..b, got '" + text + "'");
  }
}

}  // namespace plab::runner

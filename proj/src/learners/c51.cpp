#include "plab/learners/c51.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plab/error.hpp"

namespace plab::learners {

std::vector<double> c51_support(double v_min, double v_max, std::size_t n) {
  if (n < 2) throw InvalidInput("c51_support: need at least two atoms");
  if (!(v_max > v_min) || !std::isfinite(v_min) || !std::isfinite(v_max))
    throw InvalidInput("c51_support: v_max must exceed v_min");
  const double dz = (v_max - v_min) / static_cast<double>(n - 1);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = v_min + static_cast<double>(i) * dz;
  z.back() = v_max;
  return z;
}

CategoricalHead CategoricalHead::make(double v_min, double v_max, std::size_t n) {
  CategoricalHead h;
  h.atoms = c51_support(v_min, v_max, n);
  h.v_min = v_min;
  h.v_max = v_max;
  h.delta_z = (v_max - v_min) / static_cast<double>(n - 1);
  return h;
}

std::vector<double> categorical_projection(std::span<const double> next_dist, double r, bool done, double gamma,
                                           const CategoricalHead& head) {
  const std::size_t n = head.n_atoms();
  if (next_dist.size() != n) throw InvalidInput("categorical_projection: distribution size differs from the support");
  double total = 0.0;
  for (double p : next_dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidInput("categorical_projection: invalid probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw InvalidInput("categorical_projection: probabilities do not sum to 1");
  if (!std::isfinite(r)) throw InvalidInput("categorical_projection: non-finite reward");

  std::vector<double> m(n, 0.0);
  const double live = done ? 0.0 : 1.0;
  const double top = static_cast<double>(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    const double tz = std::clamp(r + gamma * live * head.atoms[j], head.v_min, head.v_max);
    const double b = std::clamp((tz - head.v_min) / head.delta_z, 0.0, top);
    const double lo = std::floor(b);
    const double hi = std::ceil(b);
    const auto l = static_cast<std::size_t>(lo);
    const auto u = static_cast<std::size_t>(hi);
    if (l == u) {
      m[l] += next_dist[j];
    } else {
      m[l] += next_dist[j] * (hi - b);
      m[u] += next_dist[j] * (b - lo);
    }
  }
  return m;
}

C51Loss c51_loss(std::span<const double> projected, std::span<const double> logits) {
  if (projected.size() != logits.size() || logits.empty()) throw InvalidInput("c51_loss: size mismatch");
  const auto lp = log_softmax(logits);
  C51Loss out;
  out.d_logits.resize(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (projected[i] != 0.0) out.loss -= projected[i] * lp[i];
    out.d_logits[i] = std::exp(lp[i]) - projected[i];
  }
  return out;
}

double epsilon_schedule(std::size_t step, double start, double end, double fraction, std::size_t total) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("epsilon_schedule: fraction must lie in (0, 1]");
  const double ramp = fraction * static_cast<double>(total);
  const double s = static_cast<double>(step);
  if (s >= ramp) return end;
  return start + (end - start) * (s / ramp);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_dim)
    : capacity_(capacity), obs_dim_(obs_dim) {
  if (capacity == 0 || obs_dim == 0) throw InvalidInput("replay buffer: capacity and obs_dim must be positive");
}

void ReplayBuffer::add(std::span<const double> obs, std::size_t action, double reward,
                       std::span<const double> next_obs, bool done) {
  if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_) throw InvalidInput("replay buffer: observation width");
  if (size_ < capacity_) {
    obs_.insert(obs_.end(), obs.begin(), obs.end());
    next_obs_.insert(next_obs_.end(), next_obs.begin(), next_obs.end());
    actions_.push_back(action);
    rewards_.push_back(reward);
    dones_.push_back(done ? 1 : 0);
  } else {
    std::copy(obs.begin(), obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(cursor_ * obs_dim_));
    std::copy(next_obs.begin(), next_obs.end(), next_obs_.begin() + static_cast<std::ptrdiff_t>(cursor_ * obs_dim_));
    actions_[cursor_] = action;
    rewards_[cursor_] = reward;
    dones_[cursor_] = done ? 1 : 0;
  }
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, RngStream& stream) const {
  if (size_ == 0) throw InvalidInput("replay buffer: sampling from an empty buffer");
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = stream.below(size_);
  return idx;
}

std::vector<double> action_distribution(std::span<const double> row, std::size_t action, std::size_t n_atoms) {
  const auto lp = log_softmax(row.subspan(action * n_atoms, n_atoms));
  std::vector<double> p(n_atoms);
  for (std::size_t i = 0; i < n_atoms; ++i) p[i] = std::exp(lp[i]);
  return p;
}

std::vector<double> expected_values(std::span<const double> row, const CategoricalHead& head) {
  const std::size_t n = head.n_atoms();
  std::vector<double> q(row.size() / n);
  for (std::size_t a = 0; a < q.size(); ++a) {
    const auto p = action_distribution(row, a, n);
    for (std::size_t i = 0; i < n; ++i) q[a] += head.atoms[i] * p[i];
  }
  return q;
}

namespace {
std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}
}  // namespace

std::optional<C51Gradients> c51_update(const ReplayBuffer& buffer, const Network& online, const Network& target,
                                       const CategoricalHead& head, std::size_t batch_size, double gamma,
                                       RngStream& stream, std::size_t learning_starts, bool select_with_online) {
  if (batch_size == 0) throw InvalidInput("c51_update: batch_size must be positive");
  if (buffer.size() < std::max(batch_size, learning_starts)) return std::nullopt;
  const std::size_t n = head.n_atoms();
  const std::size_t n_actions = online.output_dim() / n;
  if (n_actions * n != online.output_dim()) throw SpecError("c51: output width is not a multiple of the atom count");

  const auto idx = buffer.sample_indices(batch_size, stream);
  Matrix obs(batch_size, buffer.obs_dim());
  Matrix next(batch_size, buffer.obs_dim());
  for (std::size_t b = 0; b < batch_size; ++b) {
    std::copy_n(buffer.obs(idx[b]).begin(), buffer.obs_dim(), obs.row(b).begin());
    std::copy_n(buffer.next_obs(idx[b]).begin(), buffer.obs_dim(), next.row(b).begin());
  }
  const Matrix next_target = target.predict(next);
  const Matrix next_select = select_with_online ? online.predict(next) : next_target;

  C51Gradients out;
  out.trace = online.forward(obs);
  Matrix g(batch_size, online.output_dim(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t a_next = argmax(expected_values(next_select.row(b), head));
    const auto p_next = action_distribution(next_target.row(b), a_next, n);
    const auto m = categorical_projection(p_next, buffer.reward(idx[b]), buffer.done(idx[b]), gamma, head);
    const std::size_t a = buffer.action(idx[b]);
    const auto L = c51_loss(m, out.trace.output.row(b).subspan(a * n, n));
    out.loss += L.loss * inv_b;
    for (std::size_t i = 0; i < n; ++i) g(b, a * n + i) = L.d_logits[i] * inv_b;
  }
  if (!std::isfinite(out.loss)) throw NumericError("c51: loss is not finite", "c51_loss");
  out.back = online.backward(out.trace, g);
  return out;
}

C51Agent::C51Agent(Network online, std::size_t n_actions, C51Config cfg, std::unique_ptr<mitigations::Optimizer> opt)
    : online_(std::move(online)),
      target_(online_),
      n_actions_(n_actions),
      cfg_(cfg),
      head_(CategoricalHead::make(cfg.v_min, cfg.v_max, cfg.n_atoms)),
      opt_(std::move(opt)) {
  if (online_.output_dim() != n_actions_ * cfg_.n_atoms)
    throw SpecError("c51: network output width must be n_actions * n_atoms");
  if (!opt_) throw InvalidInput("c51: optimizer required");
  opt_->reset(online_);
}

std::vector<double> C51Agent::q_values(std::span<const double> observation) const {
  const auto out =
      online_.predict(Matrix(1, observation.size(), std::vector<double>(observation.begin(), observation.end())));
  return expected_values(out.row(0), head_);
}

std::size_t C51Agent::act(std::span<const double> observation, double epsilon, RngStream& stream) const {
  // Both draws are always taken so the stream advances the same way whichever branch wins.
  const double u = stream.uniform01();
  const std::size_t random_action = stream.below(n_actions_);
  if (u < epsilon) return random_action;
  return argmax(q_values(observation));
}

std::optional<C51Stats> C51Agent::train_step(const ReplayBuffer& buffer, RngStream& stream,
                                             const UpdateHooks& hooks) {
  auto g = c51_update(buffer, online_, target_, head_, cfg_.batch_size, cfg_.gamma, stream, cfg_.learning_starts,
                      cfg_.select_with_online);
  if (!g) return std::nullopt;
  last_grads_ = g->back.grads;
  const auto rep = apply_gradients(online_, g->trace, g->back, *opt_, cfg_.lr, cfg_.max_grad_norm, hooks);
  return C51Stats{g->loss, rep.reg_loss, rep.grad_norm};
}

}  // namespace plab::learners

#include "plab/learners/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "plab/error.hpp"

namespace plab::learners {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
}

void TrajectoryBatch::validate() const {
  const std::size_t n = rewards.size();
  const bool discrete_ok = actions.size() == n;
  const bool continuous_ok = action_vectors.rows() == n && n > 0;
  if (observations.rows() != n || dones.size() != n || log_probs.size() != n || values.size() != n ||
      !(discrete_ok || continuous_ok))
    throw InvalidInput("trajectory batch: fields have unequal lengths");
  for (double r : rewards)
    if (!std::isfinite(r)) throw InvalidInput("trajectory batch: non-finite reward");
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values, const std::vector<bool>& dones,
              double bootstrap_value, double gamma, double lam) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw InvalidInput("gae: length mismatch");
  if (!(gamma >= 0.0 && gamma <= 1.0 && lam >= 0.0 && lam <= 1.0))
    throw InvalidInput("gae: gamma and lam must lie in [0, 1]");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 < n ? values[t + 1] : bootstrap_value;
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * live * next_value - values[t];
    next_adv = delta + gamma * lam * live * next_adv;
    r.advantages[t] = next_adv;
    r.returns[t] = next_adv + values[t];
  }
  return r;
}

PpoLoss ppo_loss(std::span<const double> old_log_probs, std::span<const double> old_values,
                 std::span<const double> advantages, std::span<const double> returns,
                 std::span<const double> new_log_probs, std::span<const double> new_values,
                 std::span<const double> entropy, const PpoLossConfig& cfg) {
  const std::size_t n = old_log_probs.size();
  if (n == 0 || old_values.size() != n || advantages.size() != n || returns.size() != n ||
      new_log_probs.size() != n || new_values.size() != n || entropy.size() != n)
    throw InvalidInput("ppo_loss: inputs must be nonempty and of equal length");
  if (!(cfg.clip_eps > 0.0)) throw InvalidInput("ppo_loss: clip_eps must be > 0");

  std::vector<double> adv(advantages.begin(), advantages.end());
  if (cfg.normalize_advantages) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  PpoLoss L;
  L.d_log_prob.assign(n, 0.0);
  L.d_value.assign(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double log_ratio = new_log_probs[i] - old_log_probs[i];
    const double rho = std::exp(log_ratio);
    if (!std::isfinite(rho)) throw NumericError("ppo_loss: non-finite probability ratio", "ratio");
    const double s1 = rho * adv[i];
    const double s2 = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv[i];
    L.policy -= std::min(s1, s2) * inv_n;
    if (s1 <= s2) L.d_log_prob[i] = -s1 * inv_n;
    if (std::abs(rho - 1.0) > cfg.clip_eps) ++clipped;
    L.approx_kl += ((rho - 1.0) - log_ratio) * inv_n;

    const double err = new_values[i] - returns[i];
    double sq = err * err;
    double grad = 2.0 * err;
    if (cfg.value_clip > 0.0) {
      const double vc = old_values[i] + std::clamp(new_values[i] - old_values[i], -cfg.value_clip, cfg.value_clip);
      const double sq_c = (vc - returns[i]) * (vc - returns[i]);
      if (sq_c > sq) {
        sq = sq_c;
        grad = 0.0;  // only reachable when the clamp is active
      }
    }
    L.value += sq * inv_n;
    L.d_value[i] = cfg.vf_coef * grad * inv_n;
    L.entropy += entropy[i] * inv_n;
  }
  L.clip_fraction = static_cast<double>(clipped) * inv_n;
  L.d_entropy = -cfg.ent_coef * inv_n;
  L.total = L.policy + cfg.vf_coef * L.value - cfg.ent_coef * L.entropy;
  return L;
}

CategoricalEval categorical_policy(std::span<const double> logits, std::size_t action) {
  if (action >= logits.size()) throw InvalidInput("categorical_policy: action out of range");
  const auto lp = log_softmax(logits);
  CategoricalEval e;
  e.log_prob = lp[action];
  e.d_log_prob.resize(logits.size());
  e.d_entropy.resize(logits.size());
  for (std::size_t k = 0; k < lp.size(); ++k) e.entropy -= std::exp(lp[k]) * lp[k];
  for (std::size_t k = 0; k < lp.size(); ++k) {
    const double p = std::exp(lp[k]);
    e.d_log_prob[k] = (k == action ? 1.0 : 0.0) - p;
    e.d_entropy[k] = -p * (lp[k] + e.entropy);
  }
  return e;
}

std::size_t sample_categorical(std::span<const double> logits, RngStream& stream) {
  const auto lp = log_softmax(logits);
  const double u = stream.uniform01();
  double acc = 0.0;
  for (std::size_t k = 0; k < lp.size(); ++k) {
    acc += std::exp(lp[k]);
    if (u < acc) return k;
  }
  return lp.size() - 1;
}

GaussianEval gaussian_policy(std::span<const double> mean, std::span<const double> log_std,
                             std::span<const double> action) {
  const std::size_t d = mean.size();
  if (log_std.size() != d || action.size() != d) throw InvalidInput("gaussian_policy: dimension mismatch");
  GaussianEval e;
  e.d_mean.resize(d);
  e.d_log_std.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double sd = std::exp(log_std[i]);
    const double z = (action[i] - mean[i]) / sd;
    e.log_prob += -0.5 * z * z - log_std[i] - 0.5 * kLog2Pi;
    e.entropy += log_std[i] + 0.5 * (kLog2Pi + 1.0);
    e.d_mean[i] = z / sd;
    e.d_log_std[i] = z * z - 1.0;
  }
  return e;
}

std::vector<double> sample_gaussian(std::span<const double> mean, std::span<const double> log_std,
                                    RngStream& stream) {
  std::vector<double> a(mean.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = mean[i] + std::exp(log_std[i]) * stream.normal(0.0, 1.0);
  return a;
}

// --- agent --------------------------------------------------------------------

PpoAgent::PpoAgent(Network net, std::size_t action_dim, bool continuous, PpoConfig cfg,
                   std::unique_ptr<mitigations::Optimizer> opt)
    : net_(std::move(net)), action_dim_(action_dim), continuous_(continuous), cfg_(cfg), opt_(std::move(opt)) {
  if (net_.output_dim() != action_dim_ + 1)
    throw SpecError("ppo: network output width must be action_dim + 1 (policy outputs then the value)");
  if (!opt_) throw InvalidInput("ppo: optimizer required");
  if (cfg_.epochs == 0 || cfg_.minibatches == 0) throw ValidationError("ppo: epochs and minibatches must be >= 1");
  if (continuous_) log_std_.assign(action_dim_, cfg_.init_log_std);
  reset_optimizer();
}

void PpoAgent::reset_optimizer() {
  opt_->reset(net_);
  log_std_m_.assign(log_std_.size(), 0.0);
  log_std_v_.assign(log_std_.size(), 0.0);
  log_std_t_ = 0;
}

PolicyStep PpoAgent::evaluate_row(std::span<const double> out, RngStream* stream) const {
  PolicyStep s;
  const auto head = out.first(action_dim_);
  s.value = out[action_dim_];
  if (continuous_) {
    s.action_vector = stream ? sample_gaussian(head, log_std_, *stream) : std::vector<double>(head.begin(), head.end());
    s.log_prob = gaussian_policy(head, log_std_, s.action_vector).log_prob;
  } else {
    s.action = stream ? sample_categorical(head, *stream)
                      : static_cast<std::size_t>(std::max_element(head.begin(), head.end()) - head.begin());
    s.log_prob = categorical_policy(head, s.action).log_prob;
  }
  return s;
}

PolicyStep PpoAgent::act(std::span<const double> observation, RngStream& stream) const {
  const auto out = net_.predict(Matrix(1, observation.size(), std::vector<double>(observation.begin(), observation.end())));
  return evaluate_row(out.row(0), &stream);
}

PolicyStep PpoAgent::act_greedy(std::span<const double> observation) const {
  const auto out = net_.predict(Matrix(1, observation.size(), std::vector<double>(observation.begin(), observation.end())));
  return evaluate_row(out.row(0), nullptr);
}

double PpoAgent::value(std::span<const double> observation) const {
  const auto out = net_.predict(Matrix(1, observation.size(), std::vector<double>(observation.begin(), observation.end())));
  return out(0, action_dim_);
}

PpoUpdateStats PpoAgent::update(const TrajectoryBatch& batch, double bootstrap_value, RngStream& stream,
                                const UpdateHooks& hooks) {
  batch.validate();
  if (continuous_ ? batch.action_vectors.rows() != batch.size() : batch.actions.size() != batch.size())
    throw InvalidInput("ppo: batch actions do not match the action space");
  const std::size_t n = batch.size();
  const auto adv = gae(batch.rewards, batch.values, batch.dones, bootstrap_value, cfg_.gamma, cfg_.gae_lambda);
  const std::size_t n_mb = std::min(cfg_.minibatches, n);
  const std::size_t mb = n / n_mb;

  PpoUpdateStats st;
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    const auto perm = permutation(n, stream);
    for (std::size_t b = 0; b < n_mb; ++b) {
      std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(b * mb),
                                   perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * mb));
      const std::size_t m = idx.size();
      const auto trace = net_.forward(take_rows(batch.observations, idx));
      std::vector<double> old_lp(m), old_v(m), a(m), ret(m), new_lp(m), new_v(m), ent(m);
      std::vector<CategoricalEval> cats;
      std::vector<GaussianEval> gauss;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = idx[i];
        old_lp[i] = batch.log_probs[j];
        old_v[i] = batch.values[j];
        a[i] = adv.advantages[j];
        ret[i] = adv.returns[j];
        const auto row = trace.output.row(i);
        new_v[i] = row[action_dim_];
        if (continuous_) {
          gauss.push_back(gaussian_policy(row.first(action_dim_), log_std_, batch.action_vectors.row(j)));
          new_lp[i] = gauss.back().log_prob;
          ent[i] = gauss.back().entropy;
        } else {
          cats.push_back(categorical_policy(row.first(action_dim_), batch.actions[j]));
          new_lp[i] = cats.back().log_prob;
          ent[i] = cats.back().entropy;
        }
      }
      const auto L = ppo_loss(old_lp, old_v, a, ret, new_lp, new_v, ent, cfg_.loss);
      if (!std::isfinite(L.total)) throw NumericError("ppo: loss is not finite", "ppo_loss");

      Matrix g(m, action_dim_ + 1, 0.0);
      std::vector<double> g_log_std(log_std_.size(), 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < action_dim_; ++k) {
          if (continuous_) {
            g(i, k) = L.d_log_prob[i] * gauss[i].d_mean[k];
            g_log_std[k] += L.d_log_prob[i] * gauss[i].d_log_std[k] + L.d_entropy;
          } else {
            g(i, k) = L.d_log_prob[i] * cats[i].d_log_prob[k] + L.d_entropy * cats[i].d_entropy[k];
          }
        }
        g(i, action_dim_) = L.d_value[i];
      }
      auto back = net_.backward(trace, g);
      last_grads_ = back.grads;
      const auto rep = apply_gradients(net_, trace, back, *opt_, cfg_.lr, cfg_.max_grad_norm, hooks);

      if (continuous_) {
        // log_std has its own Adam moments; its gradient is clipped on its own.
        double norm = 0.0;
        for (double x : g_log_std) norm += x * x;
        norm = std::sqrt(norm);
        const double k = cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm ? cfg_.max_grad_norm / norm : 1.0;
        ++log_std_t_;
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(log_std_t_));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(log_std_t_));
        for (std::size_t d = 0; d < log_std_.size(); ++d) {
          const double gd = g_log_std[d] * k;
          log_std_m_[d] = 0.9 * log_std_m_[d] + 0.1 * gd;
          log_std_v_[d] = 0.999 * log_std_v_[d] + 0.001 * gd * gd;
          log_std_[d] -= cfg_.lr * (log_std_m_[d] / c1) / (std::sqrt(log_std_v_[d] / c2) + 1e-8);
        }
      }

      const double w = 1.0 / static_cast<double>(cfg_.epochs * n_mb);
      st.loss += L.total * w;
      st.policy += L.policy * w;
      st.value += L.value * w;
      st.entropy += L.entropy * w;
      st.approx_kl += L.approx_kl * w;
      st.clip_fraction += L.clip_fraction * w;
      st.reg_loss += rep.reg_loss * w;
      st.grad_norm = rep.grad_norm;
      ++st.gradient_steps;
    }
  }
  return st;
}

}  // namespace plab::learners

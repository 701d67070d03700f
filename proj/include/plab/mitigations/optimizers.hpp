#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "plab/net/network.hpp"

namespace plab::mitigations {

using net::Matrix;
using net::Network;
using net::ParamSet;

/// What an optimizer may consume for one update.
struct StepInput {
  const ParamSet& grads;
  const net::ForwardTrace* trace = nullptr;    // kron needs layer inputs
  std::span<const Matrix> linear_grads = {};   // kron needs dLoss/d(linear)
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual std::string_view name() const noexcept = 0;
  /// Fresh state for the current network.
  virtual void reset(const Network& net) = 0;
  /// Parameters were changed from outside (a reset or projection). Statistics are
  /// kept when the layout still matches.
  virtual void sync(const Network& net) = 0;
  virtual void step(Network& net, const StepInput& in, double lr) = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment state of Adam over an arbitrary ParamSet.
class AdamCore {
 public:
  explicit AdamCore(AdamConfig cfg = {}) : cfg_(cfg) {}
  void reset(const ParamSet& layout);
  bool matches(const ParamSet& layout) const { return net::same_layout(m_, layout); }
  /// Moves `target` one Adam step along grads; blocks for which skip(id) is true stay put.
  template <class Skip>
  void apply(ParamSet& target, const ParamSet& grads, double lr, Skip&& skip);
  std::size_t steps() const noexcept { return t_; }
  const ParamSet& first_moment() const noexcept { return m_; }
  const ParamSet& second_moment() const noexcept { return v_; }

 private:
  AdamConfig cfg_;
  ParamSet m_, v_;
  std::size_t t_ = 0;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(AdamConfig cfg = {}) : core_(cfg) {}
  std::string_view name() const noexcept override { return "adam"; }
  void reset(const Network& net) override { core_.reset(net.params()); }
  void sync(const Network& net) override;
  void step(Network& net, const StepInput& in, double lr) override;
  const AdamCore& core() const noexcept { return core_; }

 private:
  AdamCore core_;
};

/// Throws NumericError naming the first non-finite gradient block.
void require_finite(const ParamSet& grads, std::string_view who);

void adam_step(Adam& opt, Network& net, const ParamSet& grads, double lr);

struct TracConfig {
  std::vector<double> betas{0.9, 0.99, 0.999, 0.9999};
  double eps = 1e-8;
  AdamConfig base{};
};

/// Scale tuning around a reference point. A base Adam iterate x_t runs
/// unmodified; each step, with h_t = <g_t, x_t - theta_ref> and for every
/// discount beta_j:
///   v_j     <- beta_j^2 v_j + h_t^2
///   sigma_j <- beta_j sigma_j - h_t
///   s_j      = eps / erfi(1/sqrt 2) * erfi(sigma_j / (sqrt(2 v_j) + eps))
/// The aggregate S = max(0, sum_j s_j) places the parameters at
///   theta = (1 - S) theta_ref + S x_{t+1}.
class Trac final : public Optimizer {
 public:
  explicit Trac(TracConfig cfg = {});
  std::string_view name() const noexcept override { return "trac"; }
  /// Anchors theta_ref and the base iterate at the current parameters.
  void reset(const Network& net) override;
  /// Adopts an external edit by translating theta_ref and the base iterate by
  /// the same offset, so tuners and the displacement base - ref are untouched.
  /// A layout change resets instead.
  void sync(const Network& net) override;
  void step(Network& net, const StepInput& in, double lr) override;

  double scale() const noexcept { return scale_; }
  std::size_t saturation_count() const noexcept { return saturations_; }
  const ParamSet& reference() const noexcept { return ref_; }
  const ParamSet& base_iterate() const noexcept { return base_; }
  const std::vector<double>& tuner_scales() const noexcept { return s_; }
  const TracConfig& config() const noexcept { return cfg_; }

  /// Advances the tuners with grads and places the parameters on the ray from
  /// theta_ref through base_candidate, which becomes the new base iterate.
  friend void trac_step(Trac& opt, Network& net, const ParamSet& grads, const ParamSet& base_candidate);

 private:
  TracConfig cfg_;
  AdamCore adam_;
  ParamSet ref_, base_;
  std::vector<double> v_, sigma_, s_;
  double scale_ = 0.0;
  std::size_t saturations_ = 0;
};

void trac_step(Trac& opt, Network& net, const ParamSet& grads, const ParamSet& base_candidate);

/// out = (1 - s) ref + s cand on every trainable block of net; exact at s = 0 and s = 1.
void trac_combine(Network& net, const ParamSet& ref, const ParamSet& cand, double s);

struct KronConfig {
  double damping = 1e-3;
  double ema_decay = 0.95;
  std::size_t inverse_interval = 10;
};

/// Kronecker-factored preconditioning of each trainable dense layer. With the
/// bias folded into an augmented input a = [x, 1], the layer keeps
///   A = EMA of a^T a / B   and   S = EMA of B dz^T dz
/// and steps along (S + lambda I)^-1 [dW | db] (A + lambda I)^-1. Layer-norm
/// affine and injected heads take plain gradient steps.
class Kron final : public Optimizer {
 public:
  struct Factors {
    Matrix a, s, a_inv, s_inv;
  };

  explicit Kron(KronConfig cfg = {}) : cfg_(cfg) {}
  std::string_view name() const noexcept override { return "kron"; }
  /// Identity factors and identity inverses.
  void reset(const Network& net) override;
  void sync(const Network& net) override;
  void step(Network& net, const StepInput& in, double lr) override;

  std::size_t steps() const noexcept { return steps_; }
  /// Times an inversion failed and the diagonal fallback was used.
  std::size_t fallback_count() const noexcept { return fallbacks_; }
  std::vector<Factors>& factors() noexcept { return layers_; }
  const KronConfig& config() const noexcept { return cfg_; }

 private:
  void refresh_inverses();
  Matrix damped_inverse(const Matrix& f);

  KronConfig cfg_;
  std::vector<Factors> layers_;
  std::size_t steps_ = 0;
  std::size_t fallbacks_ = 0;
};

void kron_step(Kron& opt, Network& net, const net::ForwardTrace& trace, std::span<const Matrix> linear_grads,
               const ParamSet& grads, double lr);

/// S^-1 G A^-1 for G of shape out x (in + 1).
Matrix kron_precondition(const Matrix& s_inv, const Matrix& g, const Matrix& a_inv);

// ---------------------------------------------------------------------------

template <class Skip>
void AdamCore::apply(ParamSet& target, const ParamSet& grads, double lr, Skip&& skip) {
  if (!net::same_layout(m_, grads)) reset(grads);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::vector<std::span<double>> ms, vs, ps;
  net::for_each_block(m_, [&](const net::BlockId&, std::span<double> s) { ms.push_back(s); });
  net::for_each_block(v_, [&](const net::BlockId&, std::span<double> s) { vs.push_back(s); });
  net::for_each_block(target, [&](const net::BlockId&, std::span<double> s) { ps.push_back(s); });
  std::size_t k = 0;
  net::for_each_block(grads, [&](const net::BlockId& id, std::span<const double> g) {
    const std::size_t b = k++;
    if (skip(id)) return;
    auto m = ms[b];
    auto v = vs[b];
    auto p = ps[b];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  });
}

}  // namespace plab::mitigations

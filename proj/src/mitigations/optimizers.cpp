#include "plab/mitigations/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plab/error.hpp"
#include "plab/numkit/linalg.hpp"
#include "plab/numkit/special.hpp"

namespace plab::mitigations {

using net::BlockField;
using net::BlockGroup;
using net::BlockId;

void require_finite(const ParamSet& grads, std::string_view who) {
  net::for_each_block(grads, [&](const BlockId& id, std::span<const double> g) {
    for (double x : g)
      if (!std::isfinite(x)) throw NumericError(std::string(who) + ": non-finite gradient", id.name());
  });
}

void AdamCore::reset(const ParamSet& layout) {
  m_ = net::zeros_like(layout);
  v_ = net::zeros_like(layout);
  t_ = 0;
}

void Adam::sync(const Network& net) {
  if (!core_.matches(net.params())) core_.reset(net.params());
}

void Adam::step(Network& net, const StepInput& in, double lr) {
  require_finite(in.grads, "adam");
  if (!net::same_layout(in.grads, net.params())) throw InvalidInput("adam: gradient layout mismatch");
  if (!core_.matches(net.params())) core_.reset(net.params());
  core_.apply(net.params(), in.grads, lr, [&](const BlockId& id) { return !net.trainable(id); });
}

void adam_step(Adam& opt, Network& net, const ParamSet& grads, double lr) { opt.step(net, StepInput{grads}, lr); }

// --- TRAC -------------------------------------------------------------------

Trac::Trac(TracConfig cfg) : cfg_(std::move(cfg)), adam_(cfg_.base) {
  if (cfg_.betas.empty()) throw InvalidInput("trac: empty discount set");
  for (double b : cfg_.betas)
    if (!(b > 0.0 && b < 1.0)) throw InvalidInput("trac: discounts must lie in (0, 1)");
  if (!(cfg_.eps > 0.0)) throw InvalidInput("trac: eps must be > 0");
}

void Trac::reset(const Network& net) {
  ref_ = net.params();
  base_ = net.params();
  adam_.reset(net.params());
  v_.assign(cfg_.betas.size(), 0.0);
  sigma_.assign(cfg_.betas.size(), 0.0);
  s_.assign(cfg_.betas.size(), 0.0);
  scale_ = 0.0;
}

void Trac::sync(const Network& net) {
  if (ref_.layers.empty() || !net::same_layout(ref_, net.params())) {
    reset(net);
    return;
  }
  std::vector<std::span<double>> bs;
  net::for_each_block(base_, [&](const BlockId&, std::span<double> b) { bs.push_back(b); });
  std::vector<std::span<const double>> ps;
  net::for_each_block(net.params(), [&](const BlockId&, std::span<const double> p) { ps.push_back(p); });
  std::size_t k = 0;
  net::for_each_block(ref_, [&](const BlockId&, std::span<double> r) {
    const auto p = ps[k];
    const auto b = bs[k++];
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double delta = p[i] - (r[i] + scale_ * (b[i] - r[i]));
      r[i] += delta;
      b[i] += delta;
    }
  });
}

void Trac::step(Network& net, const StepInput& in, double lr) {
  require_finite(in.grads, "trac");
  if (!net::same_layout(ref_, net.params())) reset(net);
  ParamSet cand = base_;
  adam_.apply(cand, in.grads, lr, [&](const BlockId& id) { return !net.trainable(id); });
  trac_step(*this, net, in.grads, cand);
}

void trac_combine(Network& net, const ParamSet& ref, const ParamSet& cand, double s) {
  const double keep = 1.0 - s;
  std::vector<std::span<const double>> cs;
  net::for_each_block(cand, [&](const BlockId&, std::span<const double> c) { cs.push_back(c); });
  std::size_t k = 0;
  net::for_each_block_pair(net.params(), ref, [&](const BlockId& id, std::span<double> p, std::span<const double> r) {
    const auto c = cs[k++];
    if (!net.trainable(id)) return;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = keep * r[i] + s * c[i];
  });
}

void trac_step(Trac& opt, Network& net, const ParamSet& grads, const ParamSet& base_candidate) {
  if (!net::same_layout(grads, opt.ref_) || !net::same_layout(base_candidate, opt.ref_))
    throw InvalidInput("trac_step: layout differs from the reference point");
  require_finite(grads, "trac");

  double h = 0.0;
  std::vector<std::span<const double>> bs, rs;
  net::for_each_block(opt.base_, [&](const BlockId&, std::span<const double> s) { bs.push_back(s); });
  net::for_each_block(opt.ref_, [&](const BlockId&, std::span<const double> s) { rs.push_back(s); });
  std::size_t k = 0;
  net::for_each_block(grads, [&](const BlockId& id, std::span<const double> g) {
    const std::size_t b = k++;
    if (!net.trainable(id)) return;
    for (std::size_t i = 0; i < g.size(); ++i) h += g[i] * (bs[b][i] - rs[b][i]);
  });

  static const double kNorm = numkit::erfi(1.0 / std::sqrt(2.0));
  const double eps = opt.cfg_.eps;
  double total = 0.0;
  for (std::size_t j = 0; j < opt.cfg_.betas.size(); ++j) {
    const double beta = opt.cfg_.betas[j];
    opt.v_[j] = beta * beta * opt.v_[j] + h * h;
    opt.sigma_[j] = beta * opt.sigma_[j] - h;
    double arg = opt.sigma_[j] / (std::sqrt(2.0 * opt.v_[j]) + eps);
    if (std::abs(arg) > numkit::kErfiDomain) {
      arg = std::clamp(arg, -numkit::kErfiDomain, numkit::kErfiDomain);
      ++opt.saturations_;
    }
    opt.s_[j] = eps / kNorm * numkit::erfi(arg);
    total += opt.s_[j];
  }
  opt.scale_ = std::max(0.0, total);
  opt.base_ = base_candidate;
  trac_combine(net, opt.ref_, opt.base_, opt.scale_);
}

// --- Kron -------------------------------------------------------------------

Matrix kron_precondition(const Matrix& s_inv, const Matrix& g, const Matrix& a_inv) {
  return numkit::matmul(numkit::matmul(s_inv, g), a_inv);
}

void Kron::reset(const Network& net) {
  layers_.clear();
  for (const auto& spec : net.specs()) {
    const std::size_t in = spec.in_dim + 1;
    Factors f{Matrix::identity(in), Matrix::identity(spec.out_dim), {}, {}};
    layers_.push_back(std::move(f));
  }
  steps_ = 0;
  refresh_inverses();
}

void Kron::sync(const Network& net) {
  if (layers_.size() != net.depth()) reset(net);
}

Matrix Kron::damped_inverse(const Matrix& f) {
  Matrix m = f;
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += cfg_.damping;
  if (auto inv = numkit::spd_inverse(m); inv && numkit::all_finite(inv->values())) return std::move(*inv);
  ++fallbacks_;
  Matrix d(m.rows(), m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) d(i, i) = m(i, i) > 0.0 ? 1.0 / m(i, i) : 1.0;
  return d;
}

void Kron::refresh_inverses() {
  for (auto& f : layers_) {
    f.a_inv = damped_inverse(f.a);
    f.s_inv = damped_inverse(f.s);
  }
}

void Kron::step(Network& net, const StepInput& in, double lr) {
  if (!in.trace || in.linear_grads.size() != net.depth())
    throw InvalidInput("kron: a forward trace and per-layer linear gradients are required");
  require_finite(in.grads, "kron");
  if (!net::same_layout(in.grads, net.params())) throw InvalidInput("kron: gradient layout mismatch");
  if (layers_.size() != net.depth()) reset(net);

  const double d = cfg_.ema_decay;
  auto& params = net.params();
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const Matrix& dz = in.linear_grads[l];
    if (dz.rows() == 0 || !net.trainable(BlockId{BlockGroup::layer, l})) continue;
    const Matrix& x = in.trace->layer_input(l);
    const std::size_t batch = x.rows();
    const std::size_t n_in = x.cols();
    Matrix a(batch, n_in + 1);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < n_in; ++c) a(r, c) = x(r, c);
      a(r, n_in) = 1.0;
    }
    const Matrix aa = numkit::matmul_tn(a, a);
    const Matrix ss = numkit::matmul_tn(dz, dz);
    const double b = static_cast<double>(batch);
    auto& f = layers_[l];
    for (std::size_t i = 0; i < aa.storage().size(); ++i)
      f.a.storage()[i] = d * f.a.storage()[i] + (1.0 - d) * aa.storage()[i] / b;
    for (std::size_t i = 0; i < ss.storage().size(); ++i)
      f.s.storage()[i] = d * f.s.storage()[i] + (1.0 - d) * ss.storage()[i] * b;
  }
  if (steps_ % cfg_.inverse_interval == 0) refresh_inverses();
  ++steps_;

  for (std::size_t l = 0; l < net.depth(); ++l) {
    const BlockId wid{BlockGroup::layer, l};
    if (!net.trainable(wid)) continue;
    auto& p = params.layers[l];
    const auto& g = in.grads.layers[l];
    const std::size_t out = p.weight.rows();
    const std::size_t n_in = p.weight.cols();
    Matrix gg(out, n_in + 1);
    for (std::size_t r = 0; r < out; ++r) {
      for (std::size_t c = 0; c < n_in; ++c) gg(r, c) = g.weight(r, c);
      gg(r, n_in) = g.bias[r];
    }
    const Matrix pre = kron_precondition(layers_[l].s_inv, gg, layers_[l].a_inv);
    for (std::size_t r = 0; r < out; ++r) {
      for (std::size_t c = 0; c < n_in; ++c) p.weight(r, c) -= lr * pre(r, c);
      p.bias[r] -= lr * pre(r, n_in);
    }
    for (std::size_t i = 0; i < p.gain.size(); ++i) {
      p.gain[i] -= lr * g.gain[i];
      p.offset[i] -= lr * g.offset[i];
    }
  }
  if (!params.injections.empty()) {
    auto& head = params.injections.back().trainable;
    const auto& g = in.grads.injections.back().trainable;
    for (std::size_t i = 0; i < head.weight.storage().size(); ++i) head.weight.storage()[i] -= lr * g.weight.storage()[i];
    for (std::size_t i = 0; i < head.bias.size(); ++i) head.bias[i] -= lr * g.bias[i];
    for (std::size_t i = 0; i < head.gain.size(); ++i) {
      head.gain[i] -= lr * g.gain[i];
      head.offset[i] -= lr * g.offset[i];
    }
  }
}

void kron_step(Kron& opt, Network& net, const net::ForwardTrace& trace, std::span<const Matrix> linear_grads,
               const ParamSet& grads, double lr) {
  opt.step(net, StepInput{grads, &trace, linear_grads}, lr);
}

}  // namespace plab::mitigations

#include "plab/mitigations/regularizers.hpp"

#include <cmath>
#include <string>

#include "plab/error.hpp"

namespace plab::mitigations {

using net::BlockGroup;
using net::BlockId;

RegKind parse_reg_kind(std::string_view name) {
  if (name == "l2") return RegKind::l2;
  if (name == "regenerative") return RegKind::regenerative;
  if (name == "parseval") return RegKind::parseval;
  throw ValidationError("unknown regularizer '" + std::string(name) + "'");
}

namespace {

/// Anchor of each block for the regenerative penalty.
std::span<const double> anchor(const net::Network& net, const BlockId& id) {
  const auto& src = id.group == BlockGroup::layer ? net.init_snapshot() : net.params();
  std::span<const double> out;
  const std::size_t want_index = id.index;
  const auto want_group = id.group == BlockGroup::layer ? BlockGroup::layer : BlockGroup::injected_copy;
  net::for_each_block(src, [&](const BlockId& b, auto s) {
    if (b.group == want_group && b.index == want_index && b.field == id.field) out = s;
  });
  return out;
}

}  // namespace

RegTerm reg_loss(RegKind kind, const net::Network& net, double alpha, double s) {
  if (!(alpha >= 0.0)) throw InvalidInput("reg_loss: alpha must be >= 0");
  RegTerm t;
  t.grad = net::zeros_like(net.params());

  if (kind == RegKind::parseval) {
    if (!(s > 0.0)) throw InvalidInput("reg_loss: parseval scale s must be > 0");
    const auto& specs = net.specs();
    for (std::size_t l = 0; l + 1 < specs.size(); ++l) {
      if (!net.trainable(BlockId{BlockGroup::layer, l})) continue;
      const auto& w = net.params().layers[l].weight;
      auto m = numkit::matmul_nt(w, w);
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) -= s;
      const double norm = numkit::frobenius_norm(m);
      t.value += alpha * norm;
      if (norm > 0.0) {
        auto g = numkit::matmul(m, w);
        const double k = 2.0 * alpha / norm;
        auto& dst = t.grad.layers[l].weight.storage();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = k * g.storage()[i];
      }
    }
    return t;
  }

  net::ParamSet& grad = t.grad;
  net::for_each_block_pair(net.params(), grad, [&](const BlockId& id, std::span<const double> p, std::span<double> g) {
    if (!net.trainable(id)) return;
    std::span<const double> ref;
    if (kind == RegKind::regenerative) ref = anchor(net, id);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = kind == RegKind::regenerative ? p[i] - ref[i] : p[i];
      sum += d * d;
      g[i] = 2.0 * alpha * d;
    }
    t.value += alpha * sum;
  });
  return t;
}

}  // namespace plab::mitigations

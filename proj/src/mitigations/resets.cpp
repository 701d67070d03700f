#include "plab/mitigations/resets.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "plab/error.hpp"
#include "plab/metrics/metrics.hpp"

namespace plab::mitigations {

using net::BlockField;
using net::BlockGroup;
using net::BlockId;
using net::DenseParams;

namespace {

void blend(std::vector<double>& dst, const std::vector<double>& fresh, double keep, double beta) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = keep * dst[i] + beta * fresh[i];
}

void blend_dense(DenseParams& p, const DenseParams& fresh, double beta) {
  const double keep = 1.0 - beta;
  blend(p.weight.storage(), fresh.weight.storage(), keep, beta);
  blend(p.bias, fresh.bias, keep, beta);
  blend(p.gain, fresh.gain, keep, beta);
  blend(p.offset, fresh.offset, keep, beta);
}

void zero_column(Matrix& w, std::size_t col) {
  for (std::size_t r = 0; r < w.rows(); ++r) w(r, col) = 0.0;
}

}  // namespace

void shrink_perturb(Network& net, double beta, RngStream& stream) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidInput("shrink_perturb: beta must lie in [0, 1]");
  const auto& specs = net.specs();
  auto& params = net.params();
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto fresh = net::draw_dense(specs[l], stream);
    if (net.trainable(BlockId{BlockGroup::layer, l, BlockField::weight})) blend_dense(params.layers[l], fresh, beta);
  }
  if (!params.injections.empty()) {
    const auto fresh = net::draw_dense(specs.back(), stream);
    blend_dense(params.injections.back().trainable, fresh, beta);
  }
}

void inject_plasticity(Network& net, RngStream& stream) {
  net.push_injection(net::draw_dense(net.specs().back(), stream));
}

std::size_t redo_reset(Network& net, const Matrix& probe, double tau, RngStream& stream) {
  if (probe.rows() == 0) throw InvalidInput("redo_reset: empty probe");
  if (!(tau >= 0.0)) throw InvalidInput("redo_reset: tau must be >= 0");
  const auto trace = net.forward(probe);
  const auto& specs = net.specs();
  auto& params = net.params();
  const std::size_t depth = specs.size();

  // All scores come from the single pre-reset pass.
  std::vector<std::vector<std::size_t>> dormant(depth);
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    const auto scores = metrics::neuron_scores(trace.layers[l].post);
    const std::size_t h = specs[l].out_dim;
    const bool twin = net::doubles_width(specs[l].activation);
    for (std::size_t i = 0; i < h; ++i)
      if (scores[i] <= tau && (!twin || scores[i + h] <= tau)) dormant[l].push_back(i);
  }

  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    if (dormant[l].empty()) continue;
    const auto fresh = net::draw_dense(specs[l], stream);
    auto& p = params.layers[l];
    const std::size_t h = specs[l].out_dim;
    const bool twin = net::doubles_width(specs[l].activation);
    for (std::size_t i : dormant[l]) {
      for (std::size_t c = 0; c < p.weight.cols(); ++c) p.weight(i, c) = fresh.weight(i, c);
      p.bias[i] = fresh.bias[i];
      if (!p.gain.empty()) {
        p.gain[i] = fresh.gain[i];
        p.offset[i] = fresh.offset[i];
      }
      std::vector<std::size_t> cols{i};
      if (twin) cols.push_back(i + h);
      for (std::size_t c : cols) {
        zero_column(params.layers[l + 1].weight, c);
        if (l + 2 == depth)
          for (auto& inj : params.injections) {
            zero_column(inj.trainable.weight, c);
            zero_column(inj.frozen_copy.weight, c);
          }
      }
      ++count;
    }
  }
  return count;
}

ResetScope parse_reset_scope(std::string_view name) {
  if (name == "final") return ResetScope::final_layer;
  if (name == "all") return ResetScope::all;
  throw ValidationError("reset scope must be 'final' or 'all', got '" + std::string(name) + "'");
}

void reset_layers(Network& net, ResetScope scope, RngStream& stream) {
  const auto& specs = net.specs();
  auto& params = net.params();
  const std::size_t first = scope == ResetScope::all ? 0 : specs.size() - 1;
  for (std::size_t l = first; l < specs.size(); ++l) params.layers[l] = net::draw_dense(specs[l], stream);
  net.clear_injections();
}

void nap_project(Network& net) {
  const auto& specs = net.specs();
  for (std::size_t l = 0; l + 1 < specs.size(); ++l)
    if (!specs[l].layer_norm)
      throw InvalidInput("nap_project: hidden layer " + std::to_string(l) + " lacks layer norm");
  auto& params = net.params();
  const auto& init = net.init_snapshot();
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (!net.trainable(BlockId{BlockGroup::layer, l, BlockField::weight})) continue;
    const double target = numkit::frobenius_norm(init.layers[l].weight);
    const double now = numkit::frobenius_norm(params.layers[l].weight);
    if (now == 0.0 || !std::isfinite(now))
      throw SingularProjection("nap_project: layer " + std::to_string(l) + " has zero or non-finite norm");
    const double k = target / now;
    for (double& w : params.layers[l].weight.storage()) w *= k;
  }
}

}  // namespace plab::mitigations

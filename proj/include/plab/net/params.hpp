#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "plab/net/layer.hpp"

namespace plab::net {

/// Trainable head added by plasticity injection plus its frozen twin.
struct HeadPair {
  DenseParams trainable;
  DenseParams frozen_copy;

  friend bool operator==(const HeadPair&, const HeadPair&) = default;
};

/// Every parameter of a network, in declaration order: base layers first, then
/// injected head pairs. Also used for gradients and optimizer moments.
struct ParamSet {
  std::vector<DenseParams> layers;
  std::vector<HeadPair> injections;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

enum class BlockGroup { layer, injected_trainable, injected_copy };
enum class BlockField { weight, bias, gain, offset };

struct BlockId {
  BlockGroup group = BlockGroup::layer;
  std::size_t index = 0;
  BlockField field = BlockField::weight;

  std::string name() const;
  friend bool operator==(const BlockId&, const BlockId&) = default;
};

namespace detail {

template <class D, class F>
void visit_dense(D& d, BlockGroup g, std::size_t i, F& f) {
  f(BlockId{g, i, BlockField::weight}, std::span(d.weight.storage()));
  f(BlockId{g, i, BlockField::bias}, std::span(d.bias));
  if (!d.gain.empty()) f(BlockId{g, i, BlockField::gain}, std::span(d.gain));
  if (!d.offset.empty()) f(BlockId{g, i, BlockField::offset}, std::span(d.offset));
}

}  // namespace detail

/// Calls f(BlockId, span) for every parameter block in declaration order.
template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, ParamSet>
void for_each_block(P& set, F&& f) {
  for (std::size_t i = 0; i < set.layers.size(); ++i)
    detail::visit_dense(set.layers[i], BlockGroup::layer, i, f);
  for (std::size_t i = 0; i < set.injections.size(); ++i) {
    detail::visit_dense(set.injections[i].trainable, BlockGroup::injected_trainable, i, f);
    detail::visit_dense(set.injections[i].frozen_copy, BlockGroup::injected_copy, i, f);
  }
}

bool same_layout(const ParamSet& a, const ParamSet& b);
ParamSet zeros_like(const ParamSet& p);
std::size_t parameter_count(const ParamSet& p);
std::vector<double> flatten(const ParamSet& p);
/// Overwrites p from a flat vector in declaration order.
void unflatten(ParamSet& p, std::span<const double> flat);
/// y += alpha * x
void axpy(ParamSet& y, double alpha, const ParamSet& x);
void scale(ParamSet& p, double alpha);

[[noreturn]] void throw_layout_mismatch();

/// Walks two sets of identical layout side by side: f(BlockId, span a, span b).
/// Throws InvalidInput when layouts differ.
template <class A, class B, class F>
void for_each_block_pair(A& a, B& b, F&& f) {
  if (!same_layout(a, b)) throw_layout_mismatch();
  std::vector<std::span<std::conditional_t<std::is_const_v<B>, const double, double>>> bs;
  for_each_block(b, [&](const BlockId&, auto s) { bs.push_back(s); });
  std::size_t k = 0;
  for_each_block(a, [&](const BlockId& id, auto s) { f(id, s, bs[k++]); });
}

}  // namespace plab::net

#include "plab/net/params.hpp"

#include <string>

#include "plab/error.hpp"

namespace plab::net {

std::string BlockId::name() const {
  std::string s;
  switch (group) {
    case BlockGroup::layer: s = "layers."; break;
    case BlockGroup::injected_trainable: s = "injections.trainable."; break;
    case BlockGroup::injected_copy: s = "injections.frozen_copy."; break;
  }
  s += std::to_string(index);
  switch (field) {
    case BlockField::weight: return s + ".weight";
    case BlockField::bias: return s + ".bias";
    case BlockField::gain: return s + ".gain";
    case BlockField::offset: return s + ".offset";
  }
  return s;
}

namespace {

bool same_dense(const DenseParams& a, const DenseParams& b) {
  return a.weight.same_shape(b.weight) && a.bias.size() == b.bias.size() && a.gain.size() == b.gain.size() &&
         a.offset.size() == b.offset.size();
}

DenseParams zero_dense(const DenseParams& p) {
  return DenseParams{Matrix(p.weight.rows(), p.weight.cols()), std::vector<double>(p.bias.size()),
                     std::vector<double>(p.gain.size()), std::vector<double>(p.offset.size())};
}

}  // namespace

void throw_layout_mismatch() { throw InvalidInput("parameter sets have different layouts"); }

bool same_layout(const ParamSet& a, const ParamSet& b) {
  if (a.layers.size() != b.layers.size() || a.injections.size() != b.injections.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (!same_dense(a.layers[i], b.layers[i])) return false;
  for (std::size_t i = 0; i < a.injections.size(); ++i)
    if (!same_dense(a.injections[i].trainable, b.injections[i].trainable) ||
        !same_dense(a.injections[i].frozen_copy, b.injections[i].frozen_copy))
      return false;
  return true;
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet z;
  z.layers.reserve(p.layers.size());
  for (const auto& d : p.layers) z.layers.push_back(zero_dense(d));
  for (const auto& h : p.injections) z.injections.push_back({zero_dense(h.trainable), zero_dense(h.frozen_copy)});
  return z;
}

std::size_t parameter_count(const ParamSet& p) {
  std::size_t n = 0;
  for_each_block(p, [&](const BlockId&, std::span<const double> s) { n += s.size(); });
  return n;
}

std::vector<double> flatten(const ParamSet& p) {
  std::vector<double> out;
  out.reserve(parameter_count(p));
  for_each_block(p, [&](const BlockId&, std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

void unflatten(ParamSet& p, std::span<const double> flat) {
  if (flat.size() != parameter_count(p)) throw InvalidInput("unflatten: size mismatch");
  std::size_t k = 0;
  for_each_block(p, [&](const BlockId&, std::span<double> s) {
    for (double& v : s) v = flat[k++];
  });
}

void axpy(ParamSet& y, double alpha, const ParamSet& x) {
  for_each_block_pair(y, x, [&](const BlockId&, std::span<double> ys, std::span<const double> xs) {
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += alpha * xs[i];
  });
}

void scale(ParamSet& p, double alpha) {
  for_each_block(p, [&](const BlockId&, std::span<double> s) {
    for (double& v : s) v *= alpha;
  });
}

}  // namespace plab::net

#include "plab/net/layer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plab/error.hpp"
#include "plab/numkit/linalg.hpp"

namespace plab::net {

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::crelu: return "crelu";
    case Activation::fourier: return "fourier";
    case Activation::linear: return "linear";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::relu, Activation::tanh, Activation::crelu, Activation::fourier, Activation::linear})
    if (to_string(a) == name) return a;
  throw SpecError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(InitScheme::Kind k) noexcept {
  switch (k) {
    case InitScheme::Kind::orthogonal: return "orthogonal";
    case InitScheme::Kind::uniform_fan_in: return "uniform_fan_in";
    case InitScheme::Kind::normal: return "normal";
  }
  return "?";
}

InitScheme::Kind parse_init_kind(std::string_view name) {
  for (auto k : {InitScheme::Kind::orthogonal, InitScheme::Kind::uniform_fan_in, InitScheme::Kind::normal})
    if (to_string(k) == name) return k;
  throw SpecError("unknown init scheme '" + std::string(name) + "'");
}

void validate_chain(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw SpecError("network needs at least one layer");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (specs[l].in_dim == 0 || specs[l].out_dim == 0)
      throw SpecError("layer " + std::to_string(l) + ": dimensions must be positive");
    if (l > 0 && specs[l].in_dim != specs[l - 1].width())
      throw SpecError("layer " + std::to_string(l) + ": in_dim " + std::to_string(specs[l].in_dim) +
                      " does not match previous width " + std::to_string(specs[l - 1].width()));
  }
}

DenseParams draw_dense(const LayerSpec& spec, RngStream& stream) {
  DenseParams p;
  const std::size_t out = spec.out_dim;
  const std::size_t in = spec.in_dim;
  switch (spec.init.kind) {
    case InitScheme::Kind::orthogonal: {
      const std::size_t big = std::max(out, in);
      const std::size_t small = std::min(out, in);
      Matrix g(big, small);
      for (double& v : g.values()) v = stream.normal(0.0, 1.0);
      Matrix q = numkit::orthonormal_columns(g);
      p.weight = out >= in ? std::move(q) : numkit::transpose(q);
      for (double& v : p.weight.values()) v *= spec.init.gain;
      p.bias.assign(out, 0.0);
      break;
    }
    case InitScheme::Kind::uniform_fan_in: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      p.weight = Matrix(out, in);
      for (double& v : p.weight.values()) v = stream.uniform(-bound, bound);
      p.bias.resize(out);
      for (double& v : p.bias) v = stream.uniform(-bound, bound);
      break;
    }
    case InitScheme::Kind::normal: {
      p.weight = Matrix(out, in);
      for (double& v : p.weight.values()) v = stream.normal(spec.init.mean, spec.init.stddev);
      p.bias.resize(out);
      for (double& v : p.bias) v = stream.normal(spec.init.mean, spec.init.stddev);
      break;
    }
  }
  if (spec.layer_norm) {
    p.gain.assign(out, 1.0);
    p.offset.assign(out, 0.0);
  }
  return p;
}

}  // namespace plab::net

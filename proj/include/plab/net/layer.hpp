#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "plab/numkit/matrix.hpp"
#include "plab/numkit/rng.hpp"

namespace plab::net {

using numkit::Matrix;
using numkit::RngStream;

enum class Activation { relu, tanh, crelu, fourier, linear };

std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view name);

/// crelu and fourier concatenate two views of the pre-activation.
inline constexpr bool doubles_width(Activation a) noexcept {
  return a == Activation::crelu || a == Activation::fourier;
}

struct InitScheme {
  enum class Kind { orthogonal, uniform_fan_in, normal };
  Kind kind = Kind::orthogonal;
  double gain = 1.4142135623730951;  // orthogonal only
  double mean = 0.0;                 // normal only
  double stddev = 0.0;               // normal only

  static InitScheme orthogonal(double gain) { return {Kind::orthogonal, gain, 0.0, 0.0}; }
  static InitScheme uniform_fan_in() { return {Kind::uniform_fan_in, 1.0, 0.0, 0.0}; }
  static InitScheme normal(double mean, double stddev) { return {Kind::normal, 1.0, mean, stddev}; }

  friend bool operator==(const InitScheme&, const InitScheme&) = default;
};

std::string_view to_string(InitScheme::Kind k) noexcept;
InitScheme::Kind parse_init_kind(std::string_view name);

struct LayerSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  Activation activation = Activation::relu;
  bool layer_norm = false;
  InitScheme init{};

  /// Width of the post-activation (2 * out_dim for crelu/fourier).
  std::size_t width() const noexcept { return doubles_width(activation) ? 2 * out_dim : out_dim; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Throws SpecError unless dims are positive and each layer's in_dim equals the
/// previous layer's post-activation width.
void validate_chain(const std::vector<LayerSpec>& specs);

/// Parameters of one dense layer. weight is out_dim x in_dim, so the layer
/// computes x * weight^T + bias. gain/offset are empty unless layer_norm.
struct DenseParams {
  Matrix weight;
  std::vector<double> bias;
  std::vector<double> gain;
  std::vector<double> offset;

  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

/// Fresh parameters drawn from the layer's declared init distribution.
/// Layer-norm gain starts at 1 and offset at 0.
DenseParams draw_dense(const LayerSpec& spec, RngStream& stream);

/// Layer-norm epsilon.
inline constexpr double kLayerNormEps = 1e-5;

}  // namespace plab::net

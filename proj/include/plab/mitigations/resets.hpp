#pragma once

#include <cstddef>
#include <string_view>

#include "plab/net/network.hpp"

namespace plab::mitigations {

using net::Matrix;
using net::Network;
using numkit::RngStream;

/// theta <- (1 - beta) theta + beta theta_fresh for every trainable block, where
/// theta_fresh is a new draw from each layer's declared init (layer-norm affine
/// included: gain toward 1, offset toward 0). Frozen heads are left alone but
/// still consume their draws so the stream advances by a layout-only amount.
void shrink_perturb(Network& net, double beta, RngStream& stream);

/// Freezes the current head and stacks a fresh trainable head minus its frozen copy.
void inject_plasticity(Network& net, RngStream& stream);

/// Resets every tau-dormant hidden neuron measured on probe: its incoming row,
/// bias and layer-norm affine are redrawn from the init distribution and its
/// outgoing weights (in every head when injections exist) are zeroed. With a
/// width-doubling activation a neuron counts as dormant only when both of its
/// output features are. Returns the number of neurons reset.
std::size_t redo_reset(Network& net, const Matrix& probe, double tau, RngStream& stream);

enum class ResetScope { final_layer, all };
ResetScope parse_reset_scope(std::string_view name);

/// Redraws the selected layers in construction order and removes injected heads,
/// so scope=all on the construction stream reproduces the initial network.
void reset_layers(Network& net, ResetScope scope, RngStream& stream);

/// Rescales each trainable base-layer weight matrix to its initial Frobenius norm.
/// Requires layer norm on every hidden layer. Throws SingularProjection on a zero matrix.
void nap_project(Network& net);

}  // namespace plab::mitigations

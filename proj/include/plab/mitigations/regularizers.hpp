#pragma once

#include <string_view>

#include "plab/net/network.hpp"

namespace plab::mitigations {

enum class RegKind { l2, regenerative, parseval };
RegKind parse_reg_kind(std::string_view name);

struct RegTerm {
  double value = 0.0;
  net::ParamSet grad;  // same layout as the network; zero on frozen blocks
};

/// l2:           alpha * ||theta||^2 over trainable blocks
/// regenerative: alpha * ||theta - theta_init||^2 (an injected head is anchored to its frozen copy)
/// parseval:     alpha * sum ||W W^T - s I||_F over hidden-layer weights
RegTerm reg_loss(RegKind kind, const net::Network& net, double alpha, double s = 1.0);

}  // namespace plab::mitigations

#pragma once

#include <functional>
#include <vector>

#include "plab/mitigations/optimizers.hpp"
#include "plab/net/network.hpp"

namespace plab::learners {

using net::Matrix;
using net::Network;
using net::ParamSet;
using numkit::RngStream;

/// Callbacks through which a plan reaches into every gradient step.
struct UpdateHooks {
  /// Adds regularizer gradients into grads and returns the regularizer loss.
  std::function<double(const Network&, ParamSet&)> regularize;
  /// Runs after each optimizer step (soft shrink-perturb, norm projection).
  std::function<void(Network&)> after_step;
};

struct StepReport {
  double reg_loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

/// One optimizer step: regularizers, optional global-norm clipping
/// (max_grad_norm <= 0 disables it), the step itself, then after_step.
StepReport apply_gradients(Network& net, const net::ForwardTrace& trace, net::BackwardResult& back,
                           mitigations::Optimizer& opt, double lr, double max_grad_norm, const UpdateHooks& hooks);

/// Rows of m at the given indices.
Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& idx);

/// Fisher-Yates shuffle of 0..n-1 driven by stream.
std::vector<std::size_t> permutation(std::size_t n, RngStream& stream);

/// log-softmax of one row.
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace plab::learners

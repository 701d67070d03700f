#pragma once

#include <cstddef>
#include <vector>

#include "plab/net/layer.hpp"
#include "plab/net/params.hpp"

namespace plab::net {

/// Intermediate values of one dense layer over a batch.
struct LayerTrace {
  Matrix linear;                 // x * W^T + b
  Matrix normalized;             // (linear - mean) * inv_std; empty without layer norm
  std::vector<double> inv_std;   // per row; empty without layer norm
  Matrix pre;                    // input to the nonlinearity
  Matrix post;                   // activation output
};

struct HeadTrace {
  LayerTrace trainable;
  LayerTrace frozen_copy;
};

struct ForwardTrace {
  Matrix input;
  std::vector<LayerTrace> layers;    // base layers; the last one is the original head
  std::vector<HeadTrace> injections;
  Matrix output;

  std::size_t batch_size() const noexcept { return input.rows(); }
  /// Input to base layer l (the batch for l = 0).
  const Matrix& layer_input(std::size_t l) const { return l == 0 ? input : layers[l - 1].post; }
  /// Post-activations of every layer except the output layer.
  std::vector<const Matrix*> hidden_activations() const;
};

struct BackwardResult {
  ParamSet grads;                   // zero for frozen blocks
  std::vector<Matrix> linear_grads; // dLoss/d(linear) per base layer; empty where no gradient flows
  Matrix input_grad;
};

/// Dense feed-forward network with a frozen copy of its initial parameters.
///
/// After plasticity injection the output is
///   head(x) + sum_k [trainable_k(x) - frozen_copy_k(x)]
/// where the original head, every copy, and every trainable head except the
/// newest are frozen: they produce no parameter gradients and pass no gradient
/// back into the torso.
class Network {
 public:
  Network() = default;

  /// Draws every layer in order from stream. Throws SpecError for a bad chain.
  static Network create(std::vector<LayerSpec> specs, RngStream& stream);
  /// Reassembles a network from stored parts (checkpoint loading).
  static Network from_parts(std::vector<LayerSpec> specs, ParamSet params, ParamSet init_snapshot);

  const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  std::size_t depth() const noexcept { return specs_.size(); }
  std::size_t input_dim() const noexcept { return specs_.front().in_dim; }
  std::size_t output_dim() const noexcept { return specs_.back().width(); }

  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }
  const ParamSet& init_snapshot() const noexcept { return init_snapshot_; }

  std::size_t injection_count() const noexcept { return params_.injections.size(); }
  bool trainable(const BlockId& id) const noexcept;

  /// Freezes the current head and appends (fresh, copy of fresh).
  void push_injection(const DenseParams& fresh);
  void clear_injections() noexcept { params_.injections.clear(); }

  ForwardTrace forward(const Matrix& batch) const;
  Matrix predict(const Matrix& batch) const { return forward(batch).output; }
  BackwardResult backward(const ForwardTrace& trace, const Matrix& output_grad) const;

 private:
  std::vector<LayerSpec> specs_;
  ParamSet params_;
  ParamSet init_snapshot_;
};

/// Single-layer building blocks, exposed for the optimizers and for tests.
LayerTrace dense_forward(const LayerSpec& spec, const DenseParams& p, const Matrix& x);

struct DenseGradients {
  DenseParams params;
  Matrix linear;
  Matrix input;
};
DenseGradients dense_backward(const LayerSpec& spec, const DenseParams& p, const Matrix& x,
                              const LayerTrace& trace, const Matrix& post_grad, bool want_input_grad);

}  // namespace plab::net

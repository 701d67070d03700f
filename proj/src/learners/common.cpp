#include "plab/learners/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plab/error.hpp"
#include "plab/metrics/metrics.hpp"

namespace plab::learners {

StepReport apply_gradients(Network& net, const net::ForwardTrace& trace, net::BackwardResult& back,
                           mitigations::Optimizer& opt, double lr, double max_grad_norm, const UpdateHooks& hooks) {
  StepReport r;
  if (hooks.regularize) r.reg_loss = hooks.regularize(net, back.grads);
  if (!std::isfinite(r.reg_loss)) throw NumericError("regularizer loss is not finite", "regularizer");
  r.grad_norm = metrics::gradient_norm(back.grads);
  if (max_grad_norm > 0.0 && r.grad_norm > max_grad_norm) {
    const double k = max_grad_norm / r.grad_norm;
    net::scale(back.grads, k);
    for (auto& m : back.linear_grads)
      for (double& x : m.storage()) x *= k;
  }
  opt.step(net, mitigations::StepInput{back.grads, &trace, back.linear_grads}, lr);
  if (hooks.after_step) hooks.after_step(net);
  return r;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& idx) { return numkit::gather_rows(m, idx); }

std::vector<std::size_t> permutation(std::size_t n, RngStream& stream) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[stream.below(i)]);
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace plab::learners

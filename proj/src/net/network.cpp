#include "plab/net/network.hpp"

#include <cmath>
#include <string>

#include "plab/error.hpp"

namespace plab::net {

namespace {

void check_dense_shape(const LayerSpec& spec, const DenseParams& p, const std::string& what) {
  const bool ok = p.weight.rows() == spec.out_dim && p.weight.cols() == spec.in_dim &&
                  p.bias.size() == spec.out_dim &&
                  p.gain.size() == (spec.layer_norm ? spec.out_dim : 0) &&
                  p.offset.size() == (spec.layer_norm ? spec.out_dim : 0);
  if (!ok) throw SpecError(what + ": parameter shapes do not match the layer spec");
}

Matrix activate(Activation act, const Matrix& pre) {
  const std::size_t b = pre.rows();
  const std::size_t h = pre.cols();
  switch (act) {
    case Activation::relu: {
      Matrix out(b, h);
      for (std::size_t i = 0; i < pre.size(); ++i) out.storage()[i] = pre.storage()[i] > 0.0 ? pre.storage()[i] : 0.0;
      return out;
    }
    case Activation::tanh: {
      Matrix out(b, h);
      for (std::size_t i = 0; i < pre.size(); ++i) out.storage()[i] = std::tanh(pre.storage()[i]);
      return out;
    }
    case Activation::crelu: {
      Matrix out(b, 2 * h);
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < h; ++j) {
          const double v = pre(r, j);
          out(r, j) = v > 0.0 ? v : 0.0;
          out(r, j + h) = v < 0.0 ? -v : 0.0;
        }
      return out;
    }
    case Activation::fourier: {
      Matrix out(b, 2 * h);
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < h; ++j) {
          out(r, j) = std::sin(pre(r, j));
          out(r, j + h) = std::cos(pre(r, j));
        }
      return out;
    }
    case Activation::linear: return pre;
  }
  return pre;
}

Matrix activation_backward(Activation act, const LayerTrace& t, const Matrix& g) {
  const Matrix& pre = t.pre;
  const std::size_t b = pre.rows();
  const std::size_t h = pre.cols();
  Matrix d(b, h);
  switch (act) {
    case Activation::relu:
      for (std::size_t i = 0; i < pre.size(); ++i) d.storage()[i] = pre.storage()[i] > 0.0 ? g.storage()[i] : 0.0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < pre.size(); ++i) {
        const double y = t.post.storage()[i];
        d.storage()[i] = g.storage()[i] * (1.0 - y * y);
      }
      break;
    case Activation::crelu:
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < h; ++j) {
          const double v = pre(r, j);
          d(r, j) = (v > 0.0 ? g(r, j) : 0.0) - (v < 0.0 ? g(r, j + h) : 0.0);
        }
      break;
    case Activation::fourier:
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < h; ++j)
          d(r, j) = g(r, j) * std::cos(pre(r, j)) - g(r, j + h) * std::sin(pre(r, j));
      break;
    case Activation::linear: d = g; break;
  }
  return d;
}

}  // namespace

std::vector<const Matrix*> ForwardTrace::hidden_activations() const {
  std::vector<const Matrix*> out;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) out.push_back(&layers[l].post);
  return out;
}

LayerTrace dense_forward(const LayerSpec& spec, const DenseParams& p, const Matrix& x) {
  if (x.cols() != spec.in_dim) throw InvalidInput("dense_forward: input width does not match in_dim");
  LayerTrace t;
  t.linear = numkit::matmul_nt(x, p.weight);
  const std::size_t b = x.rows();
  const std::size_t h = spec.out_dim;
  for (std::size_t r = 0; r < b; ++r) {
    auto row = t.linear.row(r);
    for (std::size_t j = 0; j < h; ++j) row[j] += p.bias[j];
  }
  if (spec.layer_norm) {
    t.normalized = Matrix(b, h);
    t.inv_std.resize(b);
    t.pre = Matrix(b, h);
    for (std::size_t r = 0; r < b; ++r) {
      const auto z = t.linear.row(r);
      double mean = 0.0;
      for (double v : z) mean += v;
      mean /= static_cast<double>(h);
      double var = 0.0;
      for (double v : z) var += (v - mean) * (v - mean);
      var /= static_cast<double>(h);
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      t.inv_std[r] = inv;
      for (std::size_t j = 0; j < h; ++j) {
        const double xh = (z[j] - mean) * inv;
        t.normalized(r, j) = xh;
        t.pre(r, j) = p.gain[j] * xh + p.offset[j];
      }
    }
  } else {
    t.pre = t.linear;
  }
  t.post = activate(spec.activation, t.pre);
  return t;
}

DenseGradients dense_backward(const LayerSpec& spec, const DenseParams& p, const Matrix& x,
                              const LayerTrace& t, const Matrix& post_grad, bool want_input_grad) {
  if (!post_grad.same_shape(t.post)) throw InvalidInput("dense_backward: gradient shape mismatch");
  const std::size_t b = x.rows();
  const std::size_t h = spec.out_dim;
  DenseGradients g;
  Matrix dpre = activation_backward(spec.activation, t, post_grad);

  if (spec.layer_norm) {
    g.params.gain.assign(h, 0.0);
    g.params.offset.assign(h, 0.0);
    g.linear = Matrix(b, h);
    std::vector<double> dxhat(h);
    for (std::size_t r = 0; r < b; ++r) {
      const auto xh = t.normalized.row(r);
      const auto dp = dpre.row(r);
      double mean_d = 0.0;
      double mean_dx = 0.0;
      for (std::size_t j = 0; j < h; ++j) {
        g.params.gain[j] += dp[j] * xh[j];
        g.params.offset[j] += dp[j];
        dxhat[j] = dp[j] * p.gain[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xh[j];
      }
      mean_d /= static_cast<double>(h);
      mean_dx /= static_cast<double>(h);
      auto dz = g.linear.row(r);
      for (std::size_t j = 0; j < h; ++j) dz[j] = t.inv_std[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
    }
  } else {
    g.linear = std::move(dpre);
  }

  g.params.weight = numkit::matmul_tn(g.linear, x);
  g.params.bias.assign(h, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    const auto dz = g.linear.row(r);
    for (std::size_t j = 0; j < h; ++j) g.params.bias[j] += dz[j];
  }
  if (want_input_grad) g.input = numkit::matmul(g.linear, p.weight);
  return g;
}

Network Network::create(std::vector<LayerSpec> specs, RngStream& stream) {
  validate_chain(specs);
  Network net;
  net.specs_ = std::move(specs);
  net.params_.layers.reserve(net.specs_.size());
  for (const auto& s : net.specs_) net.params_.layers.push_back(draw_dense(s, stream));
  net.init_snapshot_ = net.params_;
  return net;
}

Network Network::from_parts(std::vector<LayerSpec> specs, ParamSet params, ParamSet init_snapshot) {
  validate_chain(specs);
  if (params.layers.size() != specs.size() || init_snapshot.layers.size() != specs.size() ||
      !init_snapshot.injections.empty())
    throw SpecError("from_parts: layer count mismatch");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    check_dense_shape(specs[l], params.layers[l], "layer " + std::to_string(l));
    check_dense_shape(specs[l], init_snapshot.layers[l], "init layer " + std::to_string(l));
  }
  for (const auto& h : params.injections) {
    check_dense_shape(specs.back(), h.trainable, "injected head");
    check_dense_shape(specs.back(), h.frozen_copy, "injected head copy");
  }
  Network net;
  net.specs_ = std::move(specs);
  net.params_ = std::move(params);
  net.init_snapshot_ = std::move(init_snapshot);
  return net;
}

bool Network::trainable(const BlockId& id) const noexcept {
  switch (id.group) {
    case BlockGroup::layer: return !(id.index + 1 == specs_.size() && !params_.injections.empty());
    case BlockGroup::injected_trainable: return id.index + 1 == params_.injections.size();
    case BlockGroup::injected_copy: return false;
  }
  return false;
}

void Network::push_injection(const DenseParams& fresh) {
  check_dense_shape(specs_.back(), fresh, "injected head");
  params_.injections.push_back(HeadPair{fresh, fresh});
}

ForwardTrace Network::forward(const Matrix& batch) const {
  if (specs_.empty()) throw InvalidInput("forward on an empty network");
  if (batch.rows() == 0 || batch.cols() != input_dim())
    throw InvalidInput("forward: batch is " + std::to_string(batch.rows()) + "x" + std::to_string(batch.cols()) +
                       ", network expects width " + std::to_string(input_dim()));
  ForwardTrace t;
  t.input = batch;
  t.layers.reserve(specs_.size());
  for (std::size_t l = 0; l < specs_.size(); ++l)
    t.layers.push_back(dense_forward(specs_[l], params_.layers[l], t.layer_input(l)));

  t.output = t.layers.back().post;
  const Matrix& head_in = t.layer_input(specs_.size() - 1);
  for (const auto& inj : params_.injections) {
    HeadTrace ht{dense_forward(specs_.back(), inj.trainable, head_in),
                 dense_forward(specs_.back(), inj.frozen_copy, head_in)};
    auto& out = t.output.storage();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += ht.trainable.post.storage()[i] - ht.frozen_copy.post.storage()[i];
    t.injections.push_back(std::move(ht));
  }
  return t;
}

BackwardResult Network::backward(const ForwardTrace& trace, const Matrix& output_grad) const {
  const std::size_t depth = specs_.size();
  if (trace.layers.size() != depth || trace.injections.size() != params_.injections.size())
    throw InvalidInput("backward: trace was produced by a different network");
  if (!output_grad.same_shape(trace.output)) throw InvalidInput("backward: output_grad shape mismatch");

  BackwardResult r;
  r.grads = zeros_like(params_);
  r.linear_grads.resize(depth);

  const std::size_t last = depth - 1;
  Matrix g;
  if (params_.injections.empty()) {
    auto d = dense_backward(specs_[last], params_.layers[last], trace.layer_input(last), trace.layers[last],
                            output_grad, true);
    r.grads.layers[last] = std::move(d.params);
    r.linear_grads[last] = std::move(d.linear);
    g = std::move(d.input);
  } else {
    const std::size_t k = params_.injections.size() - 1;
    auto d = dense_backward(specs_[last], params_.injections[k].trainable, trace.layer_input(last),
                            trace.injections[k].trainable, output_grad, true);
    r.grads.injections[k].trainable = std::move(d.params);
    g = std::move(d.input);
  }
  for (std::size_t l = last; l-- > 0;) {
    auto d = dense_backward(specs_[l], params_.layers[l], trace.layer_input(l), trace.layers[l], g, true);
    r.grads.layers[l] = std::move(d.params);
    r.linear_grads[l] = std::move(d.linear);
    g = std::move(d.input);
  }
  r.input_grad = std::move(g);
  return r;
}

}  // namespace plab::net

#include "plab/metrics/metrics.hpp"

#include <cmath>

#include "json.hpp"
#include "plab/error.hpp"
#include "plab/numkit/linalg.hpp"

namespace plab::metrics {

std::vector<double> neuron_scores(const Matrix& act) {
  if (act.rows() == 0 || act.cols() == 0) throw InvalidInput("neuron_scores: empty activation matrix");
  const std::size_t h = act.cols();
  std::vector<double> mean_abs(h, 0.0);
  for (std::size_t r = 0; r < act.rows(); ++r) {
    const auto row = act.row(r);
    for (std::size_t j = 0; j < h; ++j) mean_abs[j] += std::abs(row[j]);
  }
  double layer_mean = 0.0;
  for (double& m : mean_abs) {
    m /= static_cast<double>(act.rows());
    layer_mean += m;
  }
  layer_mean /= static_cast<double>(h);
  std::vector<double> scores(h, 0.0);
  if (layer_mean == 0.0) return scores;
  for (std::size_t j = 0; j < h; ++j) scores[j] = mean_abs[j] / layer_mean;
  return scores;
}

DormancyResult dormant_ratio(std::span<const Matrix* const> layers, double tau) {
  if (!(tau >= 0.0)) throw InvalidInput("dormant_ratio: tau must be non-negative");
  if (layers.empty()) throw InvalidInput("dormant_ratio: no layers to evaluate");
  DormancyResult r;
  for (const Matrix* m : layers) {
    auto s = neuron_scores(*m);
    LayerCount c;
    c.total = s.size();
    for (double v : s) c.count += v <= tau ? 1 : 0;
    c.ratio = static_cast<double>(c.count) / static_cast<double>(c.total);
    r.overall.count += c.count;
    r.overall.total += c.total;
    r.layers.push_back(c);
    r.scores.push_back(std::move(s));
  }
  r.overall.ratio = static_cast<double>(r.overall.count) / static_cast<double>(r.overall.total);
  return r;
}

DormancyResult dormant_ratio(const ForwardTrace& trace, double tau) {
  const auto hidden = trace.hidden_activations();
  return dormant_ratio(std::span<const Matrix* const>(hidden), tau);
}

ActivityResult active_fraction(std::span<const Matrix* const> layers) {
  if (layers.empty()) throw InvalidInput("active_fraction: no layers to evaluate");
  ActivityResult r;
  std::size_t active = 0;
  std::size_t total = 0;
  for (const Matrix* m : layers) {
    if (m->empty()) throw InvalidInput("active_fraction: empty activation matrix");
    std::size_t a = 0;
    for (double v : m->values()) a += v > 0.0 ? 1 : 0;
    r.layers.push_back(static_cast<double>(a) / static_cast<double>(m->size()));
    active += a;
    total += m->size();
  }
  r.overall = static_cast<double>(active) / static_cast<double>(total);
  return r;
}

ActivityResult active_fraction(const ForwardTrace& trace) {
  const auto hidden = trace.hidden_activations();
  return active_fraction(std::span<const Matrix* const>(hidden));
}

std::size_t stable_rank_from_spectrum(std::span<const double> sigma) {
  double total = 0.0;
  for (double s : sigma) total += s;
  if (!(total > 0.0)) throw UndefinedRank("stable_rank: all singular values are zero");
  double cum = 0.0;
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    cum += sigma[k];
    if (cum / total > 0.99) return k + 1;
  }
  return sigma.size();
}

std::size_t stable_rank(const Matrix& features) {
  const auto sv = numkit::svd_values(features);
  return stable_rank_from_spectrum(sv);
}

double effective_rank_from_spectrum(std::span<const double> sigma) {
  double l1 = 0.0;
  for (double s : sigma) l1 += s;
  if (!(l1 > 0.0)) throw UndefinedRank("effective_rank: all singular values are zero");
  double entropy = 0.0;
  for (double s : sigma) {
    const double p = s / l1;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double effective_rank(const Matrix& features) {
  const auto sv = numkit::svd_values(features);
  return effective_rank_from_spectrum(sv);
}

WeightDifference weight_difference(const ParamSet& a, const ParamSet& b) {
  double sq = 0.0;
  std::size_t n = 0;
  net::for_each_block_pair(a, b, [&](const net::BlockId&, std::span<const double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - y[i]) * (x[i] - y[i]);
    n += x.size();
  });
  const double l2 = std::sqrt(sq);
  return {l2, n == 0 ? 0.0 : l2 / static_cast<double>(n)};
}

WeightDifference weight_difference(std::span<const net::DenseParams> a, std::span<const net::DenseParams> b) {
  ParamSet pa{{a.begin(), a.end()}, {}};
  ParamSet pb{{b.begin(), b.end()}, {}};
  return weight_difference(pa, pb);
}

WeightDifference weight_difference(const Network& a, const Network& b) {
  if (a.specs() != b.specs()) throw InvalidInput("weight_difference: architectures differ");
  return weight_difference(a.params(), b.params());
}

double gradient_norm(std::span<const NamedGradient> grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g.values) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient", g.name);
      sq += v * v;
    }
  }
  return std::sqrt(sq);
}

double gradient_norm(const ParamSet& grads) {
  std::vector<NamedGradient> named;
  net::for_each_block(grads, [&](const net::BlockId& id, std::span<const double> s) {
    named.push_back({id.name(), s});
  });
  return gradient_norm(named);
}

namespace {

void fill_ranks(MetricReport& r, const Matrix& features, bool strict) {
  const auto sv = numkit::svd_values(features);
  double total = 0.0;
  for (double s : sv) total += s;
  if (total == 0.0 && !strict) {
    r.stable_rank = 0;
    r.effective_rank = 0.0;
    return;
  }
  r.stable_rank = stable_rank_from_spectrum(sv);
  r.effective_rank = effective_rank_from_spectrum(sv);
}

}  // namespace

std::vector<MetricReport> collect_metrics(const Network& net, const Matrix& probe, const ParamSet* grads,
                                          const ParamSet* baseline, const CollectOptions& opts) {
  const auto trace = net.forward(probe);
  const std::size_t depth = net.depth();
  const ParamSet& base = baseline ? *baseline : net.init_snapshot();
  if (base.layers.size() != depth) throw InvalidInput("collect_metrics: baseline has a different depth");
  if (grads && !net::same_layout(*grads, net.params()))
    throw InvalidInput("collect_metrics: gradient layout does not match the network");

  std::vector<MetricReport> out;
  for (std::size_t l = 0; l < depth; ++l) {
    MetricReport r;
    r.step = opts.step;
    r.scope = "layer" + std::to_string(l);
    const Matrix* post = &trace.layers[l].post;
    r.rdu = dormant_ratio(std::span<const Matrix* const>(&post, 1), opts.tau).overall.ratio;
    r.fau = active_fraction(std::span<const Matrix* const>(&post, 1)).overall;
    fill_ranks(r, *post, opts.strict_ranks);
    const auto wd = weight_difference(std::span(&net.params().layers[l], 1), std::span(&base.layers[l], 1));
    r.weight_diff = wd.l2;
    r.weight_diff_per_param = wd.per_param;
    if (grads) {
      ParamSet one{{grads->layers[l]}, {}};
      r.grad_norm = gradient_norm(one);
    }
    out.push_back(std::move(r));
  }

  MetricReport all;
  all.step = opts.step;
  all.scope = "all";
  if (depth > 1) {
    all.rdu = dormant_ratio(trace, opts.tau).overall.ratio;
    all.fau = active_fraction(trace).overall;
  } else {
    all.rdu = out.front().rdu;
    all.fau = out.front().fau;
  }
  const std::size_t rank_layer = opts.rank_layer.value_or(depth > 1 ? depth - 2 : 0);
  if (rank_layer >= depth) throw InvalidInput("collect_metrics: rank_layer out of range");
  fill_ranks(all, trace.layers[rank_layer].post, opts.strict_ranks);
  const auto wd = base.injections.size() == net.params().injections.size()
                      ? weight_difference(net.params(), base)
                      : weight_difference(std::span(net.params().layers), std::span(base.layers));
  all.weight_diff = wd.l2;
  all.weight_diff_per_param = wd.per_param;
  if (grads) all.grad_norm = gradient_norm(*grads);
  out.push_back(std::move(all));
  return out;
}

std::vector<MetricRecord> to_records(const std::vector<MetricReport>& reports) {
  std::vector<MetricRecord> out;
  for (const auto& r : reports) {
    auto add = [&](const char* name, double v) { out.push_back({r.step, r.scope, name, v}); };
    add("rdu", r.rdu);
    add("fau", r.fau);
    add("stable_rank", static_cast<double>(r.stable_rank));
    add("effective_rank", r.effective_rank);
    add("weight_diff", r.weight_diff);
    add("weight_diff_per_param", r.weight_diff_per_param);
    if (r.grad_norm) add("grad_norm", *r.grad_norm);
  }
  return out;
}

std::string to_jsonl(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["scope"] = r.scope;
  j["metric"] = r.metric;
  j["value"] = r.value;
  return j.dump();
}

MetricRecord parse_metric_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    return {j.at("step").get<std::size_t>(), j.at("scope").get<std::string>(), j.at("metric").get<std::string>(),
            j.at("value").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed metric line: ") + e.what());
  }
}

}  // namespace plab::metrics

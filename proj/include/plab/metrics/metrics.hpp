#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plab/net/network.hpp"

namespace plab::metrics {

using net::ForwardTrace;
using net::Network;
using net::ParamSet;
using numkit::Matrix;

inline constexpr double kDefaultDormancyTau = 0.025;

/// s_i = mean_x |h_i(x)| / ((1/H) sum_k mean_x |h_k(x)|) for each column of a
/// batch x neurons activation matrix. A layer whose mean absolute activation
/// is exactly zero gets all-zero scores, so every neuron counts as dormant.
std::vector<double> neuron_scores(const Matrix& activations);

struct LayerCount {
  std::size_t count = 0;
  std::size_t total = 0;
  double ratio = 0.0;
};

struct DormancyResult {
  std::vector<std::vector<double>> scores;
  std::vector<LayerCount> layers;
  LayerCount overall;
};

/// Ratio of tau-dormant units (score <= tau), per layer and over all layers.
DormancyResult dormant_ratio(std::span<const Matrix* const> layers, double tau);
/// Same, over the hidden post-activations of a trace.
DormancyResult dormant_ratio(const ForwardTrace& trace, double tau);

struct ActivityResult {
  std::vector<double> layers;
  double overall = 0.0;
};

/// Fraction of (sample, unit) activations strictly above zero.
ActivityResult active_fraction(std::span<const Matrix* const> layers);
ActivityResult active_fraction(const ForwardTrace& trace);

/// min{k : sum_{i<=k} sigma_i / sum_j sigma_j > 0.99}, sigma descending.
/// This is the cumulative-spectrum definition, not ||F||_F^2 / sigma_1^2.
std::size_t stable_rank(const Matrix& features);
std::size_t stable_rank_from_spectrum(std::span<const double> sigma);

/// exp of the Shannon entropy of the l1-normalized singular values.
double effective_rank(const Matrix& features);
double effective_rank_from_spectrum(std::span<const double> sigma);

struct WeightDifference {
  double l2 = 0.0;
  double per_param = 0.0;  // l2 divided by the number of parameters
};

WeightDifference weight_difference(const ParamSet& a, const ParamSet& b);
/// Throws InvalidInput unless both networks share specs and parameter layout.
WeightDifference weight_difference(const Network& a, const Network& b);
WeightDifference weight_difference(std::span<const net::DenseParams> a, std::span<const net::DenseParams> b);

struct NamedGradient {
  std::string name;
  std::span<const double> values;
};

/// sqrt(sum_p ||grad_p||^2). Throws NumericError naming the first non-finite block.
double gradient_norm(std::span<const NamedGradient> grads);
double gradient_norm(const ParamSet& grads);

struct MetricReport {
  std::size_t step = 0;
  std::string scope;
  double rdu = 0.0;
  double fau = 0.0;
  std::size_t stable_rank = 0;
  double effective_rank = 0.0;
  double weight_diff = 0.0;
  double weight_diff_per_param = 0.0;
  std::optional<double> grad_norm;
};

struct CollectOptions {
  double tau = kDefaultDormancyTau;
  std::size_t step = 0;
  /// Layer whose post-activations feed the aggregate rank metrics; defaults to
  /// the penultimate layer.
  std::optional<std::size_t> rank_layer;
  /// When false, an all-zero feature matrix reports rank 0 instead of throwing
  /// UndefinedRank.
  bool strict_ranks = true;
};

/// One report per base layer (scope "layer<i>") followed by the aggregate
/// (scope "all"). The aggregate RDU/FAU cover hidden layers only; its weight
/// and gradient norms cover every parameter. Without a baseline the weight
/// difference is taken against the init snapshot (base layers only once
/// plasticity injection has added heads).
std::vector<MetricReport> collect_metrics(const Network& net, const Matrix& probe, const ParamSet* grads,
                                          const ParamSet* baseline, const CollectOptions& opts = {});

struct MetricRecord {
  std::size_t step = 0;
  std::string scope;
  std::string metric;
  double value = 0.0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

/// Flattens reports into one record per metric per scope.
std::vector<MetricRecord> to_records(const std::vector<MetricReport>& reports);
/// {"step": int, "scope": string, "metric": string, "value": float}
std::string to_jsonl(const MetricRecord& r);
MetricRecord parse_metric_line(const std::string& line);

}  // namespace plab::metrics

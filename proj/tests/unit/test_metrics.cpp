#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "plab/error.hpp"
#include "plab/metrics/metrics.hpp"

using namespace plab;
using namespace plab::metrics;
using numkit::NormalDist;
using numkit::RngStream;
using numkit::rng_draw;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  RngStream s(seed, 5);
  return Matrix(r, c, rng_draw(s, NormalDist{0.0, scale}, r * c));
}

/// Crafted relu-style activations: some all-zero columns, some tiny, mixed signs rows.
Matrix crafted(std::uint64_t seed) {
  auto m = random_matrix(9, 7, seed);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = std::max(0.0, m(i, j));
    m(i, 2) = 0.0;
    m(i, 5) *= 1e-3;
  }
  return m;
}

}  // namespace

TEST(EffectiveRank, IdentityIsExact) {
  for (std::size_t n : {2u, 3u, 8u}) EXPECT_NEAR(effective_rank(Matrix::identity(n)), static_cast<double>(n), 1e-12);
}

TEST(EffectiveRank, ScaleInvariantAndBounded) {
  const auto m = random_matrix(20, 6, 1);
  const double er = effective_rank(m);
  auto scaled = m;
  for (double& v : scaled.values()) v *= 37.0;
  EXPECT_NEAR(effective_rank(scaled), er, 1e-10);
  EXPECT_GE(er, 1.0);
  EXPECT_LE(er, 6.0);
}

TEST(EffectiveRank, MatchesSpectrumFormula) {
  const auto m = random_matrix(10, 5, 2);
  const auto sv = oracle::singular_values(m);
  double total = 0.0;
  for (double s : sv) total += s;
  double h = 0.0;
  for (double s : sv)
    if (s > 0) h -= (s / total) * std::log(s / total);
  EXPECT_NEAR(effective_rank(m), std::exp(h), 1e-9);
}

TEST(StableRank, RankOneAndIdentity) {
  Matrix u(6, 1);
  for (std::size_t i = 0; i < 6; ++i) u(i, 0) = static_cast<double>(i + 1);
  const auto rank1 = numkit::matmul_nt(u, u);
  EXPECT_EQ(stable_rank(rank1), 1u);
  for (std::size_t n : {1u, 4u, 9u}) EXPECT_EQ(stable_rank(Matrix::identity(n)), n);
}

TEST(StableRank, CumulativeThreshold) {
  // 99 percent of the l1 mass is strictly exceeded only once the fourth value joins.
  const std::vector<double> sigma{50.0, 30.0, 18.0, 1.5, 0.5};
  EXPECT_EQ(stable_rank_from_spectrum(sigma), 4u);
  const std::vector<double> exact{99.0, 1.0};
  EXPECT_EQ(stable_rank_from_spectrum(exact), 2u);  // 0.99 is not > 0.99
}

TEST(Ranks, ZeroFeaturesAreUndefined) {
  Matrix z(4, 3);
  EXPECT_THROW(effective_rank(z), UndefinedRank);
  EXPECT_THROW(stable_rank(z), UndefinedRank);
}

TEST(Dormancy, MatchesDoubleLoopOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto a = crafted(seed);
    const auto b = random_matrix(9, 4, seed + 10);
    std::vector<const Matrix*> layers{&a, &b};
    for (double tau : {0.0, 0.025, 0.1, 0.5}) {
      const auto r = dormant_ratio(layers, tau);
      const auto ca = oracle::dormant_count(a, tau);
      const auto cb = oracle::dormant_count(b, tau);
      EXPECT_EQ(r.layers[0].count, ca);
      EXPECT_EQ(r.layers[1].count, cb);
      EXPECT_EQ(r.overall.count, ca + cb);
      EXPECT_EQ(r.overall.total, 11u);
      EXPECT_EQ(r.overall.ratio, static_cast<double>(ca + cb) / 11.0);
    }
  }
}

TEST(Dormancy, ScoresNormaliseToLayerMean) {
  const auto a = crafted(3);
  const auto s = neuron_scores(a);
  double mean = 0.0;
  for (double v : s) mean += v;
  EXPECT_NEAR(mean / static_cast<double>(s.size()), 1.0, 1e-12);
  EXPECT_EQ(s[2], 0.0);
  Matrix dead(3, 4);
  for (double v : neuron_scores(dead)) EXPECT_EQ(v, 0.0);
  std::vector<const Matrix*> one{&dead};
  EXPECT_EQ(dormant_ratio(one, 0.0).overall.ratio, 1.0);
}

TEST(Activity, MatchesDoubleLoopOracle) {
  const auto a = crafted(7);
  const auto b = random_matrix(9, 4, 8);
  std::vector<const Matrix*> layers{&a, &b};
  const auto r = active_fraction(layers);
  const double want_a = static_cast<double>(oracle::active_count(a)) / static_cast<double>(a.size());
  EXPECT_EQ(r.layers[0], want_a);
  EXPECT_EQ(r.overall,
            static_cast<double>(oracle::active_count(a) + oracle::active_count(b)) / static_cast<double>(a.size() + b.size()));
}

TEST(GradientNorm, PythagoreanTriple) {
  const std::vector<double> a{3.0}, b{4.0};
  const std::vector<NamedGradient> g{{"a", a}, {"b", b}};
  EXPECT_EQ(gradient_norm(g), 5.0);
}

TEST(GradientNorm, NamesTheBadBlock) {
  const std::vector<double> a{1.0}, b{std::nan("")};
  const std::vector<NamedGradient> g{{"a", a}, {"layer1.bias", b}};
  try {
    gradient_norm(g);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.where(), "layer1.bias");
  }
}

TEST(WeightDifference, L2AndPerParam) {
  net::DenseParams a, b;
  a.weight = Matrix{{1, 2}, {3, 4}};
  a.bias = {0, 0};
  b = a;
  b.weight(0, 0) += 3.0;
  b.bias[1] -= 4.0;
  const auto wd = weight_difference(std::span(&a, 1), std::span(&b, 1));
  EXPECT_EQ(wd.l2, 5.0);
  EXPECT_EQ(wd.per_param, 5.0 / 6.0);
}

TEST(CollectMetrics, ReportsEveryLayerAndAggregate) {
  std::vector<net::LayerSpec> specs{{4, 8, net::Activation::relu, false, net::InitScheme::orthogonal(1.4)},
                                    {8, 6, net::Activation::relu, false, net::InitScheme::orthogonal(1.4)},
                                    {6, 2, net::Activation::linear, false, net::InitScheme::orthogonal(1.0)}};
  RngStream s(1, 1);
  auto net = Network::create(specs, s);
  const auto probe = random_matrix(32, 4, 3);
  auto grads = net::zeros_like(net.params());
  grads.layers[0].bias[0] = 3.0;
  grads.layers[2].bias[0] = 4.0;
  CollectOptions o;
  o.step = 17;
  const auto reps = collect_metrics(net, probe, &grads, nullptr, o);
  ASSERT_EQ(reps.size(), 4u);
  EXPECT_EQ(reps.back().scope, "all");
  EXPECT_EQ(*reps.back().grad_norm, 5.0);
  EXPECT_EQ(*reps[0].grad_norm, 3.0);
  EXPECT_EQ(reps.back().weight_diff, 0.0);

  const auto tr = net.forward(probe);
  const auto c0 = oracle::dormant_count(tr.layers[0].post, o.tau);
  const auto c1 = oracle::dormant_count(tr.layers[1].post, o.tau);
  EXPECT_EQ(reps.back().rdu, static_cast<double>(c0 + c1) / 14.0);
  EXPECT_EQ(reps.back().stable_rank, stable_rank(tr.layers[1].post));

  const auto recs = to_records(reps);
  EXPECT_EQ(recs.size(), 4u * 7u);
  for (const auto& r : recs) EXPECT_EQ(r.step, 17u);
}

TEST(CollectMetrics, StrictRanksOnDeadLayer) {
  std::vector<net::LayerSpec> specs{{3, 4, net::Activation::relu, false, net::InitScheme::normal(-5.0, 0.0)},
                                    {4, 1, net::Activation::linear, false, net::InitScheme::orthogonal(1.0)}};
  RngStream s(1, 1);
  auto net = Network::create(specs, s);
  Matrix probe(5, 3, 1.0);
  EXPECT_THROW(collect_metrics(net, probe, nullptr, nullptr), UndefinedRank);
  CollectOptions lax;
  lax.strict_ranks = false;
  const auto reps = collect_metrics(net, probe, nullptr, nullptr, lax);
  EXPECT_EQ(reps.back().stable_rank, 0u);
  EXPECT_EQ(reps.back().rdu, 1.0);
}

TEST(Jsonl, RoundTripIsExact) {
  const MetricRecord r{42, "layer1", "effective_rank", 0.1 + 0.2};
  const auto line = to_jsonl(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(line.rfind("{\"step\":42,\"scope\":\"layer1\",\"metric\":\"effective_rank\",\"value\":", 0), 0u);
  EXPECT_EQ(parse_metric_line(line), r);
  EXPECT_THROW(parse_metric_line("{\"step\":1}"), InvalidInput);
}

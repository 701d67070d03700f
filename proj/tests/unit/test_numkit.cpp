#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "plab/error.hpp"
#include "plab/numkit/linalg.hpp"
#include "plab/numkit/matrix.hpp"
#include "plab/numkit/rng.hpp"
#include "plab/numkit/special.hpp"

using namespace plab;
using namespace plab::numkit;

TEST(Philox, KnownAnswerVectors) {
  using A4 = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32_10({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u}), (A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, ReproducibleAndSeekable) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform01(), b.uniform01());
  RngStream c(42, 7);
  c.seek(50);
  RngStream d(42, 7);
  for (int i = 0; i < 50; ++i) d.normal(0.0, 1.0);
  EXPECT_EQ(c.position(), d.position());
  EXPECT_EQ(c.uniform01(), d.uniform01());
}

TEST(RngStream, EveryDrawConsumesOneBlock) {
  RngStream s(1, 2);
  s.uniform01();
  s.normal(0.0, 1.0);
  s.below(17);
  s.uniform(-3.0, 3.0);
  EXPECT_EQ(s.position(), 4u);
  auto v = rng_draw(s, NormalDist{}, 10);
  EXPECT_EQ(v.size(), 10u);
  EXPECT_EQ(s.position(), 14u);
}

TEST(RngStream, StreamsAndLabelsSeparate) {
  RngStream a(5, 0), b(5, 1);
  EXPECT_NE(a.next_u64(), b.next_u64());
  RngStream base(5, 0);
  EXPECT_NE(base.derive("x").stream_id(), base.derive("y").stream_id());
  EXPECT_EQ(base.derive("x"), base.derive("x"));
  EXPECT_EQ(label_hash("env"), label_hash("env"));
  EXPECT_NE(label_hash("env"), label_hash("init"));
}

TEST(RngStream, UniformMomentsAndRange) {
  RngStream s(9, 9);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 5e-3);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 2e-3);
}

TEST(RngStream, NormalMoments) {
  RngStream s(3, 1);
  const auto v = rng_draw(s, NormalDist{2.0, 3.0}, 200000);
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  var /= static_cast<double>(v.size() - 1);
  EXPECT_NEAR(m, 2.0, 0.03);
  EXPECT_NEAR(var, 9.0, 0.1);
}

TEST(RngStream, BelowCoversRangeUniformly) {
  RngStream s(11, 0);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = s.below(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Matrix, ProductsAgreeWithLoops) {
  RngStream s(4, 4);
  Matrix a(3, 5, rng_draw(s, NormalDist{}, 15));
  Matrix b(5, 4, rng_draw(s, NormalDist{}, 20));
  const auto c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double r = 0.0;
      for (std::size_t k = 0; k < 5; ++k) r += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), r, 1e-12);
    }
  const auto nt = matmul_nt(a, transpose(b));
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(nt.storage()[i], c.storage()[i], 1e-12);
  const auto tn = matmul_tn(transpose(a), b);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(tn.storage()[i], c.storage()[i], 1e-12);
}

TEST(Svd, MatchesGramEigenOracle) {
  for (auto [r, c] : std::vector<std::pair<std::size_t, std::size_t>>{{6, 4}, {4, 6}, {8, 8}, {1, 5}, {12, 3}}) {
    RngStream s(r * 31 + c, 0);
    Matrix m(r, c, rng_draw(s, NormalDist{}, r * c));
    const auto got = svd_values(m);
    const auto want = oracle::singular_values(m);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9) << r << "x" << c << " i=" << i;
    EXPECT_TRUE(std::is_sorted(got.rbegin(), got.rend()));
  }
}

TEST(Svd, KnownSpectra) {
  const auto id = svd_values(Matrix::identity(5));
  for (double v : id) EXPECT_NEAR(v, 1.0, 1e-14);
  Matrix d{{3, 0, 0}, {0, -2, 0}};
  const auto sv = svd_values(d);
  EXPECT_NEAR(sv[0], 3.0, 1e-14);
  EXPECT_NEAR(sv[1], 2.0, 1e-14);
  Matrix zero(3, 3);
  for (double v : svd_values(zero)) EXPECT_EQ(v, 0.0);
}

TEST(Svd, RejectsBadInput) {
  EXPECT_THROW(svd_values(Matrix()), InvalidInput);
  Matrix m(2, 2, 1.0);
  m(0, 1) = std::nan("");
  EXPECT_THROW(svd_values(m), InvalidInput);
}

TEST(Linalg, OrthonormalColumns) {
  RngStream s(2, 2);
  Matrix m(7, 4, rng_draw(s, NormalDist{}, 28));
  const auto q = orthonormal_columns(m);
  const auto g = matmul_tn(q, q);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g(i, j), i == j ? 1.0 : 0.0, 1e-12);
}

TEST(Linalg, SpdInverse) {
  RngStream s(8, 1);
  Matrix b(5, 5, rng_draw(s, NormalDist{}, 25));
  auto a = matmul_tn(b, b);
  for (std::size_t i = 0; i < 5; ++i) a(i, i) += 0.5;
  const auto inv = spd_inverse(a);
  ASSERT_TRUE(inv.has_value());
  const auto p = matmul(a, *inv);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(p(i, j), i == j ? 1.0 : 0.0, 1e-10);
  Matrix singular{{1, 2}, {2, 4}};
  EXPECT_FALSE(spd_inverse(singular).has_value());
  Matrix negative{{-1, 0}, {0, 1}};
  EXPECT_FALSE(spd_inverse(negative).has_value());
}

TEST(Erfi, MatchesQuadrature) {
  for (double x : {0.0, 0.1, 0.5, 1.0, 1.5, 2.0, 3.0}) {
    const double want = oracle::erfi_quadrature(x);
    EXPECT_NEAR(numkit::erfi(x), want, 1e-9 * std::max(1.0, std::abs(want))) << x;
  }
  EXPECT_NEAR(numkit::erfi(1.0), oracle::erfi_quadrature(1.0), 1e-9);
}

TEST(Erfi, OddAndMonotone) {
  double prev = -1e300;
  for (double x = -5.0; x <= 5.0; x += 0.25) {
    EXPECT_NEAR(numkit::erfi(-x), -numkit::erfi(x), 1e-12 * std::max(1.0, std::abs(numkit::erfi(x))));
    EXPECT_GT(numkit::erfi(x), prev);
    prev = numkit::erfi(x);
  }
  EXPECT_EQ(numkit::erfi(0.0), 0.0);
}

TEST(Erfi, DomainLimit) {
  EXPECT_NO_THROW(numkit::erfi(kErfiDomain));
  EXPECT_THROW(numkit::erfi(kErfiDomain + 0.01), DomainError);
  EXPECT_THROW(numkit::erfi(std::nan("")), DomainError);
}

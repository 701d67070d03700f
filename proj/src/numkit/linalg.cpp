#include "plab/numkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "plab/error.hpp"

namespace plab::numkit {

std::vector<double> svd_values(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw InvalidInput("svd_values: empty matrix");
  if (!all_finite(m.values())) throw InvalidInput("svd_values: non-finite entry");

  // Rows of x are the vectors being orthogonalized: the columns of m when m is
  // tall, the rows of m otherwise. Either way there are min(rows, cols) of them.
  Matrix x = m.rows() >= m.cols() ? transpose(m) : m;
  const std::size_t k = x.rows();
  const std::size_t len = x.cols();

  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        auto xp = x.row(p);
        auto xq = x.row(q);
        const double alpha = dot(xp, xp);
        const double beta = dot(xq, xq);
        const double gamma = dot(xp, xq);
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < len; ++i) {
          const double a = xp[i];
          const double b = xq[i];
          xp[i] = c * a - s * b;
          xq[i] = s * a + c * b;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sv(k);
  for (std::size_t i = 0; i < k; ++i) sv[i] = std::sqrt(dot(x.row(i), x.row(i)));
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

Matrix orthonormal_columns(const Matrix& tall) {
  if (tall.rows() < tall.cols()) throw InvalidInput("orthonormal_columns: need rows >= cols");
  // Work on the transpose so each vector is a contiguous row.
  Matrix q = transpose(tall);
  for (std::size_t j = 0; j < q.rows(); ++j) {
    auto qj = q.row(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        const double r = dot(q.row(i), qj);
        auto qi = q.row(i);
        for (std::size_t t = 0; t < qj.size(); ++t) qj[t] -= r * qi[t];
      }
      const double norm = std::sqrt(dot(qj, qj));
      if (norm == 0.0) throw NumericError("orthonormal_columns: rank-deficient input");
      for (double& v : qj) v /= norm;
    }
  }
  return transpose(q);
}

std::optional<Matrix> spd_inverse(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInput("spd_inverse: matrix not square");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  // inv(L) by forward substitution, then inv(A) = inv(L)^T inv(L).
  Matrix linv(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    linv(c, c) = 1.0 / l(c, c);
    for (std::size_t i = c + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = c; k < i; ++k) s -= l(i, k) * linv(k, c);
      linv(i, c) = s / l(i, i);
    }
  }
  Matrix inv = matmul_tn(linv, linv);
  if (!all_finite(inv.values())) return std::nullopt;
  return inv;
}

}  // namespace plab::numkit

#pragma once
// Reference computations written independently of the library's algorithms.
// Everything here favours the most literal formula over speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "plab/numkit/matrix.hpp"

namespace oracle {

using plab::numkit::Matrix;

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations, descending.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

/// Singular values as square roots of the eigenvalues of the smaller Gram matrix.
inline std::vector<double> singular_values(const Matrix& m) {
  const bool wide = m.cols() > m.rows();
  const std::size_t k = wide ? m.rows() : m.cols();
  Matrix g(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      if (wide)
        for (std::size_t c = 0; c < m.cols(); ++c) s += m(i, c) * m(j, c);
      else
        for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, i) * m(r, j);
      g(i, j) = s;
    }
  auto ev = symmetric_eigenvalues(g);
  for (double& e : ev) e = std::sqrt(std::max(e, 0.0));
  return ev;
}

/// Composite Simpson rule on n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

inline double erfi_quadrature(double x) {
  return 2.0 / std::sqrt(M_PI) * simpson([](double t) { return std::exp(t * t); }, 0.0, x, 20000);
}

/// Dormant-unit count in one layer, literally: mean |h| per neuron against the layer mean.
inline std::size_t dormant_count(const Matrix& h, double tau) {
  std::vector<double> mean_abs(h.cols(), 0.0);
  for (std::size_t j = 0; j < h.cols(); ++j) {
    for (std::size_t i = 0; i < h.rows(); ++i) mean_abs[j] += std::abs(h(i, j));
    mean_abs[j] /= static_cast<double>(h.rows());
  }
  double layer = 0.0;
  for (double v : mean_abs) layer += v;
  layer /= static_cast<double>(h.cols());
  std::size_t n = 0;
  for (double v : mean_abs) {
    const double score = layer == 0.0 ? 0.0 : v / layer;
    if (score <= tau) ++n;
  }
  return n;
}

inline std::size_t active_count(const Matrix& h) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j)
      if (h(i, j) > 0.0) ++n;
  return n;
}

/// Categorical projection through the triangular kernel
/// m_i = sum_j p_j max(0, 1 - |clip(r + gamma z_j) - z_i| / dz).
inline std::vector<double> projection(const std::vector<double>& p, double r, bool done, double gamma, double v_min,
                                      double v_max) {
  const std::size_t n = p.size();
  const double dz = (v_max - v_min) / static_cast<double>(n - 1);
  std::vector<double> m(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double zj = v_min + dz * static_cast<double>(j);
    const double tz = std::clamp(r + (done ? 0.0 : gamma) * zj, v_min, v_max);
    for (std::size_t i = 0; i < n; ++i) {
      const double zi = v_min + dz * static_cast<double>(i);
      m[i] += p[j] * std::max(0.0, 1.0 - std::abs(tz - zi) / dz);
    }
  }
  return m;
}

/// A_t = sum_{l >= 0} (gamma lambda)^l delta_{t+l}, truncated at the first terminal.
inline std::vector<double> gae(const std::vector<double>& r, const std::vector<double>& v, const std::vector<bool>& d,
                               double bootstrap, double gamma, double lam) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : bootstrap;
    delta[t] = r[t] + (d[t] ? 0.0 : gamma * next) - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      adv[t] += w * delta[l];
      if (d[l]) break;
      w *= gamma * lam;
    }
  }
  return adv;
}

/// Central differences of f with respect to every entry of x.
inline std::vector<double> central_differences(const std::function<double()>& f, std::span<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), or |a - b| when both are tiny.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale < 1e-10 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

}  // namespace oracle

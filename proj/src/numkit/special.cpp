#include "plab/numkit/special.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "plab/error.hpp"

namespace plab::numkit {

double erfi(double x) {
  if (!std::isfinite(x) || std::abs(x) > kErfiDomain)
    throw DomainError("erfi: |x| must not exceed 6, got " + std::to_string(x));
  if (x == 0.0) return 0.0;

  // Maclaurin series sum_n x^(2n+1) / (n! (2n+1)). Every term has the sign of
  // x, so the series is summed on |x| and the sign restored at the end.
  const double ax = std::abs(x);
  const double x2 = ax * ax;
  double power = ax;  // x^(2n+1) / n!
  double sum = 0.0;
  double carry = 0.0;  // Kahan compensation
  for (int n = 0; n < 400; ++n) {
    const double term = power / (2.0 * n + 1.0);
    const double y = term - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
    if (n > x2 && term < 1e-18 * sum) break;
    power *= x2 / (n + 1.0);
  }
  const double value = 2.0 / std::sqrt(std::numbers::pi) * sum;
  return x < 0.0 ? -value : value;
}

}  // namespace plab::numkit

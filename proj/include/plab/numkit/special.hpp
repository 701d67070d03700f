#pragma once

namespace plab::numkit {

/// Largest |x| accepted by erfi.
inline constexpr double kErfiDomain = 6.0;

/// Imaginary error function (2/sqrt(pi)) * integral_0^x exp(t^2) dt.
/// Throws DomainError for |x| > kErfiDomain.
double erfi(double x);

}  // namespace plab::numkit

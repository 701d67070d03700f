#pragma once

#include <optional>
#include <vector>

#include "plab/numkit/matrix.hpp"

namespace plab::numkit {

/// Singular values of m in descending order (min(rows, cols) of them).
///
/// One-sided Jacobi (Hestenes) on the shorter dimension. Throws InvalidInput on
/// non-finite entries or an empty matrix.
std::vector<double> svd_values(const Matrix& m);

/// Orthonormal basis for the columns of a tall matrix (rows >= cols), via
/// twice-iterated modified Gram-Schmidt (the Q of a QR factorization with
/// positive R diagonal).
Matrix orthonormal_columns(const Matrix& tall);

/// Inverse of a symmetric positive definite matrix via Cholesky; nullopt when
/// the factorization breaks down.
std::optional<Matrix> spd_inverse(const Matrix& a);

}  // namespace plab::numkit

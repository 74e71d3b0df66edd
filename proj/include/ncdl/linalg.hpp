#pragma once

#include <span>
#include <vector>

#include "ncdl/matrix.hpp"

namespace ncdl {

/// Thin SVD A = U diag(S) Vt with k = min(rows, cols) factors and
/// singular values sorted descending.
struct SvdResult {
    Matrix u;                            // rows x k
    std::vector<double> singular_values; // k, descending, nonnegative
    Matrix vt;                           // k x cols
};

SvdResult svd(const Matrix& a);

/// Moore-Penrose pseudo-inverse; singular values <= rcond * s_max are
/// treated as zero.
Matrix pseudo_inverse(const Matrix& a, double rcond);

/// Default rcond: max(rows, cols) * machine epsilon.
Matrix pseudo_inverse(const Matrix& a);

/// Best rank-r approximation in Frobenius norm. Ties in the spectrum keep
/// the earlier factors of the decomposition so the result is deterministic.
Matrix best_rank(const Matrix& a, std::size_t r);

/// K x K Gram matrix of the simplex equiangular tight frame:
/// K/(K-1) (I - 11^T/K). Requires K >= 2.
Matrix etf_gram(std::size_t k);

/// Gram matrix of the general orthogonal frame with leg lengths a_k:
/// diag(a_k^2) / sum(a_j^2). Requires all a_k > 0; trace is 1.
Matrix gof_gram(std::span<const double> a);

}  // namespace ncdl

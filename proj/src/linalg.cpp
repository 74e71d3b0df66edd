#include "ncdl/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

namespace ncdl {

namespace {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using MutMap = Eigen::Map<EigenRowMajor>;

ConstMap map_of(const Matrix& m) {
    return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    MutMap(c.data(), c.rows(), c.cols()).noalias() = map_of(a) * map_of(b);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
    Matrix c(a.cols(), b.cols());
    MutMap(c.data(), c.rows(), c.cols()).noalias() = map_of(a).transpose() * map_of(b);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
    Matrix c(a.rows(), b.rows());
    MutMap(c.data(), c.rows(), c.cols()).noalias() = map_of(a) * map_of(b).transpose();
    return c;
}

SvdResult svd(const Matrix& a) {
    if (a.empty()) throw ArgumentError("svd: empty matrix");
    a.check_finite();

    const auto m = static_cast<Eigen::Index>(a.rows());
    const auto n = static_cast<Eigen::Index>(a.cols());
    const Eigen::Index k = std::min(m, n);

    EigenRowMajor u, v;
    Eigen::VectorXd s;
    // Jacobi is the accuracy reference for small problems; divide-and-conquer
    // keeps the large scatter-matrix decompositions tractable.
    if (k <= 16) {
        Eigen::JacobiSVD<EigenRowMajor> dec(map_of(a),
                                            Eigen::ComputeThinU | Eigen::ComputeThinV);
        if (dec.info() != Eigen::Success)
            throw DecompositionError("svd did not converge");
        u = dec.matrixU();
        v = dec.matrixV();
        s = dec.singularValues();
    } else {
        Eigen::BDCSVD<EigenRowMajor> dec(map_of(a),
                                         Eigen::ComputeThinU | Eigen::ComputeThinV);
        if (dec.info() != Eigen::Success)
            throw DecompositionError("svd did not converge");
        u = dec.matrixU();
        v = dec.matrixV();
        s = dec.singularValues();
    }

    SvdResult out;
    out.u = Matrix(a.rows(), static_cast<std::size_t>(k));
    out.vt = Matrix(static_cast<std::size_t>(k), a.cols());
    MutMap(out.u.data(), out.u.rows(), out.u.cols()) = u;
    MutMap(out.vt.data(), out.vt.rows(), out.vt.cols()) = v.transpose();
    out.singular_values.assign(s.data(), s.data() + k);
    return out;
}

Matrix pseudo_inverse(const Matrix& a, double rcond) {
    if (rcond < 0) throw ArgumentError("pseudo_inverse: rcond must be >= 0");
    if (a.empty()) throw ArgumentError("pseudo_inverse: empty matrix");
    if (a.max_abs() == 0.0) return a.transpose();  // zero matrix maps to zero

    SvdResult d = svd(a);
    const double cutoff = rcond * d.singular_values.front();
    const std::size_t k = d.singular_values.size();

    // A+ = V diag(1/s) U^T over singular values above the cutoff
    Matrix inv_s_vt(k, a.cols());
    for (std::size_t i = 0; i < k; ++i) {
        const double s = d.singular_values[i];
        const double inv = s > cutoff ? 1.0 / s : 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) inv_s_vt(i, j) = inv * d.vt(i, j);
    }
    return matmul(d.u, inv_s_vt).transpose();
}

Matrix pseudo_inverse(const Matrix& a) {
    const double eps = std::numeric_limits<double>::epsilon();
    return pseudo_inverse(a, static_cast<double>(std::max(a.rows(), a.cols())) * eps);
}

Matrix best_rank(const Matrix& a, std::size_t r) {
    if (r > std::min(a.rows(), a.cols()))
        throw ArgumentError("best_rank: rank exceeds min(rows, cols)");
    Matrix out(a.rows(), a.cols());
    if (r == 0) return out;

    SvdResult d = svd(a);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < r; ++t)
                s += d.u(i, t) * d.singular_values[t] * d.vt(t, j);
            out(i, j) = s;
        }
    return out;
}

Matrix etf_gram(std::size_t k) {
    if (k < 2) throw ArgumentError("etf_gram: need at least two classes");
    const double kk = static_cast<double>(k);
    const double scale = kk / (kk - 1.0);
    Matrix g(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            g(i, j) = scale * ((i == j ? 1.0 : 0.0) - 1.0 / kk);
    return g;
}

Matrix gof_gram(std::span<const double> a) {
    if (a.empty()) throw ArgumentError("gof_gram: empty length vector");
    double total = 0.0;
    for (double v : a) {
        if (!(v > 0.0)) throw ArgumentError("gof_gram: lengths must be positive");
        total += v * v;
    }
    Matrix g(a.size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i) g(i, i) = a[i] * a[i] / total;
    return g;
}

}  // namespace ncdl

#include "ncdl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ncdl/linalg.hpp"

namespace ncdl {

namespace {

double normalized_distance(const Matrix& measured, const Matrix& target) {
    const double nm = measured.frobenius_norm();
    if (nm == 0.0) throw DegenerateInputError("zero matrix in a normalized metric");
    const double nt = target.frobenius_norm();
    if (nt == 0.0) throw DegenerateInputError("zero target in a normalized metric");
    Matrix diff = measured * (1.0 / nm);
    diff -= target * (1.0 / nt);
    return diff.frobenius_norm();
}

std::vector<double> sorted_target_eigenvalues(const Matrix& diagonal_target) {
    std::vector<double> v(diagonal_target.rows());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = diagonal_target(i, i);
    std::sort(v.rbegin(), v.rend());
    return v;
}

double sorted_spectrum_distance(const std::vector<double>& measured,
                                const std::vector<double>& target) {
    double nm = 0.0, nt = 0.0;
    for (double v : measured) nm += v * v;
    for (double v : target) nt += v * v;
    nm = std::sqrt(nm);
    nt = std::sqrt(nt);
    if (nm == 0.0) throw DegenerateInputError("zero spectrum in a normalized metric");
    if (nt == 0.0) throw DegenerateInputError("zero target spectrum");
    double d = 0.0;
    const std::size_t n = std::max(measured.size(), target.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double a = i < measured.size() ? measured[i] / nm : 0.0;
        const double b = i < target.size() ? target[i] / nt : 0.0;
        d += (a - b) * (a - b);
    }
    return std::sqrt(d);
}

Matrix of_target(std::size_t k) {
    Matrix t = Matrix::identity(k);
    t *= 1.0 / std::sqrt(static_cast<double>(k));
    return t;
}

Matrix etf_target(std::size_t k) {
    const double kk = static_cast<double>(k);
    // (I - 11^T/K) / sqrt(K-1)
    return etf_gram(k) * ((kk - 1.0) / kk / std::sqrt(kk - 1.0));
}

}  // namespace

ClassMeans class_means(const Matrix& features, const ProblemSpec& spec) {
    if (features.cols() != spec.total_samples())
        throw ShapeError("class_means: column count must equal N");
    const std::size_t d = features.rows();
    ClassMeans out;
    out.means = Matrix(d, spec.num_classes);
    out.global_mean.assign(d, 0.0);

    std::size_t col = 0;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        const double inv = 1.0 / static_cast<double>(spec.class_counts[k]);
        for (std::size_t i = 0; i < spec.class_counts[k]; ++i, ++col)
            for (std::size_t row = 0; row < d; ++row)
                out.means(row, k) += features(row, col);
        for (std::size_t row = 0; row < d; ++row) {
            out.global_mean[row] += out.means(row, k);
            out.means(row, k) *= inv;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(spec.total_samples());
    for (double& v : out.global_mean) v *= inv_n;
    return out;
}

double nc1(const Matrix& features, const ProblemSpec& spec) {
    if (spec.total_samples() < spec.num_classes)
        throw ArgumentError("nc1: need at least K samples");
    const ClassMeans cm = class_means(features, spec);
    const std::size_t d = features.rows();
    const std::size_t k_count = spec.num_classes;
    const double n_total = static_cast<double>(spec.total_samples());

    // Centered columns: D = H - class means, C = class means - global mean.
    Matrix deviations = features;
    std::size_t col = 0;
    for (std::size_t k = 0; k < k_count; ++k)
        for (std::size_t i = 0; i < spec.class_counts[k]; ++i, ++col)
            for (std::size_t row = 0; row < d; ++row)
                deviations(row, col) -= cm.means(row, k);

    Matrix between(d, k_count);
    for (std::size_t k = 0; k < k_count; ++k)
        for (std::size_t row = 0; row < d; ++row)
            between(row, k) = cm.means(row, k) - cm.global_mean[row];

    if (between.max_abs() == 0.0) return std::numeric_limits<double>::infinity();

    // Sigma_B = (1/K) C C^T; its pseudo-inverse lives in the span of C, so
    // trace(Sigma_W pinv(Sigma_B)) = (K/N) sum_i ||u_i^T D||^2 / sigma_i^2
    // over retained singular triplets of C. Cutoff matches pseudo_inverse's
    // default rcond on the eigenvalues sigma_i^2/K of Sigma_B.
    const SvdResult dec = svd(between);
    const double eps = std::numeric_limits<double>::epsilon();
    const double top = dec.singular_values.front() * dec.singular_values.front();
    const double cutoff = static_cast<double>(d) * eps * top;

    const Matrix ut_d = matmul_tn(dec.u, deviations);  // k x N
    double total = 0.0;
    for (std::size_t i = 0; i < dec.singular_values.size(); ++i) {
        const double ev = dec.singular_values[i] * dec.singular_values[i];
        if (ev <= cutoff) continue;
        double row_sq = 0.0;
        for (std::size_t j = 0; j < ut_d.cols(); ++j) row_sq += ut_d(i, j) * ut_d(i, j);
        total += row_sq / ev;
    }
    // (1/K) * trace(Sigma_W * Sigma_B^+) with Sigma_W = DD^T/N, Sigma_B^+ scaling K.
    return total / n_total;
}

std::vector<Matrix> weight_suffix_products(const NetworkState& state,
                                           const ProblemSpec& spec) {
    std::vector<Matrix> products;
    products.reserve(spec.depth());
    Matrix p = state.weights.back();
    products.push_back(p);
    for (std::size_t m = spec.depth() - 1; m >= 1; --m) {
        p = matmul(p, state.weights[m - 1]);
        products.push_back(p);
    }
    return products;
}

std::vector<double> nc2_of(const std::vector<Matrix>& products, std::size_t k) {
    const Matrix target = of_target(k);
    std::vector<double> out;
    out.reserve(products.size());
    for (const Matrix& p : products) {
        if (p.rows() != k) throw ShapeError("nc2: products must have K rows");
        out.push_back(normalized_distance(matmul_nt(p, p), target));
    }
    return out;
}

std::vector<double> nc2_etf(const std::vector<Matrix>& products, std::size_t k) {
    const Matrix target = etf_target(k);
    std::vector<double> out;
    out.reserve(products.size());
    for (const Matrix& p : products) {
        if (p.rows() != k) throw ShapeError("nc2: products must have K rows");
        out.push_back(normalized_distance(matmul_nt(p, p), target));
    }
    return out;
}

double nc3(const Matrix& product_full, const Matrix& means, Geometry flavor) {
    const std::size_t k = product_full.rows();
    const Matrix a = matmul(product_full, means);
    if (flavor == Geometry::OrthogonalFrame) return normalized_distance(a, of_target(k));
    if (flavor == Geometry::SimplexEtf) return normalized_distance(a, etf_target(k));
    throw ArgumentError("nc3: flavor must be OF or ETF");
}

double nc2_gof(const Matrix& product_full, const TheoryPrediction& prediction) {
    const Matrix gram = matmul_nt(product_full, product_full);
    if (prediction.tie_block)
        return sorted_spectrum_distance(
            svd(gram).singular_values,
            sorted_target_eigenvalues(prediction.target_product_gram));
    return normalized_distance(gram, prediction.target_product_gram);
}

double nc3_gof(const Matrix& product_full, const Matrix& means,
               const TheoryPrediction& prediction) {
    const Matrix a = matmul(product_full, means);
    if (prediction.tie_block)
        return sorted_spectrum_distance(
            svd(a).singular_values,
            sorted_target_eigenvalues(prediction.target_alignment));
    return normalized_distance(a, prediction.target_alignment);
}

MetricReport compare_to_theory(const NetworkState& state, const ProblemSpec& spec,
                               const TheoryPrediction& prediction) {
    if (prediction.singular_values.size() != spec.num_classes &&
        !(spec.loss == LossKind::CrossEntropy && prediction.singular_values.empty()))
        throw ArgumentError("compare_to_theory: prediction does not match the spec");

    MetricReport report;
    report.flavor = prediction.geometry;

    const ClassMeans cm = class_means(state.features, spec);
    report.nc1 = nc1(state.features, spec);
    report.nc1_degenerate = std::isinf(report.nc1);

    const std::vector<Matrix> products = weight_suffix_products(state, spec);
    const Matrix& full = products.back();

    // Degenerate states (zero Grams) are a legitimate comparison subject, so
    // the aggregated report carries NaN where the individual metric throws.
    try {
        switch (prediction.geometry) {
            case Geometry::OrthogonalFrame:
                report.nc2 = nc2_of(products, spec.num_classes);
                report.nc3 = nc3(full, cm.means, Geometry::OrthogonalFrame);
                break;
            case Geometry::SimplexEtf:
                report.nc2 = nc2_etf(products, spec.num_classes);
                report.nc3 = nc3(full, cm.means, Geometry::SimplexEtf);
                break;
            case Geometry::GeneralOrthogonalFrame:
                report.nc2 = {nc2_gof(full, prediction)};
                report.nc3 = nc3_gof(full, cm.means, prediction);
                break;
            case Geometry::Zero:
                report.nc2 = {};
                report.nc3 = std::numeric_limits<double>::quiet_NaN();
                break;
        }
    } catch (const DegenerateInputError&) {
        report.nc2.assign(report.nc2.empty() ? 1 : report.nc2.size(),
                          std::numeric_limits<double>::quiet_NaN());
        report.nc3 = std::numeric_limits<double>::quiet_NaN();
    }

    report.balance = balance_residuals(state, spec);

    if (std::isnan(prediction.predicted_loss) || spec.loss == LossKind::CrossEntropy)
        report.loss_gap = std::numeric_limits<double>::quiet_NaN();
    else
        report.loss_gap = std::abs(loss_value(state, spec) - prediction.predicted_loss);

    report.class_mean_gap = std::numeric_limits<double>::quiet_NaN();
    if (prediction.geometry != Geometry::Zero &&
        prediction.target_class_mean_gram.rows() == spec.num_classes) {
        try {
            const Matrix h_gram = matmul_tn(cm.means, cm.means);
            report.class_mean_gap =
                prediction.tie_block
                    ? sorted_spectrum_distance(
                          svd(h_gram).singular_values,
                          sorted_target_eigenvalues(prediction.target_class_mean_gram))
                    : normalized_distance(h_gram, prediction.target_class_mean_gram);
        } catch (const DegenerateInputError&) {
        }
    }

    report.sv_measured = svd(full).singular_values;
    report.sv_measured.resize(spec.num_classes, 0.0);
    report.sv_predicted = prediction.target_product_gram.rows() == spec.num_classes
                              ? predicted_product_singular_values(prediction)
                              : std::vector<double>(spec.num_classes, 0.0);

    if (!prediction.duality_coefficients.empty()) {
        report.duality_residuals.resize(spec.num_classes);
        for (std::size_t k = 0; k < spec.num_classes; ++k) {
            double sq = 0.0;
            for (std::size_t j = 0; j < full.cols(); ++j) {
                const double diff =
                    full(k, j) - prediction.duality_coefficients[k] * cm.means(j, k);
                sq += diff * diff;
            }
            report.duality_residuals[k] = std::sqrt(sq);
        }
    }

    if (state.bias) {
        if (prediction.bias) {
            double worst = 0.0;
            for (std::size_t k = 0; k < state.bias->size(); ++k)
                worst = std::max(worst, std::abs((*state.bias)[k] - (*prediction.bias)[k]));
            report.bias_gap = worst;
        } else if (prediction.bias_constant_direction) {
            double mean = 0.0;
            for (double v : *state.bias) mean += v;
            mean /= static_cast<double>(state.bias->size());
            double worst = 0.0;
            for (double v : *state.bias) worst = std::max(worst, std::abs(v - mean));
            report.bias_gap = worst;
        }
    }
    return report;
}

}  // namespace ncdl

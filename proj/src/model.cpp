#include "ncdl/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ncdl/rng.hpp"

namespace ncdl {

std::size_t ProblemSpec::total_samples() const {
    return std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
}

bool ProblemSpec::balanced() const {
    return std::all_of(class_counts.begin(), class_counts.end(),
                       [&](std::size_t n) { return n == class_counts.front(); });
}

void ProblemSpec::validate() const {
    if (num_classes < 2) throw ArgumentError("spec: need at least two classes");
    if (class_counts.size() != num_classes)
        throw ArgumentError("spec: class_counts length must equal K");
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (class_counts[k] < 1) throw ArgumentError("spec: every class needs a sample");
        if (k > 0 && class_counts[k] > class_counts[k - 1])
            throw ArgumentError("spec: class_counts must be non-increasing");
    }
    if (widths.empty()) throw ArgumentError("spec: need at least one layer");
    for (std::size_t d : widths)
        if (d < 1) throw ArgumentError("spec: widths must be positive");
    if (lambda_w.size() != widths.size())
        throw ArgumentError("spec: one lambda_w per layer required");
    for (double l : lambda_w)
        if (!(l > 0.0)) throw ArgumentError("spec: lambda_w must be positive");
    if (!(lambda_h > 0.0)) throw ArgumentError("spec: lambda_h must be positive");
    if (bias_mode == BiasMode::LastLayerRegularized && !(lambda_b > 0.0))
        throw ArgumentError("spec: regularized bias needs lambda_b > 0");
}

Matrix one_hot_targets(const ProblemSpec& spec) {
    Matrix y(spec.num_classes, spec.total_samples());
    std::size_t col = 0;
    for (std::size_t k = 0; k < spec.num_classes; ++k)
        for (std::size_t i = 0; i < spec.class_counts[k]; ++i) y(k, col++) = 1.0;
    return y;
}

NetworkState init_state(const ProblemSpec& spec, std::uint64_t seed) {
    spec.validate();
    GaussianStream g(seed);
    auto fill = [&](Matrix& m) {
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = 0.1 * g.next();
    };

    NetworkState state;
    state.weights.reserve(spec.depth());
    for (std::size_t m = 1; m <= spec.depth(); ++m) {
        Matrix w(spec.layer_rows(m), spec.layer_cols(m));
        fill(w);
        state.weights.push_back(std::move(w));
    }
    state.features = Matrix(spec.widths.front(), spec.total_samples());
    fill(state.features);
    if (spec.has_bias()) state.bias = std::vector<double>(spec.num_classes, 0.0);
    return state;
}

namespace {

void require_shapes(const NetworkState& state, const ProblemSpec& spec) {
    if (state.weights.size() != spec.depth())
        throw ShapeError("state: wrong number of weight matrices");
    for (std::size_t m = 1; m <= spec.depth(); ++m) {
        const Matrix& w = state.weights[m - 1];
        if (w.rows() != spec.layer_rows(m) || w.cols() != spec.layer_cols(m))
            throw ShapeError("state: weight shape does not chain");
    }
    if (state.features.rows() != spec.widths.front() ||
        state.features.cols() != spec.total_samples())
        throw ShapeError("state: feature shape mismatch");
    if (spec.has_bias() != state.bias.has_value())
        throw ShapeError("state: bias presence must match the bias mode");
    if (state.bias && state.bias->size() != spec.num_classes)
        throw ShapeError("state: bias length must be K");
}

/// Suffix products S_m = W_M ... W_m for m = 1..M+1 (S_{M+1} = I_K).
/// Collapsing from the small end keeps every factor K-by-width.
std::vector<Matrix> suffix_products(const NetworkState& state, const ProblemSpec& spec) {
    const std::size_t m_count = spec.depth();
    std::vector<Matrix> s(m_count + 2);
    s[m_count + 1] = Matrix::identity(spec.num_classes);
    for (std::size_t m = m_count; m >= 1; --m)
        s[m] = matmul(s[m + 1], state.weights[m - 1]);
    return s;
}

Matrix softmax_columns(const Matrix& z) {
    Matrix p(z.rows(), z.cols());
    for (std::size_t j = 0; j < z.cols(); ++j) {
        double zmax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < z.rows(); ++i) zmax = std::max(zmax, z(i, j));
        double denom = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) denom += std::exp(z(i, j) - zmax);
        for (std::size_t i = 0; i < z.rows(); ++i)
            p(i, j) = std::exp(z(i, j) - zmax) / denom;
    }
    return p;
}

}  // namespace

Matrix forward(const NetworkState& state, const ProblemSpec& spec) {
    require_shapes(state, spec);
    Matrix z = matmul(end_to_end_product(state, spec), state.features);
    if (state.bias)
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += (*state.bias)[i];
    return z;
}

Matrix end_to_end_product(const NetworkState& state, const ProblemSpec& spec) {
    require_shapes(state, spec);
    Matrix p = state.weights.back();
    for (std::size_t m = spec.depth() - 1; m >= 1; --m)
        p = matmul(p, state.weights[m - 1]);
    return p;
}

double mse_data_term(const Matrix& z, const Matrix& y) {
    if (z.rows() != y.rows() || z.cols() != y.cols())
        throw ShapeError("mse_data_term: shape mismatch");
    Matrix r = z;
    r -= y;
    return r.squared_norm() / (2.0 * static_cast<double>(z.cols()));
}

double ce_data_term(const Matrix& z, const Matrix& y) {
    if (z.rows() != y.rows() || z.cols() != y.cols())
        throw ShapeError("ce_data_term: shape mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) {
        double zmax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < z.rows(); ++i) zmax = std::max(zmax, z(i, j));
        double lse = 0.0;
        double z_true = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) {
            lse += std::exp(z(i, j) - zmax);
            if (y(i, j) == 1.0) z_true = z(i, j);
        }
        total += std::log(lse) + zmax - z_true;
    }
    return total / static_cast<double>(z.cols());
}

double loss_value(const NetworkState& state, const ProblemSpec& spec) {
    const Matrix z = forward(state, spec);
    const Matrix y = one_hot_targets(spec);
    double f = spec.loss == LossKind::Mse ? mse_data_term(z, y) : ce_data_term(z, y);
    for (std::size_t m = 0; m < spec.depth(); ++m)
        f += 0.5 * spec.lambda_w[m] * state.weights[m].squared_norm();
    f += 0.5 * spec.lambda_h * state.features.squared_norm();
    if (spec.bias_mode == BiasMode::LastLayerRegularized) {
        double b2 = 0.0;
        for (double v : *state.bias) b2 += v * v;
        f += 0.5 * spec.lambda_b * b2;
    }
    if (!std::isfinite(f)) throw NumericOverflowError("loss is not finite");
    return f;
}

NetworkState gradient(const NetworkState& state, const ProblemSpec& spec) {
    require_shapes(state, spec);
    const std::size_t m_count = spec.depth();
    const double n_total = static_cast<double>(spec.total_samples());
    const Matrix y = one_hot_targets(spec);

    // Prefix products A_m = W_m ... W_1 H (A_0 = H).
    std::vector<Matrix> prefix(m_count + 1);
    prefix[0] = state.features;
    for (std::size_t m = 1; m <= m_count; ++m)
        prefix[m] = matmul(state.weights[m - 1], prefix[m - 1]);

    Matrix z = prefix[m_count];
    if (state.bias)
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += (*state.bias)[i];

    // Residual R: (Z - Y) for MSE, softmax(Z) - Y for CE; both scaled by 1/N.
    Matrix r = spec.loss == LossKind::Mse ? z : softmax_columns(z);
    r -= y;
    r *= 1.0 / n_total;

    const std::vector<Matrix> suffix = suffix_products(state, spec);

    NetworkState grad;
    grad.weights.reserve(m_count);
    for (std::size_t m = 1; m <= m_count; ++m) {
        Matrix g = matmul_nt(matmul_tn(suffix[m + 1], r), prefix[m - 1]);
        g += spec.lambda_w[m - 1] * state.weights[m - 1];
        grad.weights.push_back(std::move(g));
    }

    grad.features = matmul_tn(suffix[1], r);
    grad.features += spec.lambda_h * state.features;

    if (state.bias) {
        std::vector<double> gb(spec.num_classes, 0.0);
        for (std::size_t i = 0; i < r.rows(); ++i)
            for (std::size_t j = 0; j < r.cols(); ++j) gb[i] += r(i, j);
        if (spec.bias_mode == BiasMode::LastLayerRegularized)
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += spec.lambda_b * (*state.bias)[i];
        grad.bias = std::move(gb);
    }
    return grad;
}

Matrix optimal_features_given_weights(const std::vector<Matrix>& weights,
                                      const ProblemSpec& spec,
                                      const std::optional<std::vector<double>>& bias) {
    if (spec.loss != LossKind::Mse)
        throw RegimeError("optimal features in closed form exist only under MSE");
    NetworkState probe;
    probe.weights = weights;
    probe.features = Matrix(spec.widths.front(), spec.total_samples());
    if (spec.has_bias()) probe.bias = std::vector<double>(spec.num_classes, 0.0);
    const Matrix p = end_to_end_product(probe, spec);

    Matrix target = one_hot_targets(spec);
    if (bias) {
        if (bias->size() != spec.num_classes)
            throw ShapeError("optimal_features: bias length must be K");
        for (std::size_t i = 0; i < target.rows(); ++i)
            for (std::size_t j = 0; j < target.cols(); ++j) target(i, j) -= (*bias)[i];
    }

    // (P^T P + N lambda_H I) H = P^T target; the shift keeps the system SPD.
    Matrix lhs = matmul_tn(p, p);
    const double shift = static_cast<double>(spec.total_samples()) * spec.lambda_h;
    for (std::size_t i = 0; i < lhs.rows(); ++i) lhs(i, i) += shift;
    const Matrix rhs = matmul_tn(p, target);

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        lhs_map(lhs.data(), static_cast<Eigen::Index>(lhs.rows()),
                static_cast<Eigen::Index>(lhs.cols()));
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        rhs_map(rhs.data(), static_cast<Eigen::Index>(rhs.rows()),
                static_cast<Eigen::Index>(rhs.cols()));

    Matrix h(rhs.rows(), rhs.cols());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        h_map(h.data(), static_cast<Eigen::Index>(h.rows()),
              static_cast<Eigen::Index>(h.cols()));
    h_map = lhs_map.ldlt().solve(rhs_map);
    return h;
}

std::vector<double> balance_residuals(const NetworkState& state, const ProblemSpec& spec) {
    require_shapes(state, spec);
    std::vector<double> out;
    out.reserve(spec.depth());
    for (std::size_t m = 1; m < spec.depth(); ++m) {
        Matrix upper = matmul_tn(state.weights[m], state.weights[m]);
        upper *= spec.lambda_w[m];
        Matrix lower = matmul_nt(state.weights[m - 1], state.weights[m - 1]);
        lower *= spec.lambda_w[m - 1];
        out.push_back((upper - lower).frobenius_norm());
    }
    Matrix upper = matmul_tn(state.weights.front(), state.weights.front());
    upper *= spec.lambda_w.front();
    Matrix lower = matmul_nt(state.features, state.features);
    lower *= spec.lambda_h;
    out.push_back((upper - lower).frobenius_norm());
    return out;
}

double gradient_norm(const NetworkState& grad) {
    double s = 0.0;
    for (const Matrix& w : grad.weights) s += w.squared_norm();
    s += grad.features.squared_norm();
    if (grad.bias)
        for (double v : *grad.bias) s += v * v;
    return std::sqrt(s);
}

}  // namespace ncdl

#include "ncdl/theory.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ncdl/linalg.hpp"
#include "ncdl/rng.hpp"

namespace ncdl {

namespace {

constexpr double kTieBand = 1e-12;

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

/// d g/d x for g(x) = 1/(x^M + 1) + b x.
double g_derivative(std::size_t depth, double b, double x) {
    const double m = static_cast<double>(depth);
    const double xm = std::pow(x, m);
    return b - m * std::pow(x, m - 1.0) / ((xm + 1.0) * (xm + 1.0));
}

double g_value(std::size_t depth, double b, double x) {
    return 1.0 / (std::pow(x, static_cast<double>(depth)) + 1.0) + b * x;
}

}  // namespace

double g_threshold(std::size_t depth) {
    if (depth < 2) throw ArgumentError("g_threshold: defined for depth >= 2");
    const double m = static_cast<double>(depth);
    return std::pow(m - 1.0, (m - 1.0) / m) / m;
}

double a_threshold(std::size_t depth) { return g_threshold(depth) / static_cast<double>(depth); }

GMinimizerCase g_minimize(std::size_t depth, double b) {
    if (depth < 2) throw ArgumentError("g_minimize: defined for depth >= 2");
    if (!(b > 0.0)) throw ArgumentError("g_minimize: b must be positive");

    GMinimizerCase out;
    out.depth = depth;
    out.b = b;

    const double thr = g_threshold(depth);
    const double m = static_cast<double>(depth);
    const double x_inflect = std::pow(m - 1.0, 1.0 / m);

    if (b > thr + kTieBand) {
        out.kind = GMinimizerCase::Kind::ZeroOnly;
        out.min_value = 1.0;
        return out;
    }
    if (b >= thr - kTieBand) {
        // At the threshold both x = 0 and x = (M-1)^(1/M) attain g = 1.
        out.kind = GMinimizerCase::Kind::Tie;
        out.x_star = x_inflect;
        out.min_value = 1.0;
        return out;
    }

    // g' changes sign once past the inflection point; double the bracket.
    double lo = x_inflect;
    double hi = x_inflect;
    do {
        hi *= 2.0;
    } while (g_derivative(depth, b, hi) <= 0.0);
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (g_derivative(depth, b, mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double x_star = 0.5 * (lo + hi);

    out.kind = GMinimizerCase::Kind::NontrivialOnly;
    out.x_star = x_star;
    out.min_value = g_value(depth, b, x_star);
    return out;
}

GMinimizerCase plain_minimize(double a) {
    if (!(a > 0.0)) throw ArgumentError("plain_minimize: a must be positive");
    GMinimizerCase out;
    out.depth = 1;
    out.b = a;
    if (a > 1.0 + kTieBand) {
        out.kind = GMinimizerCase::Kind::ZeroOnly;
        out.min_value = 1.0;
    } else if (a >= 1.0 - kTieBand) {
        out.kind = GMinimizerCase::Kind::Tie;
        out.x_star = 0.0;  // the nontrivial branch meets zero at the boundary
        out.min_value = 1.0;
    } else {
        out.kind = GMinimizerCase::Kind::NontrivialOnly;
        out.x_star = 1.0 / std::sqrt(a) - 1.0;
        out.min_value = 2.0 * std::sqrt(a) - a;
    }
    return out;
}

namespace {

std::size_t min_width(const ProblemSpec& spec) {
    std::size_t d = spec.num_classes;
    for (std::size_t w : spec.widths) d = std::min(d, w);
    return d;
}

double product_coefficient(const ProblemSpec& spec) {
    // c = lambda_1^(M-1) / (lambda_M ... lambda_2); empty product for M = 1.
    double c = 1.0;
    for (std::size_t m = 1; m < spec.depth(); ++m)
        c *= spec.lambda_w.front() / spec.lambda_w[m];
    return c;
}

double lambda_product(const ProblemSpec& spec) {
    double p = spec.lambda_h;
    for (double l : spec.lambda_w) p *= l;
    return p;
}

/// Diagonal K x K target with per-class entries, optionally replacing a tie
/// block with its best rank-r truncation of the scaled identity.
Matrix diagonal_target(const std::vector<double>& entries,
                       const std::optional<TieBlock>& tie) {
    Matrix t(entries.size(), entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) t(k, k) = entries[k];
    if (tie) {
        const std::size_t size = tie->last - tie->first + 1;
        const double scale = entries[tie->first];
        const Matrix block = best_rank(Matrix::identity(size), tie->rank) * scale;
        for (std::size_t i = 0; i < size; ++i)
            for (std::size_t j = 0; j < size; ++j)
                t(tie->first + i, tie->first + j) = block(i, j);
    }
    return t;
}

struct DirectionSolve {
    std::vector<double> s;        // per class, zero when collapsed
    std::vector<double> x;        // matching scalar minimizers
    std::vector<double> g;        // g at the chosen branch (1 when collapsed)
    std::size_t active = 0;
    std::optional<TieBlock> tie_block;
    std::vector<std::size_t> tie_indices;
};

/// Shared per-class solve for the bias-free imbalanced statements. `deep`
/// selects between the one-layer closed form and the depth-M scalar problem.
DirectionSolve solve_directions(const ProblemSpec& spec, double a, double threshold,
                                std::size_t rank_cap, bool deep, double c) {
    const std::size_t k_count = spec.num_classes;
    const double n_total = static_cast<double>(spec.total_samples());
    const double m = static_cast<double>(spec.depth());

    DirectionSolve out;
    out.s.assign(k_count, 0.0);
    out.x.assign(k_count, 0.0);
    out.g.assign(k_count, 1.0);

    // a/n_k is nondecreasing in k, so active classes form a prefix.
    std::size_t active_by_threshold = 0;
    for (std::size_t k = 0; k < k_count; ++k) {
        const double t = a / static_cast<double>(spec.class_counts[k]);
        if (std::abs(t - threshold) <= kTieBand * std::max(1.0, threshold))
            out.tie_indices.push_back(k);
        const bool active = t <= threshold + kTieBand * std::max(1.0, threshold);
        if (active && active_by_threshold == k) active_by_threshold = k + 1;
    }

    out.active = std::min(active_by_threshold, rank_cap);

    // Width bottleneck inside a group of equal counts: keep the block, note
    // the rank it was truncated to.
    if (active_by_threshold > rank_cap &&
        spec.class_counts[rank_cap - 1] == spec.class_counts[rank_cap]) {
        TieBlock block;
        block.first = rank_cap - 1;
        while (block.first > 0 &&
               spec.class_counts[block.first - 1] == spec.class_counts[rank_cap - 1])
            --block.first;
        block.last = rank_cap;
        while (block.last + 1 < active_by_threshold &&
               spec.class_counts[block.last + 1] == spec.class_counts[rank_cap - 1])
            ++block.last;
        block.rank = rank_cap - block.first;
        out.tie_block = block;
    }

    for (std::size_t k = 0; k < out.active; ++k) {
        const double n_k = static_cast<double>(spec.class_counts[k]);
        const double t = a / n_k;
        if (deep) {
            const GMinimizerCase c_k = g_minimize(spec.depth(), m * t);
            if (!c_k.x_star) continue;  // on-threshold zero branch
            out.x[k] = *c_k.x_star;
            out.g[k] = c_k.min_value;
            out.s[k] = std::pow(n_total * spec.lambda_h * std::pow(out.x[k], m) / c,
                                1.0 / (2.0 * m));
        } else {
            const GMinimizerCase c_k = plain_minimize(t);
            if (!c_k.x_star) continue;
            out.x[k] = *c_k.x_star;
            out.g[k] = c_k.min_value;
            out.s[k] = std::sqrt(n_total * spec.lambda_h * out.x[k]);
        }
    }
    return out;
}

/// Loss at the optimum, recomputed two ways as a self check.
double imbalanced_predicted_loss(const ProblemSpec& spec, const DirectionSolve& dirs,
                                 double c) {
    const double n_total = static_cast<double>(spec.total_samples());
    const double m = static_cast<double>(spec.depth());

    double via_g = 0.0;
    double via_s = 0.0;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        const double n_k = static_cast<double>(spec.class_counts[k]);
        via_g += n_k / (2.0 * n_total) * dirs.g[k];
        const double cs = c * std::pow(dirs.s[k], 2.0 * m);
        via_s += 0.5 * n_k * spec.lambda_h / (cs + n_total * spec.lambda_h) +
                 0.5 * m * spec.lambda_w.front() * dirs.s[k] * dirs.s[k];
    }
    if (std::abs(via_g - via_s) > 1e-12 * std::max(1.0, std::abs(via_g)))
        throw DecompositionError("predicted loss self-check failed");
    return via_g;
}

void fill_gram_targets(TheoryPrediction& p, const ProblemSpec& spec,
                       const std::vector<double>& s, double c,
                       const std::optional<TieBlock>& tie) {
    const double n_total = static_cast<double>(spec.total_samples());
    const double m = static_cast<double>(spec.depth());
    std::vector<double> product(spec.num_classes), means(spec.num_classes),
        align(spec.num_classes);
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        const double cs = c * std::pow(s[k], 2.0 * m);
        const double denom = cs + n_total * spec.lambda_h;
        product[k] = cs;
        means[k] = cs / (denom * denom);
        align[k] = cs / denom;
    }
    p.target_product_gram = diagonal_target(product, tie);
    p.target_class_mean_gram = diagonal_target(means, tie);
    p.target_alignment = diagonal_target(align, tie);
}

RegimeKind classify_regime(const DirectionSolve& dirs, std::size_t k_count) {
    if (!dirs.tie_indices.empty()) return RegimeKind::ThresholdTie;
    if (dirs.active == 0) return RegimeKind::FullCollapse;
    if (dirs.active == k_count && !dirs.tie_block) return RegimeKind::AllActive;
    return RegimeKind::PartialCollapse;
}

}  // namespace

TheoryPrediction predict_balanced(const ProblemSpec& spec) {
    spec.validate();
    if (spec.loss != LossKind::Mse) throw RegimeError("predict_balanced: MSE only");
    if (!spec.balanced()) throw RegimeError("predict_balanced: class counts differ");
    if (spec.bias_mode == BiasMode::LastLayerRegularized)
        throw RegimeError("predict_balanced: no closed form with a regularized bias");

    const std::size_t k_count = spec.num_classes;
    const std::size_t m_count = spec.depth();
    const double m = static_cast<double>(m_count);
    const double k = static_cast<double>(k_count);
    const double n_total = static_cast<double>(spec.total_samples());
    const double n_per_class = n_total / k;
    const bool with_bias = spec.has_bias();
    const double c = product_coefficient(spec);

    TheoryPrediction p;
    p.product_coefficient = c;
    p.a_value = k * std::pow(k * n_per_class * lambda_product(spec), 1.0 / m);
    p.threshold = m_count >= 2 ? a_threshold(m_count) : 1.0;
    p.rank_cap = with_bias ? std::min(k_count - 1, min_width(spec))
                           : std::min(k_count, min_width(spec));

    const GMinimizerCase scalar = m_count >= 2
                                      ? g_minimize(m_count, m * p.a_value)
                                      : plain_minimize(p.a_value);

    p.singular_values.assign(k_count, 0.0);
    p.x_values.assign(k_count, 0.0);
    if (with_bias) p.bias = std::vector<double>(k_count, 1.0 / k);

    const double zero_dirs_with_bias = k - 1.0;  // centered targets span K-1 dims

    const bool trivial_only =
        scalar.kind == GMinimizerCase::Kind::ZeroOnly ||
        (scalar.kind == GMinimizerCase::Kind::Tie &&
         (!scalar.x_star || *scalar.x_star == 0.0));
    if (trivial_only) {
        p.regime = scalar.kind == GMinimizerCase::Kind::Tie ? RegimeKind::ThresholdTie
                                                            : RegimeKind::FullCollapse;
        p.geometry = Geometry::Zero;
        p.active_count = 0;
        p.target_product_gram = Matrix(k_count, k_count);
        p.target_class_mean_gram = Matrix(k_count, k_count);
        p.target_alignment = Matrix(k_count, k_count);
        p.predicted_loss = with_bias ? zero_dirs_with_bias / (2.0 * k) : 0.5;
        p.duality_coefficients.assign(k_count, n_total * spec.lambda_h);
        return p;
    }

    const double x_star = *scalar.x_star;
    const double s = m_count >= 2
                         ? std::pow(n_total * spec.lambda_h * std::pow(x_star, m) / c,
                                    1.0 / (2.0 * m))
                         : std::sqrt(n_total * spec.lambda_h * x_star);
    const std::size_t r = p.rank_cap;
    p.active_count = r;
    for (std::size_t i = 0; i < r; ++i) {
        p.singular_values[i] = s;
        p.x_values[i] = x_star;
    }

    p.regime = scalar.kind == GMinimizerCase::Kind::Tie ? RegimeKind::ThresholdTie
                                                        : RegimeKind::AllActive;
    p.geometry = with_bias ? Geometry::SimplexEtf : Geometry::OrthogonalFrame;

    const double cs = c * std::pow(s, 2.0 * m);
    const double denom = cs + n_total * spec.lambda_h;
    Matrix base = with_bias
                      ? best_rank(etf_gram(k_count) * ((k - 1.0) / k), r)  // I - 11^T/K
                      : best_rank(Matrix::identity(k_count), r);
    p.target_product_gram = base * cs;
    p.target_class_mean_gram = base * (cs / (denom * denom));
    p.target_alignment = base * (cs / denom);

    const double inactive = with_bias ? zero_dirs_with_bias - static_cast<double>(r)
                                      : k - static_cast<double>(r);
    p.predicted_loss =
        (static_cast<double>(r) * scalar.min_value + inactive) / (2.0 * k);
    p.duality_coefficients.assign(k_count, denom);
    return p;
}

TheoryPrediction predict_imbalanced_plain(const ProblemSpec& spec) {
    spec.validate();
    if (spec.loss != LossKind::Mse || spec.depth() != 1 || spec.has_bias())
        throw RegimeError("predict_imbalanced_plain: one bias-free MSE layer required");

    const std::size_t k_count = spec.num_classes;
    const double n_total = static_cast<double>(spec.total_samples());

    TheoryPrediction p;
    p.product_coefficient = 1.0;
    p.a_value = n_total * n_total * spec.lambda_w.front() * spec.lambda_h;
    p.threshold = 1.0;
    p.rank_cap = std::min(k_count, spec.widths.front());

    DirectionSolve dirs =
        solve_directions(spec, p.a_value, 1.0, p.rank_cap, /*deep=*/false, 1.0);
    p.singular_values = dirs.s;
    p.x_values = dirs.x;
    p.active_count = dirs.active;
    p.tie_block = dirs.tie_block;
    p.tie_indices = dirs.tie_indices;
    p.regime = classify_regime(dirs, k_count);
    p.geometry = p.active_count == 0 ? Geometry::Zero
                 : spec.balanced()   ? Geometry::OrthogonalFrame
                                     : Geometry::GeneralOrthogonalFrame;

    fill_gram_targets(p, spec, dirs.s, 1.0, dirs.tie_block);
    p.predicted_loss = imbalanced_predicted_loss(spec, dirs, 1.0);

    p.duality_coefficients.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k)
        p.duality_coefficients[k] = std::sqrt(
            static_cast<double>(spec.class_counts[k]) * spec.lambda_h / spec.lambda_w.front());
    return p;
}

TheoryPrediction predict_imbalanced_deep(const ProblemSpec& spec) {
    spec.validate();
    if (spec.loss != LossKind::Mse || spec.depth() < 2 || spec.has_bias())
        throw RegimeError("predict_imbalanced_deep: bias-free MSE with depth >= 2 required");

    const std::size_t k_count = spec.num_classes;
    const double m = static_cast<double>(spec.depth());
    const double n_total = static_cast<double>(spec.total_samples());
    const double c = product_coefficient(spec);

    TheoryPrediction p;
    p.product_coefficient = c;
    p.a_value = n_total * std::pow(n_total * lambda_product(spec), 1.0 / m);
    p.threshold = a_threshold(spec.depth());
    p.rank_cap = std::min(k_count, min_width(spec));

    DirectionSolve dirs =
        solve_directions(spec, p.a_value, p.threshold, p.rank_cap, /*deep=*/true, c);
    p.singular_values = dirs.s;
    p.x_values = dirs.x;
    p.active_count = dirs.active;
    p.tie_block = dirs.tie_block;
    p.tie_indices = dirs.tie_indices;
    p.regime = classify_regime(dirs, k_count);
    p.geometry = p.active_count == 0 ? Geometry::Zero
                 : spec.balanced()   ? Geometry::OrthogonalFrame
                                     : Geometry::GeneralOrthogonalFrame;

    fill_gram_targets(p, spec, dirs.s, c, dirs.tie_block);
    p.predicted_loss = imbalanced_predicted_loss(spec, dirs, c);

    p.duality_coefficients.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k)
        p.duality_coefficients[k] =
            c * std::pow(dirs.s[k], 2.0 * m) + n_total * spec.lambda_h;
    return p;
}

TheoryPrediction predict_ce_balanced(const ProblemSpec& spec) {
    spec.validate();
    if (spec.loss != LossKind::CrossEntropy)
        throw RegimeError("predict_ce_balanced: CE loss required");
    if (!spec.balanced()) throw RegimeError("predict_ce_balanced: class counts differ");
    if (min_width(spec) < spec.num_classes - 1)
        throw RegimeError("predict_ce_balanced: every width must be at least K-1");

    const std::size_t k_count = spec.num_classes;
    const double k = static_cast<double>(k_count);

    TheoryPrediction p;
    p.regime = RegimeKind::AllActive;
    p.geometry = Geometry::SimplexEtf;
    p.rank_cap = k_count - 1;
    p.active_count = k_count - 1;
    p.predicted_loss = nan_value();

    // No closed-form scale: targets carry the unit-Frobenius ETF direction.
    const Matrix etf_direction = etf_gram(k_count) *
                                 ((k - 1.0) / k / std::sqrt(k - 1.0));
    p.target_product_gram = etf_direction;
    p.target_class_mean_gram = etf_direction;
    p.target_alignment = etf_direction;
    p.bias_constant_direction = spec.has_bias();
    return p;
}

TheoryPrediction predict(const ProblemSpec& spec) {
    spec.validate();
    if (spec.loss == LossKind::CrossEntropy) return predict_ce_balanced(spec);
    if (spec.balanced()) return predict_balanced(spec);
    if (spec.has_bias())
        throw RegimeError("no closed form for imbalanced data with a bias");
    return spec.depth() == 1 ? predict_imbalanced_plain(spec)
                             : predict_imbalanced_deep(spec);
}

std::vector<bool> minority_collapse_flags(const ProblemSpec& spec) {
    spec.validate();
    if (spec.loss != LossKind::Mse || spec.depth() != 1)
        throw RegimeError("minority_collapse_flags: one-layer MSE required");
    const double n_total = static_cast<double>(spec.total_samples());
    const double a = n_total * n_total * spec.lambda_w.front() * spec.lambda_h;
    std::vector<bool> flags(spec.num_classes);
    for (std::size_t k = 0; k < spec.num_classes; ++k)
        flags[k] = a / static_cast<double>(spec.class_counts[k]) > 1.0;
    return flags;
}

NormRatioTables norm_ratios(const ProblemSpec& spec) {
    spec.validate();
    if (spec.loss != LossKind::Mse || spec.depth() != 1 || spec.has_bias())
        throw RegimeError("norm_ratios: one bias-free MSE layer required");
    const double n_total = static_cast<double>(spec.total_samples());
    const double a = n_total * n_total * spec.lambda_w.front() * spec.lambda_h;
    if (!(a / static_cast<double>(spec.class_counts.back()) < 1.0))
        throw RegimeError("norm_ratios: a collapsed class has no norm ratio");

    const std::size_t k_count = spec.num_classes;
    std::vector<double> w2(k_count);
    for (std::size_t k = 0; k < k_count; ++k)
        w2[k] = std::sqrt(static_cast<double>(spec.class_counts[k]) * spec.lambda_h /
                          spec.lambda_w.front()) -
                n_total * spec.lambda_h;

    NormRatioTables t;
    t.classifier = Matrix(k_count, k_count);
    t.feature = Matrix(k_count, k_count);
    for (std::size_t i = 0; i < k_count; ++i)
        for (std::size_t j = 0; j < k_count; ++j) {
            t.classifier(i, j) = w2[i] / w2[j];
            t.feature(i, j) = static_cast<double>(spec.class_counts[j]) /
                              static_cast<double>(spec.class_counts[i]) * w2[j] / w2[i];
        }
    return t;
}

std::vector<double> predicted_product_singular_values(const TheoryPrediction& prediction) {
    // The Gram target is diagonal under first-index tie-breaking, so its
    // diagonal is exactly the eigenvalue list.
    std::vector<double> sv;
    sv.reserve(prediction.singular_values.size());
    for (std::size_t k = 0; k < prediction.singular_values.size(); ++k)
        sv.push_back(std::sqrt(std::max(0.0, prediction.target_product_gram(k, k))));
    std::sort(sv.rbegin(), sv.rend());
    return sv;
}

namespace {

/// First r columns of the Q factor of a seeded Gaussian matrix.
Matrix random_orthonormal(std::size_t rows, std::size_t cols, GaussianStream& g) {
    if (cols > rows) throw ArgumentError("random_orthonormal: cols > rows");
    Eigen::MatrixXd a(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g.next();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(
                                                static_cast<Eigen::Index>(rows),
                                                static_cast<Eigen::Index>(cols));
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out(i, j) = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
}

/// Orthonormal basis of the hyperplane orthogonal to the ones vector.
Matrix ones_complement_basis(std::size_t k) {
    // Householder reflection sending e_1 to 1/sqrt(K); columns 2..K span 1^perp.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k)) /
                        std::sqrt(static_cast<double>(k));
    v(0) -= 1.0;
    if (v.norm() > 0) v.normalize();
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k),
                                                  static_cast<Eigen::Index>(k)) -
                        2.0 * v * v.transpose();
    Matrix out(k, k - 1);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k - 1; ++j)
            out(i, j) = h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1));
    return out;
}

}  // namespace

NetworkState construct_canonical_minimizer(const ProblemSpec& spec,
                                           const TheoryPrediction& prediction,
                                           std::uint64_t seed, bool prefer_trivial) {
    spec.validate();
    if (spec.loss != LossKind::Mse)
        throw RegimeError("canonical minimizer: no closed-form CE scale");

    const std::size_t k_count = spec.num_classes;
    const std::size_t m_count = spec.depth();

    auto zero_state = [&]() {
        NetworkState st;
        for (std::size_t m = 1; m <= m_count; ++m)
            st.weights.emplace_back(spec.layer_rows(m), spec.layer_cols(m));
        st.features = Matrix(spec.widths.front(), spec.total_samples());
        if (spec.has_bias())
            st.bias = std::vector<double>(k_count, 1.0 / static_cast<double>(k_count));
        return st;
    };

    if (prediction.active_count == 0 ||
        (prefer_trivial && prediction.regime == RegimeKind::ThresholdTie))
        return zero_state();

    // Active directions in class order with their singular values.
    std::vector<std::size_t> dir_class;
    std::vector<double> s_active;
    for (std::size_t k = 0; k < k_count; ++k)
        if (prediction.singular_values[k] > 0.0) {
            dir_class.push_back(k);
            s_active.push_back(prediction.singular_values[k]);
        }
    const std::size_t r = dir_class.size();

    GaussianStream g(seed);

    // Left factor of the last layer decides the class geometry.
    Matrix u_last(k_count, r);
    if (spec.has_bias()) {
        // Columns must be orthogonal to the ones vector.
        const Matrix basis = ones_complement_basis(k_count);
        u_last = matmul(basis, random_orthonormal(k_count - 1, r, g));
    } else if (spec.balanced() && !prediction.tie_block) {
        u_last = random_orthonormal(k_count, r, g);
    } else {
        // Distinct counts pin directions to class axes; equal-count groups may
        // rotate internally (and must, when truncated by a width bottleneck).
        std::size_t d = 0;
        std::size_t k = 0;
        while (d < r) {
            if (prediction.tie_block && k == prediction.tie_block->first) {
                const std::size_t size = prediction.tie_block->last -k + 1;
                const std::size_t rank = prediction.tie_block->rank;
                const Matrix block = random_orthonormal(size, rank, g);
                for (std::size_t i = 0; i < size; ++i)
                    for (std::size_t j = 0; j < rank; ++j)
                        u_last(k + i, d + j) = block(i, j);
                k += size;
                d += rank;
            } else {
                u_last(k, d) = 1.0;
                ++k;
                ++d;
            }
        }
    }

    // Factor chain; the right factor of layer m is the left factor of m-1.
    std::vector<Matrix> left(m_count + 1);
    left[m_count] = u_last;
    for (std::size_t m = 1; m < m_count; ++m)
        left[m] = random_orthonormal(spec.layer_rows(m), r, g);
    const Matrix v_first = random_orthonormal(spec.widths.front(), r, g);

    NetworkState st;
    st.weights.reserve(m_count);
    for (std::size_t m = 1; m <= m_count; ++m) {
        const Matrix& lhs = left[m];
        const Matrix& rhs = m == 1 ? v_first : left[m - 1];
        const double scale =
            std::sqrt(spec.lambda_w.front() / spec.lambda_w[m - 1]);
        Matrix scaled_rhs_t(r, rhs.rows());
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < rhs.rows(); ++j)
                scaled_rhs_t(i, j) = scale * s_active[i] * rhs(j, i);
        st.weights.push_back(matmul(lhs, scaled_rhs_t));
    }

    if (spec.has_bias())
        st.bias = std::vector<double>(k_count, 1.0 / static_cast<double>(k_count));
    st.features = optimal_features_given_weights(st.weights, spec, st.bias);
    return st;
}

}  // namespace ncdl

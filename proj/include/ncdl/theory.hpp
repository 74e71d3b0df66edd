#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ncdl/matrix.hpp"
#include "ncdl/model.hpp"

namespace ncdl {

enum class Geometry { OrthogonalFrame, SimplexEtf, GeneralOrthogonalFrame, Zero };

enum class RegimeKind { AllActive, PartialCollapse, FullCollapse, ThresholdTie };

/// Outcome of minimizing g(x) = 1/(x^M + 1) + b x over x >= 0.
struct GMinimizerCase {
    enum class Kind { ZeroOnly, NontrivialOnly, Tie };
    std::size_t depth = 0;
    double b = 0.0;
    Kind kind = Kind::ZeroOnly;
    std::optional<double> x_star;  // present unless ZeroOnly
    double min_value = 1.0;        // g at the minimizer
};

/// b above which the only minimizer of g is x = 0: (M-1)^((M-1)/M) / M.
/// Requires M >= 2 (the one-layer problem has its own scalar form).
double g_threshold(std::size_t depth);

/// Threshold for the scalarized constant a in the M-layer statements,
/// i.e. g_threshold(M) / M.
double a_threshold(std::size_t depth);

/// Minimize g for M >= 2. The nontrivial root is located by doubling the
/// bracket upward from (M-1)^(1/M) and bisecting g' to width 1e-13.
GMinimizerCase g_minimize(std::size_t depth, double b);

/// One-layer analogue, g(x) = 1/(x + 1) + a x: minimized at x = 1/sqrt(a) - 1
/// when a < 1, at 0 when a > 1, tied (both at value 1) when a = 1.
GMinimizerCase plain_minimize(double a);

/// Rank-truncated tie block: classes [first, last] share a sample count and
/// only `rank` of them fit under the width bottleneck.
struct TieBlock {
    std::size_t first = 0;
    std::size_t last = 0;
    std::size_t rank = 0;
};

/// Closed-form description of the global minimizers for one problem spec.
struct TheoryPrediction {
    RegimeKind regime = RegimeKind::AllActive;
    Geometry geometry = Geometry::OrthogonalFrame;
    std::size_t rank_cap = 0;      // feasible rank R (K-1 variant in bias mode)
    std::size_t active_count = 0;  // positive singular directions

    // Per class k: optimal singular value s_k of the first layer (zero when
    // collapsed) and the scalar minimizer x_k it came from.
    std::vector<double> singular_values;
    std::vector<double> x_values;

    // K x K targets at their predicted scale: Gram of the end-to-end product,
    // Gram of the class-means matrix, and the product-times-class-means
    // alignment. Zero rows/columns for collapsed classes.
    Matrix target_product_gram;
    Matrix target_class_mean_gram;
    Matrix target_alignment;

    std::optional<std::vector<double>> bias;  // exact predicted bias, when known
    bool bias_constant_direction = false;     // CE: bias parallel to the ones vector

    double predicted_loss = 0.0;  // NaN when no closed form exists (CE)

    // Classifier/feature alignment: row k of the end-to-end product equals
    // duality_coefficients[k] * h_k.
    std::vector<double> duality_coefficients;

    std::optional<TieBlock> tie_block;
    std::vector<std::size_t> tie_indices;  // classes sitting exactly on the threshold

    double a_value = 0.0;             // scalarized regularization constant
    double threshold = 0.0;           // comparison point for a (or a/n_k)
    double product_coefficient = 1.0; // c = lambda_1^(M-1) / (lambda_M ... lambda_2)
};

/// Balanced MSE prediction for any depth and either bias-free or
/// last-layer-unregularized-bias mode. Throws RegimeError on imbalanced
/// input or a regularized bias.
TheoryPrediction predict_balanced(const ProblemSpec& spec);

/// One-layer MSE prediction, bias-free, any class counts.
TheoryPrediction predict_imbalanced_plain(const ProblemSpec& spec);

/// Deep (M >= 2) MSE prediction, bias-free, any class counts.
TheoryPrediction predict_imbalanced_deep(const ProblemSpec& spec);

/// Balanced CE prediction; structural only (ETF geometry, constant bias),
/// no closed-form scale. Requires every width >= K - 1.
TheoryPrediction predict_ce_balanced(const ProblemSpec& spec);

/// Dispatch to the prediction matching the spec. Throws RegimeError when the
/// configuration has no closed-form description.
TheoryPrediction predict(const ProblemSpec& spec);

/// Class k collapses to zero in the one-layer problem iff
/// N^2 lambda_W lambda_H / n_k > 1.
std::vector<bool> minority_collapse_flags(const ProblemSpec& spec);

/// Pairwise norm ratios of optimal classifiers and class-mean features for
/// the one-layer problem with no collapsed class.
struct NormRatioTables {
    Matrix classifier;  // ||w_i||^2 / ||w_j||^2
    Matrix feature;     // ||h_i||^2 / ||h_j||^2
};
NormRatioTables norm_ratios(const ProblemSpec& spec);

/// Singular values the end-to-end product should exhibit, descending.
std::vector<double> predicted_product_singular_values(const TheoryPrediction& prediction);

/// Materialize an explicit global minimizer for an MSE prediction. Seeded
/// orthogonal factors exercise non-axis-aligned minimizers where the theory
/// allows them. At a threshold tie the nontrivial branch is built unless
/// prefer_trivial is set.
NetworkState construct_canonical_minimizer(const ProblemSpec& spec,
                                           const TheoryPrediction& prediction,
                                           std::uint64_t seed,
                                           bool prefer_trivial = false);

}  // namespace ncdl

#pragma once

#include <optional>
#include <vector>

#include "ncdl/model.hpp"
#include "ncdl/theory.hpp"

namespace ncdl {

/// Class means (d x K, column k is the mean of class k) and the global mean.
struct ClassMeans {
    Matrix means;
    std::vector<double> global_mean;
};
ClassMeans class_means(const Matrix& features, const ProblemSpec& spec);

/// Variability collapse: (1/K) trace(Sigma_W pinv(Sigma_B)) with the usual
/// within/between scatter matrices. Returns +infinity when all class means
/// coincide (Sigma_B identically zero).
double nc1(const Matrix& features, const ProblemSpec& spec);

/// Suffix products W^m = W_M ... W_{M-m+1} for m = 1..M.
std::vector<Matrix> weight_suffix_products(const NetworkState& state,
                                           const ProblemSpec& spec);

/// || G/||G|| - I/sqrt(K) || per suffix product Gram G = W^m W^m^T.
std::vector<double> nc2_of(const std::vector<Matrix>& products, std::size_t k);

/// ETF variant: target (I - 11^T/K)/sqrt(K-1).
std::vector<double> nc2_etf(const std::vector<Matrix>& products, std::size_t k);

/// Alignment of the full product with the class means against the OF or ETF
/// target; `flavor` must be OrthogonalFrame or SimplexEtf.
double nc3(const Matrix& product_full, const Matrix& means, Geometry flavor);

/// Normalized distance of the end-to-end Gram from the predicted diagonal;
/// truncated tie blocks are compared through sorted eigenvalues.
double nc2_gof(const Matrix& product_full, const TheoryPrediction& prediction);

/// Same for the product-times-class-means alignment.
double nc3_gof(const Matrix& product_full, const Matrix& means,
               const TheoryPrediction& prediction);

struct MetricReport {
    Geometry flavor = Geometry::OrthogonalFrame;
    double nc1 = 0.0;
    bool nc1_degenerate = false;       // Sigma_B was identically zero
    std::vector<double> nc2;           // M entries (OF/ETF) or one (GOF)
    double nc3 = 0.0;
    std::vector<double> balance;       // coupling residuals, layer interfaces
    double loss_gap = 0.0;             // |loss - predicted|, NaN when no closed form
    double class_mean_gap = 0.0;       // normalized class-mean Gram deviation
    std::vector<double> sv_measured;   // end-to-end product singular values
    std::vector<double> sv_predicted;
    std::vector<double> duality_residuals;  // ||row_k(product) - coef_k h_k||
    double bias_gap = 0.0;             // deviation from the predicted bias
};

/// Full comparison of a state against a prediction in the prediction's
/// flavor. Throws ArgumentError when the prediction does not belong to the
/// spec, DegenerateInputError on zero Grams.
MetricReport compare_to_theory(const NetworkState& state, const ProblemSpec& spec,
                               const TheoryPrediction& prediction);

}  // namespace ncdl

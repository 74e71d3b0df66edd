#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ncdl/matrix.hpp"

namespace ncdl {

enum class LossKind { Mse, CrossEntropy };

enum class BiasMode { None, LastLayerUnregularized, LastLayerRegularized };

/// Problem instance: K classes with per-class sample counts (descending),
/// M linear layers of widths d_1..d_M on top of free features H_1, and one
/// regularization weight per trainable block.
struct ProblemSpec {
    std::size_t num_classes = 0;
    std::vector<std::size_t> class_counts;  // n_1 >= ... >= n_K >= 1
    std::vector<std::size_t> widths;        // d_1..d_M; layer m maps d_m -> d_{m+1}, d_{M+1} = K
    LossKind loss = LossKind::Mse;
    BiasMode bias_mode = BiasMode::None;
    std::vector<double> lambda_w;           // per layer, index 0 = layer 1
    double lambda_h = 0.0;
    double lambda_b = 0.0;                  // used only by LastLayerRegularized

    std::size_t depth() const { return widths.size(); }
    std::size_t total_samples() const;
    bool balanced() const;
    bool has_bias() const { return bias_mode != BiasMode::None; }

    /// Output dimension of layer m (1-based): d_{m+1}, with d_{M+1} = K.
    std::size_t layer_rows(std::size_t m) const {
        return m == depth() ? num_classes : widths[m];
    }
    std::size_t layer_cols(std::size_t m) const { return widths[m - 1]; }

    /// Throws ArgumentError on any violated invariant.
    void validate() const;
};

/// Trainable parameters: weights W_1..W_M, features H_1 (d_1 x N), and the
/// last-layer bias when the spec asks for one.
struct NetworkState {
    std::vector<Matrix> weights;  // index 0 = W_1
    Matrix features;
    std::optional<std::vector<double>> bias;  // length K
};

/// One-hot target matrix Y (K x N) with contiguous class blocks.
Matrix one_hot_targets(const ProblemSpec& spec);

/// Entries i.i.d. N(0, 1) scaled by 0.1; bias starts at zero. Deterministic
/// in the seed. Fill order: W_1 ... W_M row-major, then H_1.
NetworkState init_state(const ProblemSpec& spec, std::uint64_t seed);

/// Logits Z = W_M ... W_1 H_1 (+ b 1^T), K x N.
Matrix forward(const NetworkState& state, const ProblemSpec& spec);

/// Product W_M ... W_1 (K x d_1).
Matrix end_to_end_product(const NetworkState& state, const ProblemSpec& spec);

/// Data term of the MSE objective: ||Z - Y||_F^2 / (2N).
double mse_data_term(const Matrix& z, const Matrix& y);

/// Data term of the CE objective: mean of -log softmax at the true class,
/// evaluated with the usual log-sum-exp shift.
double ce_data_term(const Matrix& z, const Matrix& y);

/// Full regularized objective.
double loss_value(const NetworkState& state, const ProblemSpec& spec);

/// Gradient of the objective, shaped like the state.
NetworkState gradient(const NetworkState& state, const ProblemSpec& spec);

/// Stationary features for fixed weights under MSE:
/// H = (P^T P + N lambda_H I)^{-1} P^T (Y - b 1^T) with P the end-to-end
/// product. Throws RegimeError under CE loss.
Matrix optimal_features_given_weights(const std::vector<Matrix>& weights,
                                      const ProblemSpec& spec,
                                      const std::optional<std::vector<double>>& bias = std::nullopt);

/// Frobenius residuals of the critical-point coupling identities, one per
/// interface: lambda_{m+1} W_{m+1}^T W_{m+1} vs lambda_m W_m W_m^T for
/// m = 1..M-1, then lambda_1 W_1^T W_1 vs lambda_H H H^T.
std::vector<double> balance_residuals(const NetworkState& state, const ProblemSpec& spec);

/// Euclidean norm of the full gradient (all blocks).
double gradient_norm(const NetworkState& grad);

}  // namespace ncdl

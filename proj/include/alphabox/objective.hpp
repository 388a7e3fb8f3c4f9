#pragma once

#include <cstddef>
#include <vector>

#include "alphabox/net.hpp"
#include "alphabox/numerics.hpp"

namespace alphabox {

enum class Task { regression, classification };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

/// Below this |alpha| the exact VI (mean log-likelihood) form is used instead
/// of (1/alpha) * log-sum-exp, which cancels catastrophically near zero.
inline constexpr double kAlphaSwitch = 1e-6;

struct AlphaObjectiveConfig {
    Task task = Task::classification;
    double alpha = 0.5;
    std::size_t samples = 10;  // K
    double tau = 1.0;          // regression observation precision
    std::size_t dataset_size = 1;  // N
    std::vector<double> layer_reg;  // one coefficient per weight layer
    bool include_likelihood_constant = true;

    void validate(std::size_t num_layers) const;

    /// c_i = (1 - dropout_i) * weight_decay. With weight decay read as a prior
    /// lengthscale l, weight_decay = p * l^2 / (2 N tau).
    static std::vector<double> default_layer_reg(const MlpArchitecture& arch, double weight_decay);
};

bool uses_vi_branch(double alpha);

/// BB-alpha classification loss summed over points.
///
/// log_probs is M x K with entries log p^{w_k}(y_n | x_n) <= 0. Per point:
///   -(1/alpha) * (logsumexp_k(alpha * ll_nk) - log K)   for |alpha| >= kAlphaSwitch
///   -(1/K) * sum_k ll_nk                                 otherwise
double classification_loss(const Matrix& log_probs, double alpha);
Vector classification_point_losses(const Matrix& log_probs, double alpha);
/// d loss / d ll_nk = -softmax_k(alpha * ll_n.); rows sum to -1.
Matrix classification_loss_grad(const Matrix& log_probs, double alpha);

/// BB-alpha Gaussian regression loss summed over points.
///
/// preds is M x K x D, targets M x D. Per point:
///   -(1/alpha) * (logsumexp_k(-(alpha tau / 2) ||y_n - f_nk||^2) - log K)
/// plus -(D/2) log(tau / 2 pi) when include_constant is set.
double regression_loss(const Tensor& preds, const Matrix& targets, double alpha, double tau,
                       bool include_constant);
Vector regression_point_losses(const Tensor& preds, const Matrix& targets, double alpha,
                               double tau, bool include_constant);
/// d loss / d f_nk = w_nk * tau * (f_nk - y_n), w = softmax_k of the log-sum-exp arguments.
Tensor regression_loss_grad(const Tensor& preds, const Matrix& targets, double alpha, double tau);

/// sum_i c_i ||M_i||_F^2; biases are excluded.
double kl_regularizer(const ParameterSet& params, const std::vector<double>& layer_reg);
ParameterSet kl_regularizer_grad(const ParameterSet& params, const std::vector<double>& layer_reg);

struct Batch {
    Matrix inputs;
    Matrix targets;                    // regression, M x D
    std::vector<std::size_t> labels;   // classification

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

struct ObjectiveValue {
    double value = 0.0;        // (N/M) * data_term + regularizer
    double data_term = 0.0;    // sum of per-point losses over the batch
    double regularizer = 0.0;
    ParameterSet gradient;
};

/// Mini-batch estimator of the full objective with its analytic gradient.
/// Draws K mask collections per batch point from rng.
ObjectiveValue total_objective(const ParameterSet& params, const MlpArchitecture& arch,
                               const Batch& batch, const AlphaObjectiveConfig& config,
                               RngStream& rng);

/// M x K matrix of log p(true class) from M x K x C logits.
Matrix true_class_log_probs(const Tensor& logits, const std::vector<std::size_t>& labels);

} // namespace alphabox

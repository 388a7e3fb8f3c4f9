#include "alphabox/objective.hpp"

#include <cmath>
#include <numbers>

namespace alphabox {

std::string to_string(Task t) {
    return t == Task::regression ? "regression" : "classification";
}

Task task_from_string(const std::string& s) {
    if (s == "regression") return Task::regression;
    if (s == "classification") return Task::classification;
    throw InvalidArgument("unknown task '" + s + "'");
}

void AlphaObjectiveConfig::validate(std::size_t num_layers) const {
    if (samples == 0) throw InvalidArgument("K must be >= 1");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("tau must be positive");
    if (!std::isfinite(alpha)) throw InvalidArgument("alpha must be finite");
    if (dataset_size == 0) throw InvalidArgument("N must be >= 1");
    if (layer_reg.size() != num_layers)
        throw InvalidArgument("layer_reg needs one coefficient per weight layer");
    for (double c : layer_reg)
        if (!(c >= 0.0)) throw InvalidArgument("layer_reg must be non-negative");
}

std::vector<double> AlphaObjectiveConfig::default_layer_reg(const MlpArchitecture& arch,
                                                            double weight_decay) {
    std::vector<double> reg;
    for (double r : arch.dropout_rates) reg.push_back((1.0 - r) * weight_decay);
    return reg;
}

bool uses_vi_branch(double alpha) { return std::abs(alpha) < kAlphaSwitch; }

namespace {

void check_log_probs(const Matrix& ll) {
    if (ll.cols() == 0) throw InvalidArgument("K must be >= 1");
    for (Eigen::Index i = 0; i < ll.size(); ++i) {
        const double v = ll.data()[i];
        if (std::isnan(v)) throw InvalidArgument("non-finite log-probability");
        if (v > 0.0) throw InvalidArgument("log-probabilities must be <= 0");
    }
}

double gaussian_log_constant(std::size_t dim, double tau) {
    return -0.5 * static_cast<double>(dim) * std::log(tau / (2.0 * std::numbers::pi));
}

} // namespace

Vector classification_point_losses(const Matrix& log_probs, double alpha) {
    check_log_probs(log_probs);
    const Eigen::Index m = log_probs.rows();
    const Eigen::Index k = log_probs.cols();
    Vector out(m);
    if (uses_vi_branch(alpha)) {
        for (Eigen::Index n = 0; n < m; ++n) out[n] = -log_probs.row(n).mean();
        return out;
    }
    const double log_k = std::log(static_cast<double>(k));
    std::vector<double> scaled(static_cast<std::size_t>(k));
    for (Eigen::Index n = 0; n < m; ++n) {
        for (Eigen::Index j = 0; j < k; ++j) scaled[static_cast<std::size_t>(j)] = alpha * log_probs(n, j);
        out[n] = -(log_sum_exp(scaled) - log_k) / alpha;
    }
    return out;
}

double classification_loss(const Matrix& log_probs, double alpha) {
    return classification_point_losses(log_probs, alpha).sum();
}

Matrix classification_loss_grad(const Matrix& log_probs, double alpha) {
    check_log_probs(log_probs);
    const Eigen::Index m = log_probs.rows();
    const Eigen::Index k = log_probs.cols();
    Matrix g(m, k);
    if (uses_vi_branch(alpha)) {
        g.setConstant(-1.0 / static_cast<double>(k));
        return g;
    }
    std::vector<double> scaled(static_cast<std::size_t>(k));
    for (Eigen::Index n = 0; n < m; ++n) {
        for (Eigen::Index j = 0; j < k; ++j) scaled[static_cast<std::size_t>(j)] = alpha * log_probs(n, j);
        g.row(n) = -softmax(scaled).transpose();
    }
    return g;
}

namespace {

void check_regression_shapes(const Tensor& preds, const Matrix& targets, double tau) {
    if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
    if (preds.rank() != 3) throw InvalidArgument("predictions must be M x K x D");
    if (preds.dim(1) == 0) throw InvalidArgument("K must be >= 1");
    if (static_cast<std::size_t>(targets.rows()) != preds.dim(0) ||
        static_cast<std::size_t>(targets.cols()) != preds.dim(2))
        throw InvalidArgument("targets do not match predictions");
}

// -(alpha tau / 2) ||y_n - f_nk||^2 for each k, or the raw squared norms when alpha is 0.
std::vector<double> squared_residuals(const Tensor& preds, const Matrix& targets, std::size_t n) {
    const std::size_t k = preds.dim(1), d = preds.dim(2);
    std::vector<double> sq(k);
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double r = targets(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) -
                             preds.at(n, j, c);
            s += r * r;
        }
        sq[j] = s;
    }
    return sq;
}

} // namespace

Vector regression_point_losses(const Tensor& preds, const Matrix& targets, double alpha,
                               double tau, bool include_constant) {
    check_regression_shapes(preds, targets, tau);
    const std::size_t m = preds.dim(0), k = preds.dim(1), d = preds.dim(2);
    const double constant = include_constant ? gaussian_log_constant(d, tau) : 0.0;
    const double log_k = std::log(static_cast<double>(k));
    Vector out(static_cast<Eigen::Index>(m));
    for (std::size_t n = 0; n < m; ++n) {
        std::vector<double> sq = squared_residuals(preds, targets, n);
        double loss = 0.0;
        if (uses_vi_branch(alpha)) {
            for (double s : sq) loss += 0.5 * tau * s;
            loss /= static_cast<double>(k);
        } else {
            for (double& s : sq) s *= -0.5 * alpha * tau;
            loss = -(log_sum_exp(sq) - log_k) / alpha;
        }
        out[static_cast<Eigen::Index>(n)] = loss + constant;
    }
    return out;
}

double regression_loss(const Tensor& preds, const Matrix& targets, double alpha, double tau,
                       bool include_constant) {
    return regression_point_losses(preds, targets, alpha, tau, include_constant).sum();
}

Tensor regression_loss_grad(const Tensor& preds, const Matrix& targets, double alpha, double tau) {
    check_regression_shapes(preds, targets, tau);
    const std::size_t m = preds.dim(0), k = preds.dim(1), d = preds.dim(2);
    Tensor g(preds.shape());
    for (std::size_t n = 0; n < m; ++n) {
        std::vector<double> w(k, 1.0 / static_cast<double>(k));
        if (!uses_vi_branch(alpha)) {
            std::vector<double> sq = squared_residuals(preds, targets, n);
            for (double& s : sq) s *= -0.5 * alpha * tau;
            Vector sm = softmax(sq);
            for (std::size_t j = 0; j < k; ++j) w[j] = sm[static_cast<Eigen::Index>(j)];
        }
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < d; ++c)
                g.at(n, j, c) = w[j] * tau *
                                (preds.at(n, j, c) -
                                 targets(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)));
    }
    return g;
}

double kl_regularizer(const ParameterSet& params, const std::vector<double>& layer_reg) {
    if (layer_reg.size() != params.weights.size())
        throw InvalidArgument("layer_reg length does not match layer count");
    double r = 0.0;
    for (std::size_t i = 0; i < layer_reg.size(); ++i) r += layer_reg[i] * params.weights[i].squaredNorm();
    return r;
}

ParameterSet kl_regularizer_grad(const ParameterSet& params, const std::vector<double>& layer_reg) {
    if (layer_reg.size() != params.weights.size())
        throw InvalidArgument("layer_reg length does not match layer count");
    ParameterSet g = params;
    for (std::size_t i = 0; i < layer_reg.size(); ++i) {
        g.weights[i] *= 2.0 * layer_reg[i];
        g.biases[i].setZero();
    }
    return g;
}

Matrix true_class_log_probs(const Tensor& logits, const std::vector<std::size_t>& labels) {
    const std::size_t m = logits.dim(0), k = logits.dim(1), c = logits.dim(2);
    if (labels.size() != m) throw InvalidArgument("label count does not match batch");
    Matrix ll(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    const double* base = logits.data().data();
    for (std::size_t n = 0; n < m; ++n) {
        if (labels[n] >= c) throw InvalidArgument("label out of range");
        for (std::size_t j = 0; j < k; ++j) {
            std::span<const double> row(base + (n * k + j) * c, c);
            ll(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) =
                row[labels[n]] - log_sum_exp(row);
        }
    }
    return ll;
}

ObjectiveValue total_objective(const ParameterSet& params, const MlpArchitecture& arch,
                               const Batch& batch, const AlphaObjectiveConfig& config,
                               RngStream& rng) {
    config.validate(arch.num_layers());
    const std::size_t m = batch.size();
    if (m == 0) throw InvalidArgument("empty batch");
    const double scale = static_cast<double>(config.dataset_size) / static_cast<double>(m);

    ForwardResult fwd = forward_stochastic(params, arch, batch.inputs, config.samples, rng);
    const std::size_t k = config.samples, d_out = arch.output_dim();

    ObjectiveValue out;
    Tensor dlogits({m, k, d_out});
    if (config.task == Task::classification) {
        const Matrix ll = true_class_log_probs(fwd.logits, batch.labels);
        out.data_term = classification_loss(ll, config.alpha);
        const Matrix g = classification_loss_grad(ll, config.alpha);
        // d ll / d logits = onehot - softmax
        const double* base = fwd.logits.data().data();
        for (std::size_t n = 0; n < m; ++n) {
            for (std::size_t j = 0; j < k; ++j) {
                Vector p = softmax(std::span<const double>(base + (n * k + j) * d_out, d_out));
                const double gn = scale * g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
                for (std::size_t c = 0; c < d_out; ++c)
                    dlogits.at(n, j, c) = gn * ((c == batch.labels[n] ? 1.0 : 0.0) - p[static_cast<Eigen::Index>(c)]);
            }
        }
    } else {
        out.data_term = regression_loss(fwd.logits, batch.targets, config.alpha, config.tau,
                                        config.include_likelihood_constant);
        dlogits = regression_loss_grad(fwd.logits, batch.targets, config.alpha, config.tau);
        for (auto& v : dlogits.data()) v *= scale;
    }
    out.regularizer = kl_regularizer(params, config.layer_reg);
    out.value = scale * out.data_term + out.regularizer;
    out.gradient = backward_params(params, arch, fwd.record, fwd.masks, dlogits);
    out.gradient += kl_regularizer_grad(params, config.layer_reg);
    return out;
}

} // namespace alphabox

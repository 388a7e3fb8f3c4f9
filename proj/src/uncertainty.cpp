#include "alphabox/uncertainty.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

namespace alphabox {

namespace {

constexpr std::size_t kChunk = 256;

Vector clip_unit(Vector v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

Vector sign(const Vector& g) {
    Vector s(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) s[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    return s;
}

// Probabilities p_k for each of the K logit rows of a single input.
Matrix sample_probs(const Tensor& logits) {
    const std::size_t k = logits.dim(1), c = logits.dim(2);
    Matrix p(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
    for (std::size_t j = 0; j < k; ++j)
        p.row(static_cast<Eigen::Index>(j)) =
            softmax(std::span<const double>(logits.data().data() + j * c, c)).transpose();
    return p;
}

// Gradient of log pbar(cls | x) under the given masks, pbar the mean of K softmaxes.
Vector log_mean_prob_input_grad(ModelRef model, const Vector& x, std::size_t cls, MaskSet masks,
                                const Matrix& probs) {
    const Eigen::Index k = probs.rows();
    const auto c = static_cast<Eigen::Index>(cls);
    const double total = probs.col(c).sum();
    Matrix dlogits(k, probs.cols());
    for (Eigen::Index j = 0; j < k; ++j) {
        const double w = total > 0.0 ? probs(j, c) / total : 1.0 / static_cast<double>(k);
        dlogits.row(j) = -w * probs.row(j);
        dlogits(j, c) += w;
    }
    return input_gradient(model.params, model.arch, x, masks, dlogits);
}

PredictiveSummary summarise_classification(const Tensor& logits, std::size_t row,
                                           std::optional<std::size_t> label) {
    const std::size_t k = logits.dim(1), c = logits.dim(2);
    PredictiveSummary s;
    s.samples = k;
    s.mean = Vector::Zero(static_cast<Eigen::Index>(c));
    std::vector<double> label_ll;
    for (std::size_t j = 0; j < k; ++j) {
        std::span<const double> z(logits.data().data() + (row * k + j) * c, c);
        const Vector lp = log_softmax(z);
        s.mean += lp.array().exp().matrix();
        if (label) label_ll.push_back(lp[static_cast<Eigen::Index>(*label)]);
    }
    s.mean /= static_cast<double>(k);
    s.entropy = predictive_entropy(s.mean);
    if (label) s.log_likelihood = log_sum_exp(label_ll) - std::log(static_cast<double>(k));
    return s;
}

} // namespace

MaskSet sample_masks_per_row(const MlpArchitecture& arch, std::size_t rows, std::size_t samples,
                             const RngStream& base, std::size_t first_index) {
    MaskSet out;
    out.batch = rows;
    out.samples = samples;
    for (std::size_t i = 0; i < arch.num_layers(); ++i)
        out.layers.emplace_back(static_cast<Eigen::Index>(rows * samples),
                                static_cast<Eigen::Index>(arch.widths[i]));
    for (std::size_t r = 0; r < rows; ++r) {
        RngStream rng = base.substream(first_index + r);
        MaskSet one = sample_masks(arch, 1, samples, rng);
        for (std::size_t i = 0; i < arch.num_layers(); ++i)
            out.layers[i].middleRows(static_cast<Eigen::Index>(r * samples),
                                     static_cast<Eigen::Index>(samples)) = one.layers[i];
    }
    return out;
}

double predictive_entropy(const Vector& probs) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (p < 0.0 || std::isnan(p)) throw InvalidArgument("probabilities must be non-negative");
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

std::size_t argmax_lowest(const Vector& v) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
    return best;
}

PredictiveSummary mc_predict(ModelRef model, const Vector& x, std::size_t samples, RngStream& rng,
                             std::optional<std::size_t> label) {
    if (samples == 0) throw InvalidArgument("K_test must be >= 1");
    if (label && *label >= model.arch.output_dim()) throw InvalidArgument("label out of range");
    const Matrix row = x.transpose();
    ForwardResult fwd = forward_stochastic(model.params, model.arch, row, samples, rng);
    return summarise_classification(fwd.logits, 0, label);
}

std::vector<PredictiveSummary> mc_predict_dataset(ModelRef model, const Matrix& inputs,
                                                  std::size_t samples, const RngStream& base,
                                                  const std::vector<std::size_t>* labels) {
    if (samples == 0) throw InvalidArgument("K_test must be >= 1");
    const std::size_t n = static_cast<std::size_t>(inputs.rows());
    if (labels && labels->size() != n) throw InvalidArgument("label count mismatch");
    std::vector<PredictiveSummary> out(n);
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t ci) {
        const std::size_t first = ci * kChunk, rows = std::min(kChunk, n - first);
        MaskSet masks = sample_masks_per_row(model.arch, rows, samples, base, first);
        const Matrix x = inputs.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(rows));
        ForwardResult fwd = forward_with_masks(model.params, model.arch, x, std::move(masks));
        for (std::size_t r = 0; r < rows; ++r) {
            std::optional<std::size_t> label;
            if (labels) label = (*labels)[first + r];
            out[first + r] = summarise_classification(fwd.logits, r, label);
        }
    });
    return out;
}

std::vector<PredictiveSummary> mc_predict_regression(ModelRef model, const Matrix& inputs,
                                                     const Matrix& targets, std::size_t samples,
                                                     double tau, const RngStream& base,
                                                     double log_target_scale) {
    if (samples == 0) throw InvalidArgument("K_test must be >= 1");
    if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
    const std::size_t n = static_cast<std::size_t>(inputs.rows());
    const std::size_t d = model.arch.output_dim();
    if (static_cast<std::size_t>(targets.rows()) != n || static_cast<std::size_t>(targets.cols()) != d)
        throw InvalidArgument("targets do not match inputs");
    const double log_norm =
        0.5 * static_cast<double>(d) * std::log(tau / (2.0 * std::numbers::pi)) -
        static_cast<double>(d) * log_target_scale;
    const double log_k = std::log(static_cast<double>(samples));
    std::vector<PredictiveSummary> out(n);
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t ci) {
        const std::size_t first = ci * kChunk, rows = std::min(kChunk, n - first);
        MaskSet masks = sample_masks_per_row(model.arch, rows, samples, base, first);
        const Matrix x = inputs.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(rows));
        ForwardResult fwd = forward_with_masks(model.params, model.arch, x, std::move(masks));
        std::vector<double> terms(samples);
        for (std::size_t r = 0; r < rows; ++r) {
            PredictiveSummary s;
            s.samples = samples;
            s.mean = Vector::Zero(static_cast<Eigen::Index>(d));
            for (std::size_t k = 0; k < samples; ++k) {
                double sq = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double f = fwd.logits.at(r, k, c);
                    s.mean[static_cast<Eigen::Index>(c)] += f;
                    const double res = targets(static_cast<Eigen::Index>(first + r), static_cast<Eigen::Index>(c)) - f;
                    sq += res * res;
                }
                terms[k] = -0.5 * tau * sq;
            }
            s.mean /= static_cast<double>(samples);
            s.log_likelihood = log_sum_exp(terms) - log_k + log_norm;
            out[first + r] = std::move(s);
        }
    });
    return out;
}

Vector fgs_untargeted(ModelRef model, const Vector& x, double eta, std::size_t attack_samples,
                      RngStream& rng) {
    if (!(eta >= 0.0)) throw InvalidArgument("eta must be non-negative");
    if (attack_samples == 0) throw InvalidArgument("K_attack must be >= 1");
    if (eta == 0.0) return x;
    MaskSet masks = sample_masks(model.arch, 1, attack_samples, rng);
    const Matrix row = x.transpose();
    ForwardResult fwd = forward_with_masks(model.params, model.arch, row, masks);
    const Matrix probs = sample_probs(fwd.logits);
    const Vector mean = probs.colwise().mean().transpose();
    const std::size_t top = argmax_lowest(mean);
    const Vector g = log_mean_prob_input_grad(model, x, top, std::move(masks), probs);
    return clip_unit(x - eta * sign(g));
}

std::vector<Vector> targeted_iterative(ModelRef model, const Vector& x, std::size_t target,
                                       double eta, std::size_t steps, std::size_t attack_samples,
                                       RngStream& rng) {
    if (target >= model.arch.output_dim()) throw InvalidArgument("target class out of range");
    if (!(eta >= 0.0)) throw InvalidArgument("eta must be non-negative");
    if (attack_samples == 0) throw InvalidArgument("K_attack must be >= 1");
    std::vector<Vector> traj{x};
    traj.reserve(steps + 1);
    for (std::size_t t = 0; t < steps; ++t) {
        const Vector& cur = traj.back();
        MaskSet masks = sample_masks(model.arch, 1, attack_samples, rng);
        const Matrix row = cur.transpose();
        ForwardResult fwd = forward_with_masks(model.params, model.arch, row, masks);
        const Matrix probs = sample_probs(fwd.logits);
        const Vector g = log_mean_prob_input_grad(model, cur, target, std::move(masks), probs);
        traj.push_back(clip_unit(cur + eta * sign(g)));
    }
    return traj;
}

void AttackConfig::validate(std::size_t num_classes) const {
    if (sweep.empty()) throw InvalidArgument("attack sweep is empty");
    if (attack_samples == 0 || test_samples == 0) throw InvalidArgument("attack sample counts must be >= 1");
    for (double v : sweep)
        if (!(v >= 0.0)) throw InvalidArgument("sweep values must be non-negative");
    if (kind == AttackKind::targeted_iterative) {
        if (target_class >= num_classes) throw InvalidArgument("target class out of range");
        if (!(eta >= 0.0)) throw InvalidArgument("eta must be non-negative");
        for (double v : sweep)
            if (v != std::floor(v)) throw InvalidArgument("targeted sweep values are step counts");
    }
}

std::vector<DetectionRow> detection_curve(ModelRef model, const Matrix& inputs,
                                          const std::vector<std::size_t>& labels,
                                          const AttackConfig& attack, std::uint64_t seed) {
    attack.validate(model.arch.output_dim());
    const std::size_t n = static_cast<std::size_t>(inputs.rows());
    if (n == 0) throw InvalidArgument("evaluation set is empty");
    if (labels.size() != n) throw InvalidArgument("label count mismatch");
    const std::size_t m = attack.sweep.size();
    const RngStream base(seed);

    // per input, per sweep value: correct?, entropy, target probability
    std::vector<std::vector<std::array<double, 3>>> stats(n, std::vector<std::array<double, 3>>(m));
    parallel_for(n, [&](std::size_t i) {
        const RngStream input_rng = base.substream(i);
        const Vector x = inputs.row(static_cast<Eigen::Index>(i)).transpose();
        auto record = [&](std::size_t j, const Vector& adv) {
            RngStream pred_rng = input_rng.substream(0);
            PredictiveSummary s = mc_predict(model, adv, attack.test_samples, pred_rng);
            stats[i][j] = {argmax_lowest(s.mean) == labels[i] ? 1.0 : 0.0, s.entropy,
                           s.mean[static_cast<Eigen::Index>(std::min(attack.target_class, model.arch.output_dim() - 1))]};
        };
        if (attack.kind == AttackKind::fgs_untargeted) {
            for (std::size_t j = 0; j < m; ++j) {
                RngStream atk_rng = input_rng.substream(1 + j);
                record(j, fgs_untargeted(model, x, attack.sweep[j], attack.attack_samples, atk_rng));
            }
        } else {
            const auto max_steps = static_cast<std::size_t>(*std::max_element(attack.sweep.begin(), attack.sweep.end()));
            RngStream atk_rng = input_rng.substream(1);
            const auto traj = targeted_iterative(model, x, attack.target_class, attack.eta,
                                                 max_steps, attack.attack_samples, atk_rng);
            for (std::size_t j = 0; j < m; ++j) record(j, traj[static_cast<std::size_t>(attack.sweep[j])]);
        }
    });

    std::vector<DetectionRow> rows(m);
    for (std::size_t j = 0; j < m; ++j) {
        rows[j].sweep_value = attack.sweep[j];
        rows[j].n_points = n;
        for (std::size_t i = 0; i < n; ++i) {
            rows[j].accuracy += stats[i][j][0];
            rows[j].mean_entropy += stats[i][j][1];
            rows[j].mean_target_prob += stats[i][j][2];
        }
        rows[j].accuracy /= static_cast<double>(n);
        rows[j].mean_entropy /= static_cast<double>(n);
        rows[j].mean_target_prob /= static_cast<double>(n);
    }
    return rows;
}

void write_detection_csv(std::ostream& os, const std::vector<DetectionRow>& rows) {
    os << "sweep_value,accuracy,mean_entropy,n_points\n";
    os << std::setprecision(17);
    for (const auto& r : rows)
        os << r.sweep_value << ',' << r.accuracy << ',' << r.mean_entropy << ',' << r.n_points << '\n';
}

} // namespace alphabox

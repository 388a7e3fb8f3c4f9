#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "alphabox/net.hpp"
#include "alphabox/numerics.hpp"

namespace alphabox {

struct ModelRef {
    const ParameterSet& params;
    const MlpArchitecture& arch;
};

/// MC-dropout predictive summary for one input.
struct PredictiveSummary {
    Vector mean;                  // class probabilities, or predictive mean for regression
    double entropy = 0.0;         // nats, classification only
    double log_likelihood = 0.0;  // of the supplied label / target, when one was given
    std::size_t samples = 0;
};

/// Masks for row r come from base.substream(first_index + r), so a row's draws
/// do not depend on how a dataset is chunked or scheduled.
MaskSet sample_masks_per_row(const MlpArchitecture& arch, std::size_t rows, std::size_t samples,
                             const RngStream& base, std::size_t first_index);

/// Mean of softmax outputs over K mask draws.
PredictiveSummary mc_predict(ModelRef model, const Vector& x, std::size_t samples, RngStream& rng,
                             std::optional<std::size_t> label = std::nullopt);

/// Classification over a dataset; input i uses base.substream(i).
std::vector<PredictiveSummary> mc_predict_dataset(ModelRef model, const Matrix& inputs,
                                                  std::size_t samples, const RngStream& base,
                                                  const std::vector<std::size_t>* labels = nullptr);

/// Regression over a dataset. log_likelihood is log[(1/K) sum_k N(y; f_k, tau^-1 I)]
/// minus D * log_target_scale (to report in un-standardised units).
std::vector<PredictiveSummary> mc_predict_regression(ModelRef model, const Matrix& inputs,
                                                     const Matrix& targets, std::size_t samples,
                                                     double tau, const RngStream& base,
                                                     double log_target_scale = 0.0);

/// -sum p log p with 0 log 0 = 0.
double predictive_entropy(const Vector& probs);

std::size_t argmax_lowest(const Vector& v);

/// x - eta * sign(grad_x log pbar(y*|x)), y* the MC-mean argmax, clipped to [0, 1].
/// The gradient is taken under K_attack fixed masks drawn from rng.
Vector fgs_untargeted(ModelRef model, const Vector& x, double eta, std::size_t attack_samples,
                      RngStream& rng);

/// Iterates x_t = clip(x_{t-1} + eta * sign(grad log pbar(target|x_{t-1}))) with
/// fresh masks per step. Returns [x_0, ..., x_steps].
std::vector<Vector> targeted_iterative(ModelRef model, const Vector& x, std::size_t target,
                                       double eta, std::size_t steps, std::size_t attack_samples,
                                       RngStream& rng);

enum class AttackKind { fgs_untargeted, targeted_iterative };

struct AttackConfig {
    AttackKind kind = AttackKind::fgs_untargeted;
    std::vector<double> sweep;        // eta values (FGS) or step counts (targeted)
    double eta = 0.01;                // targeted step size
    std::size_t target_class = 0;
    std::size_t attack_samples = 10;  // K_attack
    std::size_t test_samples = 10;    // K_test

    void validate(std::size_t num_classes) const;
};

struct DetectionRow {
    double sweep_value = 0.0;
    double accuracy = 0.0;
    double mean_entropy = 0.0;
    std::size_t n_points = 0;
    double mean_target_prob = 0.0;  // targeted attacks only; not part of the CSV schema
};

/// Accuracy and mean predictive entropy on attacked inputs at every sweep value.
/// Input i draws everything from RngStream(seed).substream(i).
std::vector<DetectionRow> detection_curve(ModelRef model, const Matrix& inputs,
                                          const std::vector<std::size_t>& labels,
                                          const AttackConfig& attack, std::uint64_t seed);

/// Header `sweep_value,accuracy,mean_entropy,n_points`, one row per entry.
void write_detection_csv(std::ostream& os, const std::vector<DetectionRow>& rows);

} // namespace alphabox

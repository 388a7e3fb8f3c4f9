#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "alphabox/harness/config.hpp"
#include "alphabox/harness/data.hpp"
#include "alphabox/objective.hpp"
#include "alphabox/uncertainty.hpp"

namespace alphabox::harness {

/// First-order optimiser over a ParameterSet.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, double momentum = 0.9);
    void step(ParameterSet& params, const ParameterSet& grad);

private:
    OptimizerKind kind_;
    double lr_, momentum_;
    std::size_t t_ = 0;
    std::vector<double> m_, v_;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EvalMetrics {
    double nll = kNaN;           // negative log-likelihood per test point
    double rmse = kNaN;          // regression only
    double accuracy = kNaN;      // classification only
    double mean_entropy = kNaN;  // classification only
    std::size_t n = 0;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double seconds = 0.0;     // optimisation wall clock, evaluation excluded
    double train_loss = 0.0;  // mean of (objective / N) over the epoch's batches
    bool evaluated = false;
    EvalMetrics test;
};

struct TrainOptions {
    MlpArchitecture arch;
    AlphaObjectiveConfig objective;  // dataset_size is set from the training data
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    std::size_t k_test = 100;
    std::size_t eval_every = 1;     // evaluate at these epochs and the final one
    Vector target_scale;            // original-units scale of regression targets; empty means 1
    std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
    ParameterSet params;
    std::vector<EpochMetrics> log;
};

/// Raised on a non-finite loss; carries the last finite parameters.
class TrainingDiverged : public RuntimeFailure {
public:
    TrainingDiverged(std::size_t epoch, ParameterSet last_finite);
    std::size_t epoch;
    ParameterSet last_finite;
};

/// Mini-batch optimisation of total_objective. All randomness derives from
/// RngStream(seed): substream 0 initialises, 1 shuffles, 2 draws training
/// masks, 3 drives evaluation. Zero epochs returns the initial parameters.
TrainResult train_model(const TrainOptions& options, const Dataset& train, const Dataset* test);

/// MC-dropout metrics on a (standardised) dataset. Regression log-likelihoods
/// and RMSE are reported in original target units via target_scale.
EvalMetrics evaluate_model(ModelRef model, const Dataset& data, std::size_t k_test, double tau,
                           const RngStream& base, const Vector& target_scale = Vector());

/// Training options assembled from an experiment config for the given data.
TrainOptions make_train_options(const ExperimentConfig& config, const Dataset& train, double tau);

} // namespace alphabox::harness

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "alphabox/harness/checkpoint.hpp"
#include "alphabox/harness/config.hpp"
#include "alphabox/harness/data.hpp"
#include "alphabox/harness/train.hpp"

namespace alphabox::harness {

/// Files written under an output directory: metrics.csv, metrics.json,
/// checkpoint.bin and plotdata/*.csv. Wall-clock timings only appear in
/// plotdata/timing.csv and plotdata/k_sweep.csv so that the metrics files are
/// reproducible bit for bit.
struct RunSummary {
    std::string metrics_json;  // contents written to metrics.json
};

/// Number of random splits: config value, else 20 below 2000 points and 5 above.
std::size_t protocol_splits(const ExperimentConfig& config, std::size_t n);

/// Seed of split s: mix_seed(split.seed, s).
Split protocol_split(const ExperimentConfig& config, std::size_t n, std::size_t s);

/// Chooses tau from the grid by validation NLL on the training part of split 0.
/// Returns the configured tau when the grid is empty.
double select_tau(const ExperimentConfig& config, const Dataset& data,
                  std::vector<std::pair<double, double>>* table = nullptr);

struct RegressionResult {
    double tau = 1.0;
    std::vector<EvalMetrics> splits;
    double nll_mean = 0.0, nll_se = 0.0, rmse_mean = 0.0, rmse_se = 0.0;
};

/// Repeated random-split regression protocol on a CSV dataset.
RegressionResult run_regression_protocol(const ExperimentConfig& config, const std::string& out_dir);

/// Train-then-test classification on IDX files.
TrainResult run_classification(const ExperimentConfig& config, const std::string& out_dir);

/// `train` subcommand: dispatches on the task.
RunSummary run_train(const ExperimentConfig& config, const std::string& out_dir);

/// `evaluate` subcommand: loads config.checkpoint (or out_dir/checkpoint.bin) and
/// scores the classification test set or the test part of regression split 0.
RunSummary run_evaluate(const ExperimentConfig& config, const std::string& out_dir);

/// `attack` subcommand: detection curves for the dropout model and, when
/// enabled, a dropout-free baseline trained with the same settings.
RunSummary run_attack(const ExperimentConfig& config, const std::string& out_dir);

/// `benchmark` subcommand: identical classification runs differing only in K.
RunSummary run_benchmark(const ExperimentConfig& config, const std::string& out_dir);

/// `gradcheck` / `divergence-check` subcommands: the check table goes to
/// metrics.csv and plotdata/<name>.csv; `passed` reports whether every check passed.
RunSummary run_gradcheck_command(std::uint64_t seed, const std::string& out_dir, bool& passed);
RunSummary run_divergence_command(std::uint64_t seed, const std::string& out_dir, bool& passed);

/// Classification train/test sets after max_train/max_test truncation.
std::pair<Dataset, Dataset> load_classification(const ExperimentConfig& config);

} // namespace alphabox::harness

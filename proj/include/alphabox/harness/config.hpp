#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "alphabox/net.hpp"
#include "alphabox/objective.hpp"
#include "alphabox/uncertainty.hpp"

namespace alphabox::harness {

struct DatasetSpec {
    std::string format = "csv";  // "csv" or "idx"
    std::string path;            // csv
    std::string train_images, train_labels, test_images, test_labels;  // idx
    std::size_t max_train = 0;   // 0 keeps every row
    std::size_t max_test = 0;
    bool operator==(const DatasetSpec&) const = default;
};

struct ArchitectureSpec {
    std::vector<std::size_t> hidden{50};
    Activation activation = Activation::relu;
    double input_dropout = 0.0;
    double hidden_dropout = 0.05;
    bool operator==(const ArchitectureSpec&) const = default;
};

struct ObjectiveSpec {
    double alpha = 0.5;
    std::size_t samples = 10;
    double tau = 1.0;
    std::vector<double> tau_grid;  // non-empty: pick tau on a validation split
    double weight_decay = 0.5;
    bool include_likelihood_constant = true;
    bool operator==(const ObjectiveSpec&) const = default;
};

enum class OptimizerKind { adam, sgd_momentum };
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    std::size_t batch_size = 0;  // 0: 32 for regression, 128 for classification
    std::size_t epochs = 40;
    double momentum = 0.9;
    bool operator==(const OptimizerSpec&) const = default;
};

struct SplitSpec {
    std::size_t n_splits = 0;  // 0: 20 when N < 2000, else 5
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
    double validation_fraction = 0.2;
    bool operator==(const SplitSpec&) const = default;
};

struct AttackSpec {
    AttackKind kind = AttackKind::fgs_untargeted;
    std::vector<double> sweep{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    double eta = 0.01;
    std::size_t target_class = 0;
    std::size_t attack_samples = 10;
    std::size_t max_points = 0;  // 0 attacks the whole test set
    bool baseline = true;        // also train a dropout-free baseline
    bool operator==(const AttackSpec&) const = default;
};

struct BenchmarkSpec {
    std::vector<std::size_t> k_values{1, 10, 100};
    std::size_t epochs = 2;
    bool operator==(const BenchmarkSpec&) const = default;
};

struct ExperimentConfig {
    Task task = Task::regression;
    DatasetSpec dataset;
    ArchitectureSpec architecture;
    ObjectiveSpec objective;
    OptimizerSpec optimizer;
    SplitSpec split;
    std::size_t k_test = 100;
    std::size_t eval_every = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::string checkpoint;  // optional model to load instead of training
    AttackSpec attack;
    BenchmarkSpec benchmark;

    bool operator==(const ExperimentConfig&) const = default;

    /// Field-level checks plus existence of every referenced file.
    void validate() const;
    std::size_t effective_batch_size() const;
    MlpArchitecture make_architecture(std::size_t d_in, std::size_t d_out) const;
};

/// Parses the JSON schema; unknown keys and type mismatches raise InvalidArgument.
/// Relative paths are resolved against base_dir when it is non-empty.
ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path);
std::string serialise_config(const ExperimentConfig& config);

/// FNV-1a over the serialised config, ignoring output_dir so that a run's
/// artifacts do not depend on where they are written.
std::uint64_t config_hash(const ExperimentConfig& config);

} // namespace alphabox::harness

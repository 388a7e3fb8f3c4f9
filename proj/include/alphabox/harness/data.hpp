#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "alphabox/numerics.hpp"
#include "alphabox/objective.hpp"

namespace alphabox::harness {

struct Dataset {
    Task task = Task::regression;
    Matrix inputs;
    Matrix targets;                   // regression: N x D
    std::vector<std::size_t> labels;  // classification
    std::size_t num_classes = 0;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
    std::size_t input_dim() const { return static_cast<std::size_t>(inputs.cols()); }
    std::size_t output_dim() const;
    Dataset subset(const std::vector<std::size_t>& rows) const;
    Batch batch(const std::vector<std::size_t>& rows) const;
};

/// Numeric CSV, comma separated, '.' decimals; the last column is the target.
/// A first line that does not parse as numbers is treated as a header.
Dataset load_csv_regression(const std::string& path);
Dataset parse_csv_regression(const std::string& text, const std::string& source = "<memory>");

/// IDX image file (magic 0x00000803) and label file (0x00000801). Pixels are
/// divided by 255; labels must lie in 0..9.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
Matrix load_idx_images(const std::string& path);
std::vector<std::size_t> load_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

/// Per-column affine standardisation fitted on training data. Columns with
/// zero spread keep std 1.
struct Standardizer {
    Vector input_mean, input_std;
    Vector target_mean, target_std;

    static Standardizer fit(const Dataset& train);
    Dataset apply(const Dataset& d) const;
    /// log of the product of target standard deviations (for un-standardised log-likelihoods).
    double log_target_scale() const;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Random split that is a pure function of (seed, n): a Fisher-Yates
/// permutation from RngStream(seed); the first floor((1 - f) n) indices train.
Split random_split(std::uint64_t seed, std::size_t n, double test_fraction);

} // namespace alphabox::harness

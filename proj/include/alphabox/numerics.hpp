#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace alphabox {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised for precondition violations (bad shapes, out-of-range arguments).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot complete (divergence, non-convergence).
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles with an explicit shape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j, std::size_t k);
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    /// View of the data as a rows x cols row-major matrix; rows*cols must equal size().
    Eigen::Map<Matrix> as_matrix(std::size_t rows, std::size_t cols);
    Eigen::Map<const Matrix> as_matrix(std::size_t rows, std::size_t cols) const;

    bool operator==(const Tensor&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

/// Deterministic random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniform doubles take the top 53 bits of one engine draw; normal
/// draws use Box-Muller on two uniform draws and return one value per pair.
/// Nothing here goes through std::*_distribution, whose algorithms are
/// implementation-defined.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1).
    double uniform();
    double normal();
    /// Uniform integer on [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Independent child stream; a pure function of (seed, stream_id).
    RngStream substream(std::uint64_t stream_id) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// SplitMix64 finaliser, used to derive sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id);

/// log(sum(exp(v))) via max-shift. -inf entries are ignored; all -inf gives -inf.
double log_sum_exp(std::span<const double> v);
Vector log_softmax(std::span<const double> logits);
/// Row-wise softmax weights of v (exp(v - lse(v))).
Vector softmax(std::span<const double> v);

/// One uniform draw per entry in row-major order; entry is 1 iff u < p_keep.
Tensor sample_bernoulli_mask(RngStream& rng, double p_keep, std::vector<std::size_t> shape);
/// One normal() call per entry in row-major order.
Tensor sample_gaussian(RngStream& rng, double mean, double stddev, std::vector<std::size_t> shape);

/// Fisher-Yates permutation of [0, n) driven by rng.below().
std::vector<std::size_t> random_permutation(RngStream& rng, std::size_t n);

/// Worker cap from ALPHABOX_THREADS; 1 when unset or invalid.
unsigned worker_count();
/// Runs fn(i) for i in [0, n) over worker_count() threads. fn must only write
/// to slots owned by i; results are then independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace alphabox

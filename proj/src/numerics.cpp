#include "alphabox/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

namespace alphabox {

std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_product(shape_))
        throw InvalidArgument("tensor data length does not match shape");
}

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}

Eigen::Map<Matrix> Tensor::as_matrix(std::size_t rows, std::size_t cols) {
    if (rows * cols != data_.size()) throw InvalidArgument("matrix view does not cover tensor");
    return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Eigen::Map<const Matrix> Tensor::as_matrix(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size()) throw InvalidArgument("matrix view does not cover tensor");
    return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double RngStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("below(0)");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

RngStream RngStream::substream(std::uint64_t stream_id) const {
    return RngStream(mix_seed(seed_, stream_id));
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw InvalidArgument("empty reduction");
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        if (std::isnan(x) || x == std::numeric_limits<double>::infinity())
            throw InvalidArgument("non-finite input");
        mx = std::max(mx, x);
    }
    if (mx == -std::numeric_limits<double>::infinity()) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

Vector log_softmax(std::span<const double> logits) {
    for (double x : logits)
        if (!std::isfinite(x)) throw InvalidArgument("non-finite input");
    const double lse = log_sum_exp(logits);
    Vector out(static_cast<Eigen::Index>(logits.size()));
    for (std::size_t i = 0; i < logits.size(); ++i) out[static_cast<Eigen::Index>(i)] = logits[i] - lse;
    return out;
}

Vector softmax(std::span<const double> v) {
    const double lse = log_sum_exp(v);
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = std::exp(v[i] - lse);
    return out;
}

Tensor sample_bernoulli_mask(RngStream& rng, double p_keep, std::vector<std::size_t> shape) {
    if (!(p_keep >= 0.0 && p_keep <= 1.0)) throw InvalidArgument("p_keep must lie in [0, 1]");
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = rng.uniform() < p_keep ? 1.0 : 0.0;
    return t;
}

Tensor sample_gaussian(RngStream& rng, double mean, double stddev, std::vector<std::size_t> shape) {
    if (!(stddev >= 0.0)) throw InvalidArgument("stddev must be non-negative");
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = mean + stddev * rng.normal();
    return t;
}

std::vector<std::size_t> random_permutation(RngStream& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

unsigned worker_count() {
    const char* env = std::getenv("ALPHABOX_THREADS");
    if (env == nullptr) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) return 1;
    return static_cast<unsigned>(std::min<long>(v, 256));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = std::min<std::size_t>(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace alphabox

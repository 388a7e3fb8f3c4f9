#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "alphabox/net.hpp"

using namespace alphabox;

namespace {

MaskSet ones_masks(const MlpArchitecture& arch, std::size_t batch, std::size_t samples) {
    MaskSet m{batch, samples, {}};
    for (std::size_t i = 0; i < arch.num_layers(); ++i)
        m.layers.push_back(Matrix::Ones(static_cast<Eigen::Index>(batch * samples),
                                        static_cast<Eigen::Index>(arch.widths[i])));
    return m;
}

// Plain re-implementation of one masked forward pass for a single input.
Vector reference_forward(const ParameterSet& p, const MlpArchitecture& arch, Vector x,
                         const std::vector<Vector>& masks) {
    for (std::size_t i = 0; i < arch.num_layers(); ++i) {
        Vector z = p.weights[i].transpose() * x.cwiseProduct(masks[i]) + p.biases[i];
        if (i + 1 < arch.num_layers() && arch.activations[i] == Activation::relu) z = z.cwiseMax(0.0);
        x = z;
    }
    return x;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

struct Setup {
    MlpArchitecture arch;
    ParameterSet params;
    Matrix x;
    MaskSet masks;
    Tensor upstream;
};

Setup random_setup(std::uint64_t seed, std::vector<std::size_t> widths, std::size_t batch, std::size_t samples) {
    Setup s;
    s.arch.widths = widths;
    for (std::size_t i = 0; i + 2 < widths.size(); ++i) s.arch.activations.push_back(Activation::relu);
    s.arch.dropout_rates.assign(widths.size() - 1, 0.3);
    RngStream rng(seed);
    s.params = init_parameters(s.arch, rng);
    for (auto& b : s.params.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.2 * rng.normal();
    s.x = sample_gaussian(rng, 0, 1, {batch, widths[0]}).as_matrix(batch, widths[0]);
    s.masks = sample_masks(s.arch, batch, samples, rng);
    s.upstream = sample_gaussian(rng, 0, 1, {batch, samples, widths.back()});
    return s;
}

double contract(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

TEST_CASE("identity network returns its inputs") {
    const auto arch = MlpArchitecture::make(3, {}, 3, 0.0, 0.0);
    auto p = ParameterSet::zeros(arch);
    p.weights[0] = Matrix::Identity(3, 3);
    RngStream rng(1);
    Matrix x(2, 3);
    x << 1, -2, 3, 0.5, 0.25, -7;
    const auto out = forward_stochastic(p, arch, x, 4, rng);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t d = 0; d < 3; ++d)
                CHECK(out.logits.at(n, k, d) == x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)));
}

TEST_CASE("all-zero mask leaves only the bias") {
    auto arch = MlpArchitecture::make(4, {}, 2, 0.5, 0.0);
    RngStream rng(2);
    auto p = init_parameters(arch, rng);
    p.biases[0] << 0.7, -1.3;
    MaskSet m = ones_masks(arch, 1, 1);
    m.layers[0].setZero();
    const auto out = forward_with_masks(p, arch, Matrix::Ones(1, 4), m);
    CHECK(out.logits.at(0, 0, 0) == 0.7);
    CHECK(out.logits.at(0, 0, 1) == -1.3);
}

TEST_CASE("forward is deterministic and each slice uses its own mask") {
    Setup s = random_setup(3, {5, 4, 3}, 3, 4);
    RngStream a(10), b(10);
    const auto f1 = forward_stochastic(s.params, s.arch, s.x, 4, a);
    const auto f2 = forward_stochastic(s.params, s.arch, s.x, 4, b);
    CHECK(f1.logits == f2.logits);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t k = 0; k < 4; ++k) {
            std::vector<Vector> masks;
            for (const auto& l : f1.masks.layers) masks.push_back(l.row(static_cast<Eigen::Index>(n * 4 + k)).transpose());
            const Vector want = reference_forward(s.params, s.arch, s.x.row(static_cast<Eigen::Index>(n)).transpose(), masks);
            for (std::size_t d = 0; d < 3; ++d)
                CHECK(std::abs(f1.logits.at(n, k, d) - want[static_cast<Eigen::Index>(d)]) < 1e-13);
        }
}

TEST_CASE("replaying a record from the same masks reproduces it") {
    Setup s = random_setup(4, {4, 6, 2}, 2, 3);
    const auto a = forward_with_masks(s.params, s.arch, s.x, s.masks);
    const auto b = forward_with_masks(s.params, s.arch, s.x, s.masks);
    CHECK(a.logits == b.logits);
    for (std::size_t i = 0; i < a.record.pre_activations.size(); ++i)
        CHECK(a.record.pre_activations[i] == b.record.pre_activations[i]);
}

TEST_CASE("relu network without biases is positively homogeneous") {
    Setup s = random_setup(5, {4, 6, 5, 3}, 2, 2);
    for (auto& b : s.params.biases) b.setZero();
    const auto f = forward_with_masks(s.params, s.arch, s.x, s.masks);
    const auto g = forward_with_masks(s.params, s.arch, 2.5 * s.x, s.masks);
    for (std::size_t i = 0; i < f.logits.size(); ++i) CHECK(g.logits[i] == doctest::Approx(2.5 * f.logits[i]).epsilon(1e-14));
}

TEST_CASE("backward_params linearity and zero upstream") {
    Setup s = random_setup(6, {3, 4, 2}, 2, 3);
    const auto f = forward_with_masks(s.params, s.arch, s.x, s.masks);
    Tensor zero(s.upstream.shape(), 0.0);
    for (double v : backward_params(s.params, s.arch, f.record, f.masks, zero).flatten()) CHECK(v == 0.0);
    Tensor twice = s.upstream;
    for (auto& v : twice.data()) v *= 2.0;
    const auto g1 = backward_params(s.params, s.arch, f.record, f.masks, s.upstream).flatten();
    const auto g2 = backward_params(s.params, s.arch, f.record, f.masks, twice).flatten();
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-14));
}

TEST_CASE("backward_params matches central differences on a 3-4-2 network") {
    Setup s = random_setup(7, {3, 4, 2}, 2, 3);
    const auto f = forward_with_masks(s.params, s.arch, s.x, s.masks);
    const auto analytic = backward_params(s.params, s.arch, f.record, f.masks, s.upstream).flatten();
    auto flat = s.params.flatten();
    std::vector<double> numeric(flat.size());
    ParameterSet probe = s.params;
    const double h = 1e-6;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double keep = flat[i];
        flat[i] = keep + h;
        probe.assign(flat);
        const double up = contract(forward_with_masks(probe, s.arch, s.x, s.masks).logits, s.upstream);
        flat[i] = keep - h;
        probe.assign(flat);
        const double dn = contract(forward_with_masks(probe, s.arch, s.x, s.masks).logits, s.upstream);
        flat[i] = keep;
        numeric[i] = (up - dn) / (2.0 * h);
    }
    CHECK(rel_err(analytic, numeric) < 1e-6);
}

TEST_CASE("gradient check over random small shapes") {
    RngStream shapes(8);
    for (int t = 0; t < 30; ++t) {
        std::vector<std::size_t> widths;
        const std::size_t layers = 1 + shapes.below(3);
        for (std::size_t i = 0; i <= layers; ++i) widths.push_back(1 + shapes.below(6));
        Setup s = random_setup(100 + t, widths, 1 + shapes.below(3), 1 + shapes.below(3));
        const auto f = forward_with_masks(s.params, s.arch, s.x, s.masks);
        const auto analytic = backward_params(s.params, s.arch, f.record, f.masks, s.upstream).flatten();
        auto flat = s.params.flatten();
        std::vector<double> numeric(flat.size());
        ParameterSet probe = s.params;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const double keep = flat[i], h = 1e-6;
            flat[i] = keep + h;
            probe.assign(flat);
            const double up = contract(forward_with_masks(probe, s.arch, s.x, s.masks).logits, s.upstream);
            flat[i] = keep - h;
            probe.assign(flat);
            const double dn = contract(forward_with_masks(probe, s.arch, s.x, s.masks).logits, s.upstream);
            flat[i] = keep;
            numeric[i] = (up - dn) / (2.0 * h);
        }
        CHECK(rel_err(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("stale record is rejected") {
    Setup s = random_setup(9, {3, 4, 2}, 2, 3);
    auto f = forward_with_masks(s.params, s.arch, s.x, s.masks);
    f.record.masked_inputs.pop_back();
    CHECK_THROWS_AS(backward_params(s.params, s.arch, f.record, f.masks, s.upstream), InvalidArgument);
}

TEST_CASE("input gradient of a linear layer is the weight row") {
    const auto arch = MlpArchitecture::make(3, {}, 2, 0.0, 0.0);
    RngStream rng(10);
    const auto p = init_parameters(arch, rng);
    const MaskSet m = ones_masks(arch, 1, 1);
    Matrix up(1, 2);
    up << 0.0, 1.0;  // d/dx of logit 1
    const Vector g = input_gradient(p, arch, Vector::Constant(3, 0.3), m, up);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(g[i] == p.weights[0](i, 1));
}

TEST_CASE("input gradient matches central differences and is blocked by zero masks") {
    Setup s = random_setup(11, {5, 6, 4, 3}, 1, 4);
    Matrix up = s.upstream.as_matrix(4, 3);
    const Vector x = s.x.row(0).transpose();
    const Vector g = input_gradient(s.params, s.arch, x, s.masks, up);
    auto value = [&](const Vector& v) {
        const auto f = forward_with_masks(s.params, s.arch, v.transpose(), s.masks);
        return contract(f.logits, s.upstream);
    };
    std::vector<double> a(5), n(5);
    for (Eigen::Index i = 0; i < 5; ++i) {
        Vector xp = x, xm = x;
        xp[i] += 1e-6;
        xm[i] -= 1e-6;
        n[static_cast<std::size_t>(i)] = (value(xp) - value(xm)) / 2e-6;
        a[static_cast<std::size_t>(i)] = g[i];
    }
    CHECK(rel_err(a, n) < 1e-6);
    MaskSet blocked = s.masks;
    blocked.layers[0].setZero();
    CHECK(input_gradient(s.params, s.arch, x, blocked, up).norm() == 0.0);
}

TEST_CASE("mask keep frequency matches 1 - dropout rate") {
    const auto arch = MlpArchitecture::make(10, {10}, 2, 0.2, 0.5);
    RngStream rng(12);
    const MaskSet m = sample_masks(arch, 1000, 10, rng);
    for (std::size_t l = 0; l < 2; ++l) {
        const double keep = 1.0 - arch.dropout_rates[l];
        const double n = static_cast<double>(m.layers[l].size());
        const double freq = m.layers[l].sum() / n;
        CHECK(std::abs(freq - keep) < 3.0 * std::sqrt(keep * (1.0 - keep) / n));
    }
}

TEST_CASE("architecture and parameter validation") {
    CHECK_THROWS_AS(MlpArchitecture::make(3, {4}, 2, 1.0, 0.0).validate(), InvalidArgument);
    CHECK_THROWS_AS(MlpArchitecture::make(3, {0}, 2, 0.0, 0.0).validate(), InvalidArgument);
    MlpArchitecture single;
    single.widths = {3};
    CHECK_THROWS_AS(single.validate(), InvalidArgument);
    const auto arch = MlpArchitecture::make(3, {4}, 2, 0.1, 0.2);
    CHECK(arch.deterministic().has_dropout() == false);
    auto p = ParameterSet::zeros(arch);
    CHECK(p.size() == 3 * 4 + 4 + 4 * 2 + 2);
    std::vector<double> flat(p.size());
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = static_cast<double>(i);
    p.assign(flat);
    CHECK(p.flatten() == flat);
    CHECK(p.weights[0](0, 1) == 1.0);  // weights first, row-major
    CHECK_THROWS_AS(p.check_matches(MlpArchitecture::make(3, {5}, 2, 0, 0)), InvalidArgument);
}

TEST_CASE("initialisation scale is 1 / sqrt(fan_in)") {
    const auto arch = MlpArchitecture::make(400, {300}, 2, 0.0, 0.0);
    RngStream rng(13);
    const auto p = init_parameters(arch, rng);
    const double var = p.weights[0].squaredNorm() / static_cast<double>(p.weights[0].size());
    CHECK(std::abs(var - 1.0 / 400.0) < 0.05 / 400.0);
    CHECK(p.biases[0].norm() == 0.0);
}

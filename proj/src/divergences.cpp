#include "alphabox/divergences.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace alphabox::toy {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr double kSmallAlpha = 1e-6;

} // namespace

Gaussian1D::Gaussian1D(double m, double v) : mean(m), variance(v) {
    if (!(v > 0.0) || !std::isfinite(v) || !std::isfinite(m))
        throw InvalidArgument("Gaussian variance must be positive and finite");
}

double Gaussian1D::stddev() const { return std::sqrt(variance); }

double Gaussian1D::log_pdf(double x) const {
    const double r = x - mean;
    return -0.5 * (kLog2Pi + std::log(variance) + r * r / variance);
}

NaturalParam NaturalParam::from_gaussian(const Gaussian1D& g) {
    return {g.mean / g.variance, -0.5 / g.variance};
}

Gaussian1D NaturalParam::to_gaussian() const {
    if (!normalisable()) throw InvalidArgument("natural parameters are not normalisable");
    const double v = -0.5 / eta2;
    return {eta1 * v, v};
}

double NaturalParam::log_partition() const {
    if (!normalisable()) return kInf;
    const double v = -0.5 / eta2;
    return 0.5 * eta1 * eta1 * v + 0.5 * (kLog2Pi + std::log(v));
}

LogQuadratic LogQuadratic::density(const Gaussian1D& g) {
    const NaturalParam nat = NaturalParam::from_gaussian(g);
    return {nat, -0.5 * g.mean * g.mean / g.variance - 0.5 * (kLog2Pi + std::log(g.variance))};
}

double LogQuadratic::operator()(double w) const {
    return nat.eta1 * w + nat.eta2 * w * w + log_scale;
}

double LogQuadratic::log_integral() const {
    const double lz = nat.log_partition();
    return std::isinf(lz) ? kInf : lz + log_scale;
}

void ToyModel::validate() const {
    if (observations.empty()) throw InvalidArgument("toy model needs at least one observation");
    if (!(noise_variance > 0.0)) throw InvalidArgument("noise variance must be positive");
}

double ToyModel::log_factor(std::size_t n, double w) const {
    const double r = observations.at(n) - w;
    return -0.5 * (kLog2Pi + std::log(noise_variance) + r * r / noise_variance);
}

// As a function of w, N(y; w, s^2) has the same log-quadratic form as N(w; y, s^2).
LogQuadratic ToyModel::factor(std::size_t n) const {
    return LogQuadratic::density({observations.at(n), noise_variance});
}

NaturalParam ToyModel::factor_natural(std::size_t n) const {
    return NaturalParam::from_gaussian({observations.at(n), noise_variance});
}

Gaussian1D ToyModel::exact_posterior() const {
    validate();
    NaturalParam nat = NaturalParam::from_gaussian(prior);
    for (std::size_t n = 0; n < size(); ++n) nat = nat + factor_natural(n);
    return nat.to_gaussian();
}

double ToyModel::log_evidence() const {
    validate();
    LogQuadratic joint = LogQuadratic::density(prior);
    for (std::size_t n = 0; n < size(); ++n) joint = joint + factor(n);
    return joint.log_integral();
}

ToyModel ToyModel::synthetic(std::size_t n, std::uint64_t seed, Gaussian1D prior,
                             double noise_variance) {
    RngStream rng(seed);
    ToyModel m;
    m.prior = prior;
    m.noise_variance = noise_variance;
    const double w = prior.mean + prior.stddev() * rng.normal();
    for (std::size_t i = 0; i < n; ++i)
        m.observations.push_back(w + std::sqrt(noise_variance) * rng.normal());
    return m;
}

// ---- divergences ------------------------------------------------------------

double log_power_integral(const Gaussian1D& p, const Gaussian1D& q, double alpha) {
    return (LogQuadratic::density(p) * alpha + LogQuadratic::density(q) * (1.0 - alpha)).log_integral();
}

double kl_div(const Gaussian1D& p, const Gaussian1D& q) {
    const double d = p.mean - q.mean;
    return 0.5 * (std::log(q.variance / p.variance) + (p.variance + d * d) / q.variance - 1.0);
}

double amari_div(const Gaussian1D& p, const Gaussian1D& q, double alpha) {
    if (alpha == 0.0) return kl_div(q, p);
    if (alpha == 1.0) return kl_div(p, q);
    const double li = log_power_integral(p, q, alpha);
    if (std::isinf(li)) return kInf;
    return -std::expm1(li) / (alpha * (1.0 - alpha));
}

double renyi_div(const Gaussian1D& p, const Gaussian1D& q, double alpha) {
    if (alpha == 1.0) throw InvalidArgument("Renyi divergence of order 1 is undefined here; use kl_div");
    const double li = log_power_integral(p, q, alpha);
    if (std::isinf(li)) return kInf;
    return li / (alpha - 1.0);
}

double hellinger_sq(const Gaussian1D& p, const Gaussian1D& q) {
    return -std::expm1(log_power_integral(p, q, 0.5));
}

// ---- quadrature -------------------------------------------------------------

double log_integrate(const std::function<double(double)>& log_integrand, double lo, double hi,
                     std::vector<double> breakpoints, QuadratureOptions opts) {
    if (!(lo < hi)) throw InvalidArgument("integration range is empty");
    std::vector<double> pts{lo, hi};
    for (double b : breakpoints)
        if (b > lo && b < hi) pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    double shift = -kInf;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        for (int j = 0; j <= 32; ++j) {
            const double v = log_integrand(pts[i] + (pts[i + 1] - pts[i]) * j / 32.0);
            if (std::isfinite(v)) shift = std::max(shift, v);
        }
    }
    if (!std::isfinite(shift)) return -kInf;

    auto f = [&](double w) {
        const double v = log_integrand(w);
        return std::isfinite(v) ? std::exp(v - shift) : 0.0;
    };
    // A single-rule pass sizes each piece; every piece then gets an equal share
    // of the absolute error budget tolerance * total, so negligible tails do
    // not force deep refinement.
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    const std::size_t pieces = pts.size() - 1;
    std::vector<double> rough(pieces);
    double rough_total = 0.0;
    for (std::size_t i = 0; i < pieces; ++i) {
        double l1 = 0.0;
        GK::integrate(f, pts[i], pts[i + 1], 0, 0.0, nullptr, &l1);
        rough[i] = l1;
        rough_total += l1;
    }
    double total = 0.0, total_err = 0.0;
    for (std::size_t i = 0; i < pieces; ++i) {
        if (rough[i] == 0.0) continue;
        const double budget = 0.1 * opts.tolerance * rough_total / static_cast<double>(pieces);
        const double rel = std::max(budget / rough[i], 1e-15);
        double err = 0.0;
        total += GK::integrate(f, pts[i], pts[i + 1], opts.max_depth, rel, &err);
        total_err += err;
    }
    if (!(total > 0.0)) return -kInf;
    if (!(total_err <= opts.tolerance * total)) {
        std::ostringstream msg;
        msg << "quadrature did not converge: relative error estimate " << total_err / total
            << " over [" << lo << ", " << hi << "] with " << pts.size() - 1 << " pieces";
        throw RuntimeFailure(msg.str());
    }
    return std::log(total) + shift;
}

std::vector<double> breakpoints_for(const std::vector<Gaussian1D>& shapes) {
    std::vector<double> b;
    for (const auto& g : shapes)
        for (double t : {0.0, 1.0, -1.0, 3.0, -3.0, 6.0, -6.0, 12.0, -12.0})
            b.push_back(g.mean + t * g.stddev());
    return b;
}

namespace {

struct Range {
    double lo, hi;
    std::vector<double> breaks;
};

Range range_for(const std::vector<Gaussian1D>& shapes) {
    Range r{kInf, -kInf, breakpoints_for(shapes)};
    for (const auto& g : shapes) {
        r.lo = std::min(r.lo, g.mean - 12.0 * g.stddev());
        r.hi = std::max(r.hi, g.mean + 12.0 * g.stddev());
    }
    return r;
}

std::vector<Gaussian1D> model_shapes(const ToyModel& model, std::initializer_list<Gaussian1D> extra) {
    std::vector<Gaussian1D> s(extra);
    s.push_back(model.prior);
    for (double y : model.observations) s.emplace_back(y, model.noise_variance);
    return s;
}

} // namespace

double log_power_integral_quadrature(const Gaussian1D& p, const Gaussian1D& q, double alpha) {
    const Range r = range_for({p, q});
    return log_integrate([&](double w) { return alpha * p.log_pdf(w) + (1.0 - alpha) * q.log_pdf(w); },
                         r.lo, r.hi, r.breaks);
}

// ---- cavity -------------------------------------------------------------------

double renyi_order(double alpha, std::size_t n) {
    const double nn = static_cast<double>(n);
    if (!(nn > alpha)) throw InvalidArgument("cavity reparametrisation needs N > alpha");
    return nn / (nn - alpha);
}

CavityResult cavity_normaliser(const Gaussian1D& q_tilde, const Gaussian1D& prior, double alpha,
                               std::size_t n) {
    if (alpha == 0.0) return {1.0, q_tilde};
    const double beta = renyi_order(alpha, n);
    const LogQuadratic unnorm = LogQuadratic::density(q_tilde) * beta + LogQuadratic::density(prior) * (1.0 - beta);
    if (!unnorm.nat.normalisable()) throw InvalidArgument("Z_q infinite");
    return {std::exp(unnorm.log_integral()), unnorm.nat.to_gaussian()};
}

Gaussian1D cavity_from_posterior(const Gaussian1D& q, const Gaussian1D& prior, double alpha,
                                 std::size_t n) {
    const double nn = static_cast<double>(n);
    if (!(nn > alpha)) throw InvalidArgument("cavity reparametrisation needs N > alpha");
    const double t = alpha / nn;
    const NaturalParam nat =
        NaturalParam::from_gaussian(q) * (1.0 - t) + NaturalParam::from_gaussian(prior) * t;
    if (!nat.normalisable()) throw InvalidArgument("cavity is not normalisable");
    return nat.to_gaussian();
}

// ---- energies -------------------------------------------------------------------

double bbalpha_energy(const ToyModel& model, const Gaussian1D& q, double alpha) {
    model.validate();
    if (alpha == 0.0) throw InvalidArgument("alpha must be non-zero");
    const double inv_n = 1.0 / static_cast<double>(model.size());
    const LogQuadratic base = LogQuadratic::density(q) * (1.0 - alpha * inv_n) +
                              LogQuadratic::density(model.prior) * (alpha * inv_n);
    double sum = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n) {
        const double li = (base + model.factor(n) * alpha).log_integral();
        if (std::isinf(li)) throw InvalidArgument("energy integral diverges");
        sum += li;
    }
    return -sum / alpha;
}

double bbalpha_energy_quadrature(const ToyModel& model, const Gaussian1D& q, double alpha) {
    model.validate();
    if (alpha == 0.0) throw InvalidArgument("alpha must be non-zero");
    const double inv_n = 1.0 / static_cast<double>(model.size());
    const Range r = range_for(model_shapes(model, {q}));
    double sum = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n) {
        sum += log_integrate(
            [&](double w) {
                const double lq = q.log_pdf(w);
                return lq + alpha * (model.log_factor(n, w) + inv_n * (model.prior.log_pdf(w) - lq));
            },
            r.lo, r.hi, r.breaks);
    }
    return -sum / alpha;
}

double reparametrised_energy(const ToyModel& model, const Gaussian1D& q_tilde, double alpha) {
    model.validate();
    if (alpha == 0.0) throw InvalidArgument("alpha must be non-zero");
    const double beta = renyi_order(alpha, model.size());
    double sum = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n)
        sum += (LogQuadratic::density(q_tilde) + model.factor(n) * alpha).log_integral();
    return renyi_div(q_tilde, model.prior, beta) - sum / alpha;
}

double reparametrised_energy_quadrature(const ToyModel& model, const Gaussian1D& q_tilde,
                                        double alpha) {
    model.validate();
    if (alpha == 0.0) throw InvalidArgument("alpha must be non-zero");
    const double beta = renyi_order(alpha, model.size());
    const Range r = range_for(model_shapes(model, {q_tilde}));
    const double log_z = log_integrate(
        [&](double w) { return beta * q_tilde.log_pdf(w) + (1.0 - beta) * model.prior.log_pdf(w); },
        r.lo, r.hi, r.breaks);
    double sum = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n)
        sum += log_integrate(
            [&](double w) { return q_tilde.log_pdf(w) + alpha * model.log_factor(n, w); }, r.lo,
            r.hi, r.breaks);
    return log_z / (beta - 1.0) - sum / alpha;
}

double variational_free_energy(const ToyModel& model, const Gaussian1D& q) {
    model.validate();
    double expected_ll = 0.0;
    for (double y : model.observations) {
        const double r = y - q.mean;
        expected_ll += -0.5 * (kLog2Pi + std::log(model.noise_variance)) -
                       0.5 * (r * r + q.variance) / model.noise_variance;
    }
    return kl_div(q, model.prior) - expected_ll;
}

double mc_energy(const ToyModel& model, const Gaussian1D& q, double alpha, std::size_t samples,
                 RngStream& rng) {
    model.validate();
    if (samples == 0) throw InvalidArgument("K must be >= 1");
    const double inv_n = 1.0 / static_cast<double>(model.size());
    std::vector<double> draws(samples), ratio(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        draws[k] = q.mean + q.stddev() * rng.normal();
        ratio[k] = inv_n * (model.prior.log_pdf(draws[k]) - q.log_pdf(draws[k]));
    }
    const double log_k = std::log(static_cast<double>(samples));
    const bool vi = std::abs(alpha) < kSmallAlpha;
    std::vector<double> terms(samples);
    double energy = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n) {
        for (std::size_t k = 0; k < samples; ++k) terms[k] = model.log_factor(n, draws[k]) + ratio[k];
        if (vi) {
            double mean = 0.0;
            for (double t : terms) mean += t;
            energy -= mean / static_cast<double>(samples);
        } else {
            for (double& t : terms) t *= alpha;
            energy -= (log_sum_exp(terms) - log_k) / alpha;
        }
    }
    return energy;
}

double power_ep_energy(const ToyModel& model, const NaturalParam& prior,
                       const std::vector<NaturalParam>& sites, double alpha) {
    model.validate();
    if (alpha == 0.0) throw InvalidArgument("alpha must be non-zero");
    if (sites.size() != model.size()) throw InvalidArgument("need one site per factor");
    NaturalParam global = prior;
    for (const auto& s : sites) global = global + s;
    if (!prior.normalisable() || !global.normalisable())
        throw InvalidArgument("power EP energy: non-normalisable prior or global approximation");
    const double nn = static_cast<double>(model.size());
    double energy = prior.log_partition() + (nn / alpha - 1.0) * global.log_partition();
    for (std::size_t n = 0; n < model.size(); ++n) {
        const LogQuadratic tilted = LogQuadratic{global - sites[n] * alpha, 0.0} + model.factor(n) * alpha;
        const double li = tilted.log_integral();
        if (std::isinf(li)) throw InvalidArgument("power EP energy: non-normalisable tilted factor");
        energy -= li / alpha;
    }
    return energy;
}

double bbalpha_energy_expfam(const ToyModel& model, const NaturalParam& prior,
                             const NaturalParam& global, double alpha) {
    model.validate();
    if (alpha == 0.0) throw InvalidArgument("alpha must be non-zero");
    if (!prior.normalisable() || !global.normalisable())
        throw InvalidArgument("non-normalisable prior or global approximation");
    const double nn = static_cast<double>(model.size());
    const NaturalParam site = (global - prior) * (1.0 / nn);
    const double log_zq = global.log_partition();
    double energy = prior.log_partition() - log_zq;
    for (std::size_t n = 0; n < model.size(); ++n) {
        const LogQuadratic integrand =
            LogQuadratic{global - site * alpha, -log_zq} + model.factor(n) * alpha;
        const double li = integrand.log_integral();
        if (std::isinf(li)) throw InvalidArgument("tilted expectation diverges");
        energy -= li / alpha;
    }
    return energy;
}

EpState power_ep_fixed_point(const ToyModel& model, double alpha, std::size_t max_iters,
                             double damping) {
    model.validate();
    if (alpha == 0.0) throw InvalidArgument("alpha must be non-zero");
    if (!(damping > 0.0 && damping <= 1.0)) throw InvalidArgument("damping must lie in (0, 1]");
    EpState st;
    st.prior = NaturalParam::from_gaussian(model.prior);
    st.sites.assign(model.size(), NaturalParam{0.0, 0.0});
    st.global = st.prior;

    std::ostringstream trace;
    for (std::size_t it = 0; it < max_iters; ++it) {
        double max_change = 0.0;
        for (std::size_t n = 0; n < model.size(); ++n) {
            // 1. cavity
            const NaturalParam cavity = st.global - st.sites[n] * alpha;
            if (!cavity.normalisable()) {
                trace << "sweep " << it << " factor " << n << ": cavity eta2 = " << cavity.eta2;
                throw RuntimeFailure("power EP diverged (non-normalisable cavity); " + trace.str());
            }
            // 2. tilted distribution, cavity times f_n^alpha
            const LogQuadratic tilted = LogQuadratic{cavity, 0.0} + model.factor(n) * alpha;
            if (!tilted.nat.normalisable())
                throw RuntimeFailure("power EP diverged (non-normalisable tilted distribution)");
            // 3. project by matching the tilted mean and variance
            const Gaussian1D moments = tilted.nat.to_gaussian();
            const NaturalParam projected = NaturalParam::from_gaussian(moments);
            // 4. site recovery with damping
            const NaturalParam fresh = (projected - cavity) * (1.0 / alpha);
            const NaturalParam updated = st.sites[n] * (1.0 - damping) + fresh * damping;
            max_change = std::max({max_change, std::abs(updated.eta1 - st.sites[n].eta1),
                                   std::abs(updated.eta2 - st.sites[n].eta2)});
            st.global = st.global + (updated - st.sites[n]);
            st.sites[n] = updated;
        }
        trace << "sweep " << it << ": max change " << max_change << "; ";
        // Recompute from scratch so rounding in the running sum does not accumulate.
        st.global = st.prior;
        for (const auto& s : st.sites) st.global = st.global + s;
        st.iterations = it + 1;
        if (max_change < 1e-10) {
            st.converged = true;
            break;
        }
    }
    return st;
}

} // namespace alphabox::toy

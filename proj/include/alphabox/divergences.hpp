#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "alphabox/numerics.hpp"

namespace alphabox::toy {

struct Gaussian1D {
    double mean = 0.0;
    double variance = 1.0;

    Gaussian1D() = default;
    Gaussian1D(double m, double v);

    double stddev() const;
    double log_pdf(double x) const;
};

/// Natural parameters of a 1-D Gaussian for sufficient statistics (w, w^2):
/// eta1 = mean / variance, eta2 = -1 / (2 variance).
struct NaturalParam {
    double eta1 = 0.0;
    double eta2 = 0.0;

    static NaturalParam from_gaussian(const Gaussian1D& g);
    bool normalisable() const { return eta2 < 0.0; }
    Gaussian1D to_gaussian() const;
    /// log of the integral of exp(eta1 w + eta2 w^2); +inf when eta2 >= 0.
    double log_partition() const;

    NaturalParam operator+(const NaturalParam& o) const { return {eta1 + o.eta1, eta2 + o.eta2}; }
    NaturalParam operator-(const NaturalParam& o) const { return {eta1 - o.eta1, eta2 - o.eta2}; }
    NaturalParam operator*(double s) const { return {eta1 * s, eta2 * s}; }
};

/// Unnormalised log-density eta1 w + eta2 w^2 + log_scale. Closed under
/// products and real powers, which covers every integrand in the toy model.
struct LogQuadratic {
    NaturalParam nat;
    double log_scale = 0.0;

    static LogQuadratic density(const Gaussian1D& g);
    double operator()(double w) const;
    /// log of the integral over the real line; +inf when not normalisable.
    double log_integral() const;
    LogQuadratic operator+(const LogQuadratic& o) const { return {nat + o.nat, log_scale + o.log_scale}; }
    LogQuadratic operator*(double s) const { return {nat * s, log_scale * s}; }
};

/// Conjugate toy: w ~ prior, y_n | w ~ N(w, noise_variance).
struct ToyModel {
    Gaussian1D prior;
    std::vector<double> observations;
    double noise_variance = 1.0;

    std::size_t size() const { return observations.size(); }
    void validate() const;
    double log_factor(std::size_t n, double w) const;
    LogQuadratic factor(std::size_t n) const;
    NaturalParam factor_natural(std::size_t n) const;
    Gaussian1D exact_posterior() const;
    double log_evidence() const;

    /// N observations drawn from the model with w drawn from the prior.
    static ToyModel synthetic(std::size_t n, std::uint64_t seed, Gaussian1D prior = {0.0, 1.0},
                              double noise_variance = 1.0);
};

// ---- divergences between Gaussians ---------------------------------------

/// log of the integral of p^alpha q^(1-alpha); +inf when the combined
/// precision alpha/var_p + (1-alpha)/var_q is not positive.
double log_power_integral(const Gaussian1D& p, const Gaussian1D& q, double alpha);

/// Amari alpha-divergence D_alpha[p||q]; alpha 0 and 1 give KL[q||p] and KL[p||q].
/// Returns +inf when the power integral diverges.
double amari_div(const Gaussian1D& p, const Gaussian1D& q, double alpha);
/// Renyi divergence R_alpha[p||q], alpha != 1.
double renyi_div(const Gaussian1D& p, const Gaussian1D& q, double alpha);
double kl_div(const Gaussian1D& p, const Gaussian1D& q);
/// Hel^2 = 1 - integral of sqrt(p q), so that D_0.5 = 4 Hel^2.
double hellinger_sq(const Gaussian1D& p, const Gaussian1D& q);

// ---- quadrature ----------------------------------------------------------

struct QuadratureOptions {
    double tolerance = 1e-10;
    unsigned max_depth = 20;
};

/// log of the integral of exp(log_integrand) over [lo, hi], split at the given
/// breakpoints. The integrand is shifted by its largest value on a coarse grid
/// before exponentiating. Throws RuntimeFailure with the error estimate when
/// the requested tolerance is not met.
double log_integrate(const std::function<double(double)>& log_integrand, double lo, double hi,
                     std::vector<double> breakpoints = {}, QuadratureOptions opts = {});

/// Breakpoints mean + t*sd for t in {0, +-1, +-3, +-6, +-12} over every Gaussian.
std::vector<double> breakpoints_for(const std::vector<Gaussian1D>& shapes);

double log_power_integral_quadrature(const Gaussian1D& p, const Gaussian1D& q, double alpha);

// ---- cavity reparametrisation --------------------------------------------

struct CavityResult {
    double normaliser;  // Z_q
    Gaussian1D q;
};

/// q = (1/Z_q) q_tilde (q_tilde / p0)^(alpha / (N - alpha)). Throws
/// InvalidArgument("Z_q infinite") when the combination is not normalisable.
CavityResult cavity_normaliser(const Gaussian1D& q_tilde, const Gaussian1D& prior, double alpha,
                               std::size_t n);
/// Inverse map: the cavity q_tilde whose reconstruction is q.
Gaussian1D cavity_from_posterior(const Gaussian1D& q, const Gaussian1D& prior, double alpha,
                                 std::size_t n);
/// beta = N / (N - alpha).
double renyi_order(double alpha, std::size_t n);

// ---- energies --------------------------------------------------------------

/// -(1/alpha) sum_n log E_q[(f_n p0^(1/N) / q^(1/N))^alpha], closed form.
double bbalpha_energy(const ToyModel& model, const Gaussian1D& q, double alpha);
/// Same energy by adaptive quadrature of each integral.
double bbalpha_energy_quadrature(const ToyModel& model, const Gaussian1D& q, double alpha);

/// R_beta[q_tilde||p0] - (1/alpha) sum_n log E_q_tilde[f_n^alpha], closed form.
double reparametrised_energy(const ToyModel& model, const Gaussian1D& q_tilde, double alpha);
double reparametrised_energy_quadrature(const ToyModel& model, const Gaussian1D& q_tilde,
                                        double alpha);

/// KL[q||p0] - sum_n E_q[log f_n].
double variational_free_energy(const ToyModel& model, const Gaussian1D& q);

/// Sampled energy with K draws from q shared across factors.
double mc_energy(const ToyModel& model, const Gaussian1D& q, double alpha, std::size_t samples,
                 RngStream& rng);

/// log Z(l0) + (N/alpha - 1) log Z(lq) - (1/alpha) sum_n log int f_n^alpha exp((lq - alpha l_n)^T phi),
/// with lq = l0 + sum_n l_n.
double power_ep_energy(const ToyModel& model, const NaturalParam& prior,
                       const std::vector<NaturalParam>& sites, double alpha);

/// Tied-site energy log Z(l0) - log Z(lq) - (1/alpha) sum_n log E_q[(f_n / exp(l^T phi))^alpha]
/// with l = (lq - l0) / N.
double bbalpha_energy_expfam(const ToyModel& model, const NaturalParam& prior,
                             const NaturalParam& global, double alpha);

struct EpState {
    NaturalParam prior;
    std::vector<NaturalParam> sites;
    NaturalParam global;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Sequential damped power EP: cavity, tilted distribution, moment matching,
/// site recovery. Stops when no natural parameter moves by more than 1e-10 in
/// a sweep or after max_iters sweeps.
EpState power_ep_fixed_point(const ToyModel& model, double alpha, std::size_t max_iters,
                             double damping = 0.5);

} // namespace alphabox::toy

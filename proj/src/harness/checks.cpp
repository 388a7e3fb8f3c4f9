#include "alphabox/harness/checks.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "alphabox/divergences.hpp"
#include "alphabox/objective.hpp"

namespace alphabox::harness {

namespace {

CheckRow below(std::string name, double value, double tol, std::string detail = "") {
    return {std::move(name), value, tol, std::isfinite(value) && value < tol, std::move(detail)};
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

} // namespace

std::vector<CheckRow> run_gradcheck(std::uint64_t seed, std::size_t configurations, double tol) {
    const double alphas[] = {0.0, 0.3, 0.5, 1.0, 2.0};
    const double rates[] = {0.0, 0.3, 0.5};
    std::vector<CheckRow> rows;
    RngStream top(seed);
    for (std::size_t c = 0; c < configurations; ++c) {
        RngStream rng = top.substream(c);
        const std::size_t layers = 1 + rng.below(3);
        MlpArchitecture arch;
        arch.widths.push_back(1 + rng.below(6));
        for (std::size_t l = 0; l < layers; ++l) arch.widths.push_back(1 + rng.below(6));
        const bool classification = rng.below(2) == 0;
        if (classification) arch.widths.back() = std::max<std::size_t>(2, arch.widths.back());
        for (std::size_t l = 0; l + 1 < layers; ++l)
            arch.activations.push_back(rng.below(4) == 0 ? Activation::identity : Activation::relu);
        for (std::size_t l = 0; l < layers; ++l) arch.dropout_rates.push_back(rates[rng.below(3)]);

        AlphaObjectiveConfig cfg;
        cfg.task = classification ? Task::classification : Task::regression;
        cfg.alpha = alphas[c % 5];
        cfg.samples = 1 + rng.below(5);
        cfg.tau = 0.5 + 1.5 * rng.uniform();
        const std::size_t m = 1 + rng.below(4);
        cfg.dataset_size = m + rng.below(20);
        for (std::size_t l = 0; l < layers; ++l) cfg.layer_reg.push_back(0.1 * rng.uniform());

        Batch batch;
        batch.inputs = sample_gaussian(rng, 0.0, 1.0, {m, arch.input_dim()}).as_matrix(m, arch.input_dim());
        if (classification)
            for (std::size_t i = 0; i < m; ++i) batch.labels.push_back(rng.below(arch.output_dim()));
        else
            batch.targets = sample_gaussian(rng, 0.0, 1.0, {m, arch.output_dim()}).as_matrix(m, arch.output_dim());

        ParameterSet params = init_parameters(arch, rng);
        for (auto& b : params.biases)
            for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * rng.normal();
        const RngStream mask_rng = rng.substream(99);

        auto value_at = [&](const ParameterSet& p) {
            RngStream r = mask_rng;
            return total_objective(p, arch, batch, cfg, r);
        };
        const ObjectiveValue base = value_at(params);
        const auto analytic = base.gradient.flatten();
        auto flat = params.flatten();
        std::vector<double> numeric(flat.size());
        ParameterSet probe = params;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const double h = 1e-5 * std::max(1.0, std::abs(flat[i]));
            const double keep = flat[i];
            flat[i] = keep + h;
            probe.assign(flat);
            const double up = value_at(probe).value;
            flat[i] = keep - h;
            probe.assign(flat);
            const double down = value_at(probe).value;
            flat[i] = keep;
            numeric[i] = (up - down) / (2.0 * h);
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
        std::ostringstream detail;
        detail << to_string(cfg.task) << " widths=";
        for (std::size_t w = 0; w < arch.widths.size(); ++w) detail << (w ? "x" : "") << arch.widths[w];
        detail << " M=" << m << " K=" << cfg.samples << " alpha=" << cfg.alpha;
        rows.push_back(below("gradcheck." + std::to_string(c), rel, tol, detail.str()));
    }
    return rows;
}

std::vector<CheckRow> run_divergence_checks(std::uint64_t seed) {
    using namespace toy;
    std::vector<CheckRow> rows;
    const Gaussian1D n01{0.0, 1.0}, n11{1.0, 1.0};

    // Random-pair identities.
    RngStream rng(seed);
    double conv = 0.0, hel = 0.0, neg = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Gaussian1D p{rng.normal(), 0.2 + 2.0 * rng.uniform()};
        const Gaussian1D q{rng.normal(), 0.2 + 2.0 * rng.uniform()};
        const double a = 0.01 + 0.98 * rng.uniform();
        const double d = amari_div(p, q, a), r = renyi_div(p, q, a);
        conv = std::max(conv, std::abs(d - (1.0 - std::exp((a - 1.0) * r)) / (a * (1.0 - a))));
        hel = std::max(hel, std::abs(amari_div(p, q, 0.5) - 4.0 * hellinger_sq(p, q)));
        neg = std::max({neg, -d, -r, -kl_div(p, q), -hellinger_sq(p, q)});
    }
    rows.push_back(below("identity.amari_renyi_conversion", conv, 1e-10, "max over 100 random pairs"));
    rows.push_back(below("identity.d05_equals_4_hellinger", hel, 1e-10, "max over 100 random pairs"));
    rows.push_back(below("identity.nonnegative", neg, 1e-12, "most negative divergence value"));

    const double renyi_q =
        log_power_integral_quadrature(n01, n11, 0.5) / (0.5 - 1.0);
    rows.push_back(below("identity.renyi_half_closed_form", std::abs(renyi_div(n01, n11, 0.5) - 0.25), 1e-8));
    rows.push_back(below("identity.renyi_half_quadrature", std::abs(renyi_q - 0.25), 1e-8));
    rows.push_back(below("identity.amari_half", std::abs(amari_div(n01, n11, 0.5) - 4.0 * (1.0 - std::exp(-0.125))), 1e-10));
    rows.push_back(below("identity.kl_unit_shift", std::abs(kl_div(n01, n11) - 0.5), 1e-12));
    // Alpha-to-zero limits. The gap to the limit is first order in alpha, so the
    // limit is read off by Richardson extrapolation from alpha and alpha / 2.
    {
        const double a = 1e-4, kl = kl_div(n11, n01);
        const double lim = 2.0 * amari_div(n01, n11, a / 2) - amari_div(n01, n11, a);
        rows.push_back(below("limit.amari_alpha_to_zero_is_reverse_kl", std::abs(lim - kl), 1e-6,
                             "raw gap at alpha=1e-4: " + fmt(amari_div(n01, n11, a) - kl)));
    }
    // Cavity reparametrisation on the conjugate toy.
    const ToyModel m10 = ToyModel::synthetic(10, seed + 1);
    const double alpha = 0.5;
    const Gaussian1D q_tilde{0.3, 0.2};
    const CavityResult cav = cavity_normaliser(q_tilde, m10.prior, alpha, m10.size());
    const double e_q = bbalpha_energy_quadrature(m10, cav.q, alpha);
    const double e_r = reparametrised_energy_quadrature(m10, q_tilde, alpha);
    rows.push_back(below("reparam.energy_equals_reparametrised", std::abs(e_q - e_r), 1e-6,
                         "N=10 alpha=0.5 by quadrature"));
    rows.push_back(below("reparam.closed_form_matches_quadrature",
                         std::abs(bbalpha_energy(m10, cav.q, alpha) - e_q), 1e-8));

    double prev_z = INFINITY, prev_r = INFINITY;
    bool mono_z = true, mono_r = true;
    std::string trace_z, trace_r;
    for (std::size_t n : {10u, 100u, 1000u, 10000u}) {
        const ToyModel m = ToyModel::synthetic(n, seed + 2);
        const Gaussian1D qt = cavity_from_posterior(m.exact_posterior(), m.prior, alpha, n);
        const double z = std::abs(cavity_normaliser(qt, m.prior, alpha, n).normaliser - 1.0);
        const double r = std::abs(renyi_div(qt, m.prior, renyi_order(alpha, n)) - kl_div(qt, m.prior));
        mono_z = mono_z && z < prev_z;
        mono_r = mono_r && r < prev_r;
        prev_z = z;
        prev_r = r;
        trace_z += (trace_z.empty() ? "" : " ") + fmt(z);
        trace_r += (trace_r.empty() ? "" : " ") + fmt(r);
    }
    rows.push_back({"reparam.zq_to_one_monotone", prev_z, 0.0, mono_z, trace_z});
    rows.push_back({"reparam.renyi_to_kl_monotone", prev_r, 0.0, mono_r, trace_r});

    {
        const Gaussian1D q_vi = m10.exact_posterior();
        const double a = 1e-3, vfe = variational_free_energy(m10, q_vi);
        const double e_a = bbalpha_energy_quadrature(m10, q_vi, a);
        const double lim = 2.0 * bbalpha_energy_quadrature(m10, q_vi, a / 2) - e_a;
        rows.push_back(below("limit.energy_alpha_to_zero_is_vfe", std::abs(lim - vfe), 1e-4,
                             "raw gap at alpha=1e-3: " + fmt(e_a - vfe)));
    }
    const ToyModel m1 = ToyModel::synthetic(1, seed + 3);
    rows.push_back(below("limit.single_factor_alpha_one_is_evidence",
                         std::abs(bbalpha_energy_quadrature(m1, m1.exact_posterior(), 1.0) + m1.log_evidence()), 1e-8));

    // Power EP.
    const NaturalParam l0 = NaturalParam::from_gaussian(m10.prior);
    const NaturalParam site{0.4, -0.3};
    const std::vector<NaturalParam> tied(m10.size(), site);
    const NaturalParam lq = l0 + site * static_cast<double>(m10.size());
    const double tied_gap = std::max(std::abs(power_ep_energy(m10, l0, tied, alpha) - bbalpha_energy_expfam(m10, l0, lq, alpha)),
                                     std::abs(power_ep_energy(m10, l0, tied, alpha) - bbalpha_energy(m10, lq.to_gaussian(), alpha)));
    rows.push_back(below("powerep.tied_sites_equal_bbalpha", tied_gap, 1e-8));
    for (double a : {0.5, 1.0}) {
        const EpState st = power_ep_fixed_point(m10, a, 2000);
        const Gaussian1D got = st.global.to_gaussian(), want = m10.exact_posterior();
        const double err = std::max(std::abs(got.mean - want.mean), std::abs(got.variance - want.variance));
        rows.push_back(below("powerep.fixed_point_exact_alpha_" + fmt(a), err, 1e-8,
                             std::to_string(st.iterations) + " sweeps"));
        // Stationarity of the energy in the site parameters.
        double g2 = 0.0;
        const double h = 1e-5;
        for (std::size_t n = 0; n < st.sites.size(); ++n)
            for (int comp = 0; comp < 2; ++comp) {
                auto up = st.sites, dn = st.sites;
                (comp == 0 ? up[n].eta1 : up[n].eta2) += h;
                (comp == 0 ? dn[n].eta1 : dn[n].eta2) -= h;
                const double g = (power_ep_energy(m10, l0, up, a) - power_ep_energy(m10, l0, dn, a)) / (2.0 * h);
                g2 += g * g;
            }
        rows.push_back(below("powerep.stationary_alpha_" + fmt(a), std::sqrt(g2), 1e-6));
    }
    const EpState one = power_ep_fixed_point(m1, 1.0, 1, 1.0);
    const Gaussian1D e1 = m1.exact_posterior(), g1 = one.global.to_gaussian();
    rows.push_back(below("powerep.single_factor_one_sweep",
                         std::max(std::abs(g1.mean - e1.mean), std::abs(g1.variance - e1.variance)), 1e-12));
    return rows;
}

bool all_passed(const std::vector<CheckRow>& rows) {
    return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.passed; });
}

void write_check_csv(std::ostream& os, const std::vector<CheckRow>& rows) {
    os << "check,value,tolerance,passed,detail\n";
    for (const auto& r : rows) {
        std::string d = r.detail;
        std::replace(d.begin(), d.end(), ',', ';');
        os << r.name << ',' << fmt(r.value) << ',' << fmt(r.tolerance) << ',' << (r.passed ? 1 : 0) << ','
           << d << '\n';
    }
}

} // namespace alphabox::harness

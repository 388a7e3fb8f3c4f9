// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "alphabox/divergences.hpp"
#include "alphabox/harness/checks.hpp"
#include "alphabox/harness/experiments.hpp"
#include "alphabox/objective.hpp"

using namespace alphabox;
using namespace alphabox::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Paths {
    std::string cli;
    fs::path configs;       // experiment configs shipped with the repository
    fs::path test_configs;  // small configs for the CLI determinism run
    fs::path work;
};

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string fresh(const Paths& p, const std::string& name) {
    const fs::path d = p.work / name;
    fs::remove_all(d);
    return d.string();
}

Outcome criterion1() {
    const auto t0 = Clock::now();
    const auto rows = run_gradcheck(0, 60, 1e-5);
    const double secs = seconds_since(t0);
    double worst = 0.0;
    std::size_t failed = 0;
    for (const auto& r : rows) {
        worst = std::max(worst, r.value);
        if (!r.passed) ++failed;
    }
    return {rows.size() >= 50 && failed == 0 && secs < 60.0,
            std::to_string(rows.size()) + " configurations, " + std::to_string(failed) +
                " failed, max relative error " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

Outcome criterion2() {
    RngStream rng(2024);
    double k1 = 0.0, small = 0.0, one = 0.0;
    for (int t = 0; t < 200; ++t) {
        Matrix single(3, 1), ll(3, 5);
        for (Eigen::Index i = 0; i < single.size(); ++i) single.data()[i] = -8.0 * rng.uniform();
        for (Eigen::Index i = 0; i < ll.size(); ++i) ll.data()[i] = -8.0 * rng.uniform();
        const double vi1 = -single.sum();
        for (double a : {-1.0, 0.3, 0.5, 1.0, 2.0, 5.0})
            k1 = std::max(k1, std::abs(classification_loss(single, a) - vi1));
        Tensor preds({3, 1, 2});
        Matrix y(3, 2);
        for (auto& v : preds.data()) v = rng.normal();
        for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
        const double rvi = regression_loss(preds, y, 0.0, 1.5, true);
        for (double a : {0.3, 0.5, 1.0, 2.0})
            k1 = std::max(k1, std::abs(regression_loss(preds, y, a, 1.5, true) - rvi));
        const double vi = -ll.sum() / 5.0;
        small = std::max(small, std::abs(classification_loss(ll, 1e-8) - vi));
        double pred = 0.0;
        for (Eigen::Index n = 0; n < 3; ++n) pred -= std::log(ll.row(n).array().exp().mean());
        one = std::max(one, std::abs(classification_loss(ll, 1.0) - pred));
    }
    return {k1 < 1e-12 && small < 1e-6 && one < 1e-12,
            "K=1 gap " + fmt(k1, 3) + ", alpha=1e-8 gap " + fmt(small, 3) + ", alpha=1 gap " + fmt(one, 3)};
}

Outcome criterion3() {
    using namespace toy;
    const auto t0 = Clock::now();
    const ToyModel m = ToyModel::synthetic(10, 3);
    const double a = 0.5;
    const Gaussian1D q(m.exact_posterior().mean + 0.1, m.exact_posterior().variance * 1.3);
    const Gaussian1D qt = cavity_from_posterior(q, m.prior, a, m.size());
    const double gap = std::abs(bbalpha_energy_quadrature(m, q, a) - reparametrised_energy_quadrature(m, qt, a));
    bool mono = true;
    double last_z = INFINITY, last_r = INFINITY;
    std::string trail;
    for (std::size_t n : {10u, 100u, 1000u, 10000u}) {
        const ToyModel big = ToyModel::synthetic(n, 3);
        const Gaussian1D cav = cavity_from_posterior(big.exact_posterior(), big.prior, a, n);
        const double z = std::abs(cavity_normaliser(cav, big.prior, a, n).normaliser - 1.0);
        const double r = std::abs(renyi_div(cav, big.prior, renyi_order(a, n)) - kl_div(cav, big.prior));
        mono = mono && z < last_z && r < last_r;
        last_z = z;
        last_r = r;
        trail += " " + fmt(z, 2) + "/" + fmt(r, 2);
    }
    const double secs = seconds_since(t0);
    return {gap < 1e-6 && mono && secs < 60.0,
            "energy gap " + fmt(gap, 3) + ", |Zq-1|/|R-KL| over N=10..1e4:" + trail + ", " + fmt(secs, 3) + " s"};
}

Outcome criterion4() {
    using namespace toy;
    const auto t0 = Clock::now();
    const ToyModel m = ToyModel::synthetic(10, 4);
    const auto l0 = NaturalParam::from_gaussian(m.prior);
    const Gaussian1D q(0.2, 0.2);
    const auto lq = NaturalParam::from_gaussian(q);
    const std::vector<NaturalParam> tied(m.size(), (lq - l0) * (1.0 / static_cast<double>(m.size())));
    double tied_gap = 0.0, post_gap = 0.0;
    for (double a : {0.5, 1.0}) {
        tied_gap = std::max(tied_gap, std::abs(power_ep_energy(m, l0, tied, a) - bbalpha_energy(m, q, a)));
        const EpState st = power_ep_fixed_point(m, a, 1000);
        const Gaussian1D g = st.global.to_gaussian(), exact = m.exact_posterior();
        post_gap = std::max({post_gap, std::abs(g.mean - exact.mean), std::abs(g.variance - exact.variance)});
    }
    const double secs = seconds_since(t0);
    return {tied_gap < 1e-8 && post_gap < 1e-8 && secs < 60.0,
            "tied-site gap " + fmt(tied_gap, 3) + ", posterior gap " + fmt(post_gap, 3) + ", " + fmt(secs, 3) + " s"};
}

Outcome criterion5() {
    using namespace toy;
    RngStream rng(5);
    double conv = 0.0, hel = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Gaussian1D p(4 * rng.uniform() - 2, 0.2 + 3 * rng.uniform());
        const Gaussian1D q(4 * rng.uniform() - 2, 0.2 + 3 * rng.uniform());
        const double a = 0.01 + 0.98 * rng.uniform();
        conv = std::max(conv, std::abs(amari_div(p, q, a) - (1 - std::exp((a - 1) * renyi_div(p, q, a))) / (a * (1 - a))));
        hel = std::max(hel, std::abs(amari_div(p, q, 0.5) - 4 * hellinger_sq(p, q)));
    }
    const Gaussian1D s(0, 1), u(1, 1);
    const double quad = -2.0 * log_power_integral_quadrature(s, u, 0.5);
    const double closed = renyi_div(s, u, 0.5);
    const double err = std::max(std::abs(quad - 0.25), std::abs(closed - 0.25));
    return {conv < 1e-10 && hel < 1e-10 && err < 1e-8,
            "conversion " + fmt(conv, 3) + ", Hellinger " + fmt(hel, 3) + ", Renyi(0.5) quadrature " +
                fmt(quad, 12)};
}

Outcome criterion6(const Paths& p) {
    const auto t0 = Clock::now();
    std::string detail;
    bool pass = true;

    const ExperimentConfig energy = load_config((p.configs / "energy.json").string());
    if (!fs::exists(energy.dataset.path)) {
        pass = false;
        detail += "energy: dataset missing (" + fs::path(energy.dataset.path).lexically_normal().string() + ")";
    } else {
        double nll[2];
        int i = 0;
        for (double a : {0.0, 0.5}) {
            ExperimentConfig c = energy;
            c.objective.alpha = a;
            nll[i++] = run_regression_protocol(c, fresh(p, "energy_a" + fmt(a))).nll_mean;
        }
        const bool ok = nll[0] - nll[1] >= 0.5;
        pass = pass && ok;
        detail += "energy: nll alpha=0 " + fmt(nll[0]) + ", alpha=0.5 " + fmt(nll[1]);
    }

    const ExperimentConfig boston = load_config((p.configs / "boston.json").string());
    const RegressionResult r = run_regression_protocol(boston, fresh(p, "boston"));
    const bool ok = r.nll_mean >= 2.1 && r.nll_mean <= 2.8 && r.rmse_mean >= 2.4 && r.rmse_mean <= 3.5;
    pass = pass && ok;
    const double secs = seconds_since(t0);
    pass = pass && secs < 45 * 60;
    detail += "; boston: nll " + fmt(r.nll_mean) + " +- " + fmt(r.nll_se, 2) + ", rmse " + fmt(r.rmse_mean) +
              " +- " + fmt(r.rmse_se, 2) + " over " + std::to_string(r.splits.size()) + " splits, " +
              (ok ? "in band" : "out of band") + "; " + fmt(secs, 3) + " s";
    return {pass, detail};
}

Outcome criterion7(const Paths& p) {
    const ExperimentConfig base = load_config((p.configs / "mnist.json").string());
    bool pass = base.optimizer.epochs <= 20 && base.objective.samples == 10 &&
                base.architecture.hidden == std::vector<std::size_t>{100, 100} &&
                base.architecture.hidden_dropout == 0.5;
    std::string detail = std::to_string(base.optimizer.epochs) + " epochs;";
    for (double a : {0.0, 0.5, 1.0}) {
        ExperimentConfig c = base;
        c.objective.alpha = a;
        const TrainResult r = run_classification(c, fresh(p, "mnist_a" + fmt(a)));
        const double acc = r.log.back().test.accuracy;
        pass = pass && acc >= 0.95;
        detail += " alpha=" + fmt(a) + " accuracy " + fmt(acc);
    }
    return {pass, detail};
}

Outcome criterion8(const Paths& p) {
    const auto t0 = Clock::now();
    ExperimentConfig c = load_config((p.configs / "mnist_attack.json").string());
    const fs::path model = p.work / "mnist_a0.5" / "checkpoint.bin";
    c.checkpoint = fs::exists(model) ? model.string() : "";
    const std::string out = fresh(p, "attack");
    run_attack(c, out);
    const json j = json::parse(slurp(fs::path(out) / "metrics.json"));
    std::vector<double> ent;
    for (const auto& e : j["dropout"]) ent.push_back(e["mean_entropy"].get<double>());
    std::size_t drops = 0;
    double worst = 0.0;
    for (std::size_t i = 1; i < ent.size(); ++i)
        if (ent[i] < ent[i - 1]) {
            ++drops;
            worst = std::max(worst, ent[i - 1] - ent[i]);
        }
    double drop02 = NAN, base02 = NAN;
    for (std::size_t i = 0; i < c.attack.sweep.size(); ++i)
        if (std::abs(c.attack.sweep[i] - 0.2) < 1e-12) {
            drop02 = j["dropout"][i]["mean_entropy"].get<double>();
            base02 = j["baseline"][i]["mean_entropy"].get<double>();
        }
    const double secs = seconds_since(t0);
    std::string curve;
    for (double e : ent) curve += " " + fmt(e, 3);
    return {drops <= 1 && worst <= 0.05 && drop02 > base02 && secs < 20 * 60,
            "dropout entropy over eta:" + curve + "; at 0.2 dropout " + fmt(drop02, 3) + " vs baseline " +
                fmt(base02, 3) + "; " + fmt(secs, 3) + " s"};
}

Outcome criterion9(const Paths& p) {
    const ExperimentConfig c = load_config((p.configs / "mnist_benchmark.json").string());
    const std::string out = fresh(p, "benchmark");
    run_benchmark(c, out);
    std::istringstream is(slurp(fs::path(out) / "plotdata" / "k_sweep.csv"));
    std::string line;
    std::getline(is, line);
    std::vector<std::pair<double, double>> per_k;  // (K, mean epoch seconds)
    std::map<double, std::pair<double, int>> acc;
    while (std::getline(is, line)) {
        std::stringstream ls(line);
        std::string k, epoch, wall;
        std::getline(ls, k, ',');
        std::getline(ls, epoch, ',');
        std::getline(ls, wall, ',');
        auto& a = acc[std::stod(k)];
        a.first += std::stod(wall);
        a.second += 1;
    }
    for (const auto& [k, a] : acc) per_k.emplace_back(k, a.first / a.second);
    bool mono = per_k.size() == c.benchmark.k_values.size();
    std::string detail = "seconds per epoch:";
    for (std::size_t i = 0; i < per_k.size(); ++i) {
        if (i > 0 && per_k[i].second < per_k[i - 1].second) mono = false;
        detail += " K=" + fmt(per_k[i].first) + " " + fmt(per_k[i].second, 3);
    }
    double ratio = NAN;
    if (acc.count(1.0) && acc.count(10.0)) ratio = (acc[10.0].first / acc[10.0].second) / (acc[1.0].first / acc[1.0].second);
    detail += "; K=10/K=1 ratio " + fmt(ratio, 3);
    return {mono && ratio <= 12.0, detail};
}

int run_cli(const Paths& p, const std::string& args) {
    const std::string cmd = "\"" + p.cli + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

Outcome criterion10(const Paths& p) {
    bool pass = true;
    std::string detail;
    struct Run {
        std::string cmd, config;
    };
    for (const Run& r : {Run{"train", "tiny_classification.json"}, Run{"train", "tiny_regression.json"},
                         Run{"attack", "tiny_classification.json"}, Run{"benchmark", "tiny_classification.json"}}) {
        const std::string a = fresh(p, "det_" + r.cmd + "_a"), b = fresh(p, "det_" + r.cmd + "_b");
        const std::string cfg = (p.test_configs / r.config).string();
        const int ca = run_cli(p, r.cmd + " --config \"" + cfg + "\" --seed 11 --out \"" + a + "\"");
        const int cb = run_cli(p, r.cmd + " --config \"" + cfg + "\" --seed 11 --out \"" + b + "\"");
        bool same = ca == 0 && cb == 0;
        for (const char* f : {"metrics.csv", "metrics.json"})
            same = same && fs::exists(fs::path(a) / f) && slurp(fs::path(a) / f) == slurp(fs::path(b) / f);
        pass = pass && same;
        detail += (detail.empty() ? "" : ", ") + r.cmd + "/" + r.config + (same ? " identical" : " DIFFERENT");
    }
    const std::string a = fresh(p, "det_grad_a"), b = fresh(p, "det_grad_b");
    const bool g = run_cli(p, "gradcheck --seed 2 --out \"" + a + "\"") == 0 &&
                   run_cli(p, "gradcheck --seed 2 --out \"" + b + "\"") == 0 &&
                   slurp(fs::path(a) / "metrics.csv") == slurp(fs::path(b) / "metrics.csv");
    pass = pass && g;
    detail += std::string(", gradcheck ") + (g ? "identical" : "DIFFERENT");
    return {pass, detail};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    Paths p;
    std::string configs, test_configs, work = ALPHABOX_TEST_TMP;
    std::vector<int> only;
    app.add_option("--cli", p.cli, "path to the alphabox-cli binary")->required();
    app.add_option("--configs", configs, "experiment config directory")->required();
    app.add_option("--test-configs", test_configs, "small config directory")->required();
    app.add_option("--work", work, "scratch directory");
    app.add_option("--only", only, "run only these criteria");
    CLI11_PARSE(app, argc, argv);
    p.configs = configs;
    p.test_configs = test_configs;
    p.work = work;
    fs::create_directories(p.work);

    const std::set<int> chosen(only.begin(), only.end());
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1},
        {2, criterion2},
        {3, criterion3},
        {4, criterion4},
        {5, criterion5},
        {6, [&] { return criterion6(p); }},
        {7, [&] { return criterion7(p); }},
        {8, [&] { return criterion8(p); }},
        {9, [&] { return criterion9(p); }},
        {10, [&] { return criterion10(p); }},
    };
    int failures = 0;
    for (const auto& [id, fn] : criteria) {
        if (!chosen.empty() && !chosen.count(id)) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ")" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}

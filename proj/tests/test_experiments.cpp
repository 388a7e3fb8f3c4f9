#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "alphabox/harness/checks.hpp"
#include "alphabox/harness/experiments.hpp"

using namespace alphabox;
using namespace alphabox::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kData = ALPHABOX_DATA_DIR;

std::string out_dir(const std::string& name) {
    const fs::path p = fs::path(ALPHABOX_TEST_TMP) / name;
    fs::remove_all(p);
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Every line has the header's column count; returns the number of data rows.
std::size_t check_csv(const fs::path& p) {
    REQUIRE(fs::exists(p));
    std::istringstream is(slurp(p));
    std::string line;
    REQUIRE(std::getline(is, line));
    const auto cols = std::count(line.begin(), line.end(), ',');
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        CHECK(std::count(line.begin(), line.end(), ',') == cols);
        ++rows;
    }
    return rows;
}

ExperimentConfig mnist_config(std::size_t max_train, std::size_t max_test) {
    ExperimentConfig c;
    c.task = Task::classification;
    c.dataset.format = "idx";
    c.dataset.train_images = kData + "/mnist10k/train-images-idx3-ubyte";
    c.dataset.train_labels = kData + "/mnist10k/train-labels-idx1-ubyte";
    c.dataset.test_images = kData + "/mnist10k/test-images-idx3-ubyte";
    c.dataset.test_labels = kData + "/mnist10k/test-labels-idx1-ubyte";
    c.dataset.max_train = max_train;
    c.dataset.max_test = max_test;
    c.architecture.hidden = {50};
    c.architecture.hidden_dropout = 0.5;
    c.objective.alpha = 0.5;
    c.objective.samples = 5;
    c.optimizer.epochs = 3;
    c.k_test = 10;
    c.seed = 1;
    return c;
}

ExperimentConfig boston_config() {
    ExperimentConfig c;
    c.task = Task::regression;
    c.dataset.path = kData + "/boston.csv";
    c.split.n_splits = 2;
    c.objective.tau_grid = {0.5, 2.0};
    c.optimizer.epochs = 4;
    c.k_test = 10;
    c.eval_every = 2;
    return c;
}

} // namespace

TEST_CASE("split protocol") {
    ExperimentConfig c = boston_config();
    c.split.n_splits = 0;
    CHECK(protocol_splits(c, 506) == 20);
    CHECK(protocol_splits(c, 1999) == 20);
    CHECK(protocol_splits(c, 2000) == 5);
    c.split.n_splits = 3;
    CHECK(protocol_splits(c, 506) == 3);
    const Split a = protocol_split(c, 506, 1), b = protocol_split(c, 506, 1);
    CHECK(a.test == b.test);
    CHECK(protocol_split(c, 506, 0).test != a.test);
    CHECK(a.test.size() == 51);
}

TEST_CASE("regression protocol writes consistent outputs and repeats exactly") {
    const ExperimentConfig c = boston_config();
    const std::string o1 = out_dir("reg1"), o2 = out_dir("reg2");
    const RegressionResult r = run_regression_protocol(c, o1);
    run_regression_protocol(c, o2);
    CHECK(r.splits.size() == 2);
    CHECK((r.tau == 0.5 || r.tau == 2.0));
    CHECK(check_csv(fs::path(o1) / "metrics.csv") == 8);
    CHECK(check_csv(fs::path(o1) / "plotdata" / "splits.csv") == 2);
    CHECK(check_csv(fs::path(o1) / "plotdata" / "tau_grid.csv") == 2);
    CHECK(check_csv(fs::path(o1) / "plotdata" / "timing.csv") == 8);
    CHECK(fs::exists(fs::path(o1) / "checkpoint.bin"));
    CHECK(slurp(fs::path(o1) / "metrics.csv") == slurp(fs::path(o2) / "metrics.csv"));
    CHECK(slurp(fs::path(o1) / "metrics.json") == slurp(fs::path(o2) / "metrics.json"));
    const json j = json::parse(slurp(fs::path(o1) / "metrics.json"));
    CHECK(j["n_points"] == 506);
    CHECK(j["n_features"] == 13);
    CHECK(j["n_splits"] == 2);
    const double m = 0.5 * (r.splits[0].nll + r.splits[1].nll);
    CHECK(std::abs(j["test_nll_mean"].get<double>() - m) < 1e-12);
    CHECK(std::abs(r.nll_se - std::abs(r.splits[0].nll - r.splits[1].nll) / 2.0) < 1e-12);

    // evaluate reloads the split-0 model and scores split 0's test part
    ExperimentConfig e = c;
    e.checkpoint = (fs::path(o1) / "checkpoint.bin").string();
    const std::string oe = out_dir("reg_eval");
    run_evaluate(e, oe);
    const json ej = json::parse(slurp(fs::path(oe) / "metrics.json"));
    CHECK(ej["n"] == 51);
    CHECK(std::abs(ej["nll"].get<double>() - r.splits[0].nll) < 0.2);
    CHECK(check_csv(fs::path(oe) / "metrics.csv") == 1);
}

TEST_CASE("classification run, checkpoint and evaluate") {
    ExperimentConfig c = mnist_config(2000, 500);
    c.optimizer.epochs = 5;
    const std::string o = out_dir("cls");
    const TrainResult r = run_classification(c, o);
    CHECK(r.log.size() == 5);
    CHECK(r.log.back().test.accuracy > 0.8);
    CHECK(check_csv(fs::path(o) / "metrics.csv") == 5);
    CHECK(check_csv(fs::path(o) / "plotdata" / "timing.csv") == 5);
    const Checkpoint ck = Checkpoint::load((fs::path(o) / "checkpoint.bin").string());
    CHECK(ck.params.flatten() == r.params.flatten());
    CHECK(ck.epoch == 5);
    CHECK(ck.config_hash == config_hash(c));

    ExperimentConfig e = c;
    e.checkpoint = (fs::path(o) / "checkpoint.bin").string();
    const std::string oe = out_dir("cls_eval");
    run_evaluate(e, oe);
    const json j = json::parse(slurp(fs::path(oe) / "metrics.json"));
    CHECK(j["n"] == 500);
    CHECK(std::abs(j["accuracy"].get<double>() - r.log.back().test.accuracy) < 0.03);

    const auto [tr, te] = load_classification(c);
    CHECK(tr.size() == 2000);
    CHECK(te.size() == 500);

    ExperimentConfig reg = boston_config();
    reg.checkpoint = e.checkpoint;
    CHECK_THROWS_AS(run_evaluate(reg, out_dir("mismatch")), InvalidArgument);
}

TEST_CASE("deterministic baseline loses accuracy under FGS") {
    const ExperimentConfig c = mnist_config(2000, 200);
    const auto [train, test] = load_classification(c);
    ExperimentConfig bc = c;
    bc.architecture.hidden_dropout = 0.0;
    bc.objective.alpha = 0.0;
    bc.objective.samples = 1;
    bc.optimizer.epochs = 5;
    const TrainOptions o = make_train_options(bc, train, 1.0);
    const TrainResult r = train_model(o, train, nullptr);

    AttackConfig fgs;
    fgs.sweep = {0.0, 0.3};
    fgs.attack_samples = 1;
    fgs.test_samples = 1;
    const auto rows = detection_curve({r.params, o.arch}, test.inputs, test.labels, fgs, 7);
    CHECK(rows[1].accuracy < rows[0].accuracy);

    // targeted attack toward class 0 on non-zero digits
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (test.labels[i] != 0) keep.push_back(i);
    const Dataset nz = test.subset(keep);
    AttackConfig tgt;
    tgt.kind = AttackKind::targeted_iterative;
    tgt.sweep = {0, 40};
    tgt.eta = 0.01;
    tgt.target_class = 0;
    tgt.attack_samples = 1;
    tgt.test_samples = 1;
    const auto trows = detection_curve({r.params, o.arch}, nz.inputs, nz.labels, tgt, 7);
    CHECK(trows[1].mean_target_prob > trows[0].mean_target_prob);
}

TEST_CASE("attack and benchmark drivers") {
    ExperimentConfig c = mnist_config(1000, 100);
    c.optimizer.epochs = 2;
    c.attack.sweep = {0.0, 0.2};
    c.attack.attack_samples = 3;
    const std::string o = out_dir("attack");
    run_attack(c, o);
    CHECK(check_csv(fs::path(o) / "metrics.csv") == 4);
    CHECK(check_csv(fs::path(o) / "plotdata" / "attack_fgs_dropout.csv") == 2);
    CHECK(check_csv(fs::path(o) / "plotdata" / "attack_fgs_baseline.csv") == 2);
    CHECK(fs::exists(fs::path(o) / "checkpoint.bin"));

    c.benchmark.k_values = {1, 3};
    c.benchmark.epochs = 1;
    const std::string b = out_dir("bench");
    run_benchmark(c, b);
    CHECK(check_csv(fs::path(b) / "metrics.csv") == 2);
    CHECK(check_csv(fs::path(b) / "plotdata" / "k_sweep.csv") == 2);
    const json j = json::parse(slurp(fs::path(b) / "metrics.json"));
    CHECK(j["final"].size() == 2);

    CHECK_THROWS_AS(run_attack(boston_config(), out_dir("bad")), InvalidArgument);
    CHECK_THROWS_AS(run_benchmark(boston_config(), out_dir("bad")), InvalidArgument);
}

TEST_CASE("check suites") {
    bool passed = false;
    const std::string g = out_dir("grad");
    run_gradcheck_command(0, g, passed);
    CHECK(passed);
    CHECK(check_csv(fs::path(g) / "metrics.csv") == 60);
    CHECK(slurp(fs::path(g) / "metrics.csv") == slurp(fs::path(g) / "plotdata" / "gradcheck.csv"));
    const std::string d = out_dir("div");
    run_divergence_command(0, d, passed);
    CHECK(passed);
    const auto rows = run_divergence_checks(0);
    CHECK(check_csv(fs::path(d) / "metrics.csv") == rows.size());
    for (const auto& r : rows) CHECK_MESSAGE(r.passed, r.name);
    const json j = json::parse(slurp(fs::path(d) / "metrics.json"));
    CHECK(j["n_failed"] == 0);
}

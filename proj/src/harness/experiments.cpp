#include "alphabox/harness/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "alphabox/harness/checks.hpp"

namespace alphabox::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

// CSV with a fixed header; every row must have the header's column count.
class CsvWriter {
public:
    CsvWriter(const fs::path& path, std::vector<std::string> header) : f_(path), cols_(header.size()) {
        if (!f_) throw RuntimeFailure("cannot write " + path.string());
        write(header);
    }
    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw RuntimeFailure("csv row has the wrong column count");
        write(cells);
    }

private:
    void write(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) f_ << (i ? "," : "") << cells[i];
        f_ << '\n';
        f_.flush();
    }
    std::ofstream f_;
    std::size_t cols_;
};

fs::path prepare(const std::string& out_dir) {
    const fs::path out(out_dir);
    fs::create_directories(out / "plotdata");
    return out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw RuntimeFailure("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

json metrics_json(const EvalMetrics& m) {
    json j;
    j["n"] = m.n;
    j["nll"] = m.nll;
    if (!std::isnan(m.rmse)) j["rmse"] = m.rmse;
    if (!std::isnan(m.accuracy)) j["accuracy"] = m.accuracy;
    if (!std::isnan(m.mean_entropy)) j["mean_entropy"] = m.mean_entropy;
    return j;
}

std::pair<double, double> mean_se(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

Checkpoint make_checkpoint(const ExperimentConfig& c, const TrainOptions& o, const ParameterSet& p,
                           std::size_t epoch) {
    Checkpoint ck;
    ck.arch = o.arch;
    ck.params = p;
    ck.task = c.task;
    ck.tau = o.objective.tau;
    ck.config_hash = config_hash(c);
    ck.epoch = epoch;
    ck.seed = o.seed;
    return ck;
}

// Trains, and on divergence saves the last finite parameters before rethrowing.
TrainResult train_or_save(const ExperimentConfig& c, const TrainOptions& o, const Dataset& train,
                          const Dataset* test, const fs::path& out, const Standardizer* st) {
    try {
        return train_model(o, train, test);
    } catch (const TrainingDiverged& e) {
        Checkpoint ck = make_checkpoint(c, o, e.last_finite, e.epoch - 1);
        if (st) ck.standardizer = *st;
        ck.save((out / "checkpoint.bin").string());
        throw;
    }
}

Dataset truncate(Dataset d, std::size_t max_rows) {
    if (max_rows == 0 || max_rows >= d.size()) return d;
    std::vector<std::size_t> rows(max_rows);
    for (std::size_t i = 0; i < max_rows; ++i) rows[i] = i;
    return d.subset(rows);
}

} // namespace

std::size_t protocol_splits(const ExperimentConfig& c, std::size_t n) {
    if (c.split.n_splits > 0) return c.split.n_splits;
    return n < 2000 ? 20 : 5;
}

Split protocol_split(const ExperimentConfig& c, std::size_t n, std::size_t s) {
    return random_split(mix_seed(c.split.seed, s), n, c.split.test_fraction);
}

double select_tau(const ExperimentConfig& c, const Dataset& data, std::vector<std::pair<double, double>>* table) {
    if (c.objective.tau_grid.empty()) return c.objective.tau;
    const Split outer = protocol_split(c, data.size(), 0);
    const Dataset pool = data.subset(outer.train);
    // Inner split seed lives in a separate stream from the protocol splits.
    const Split inner = random_split(mix_seed(c.split.seed ^ 0x7a75ULL, 0), pool.size(), c.split.validation_fraction);
    const Dataset fit_raw = pool.subset(inner.train);
    const Standardizer st = Standardizer::fit(fit_raw);
    const Dataset fit = st.apply(fit_raw);
    const Dataset val = st.apply(pool.subset(inner.test));
    double best_tau = c.objective.tau_grid.front();
    double best = INFINITY;
    for (double tau : c.objective.tau_grid) {
        TrainOptions o = make_train_options(c, fit, tau);
        o.seed = mix_seed(c.seed, 0);
        o.target_scale = st.target_std;
        const TrainResult r = train_model(o, fit, nullptr);
        const EvalMetrics m = evaluate_model({r.params, o.arch}, val, c.k_test, tau,
                                             RngStream(o.seed).substream(4), st.target_std);
        if (table) table->push_back({tau, m.nll});
        if (m.nll < best) {
            best = m.nll;
            best_tau = tau;
        }
    }
    return best_tau;
}

RegressionResult run_regression_protocol(const ExperimentConfig& c, const std::string& out_dir) {
    const fs::path out = prepare(out_dir);
    const Dataset data = load_csv_regression(c.dataset.path);
    RegressionResult res;
    std::vector<std::pair<double, double>> tau_table;
    res.tau = select_tau(c, data, &tau_table);
    if (!tau_table.empty()) {
        CsvWriter tw(out / "plotdata" / "tau_grid.csv", {"tau", "validation_nll"});
        for (auto [t, v] : tau_table) tw.row({num(t), num(v)});
    }

    CsvWriter metrics(out / "metrics.csv", {"split", "epoch", "train_loss", "test_nll", "test_rmse"});
    CsvWriter timing(out / "plotdata" / "timing.csv", {"split", "epoch", "seconds"});
    CsvWriter per_split(out / "plotdata" / "splits.csv", {"split", "test_nll", "test_rmse"});
    const std::size_t n_splits = protocol_splits(c, data.size());
    std::vector<double> nlls, rmses;
    for (std::size_t s = 0; s < n_splits; ++s) {
        const Split sp = protocol_split(c, data.size(), s);
        const Dataset train_raw = data.subset(sp.train);
        const Standardizer st = Standardizer::fit(train_raw);
        const Dataset train = st.apply(train_raw);
        const Dataset test = st.apply(data.subset(sp.test));
        TrainOptions o = make_train_options(c, train, res.tau);
        o.seed = mix_seed(c.seed, s);
        o.target_scale = st.target_std;
        const TrainResult r = train_or_save(c, o, train, &test, out, &st);
        for (const auto& e : r.log) {
            metrics.row({std::to_string(s), std::to_string(e.epoch), num(e.train_loss),
                         num(e.evaluated ? e.test.nll : NAN), num(e.evaluated ? e.test.rmse : NAN)});
            timing.row({std::to_string(s), std::to_string(e.epoch), num(e.seconds)});
        }
        const EvalMetrics& fin = r.log.back().test;
        res.splits.push_back(fin);
        nlls.push_back(fin.nll);
        rmses.push_back(fin.rmse);
        per_split.row({std::to_string(s), num(fin.nll), num(fin.rmse)});
        if (s == 0) {
            Checkpoint ck = make_checkpoint(c, o, r.params, o.epochs);
            ck.standardizer = st;
            ck.save((out / "checkpoint.bin").string());
        }
    }
    std::tie(res.nll_mean, res.nll_se) = mean_se(nlls);
    std::tie(res.rmse_mean, res.rmse_se) = mean_se(rmses);

    json j;
    j["task"] = "regression";
    j["alpha"] = c.objective.alpha;
    j["samples"] = c.objective.samples;
    j["tau"] = res.tau;
    j["n_points"] = data.size();
    j["n_features"] = data.input_dim();
    j["n_splits"] = n_splits;
    j["test_nll_mean"] = res.nll_mean;
    j["test_nll_se"] = res.nll_se;
    j["test_rmse_mean"] = res.rmse_mean;
    j["test_rmse_se"] = res.rmse_se;
    write_json(out / "metrics.json", j);
    return res;
}

std::pair<Dataset, Dataset> load_classification(const ExperimentConfig& c) {
    Dataset train = truncate(load_idx(c.dataset.train_images, c.dataset.train_labels), c.dataset.max_train);
    Dataset test = truncate(load_idx(c.dataset.test_images, c.dataset.test_labels), c.dataset.max_test);
    if (train.input_dim() != test.input_dim()) throw InvalidArgument("train and test image sizes differ");
    return {std::move(train), std::move(test)};
}

TrainResult run_classification(const ExperimentConfig& c, const std::string& out_dir) {
    const fs::path out = prepare(out_dir);
    const auto [train, test] = load_classification(c);
    const TrainOptions o = make_train_options(c, train, c.objective.tau);
    CsvWriter metrics(out / "metrics.csv", {"epoch", "train_loss", "test_nll", "test_accuracy", "test_entropy"});
    CsvWriter timing(out / "plotdata" / "timing.csv", {"epoch", "seconds"});
    TrainOptions logged = o;
    logged.on_epoch = [&](const EpochMetrics& e) {
        metrics.row({std::to_string(e.epoch), num(e.train_loss), num(e.evaluated ? e.test.nll : NAN),
                     num(e.evaluated ? e.test.accuracy : NAN), num(e.evaluated ? e.test.mean_entropy : NAN)});
        timing.row({std::to_string(e.epoch), num(e.seconds)});
    };
    TrainResult r = train_or_save(c, logged, train, &test, out, nullptr);
    make_checkpoint(c, o, r.params, o.epochs).save((out / "checkpoint.bin").string());
    json j = metrics_json(r.log.back().test);
    j["task"] = "classification";
    j["alpha"] = c.objective.alpha;
    j["samples"] = c.objective.samples;
    j["epochs"] = o.epochs;
    j["n_train"] = train.size();
    write_json(out / "metrics.json", j);
    return r;
}

RunSummary run_train(const ExperimentConfig& c, const std::string& out_dir) {
    if (c.task == Task::regression)
        run_regression_protocol(c, out_dir);
    else
        run_classification(c, out_dir);
    std::ifstream f(fs::path(out_dir) / "metrics.json");
    std::stringstream ss;
    ss << f.rdbuf();
    return {ss.str()};
}

RunSummary run_evaluate(const ExperimentConfig& c, const std::string& out_dir) {
    const fs::path out = prepare(out_dir);
    const std::string path = c.checkpoint.empty() ? (out / "checkpoint.bin").string() : c.checkpoint;
    const Checkpoint ck = Checkpoint::load(path);
    if (ck.task != c.task) throw InvalidArgument("checkpoint task does not match the config");
    const RngStream base = RngStream(c.seed).substream(5);
    EvalMetrics m;
    if (c.task == Task::classification) {
        const auto [train, test] = load_classification(c);
        m = evaluate_model({ck.params, ck.arch}, test, c.k_test, ck.tau, base);
    } else {
        const Dataset data = load_csv_regression(c.dataset.path);
        const Split sp = protocol_split(c, data.size(), 0);
        const Dataset raw = data.subset(sp.test);
        if (raw.input_dim() != static_cast<std::size_t>(ck.standardizer.input_mean.size()))
            throw InvalidArgument("checkpoint standardisation does not match the dataset");
        m = evaluate_model({ck.params, ck.arch}, ck.standardizer.apply(raw), c.k_test, ck.tau, base,
                           ck.standardizer.target_std);
    }
    CsvWriter metrics(out / "metrics.csv", {"n", "test_nll", "test_rmse", "test_accuracy", "test_entropy"});
    metrics.row({std::to_string(m.n), num(m.nll), num(m.rmse), num(m.accuracy), num(m.mean_entropy)});
    json j = metrics_json(m);
    j["task"] = to_string(c.task);
    j["k_test"] = c.k_test;
    j["checkpoint_epoch"] = ck.epoch;
    write_json(out / "metrics.json", j);
    return {j.dump(2)};
}

RunSummary run_attack(const ExperimentConfig& c, const std::string& out_dir) {
    if (c.task != Task::classification) throw InvalidArgument("attack needs a classification config");
    const fs::path out = prepare(out_dir);
    const auto [train, test_full] = load_classification(c);
    const Dataset test = truncate(test_full, c.attack.max_points);

    AttackConfig ac;
    ac.kind = c.attack.kind;
    ac.sweep = c.attack.sweep;
    ac.eta = c.attack.eta;
    ac.target_class = c.attack.target_class;
    ac.attack_samples = c.attack.attack_samples;
    ac.test_samples = c.k_test;
    ac.validate(train.num_classes);

    struct Model {
        std::string name;
        MlpArchitecture arch;
        ParameterSet params;
        AttackConfig attack;
    };
    std::vector<Model> models;
    if (!c.checkpoint.empty()) {
        const Checkpoint ck = Checkpoint::load(c.checkpoint);
        models.push_back({"dropout", ck.arch, ck.params, ac});
    } else {
        const TrainOptions o = make_train_options(c, train, c.objective.tau);
        const TrainResult r = train_or_save(c, o, train, nullptr, out, nullptr);
        make_checkpoint(c, o, r.params, o.epochs).save((out / "checkpoint.bin").string());
        models.push_back({"dropout", o.arch, r.params, ac});
    }
    if (c.attack.baseline) {
        ExperimentConfig bc = c;
        bc.architecture.input_dropout = 0.0;
        bc.architecture.hidden_dropout = 0.0;
        bc.objective.alpha = 0.0;
        bc.objective.samples = 1;
        const TrainOptions o = make_train_options(bc, train, c.objective.tau);
        const TrainResult r = train_model(o, train, nullptr);
        AttackConfig bac = ac;
        bac.attack_samples = 1;
        bac.test_samples = 1;
        models.push_back({"baseline", o.arch, r.params, bac});
    }

    const std::string kind = c.attack.kind == AttackKind::fgs_untargeted ? "fgs" : "targeted";
    CsvWriter metrics(out / "metrics.csv", {"model", "sweep_value", "accuracy", "mean_entropy", "n_points"});
    json j;
    j["attack"] = kind;
    for (const auto& m : models) {
        const auto rows = detection_curve({m.params, m.arch}, test.inputs, test.labels, m.attack, c.seed);
        std::ofstream f(out / "plotdata" / ("attack_" + kind + "_" + m.name + ".csv"));
        write_detection_csv(f, rows);
        json curve = json::array();
        for (const auto& r : rows) {
            metrics.row({m.name, num(r.sweep_value), num(r.accuracy), num(r.mean_entropy), std::to_string(r.n_points)});
            json e = {{"sweep_value", r.sweep_value}, {"accuracy", r.accuracy}, {"mean_entropy", r.mean_entropy}};
            if (c.attack.kind == AttackKind::targeted_iterative) e["mean_target_prob"] = r.mean_target_prob;
            curve.push_back(e);
        }
        j[m.name] = curve;
    }
    write_json(out / "metrics.json", j);
    return {j.dump(2)};
}

RunSummary run_benchmark(const ExperimentConfig& c, const std::string& out_dir) {
    if (c.task != Task::classification) throw InvalidArgument("benchmark needs a classification config");
    const fs::path out = prepare(out_dir);
    const auto [train, test] = load_classification(c);
    CsvWriter metrics(out / "metrics.csv", {"K", "epoch", "train_loss", "test_nll", "test_accuracy"});
    CsvWriter sweep(out / "plotdata" / "k_sweep.csv",
                    {"K", "epoch", "wall_seconds", "cumulative_seconds", "test_accuracy", "test_ll"});
    json j;
    j["k_values"] = c.benchmark.k_values;
    json finals = json::array();
    for (std::size_t k : c.benchmark.k_values) {
        ExperimentConfig kc = c;
        kc.objective.samples = k;
        kc.optimizer.epochs = c.benchmark.epochs;
        TrainOptions o = make_train_options(kc, train, c.objective.tau);
        double cumulative = 0.0;
        o.on_epoch = [&](const EpochMetrics& e) {
            cumulative += e.seconds;
            metrics.row({std::to_string(k), std::to_string(e.epoch), num(e.train_loss),
                         num(e.evaluated ? e.test.nll : NAN), num(e.evaluated ? e.test.accuracy : NAN)});
            sweep.row({std::to_string(k), std::to_string(e.epoch), num(e.seconds), num(cumulative),
                       num(e.evaluated ? e.test.accuracy : NAN), num(e.evaluated ? -e.test.nll : NAN)});
        };
        const TrainResult r = train_model(o, train, &test);
        json f = metrics_json(r.log.back().test);
        f["K"] = k;
        finals.push_back(f);
    }
    j["final"] = finals;
    write_json(out / "metrics.json", j);
    return {j.dump(2)};
}

namespace {

RunSummary write_checks(const std::vector<CheckRow>& rows, const std::string& name, const std::string& out_dir,
                        bool& passed) {
    const fs::path out = prepare(out_dir);
    for (const auto& p : {out / "metrics.csv", out / "plotdata" / (name + ".csv")}) {
        std::ofstream f(p);
        if (!f) throw RuntimeFailure("cannot write " + p.string());
        write_check_csv(f, rows);
    }
    passed = all_passed(rows);
    std::size_t failed = 0;
    json fails = json::array();
    for (const auto& r : rows)
        if (!r.passed) {
            ++failed;
            fails.push_back(r.name);
        }
    json j = {{"suite", name}, {"n_checks", rows.size()}, {"n_failed", failed}, {"passed", passed},
              {"failed_checks", fails}};
    write_json(out / "metrics.json", j);
    return {j.dump(2)};
}

} // namespace

RunSummary run_gradcheck_command(std::uint64_t seed, const std::string& out_dir, bool& passed) {
    return write_checks(run_gradcheck(seed), "gradcheck", out_dir, passed);
}

RunSummary run_divergence_command(std::uint64_t seed, const std::string& out_dir, bool& passed) {
    return write_checks(run_divergence_checks(seed), "divergence_check", out_dir, passed);
}

} // namespace alphabox::harness

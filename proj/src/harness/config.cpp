#include "alphabox/harness/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace alphabox::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
    throw InvalidArgument("unknown optimizer '" + s + "' (expected adam or sgd_momentum)");
}

namespace {

std::string attack_kind_name(AttackKind k) {
    return k == AttackKind::fgs_untargeted ? "fgs" : "targeted";
}

AttackKind attack_kind_from(const std::string& s) {
    if (s == "fgs") return AttackKind::fgs_untargeted;
    if (s == "targeted") return AttackKind::targeted_iterative;
    throw InvalidArgument("unknown attack kind '" + s + "' (expected fgs or targeted)");
}

// Reads keys out of one JSON object, rejecting anything not consumed.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw InvalidArgument(where_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw InvalidArgument(where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw InvalidArgument(where_ + ": unknown key '" + it.key() + "'");
    }

    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::string resolve(const std::string& p, const std::string& base) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c;
    Reader r(root, "config");

    std::string s = to_string(c.task);
    r.get("task", s);
    c.task = task_from_string(s);
    r.get("k_test", c.k_test);
    r.get("eval_every", c.eval_every);
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
    r.get("checkpoint", c.checkpoint);

    if (const json* j = r.child("dataset")) {
        Reader d(*j, "dataset");
        auto& ds = c.dataset;
        d.get("format", ds.format);
        d.get("path", ds.path);
        d.get("train_images", ds.train_images);
        d.get("train_labels", ds.train_labels);
        d.get("test_images", ds.test_images);
        d.get("test_labels", ds.test_labels);
        d.get("max_train", ds.max_train);
        d.get("max_test", ds.max_test);
        d.finish();
    }
    if (const json* j = r.child("architecture")) {
        Reader a(*j, "architecture");
        auto& as = c.architecture;
        a.get("hidden", as.hidden);
        std::string act = to_string(as.activation);
        a.get("activation", act);
        as.activation = activation_from_string(act);
        a.get("input_dropout", as.input_dropout);
        a.get("hidden_dropout", as.hidden_dropout);
        a.finish();
    }
    if (const json* j = r.child("objective")) {
        Reader o(*j, "objective");
        auto& os = c.objective;
        o.get("alpha", os.alpha);
        o.get("samples", os.samples);
        o.get("tau", os.tau);
        o.get("tau_grid", os.tau_grid);
        o.get("weight_decay", os.weight_decay);
        o.get("include_likelihood_constant", os.include_likelihood_constant);
        o.finish();
    }
    if (const json* j = r.child("optimizer")) {
        Reader o(*j, "optimizer");
        auto& os = c.optimizer;
        std::string kind = to_string(os.kind);
        o.get("kind", kind);
        os.kind = optimizer_from_string(kind);
        o.get("learning_rate", os.learning_rate);
        o.get("batch_size", os.batch_size);
        o.get("epochs", os.epochs);
        o.get("momentum", os.momentum);
        o.finish();
    }
    if (const json* j = r.child("split")) {
        Reader sp(*j, "split");
        sp.get("n_splits", c.split.n_splits);
        sp.get("test_fraction", c.split.test_fraction);
        sp.get("seed", c.split.seed);
        sp.get("validation_fraction", c.split.validation_fraction);
        sp.finish();
    }
    if (const json* j = r.child("attack")) {
        Reader a(*j, "attack");
        auto& at = c.attack;
        std::string kind = attack_kind_name(at.kind);
        a.get("kind", kind);
        at.kind = attack_kind_from(kind);
        a.get("sweep", at.sweep);
        a.get("eta", at.eta);
        a.get("target_class", at.target_class);
        a.get("attack_samples", at.attack_samples);
        a.get("max_points", at.max_points);
        a.get("baseline", at.baseline);
        a.finish();
    }
    if (const json* j = r.child("benchmark")) {
        Reader b(*j, "benchmark");
        b.get("k_values", c.benchmark.k_values);
        b.get("epochs", c.benchmark.epochs);
        b.finish();
    }
    r.finish();

    for (std::string* p : {&c.dataset.path, &c.dataset.train_images, &c.dataset.train_labels,
                           &c.dataset.test_images, &c.dataset.test_labels, &c.checkpoint})
        *p = resolve(*p, base_dir);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidArgument("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), fs::path(path).parent_path().string());
}

std::string serialise_config(const ExperimentConfig& c) {
    json j;
    j["task"] = to_string(c.task);
    j["k_test"] = c.k_test;
    j["eval_every"] = c.eval_every;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["checkpoint"] = c.checkpoint;
    j["dataset"] = {{"format", c.dataset.format},
                    {"path", c.dataset.path},
                    {"train_images", c.dataset.train_images},
                    {"train_labels", c.dataset.train_labels},
                    {"test_images", c.dataset.test_images},
                    {"test_labels", c.dataset.test_labels},
                    {"max_train", c.dataset.max_train},
                    {"max_test", c.dataset.max_test}};
    j["architecture"] = {{"hidden", c.architecture.hidden},
                         {"activation", to_string(c.architecture.activation)},
                         {"input_dropout", c.architecture.input_dropout},
                         {"hidden_dropout", c.architecture.hidden_dropout}};
    j["objective"] = {{"alpha", c.objective.alpha},
                      {"samples", c.objective.samples},
                      {"tau", c.objective.tau},
                      {"tau_grid", c.objective.tau_grid},
                      {"weight_decay", c.objective.weight_decay},
                      {"include_likelihood_constant", c.objective.include_likelihood_constant}};
    j["optimizer"] = {{"kind", to_string(c.optimizer.kind)},
                      {"learning_rate", c.optimizer.learning_rate},
                      {"batch_size", c.optimizer.batch_size},
                      {"epochs", c.optimizer.epochs},
                      {"momentum", c.optimizer.momentum}};
    j["split"] = {{"n_splits", c.split.n_splits},
                  {"test_fraction", c.split.test_fraction},
                  {"seed", c.split.seed},
                  {"validation_fraction", c.split.validation_fraction}};
    j["attack"] = {{"kind", attack_kind_name(c.attack.kind)},
                   {"sweep", c.attack.sweep},
                   {"eta", c.attack.eta},
                   {"target_class", c.attack.target_class},
                   {"attack_samples", c.attack.attack_samples},
                   {"max_points", c.attack.max_points},
                   {"baseline", c.attack.baseline}};
    j["benchmark"] = {{"k_values", c.benchmark.k_values}, {"epochs", c.benchmark.epochs}};
    return j.dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& c) {
    ExperimentConfig key = c;
    key.output_dir.clear();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : serialise_config(key)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::size_t ExperimentConfig::effective_batch_size() const {
    if (optimizer.batch_size > 0) return optimizer.batch_size;
    return task == Task::regression ? 32 : 128;
}

MlpArchitecture ExperimentConfig::make_architecture(std::size_t d_in, std::size_t d_out) const {
    return MlpArchitecture::make(d_in, architecture.hidden, d_out, architecture.input_dropout,
                                 architecture.hidden_dropout, architecture.activation);
}

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw InvalidArgument(msg);
    };
    auto exists = [&](const std::string& p, const char* what) {
        require(!p.empty(), std::string("dataset.") + what + " is required");
        require(fs::exists(p), std::string("dataset.") + what + " does not exist: " + p);
    };
    require(optimizer.epochs >= 1, "optimizer.epochs must be >= 1");
    require(optimizer.learning_rate > 0.0, "optimizer.learning_rate must be > 0");
    require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "optimizer.momentum must lie in [0, 1)");
    require(split.test_fraction > 0.0 && split.test_fraction < 1.0, "split.test_fraction must lie in (0, 1)");
    require(split.validation_fraction > 0.0 && split.validation_fraction < 1.0,
            "split.validation_fraction must lie in (0, 1)");
    require(k_test >= 1, "k_test must be >= 1");
    require(eval_every >= 1, "eval_every must be >= 1");
    require(!architecture.hidden.empty(), "architecture.hidden must list at least one layer");
    for (double t : objective.tau_grid) require(t > 0.0, "objective.tau_grid entries must be > 0");
    require(objective.weight_decay >= 0.0, "objective.weight_decay must be >= 0");
    for (std::size_t k : benchmark.k_values) require(k >= 1, "benchmark.k_values entries must be >= 1");
    if (dataset.format == "csv") {
        require(task == Task::regression, "csv datasets are regression only");
        exists(dataset.path, "path");
    } else if (dataset.format == "idx") {
        require(task == Task::classification, "idx datasets are classification only");
        exists(dataset.train_images, "train_images");
        exists(dataset.train_labels, "train_labels");
        exists(dataset.test_images, "test_images");
        exists(dataset.test_labels, "test_labels");
    } else {
        throw InvalidArgument("dataset.format must be csv or idx");
    }
    if (!checkpoint.empty()) require(fs::exists(checkpoint), "checkpoint does not exist: " + checkpoint);
    // Shape checks that only need the hidden widths; the input width is a placeholder.
    make_architecture(1, 1).validate();
    AlphaObjectiveConfig oc;
    oc.task = task;
    oc.alpha = objective.alpha;
    oc.samples = objective.samples;
    oc.tau = objective.tau;
    oc.layer_reg.assign(architecture.hidden.size() + 1, objective.weight_decay);
    oc.validate(architecture.hidden.size() + 1);
}

} // namespace alphabox::harness

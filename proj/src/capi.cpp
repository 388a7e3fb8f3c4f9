#include "alphabox/alphabox.h"

#include <cstring>
#include <string>

#include "alphabox/harness/checkpoint.hpp"
#include "alphabox/harness/config.hpp"
#include "alphabox/harness/experiments.hpp"
#include "alphabox/uncertainty.hpp"

using namespace alphabox;
using namespace alphabox::harness;

struct ab_config {
    ExperimentConfig config;
};

struct ab_model {
    Checkpoint checkpoint;
};

namespace {

thread_local std::string g_last_error;

template <class F>
ab_status guarded(F&& f) {
    g_last_error.clear();
    try {
        return f();
    } catch (const InvalidArgument& e) {
        g_last_error = e.what();
        return AB_ERR_INVALID;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return AB_ERR_INVALID;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return AB_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return AB_ERR_RUNTIME;
    }
}

ab_status null_arg(const char* what) {
    g_last_error = std::string(what) + " is null";
    return AB_ERR_INVALID;
}

template <class Run>
ab_status run_config(const ab_config* c, Run&& run) {
    if (!c) return null_arg("config");
    return guarded([&] {
        c->config.validate();
        run(c->config, c->config.output_dir);
        return AB_OK;
    });
}

} // namespace

extern "C" {

const char* ab_last_error(void) { return g_last_error.c_str(); }

const char* ab_version(void) { return "0.1.0"; }

ab_status ab_config_load(const char* path, ab_config** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] {
        *out = new ab_config{load_config(path)};
        return AB_OK;
    });
}

ab_status ab_config_parse(const char* json, const char* base_dir, ab_config** out) {
    if (!json) return null_arg("json");
    if (!out) return null_arg("out");
    return guarded([&] {
        *out = new ab_config{parse_config(json, base_dir ? base_dir : "")};
        return AB_OK;
    });
}

void ab_config_free(ab_config* config) { delete config; }

ab_status ab_config_set_seed(ab_config* config, uint64_t seed) {
    if (!config) return null_arg("config");
    config->config.seed = seed;
    return AB_OK;
}

ab_status ab_config_set_output_dir(ab_config* config, const char* dir) {
    if (!config) return null_arg("config");
    if (!dir || !*dir) return null_arg("dir");
    config->config.output_dir = dir;
    return AB_OK;
}

ab_status ab_config_validate(const ab_config* config) {
    if (!config) return null_arg("config");
    return guarded([&] {
        config->config.validate();
        return AB_OK;
    });
}

ab_status ab_config_to_json(const ab_config* config, char* buf, size_t capacity, size_t* needed) {
    if (!config) return null_arg("config");
    return guarded([&] {
        const std::string s = serialise_config(config->config);
        if (needed) *needed = s.size() + 1;
        if (buf && capacity > s.size()) std::memcpy(buf, s.c_str(), s.size() + 1);
        return AB_OK;
    });
}

ab_status ab_run_train(const ab_config* c) { return run_config(c, run_train); }
ab_status ab_run_evaluate(const ab_config* c) { return run_config(c, run_evaluate); }
ab_status ab_run_attack(const ab_config* c) { return run_config(c, run_attack); }
ab_status ab_run_benchmark(const ab_config* c) { return run_config(c, run_benchmark); }

ab_status ab_run_gradcheck(uint64_t seed, const char* out_dir) {
    if (!out_dir) return null_arg("out_dir");
    return guarded([&] {
        bool passed = false;
        run_gradcheck_command(seed, out_dir, passed);
        if (!passed) {
            g_last_error = "gradient checks failed; see metrics.csv";
            return AB_ERR_RUNTIME;
        }
        return AB_OK;
    });
}

ab_status ab_run_divergence_check(uint64_t seed, const char* out_dir) {
    if (!out_dir) return null_arg("out_dir");
    return guarded([&] {
        bool passed = false;
        run_divergence_command(seed, out_dir, passed);
        if (!passed) {
            g_last_error = "divergence checks failed; see metrics.csv";
            return AB_ERR_RUNTIME;
        }
        return AB_OK;
    });
}

ab_status ab_model_load(const char* path, ab_model** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] {
        *out = new ab_model{Checkpoint::load(path)};
        return AB_OK;
    });
}

void ab_model_free(ab_model* model) { delete model; }

ab_status ab_model_dims(const ab_model* model, size_t* input_dim, size_t* output_dim) {
    if (!model) return null_arg("model");
    if (input_dim) *input_dim = model->checkpoint.arch.input_dim();
    if (output_dim) *output_dim = model->checkpoint.arch.output_dim();
    return AB_OK;
}

ab_status ab_model_predict(const ab_model* model, const double* inputs, size_t rows, size_t samples,
                           uint64_t seed, double* out) {
    if (!model) return null_arg("model");
    if (!inputs || !out) return null_arg("buffer");
    return guarded([&] {
        if (samples == 0) throw InvalidArgument("samples must be >= 1");
        const auto& ck = model->checkpoint;
        const std::size_t d_in = ck.arch.input_dim(), d_out = ck.arch.output_dim();
        const Matrix x = Eigen::Map<const Matrix>(inputs, static_cast<Eigen::Index>(rows),
                                                  static_cast<Eigen::Index>(d_in));
        const RngStream base(seed);
        if (ck.task == Task::classification) {
            const auto s = mc_predict_dataset({ck.params, ck.arch}, x, samples, base);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < d_out; ++j) out[i * d_out + j] = s[i].mean[static_cast<Eigen::Index>(j)];
        } else {
            const Matrix y = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d_out));
            const auto s = mc_predict_regression({ck.params, ck.arch}, x, y, samples, ck.tau, base);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < d_out; ++j) out[i * d_out + j] = s[i].mean[static_cast<Eigen::Index>(j)];
        }
        return AB_OK;
    });
}

} // extern "C"

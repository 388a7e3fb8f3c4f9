#ifndef ALPHABOX_ALPHABOX_H
#define ALPHABOX_ALPHABOX_H

#include <stddef.h>
#include <stdint.h>

#if defined(ALPHABOX_BUILDING_LIBRARY)
#define AB_API __attribute__((visibility("default")))
#else
#define AB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns a status; on failure ab_last_error() describes it. */
typedef enum ab_status {
    AB_OK = 0,
    AB_ERR_INVALID = 1, /* bad argument, config or input file */
    AB_ERR_RUNTIME = 2  /* computation failed (divergence, I/O, failed checks) */
} ab_status;

typedef struct ab_config ab_config;
typedef struct ab_model ab_model;

/* Message for the last failing call on this thread; "" when none. */
AB_API const char* ab_last_error(void);
AB_API const char* ab_version(void);

/* Experiment configuration (JSON). Relative paths resolve against the file's directory. */
AB_API ab_status ab_config_load(const char* path, ab_config** out);
AB_API ab_status ab_config_parse(const char* json, const char* base_dir, ab_config** out);
AB_API void ab_config_free(ab_config* config);
AB_API ab_status ab_config_set_seed(ab_config* config, uint64_t seed);
AB_API ab_status ab_config_set_output_dir(ab_config* config, const char* dir);
AB_API ab_status ab_config_validate(const ab_config* config);
/* Copies the serialised config into buf (NUL terminated) when capacity allows;
   *needed receives the full length including the terminator. */
AB_API ab_status ab_config_to_json(const ab_config* config, char* buf, size_t capacity, size_t* needed);

/* Subcommands. Outputs go to the config's output directory. */
AB_API ab_status ab_run_train(const ab_config* config);
AB_API ab_status ab_run_evaluate(const ab_config* config);
AB_API ab_status ab_run_attack(const ab_config* config);
AB_API ab_status ab_run_benchmark(const ab_config* config);
/* These two return AB_ERR_RUNTIME when any check fails; the table is still written. */
AB_API ab_status ab_run_gradcheck(uint64_t seed, const char* out_dir);
AB_API ab_status ab_run_divergence_check(uint64_t seed, const char* out_dir);

/* Trained model from a checkpoint file. */
AB_API ab_status ab_model_load(const char* path, ab_model** out);
AB_API void ab_model_free(ab_model* model);
AB_API ab_status ab_model_dims(const ab_model* model, size_t* input_dim, size_t* output_dim);
/* MC-dropout predictive mean for `rows` inputs (row-major, rows x input_dim):
   class probabilities for classifiers, standardised-space means for regressors.
   out must hold rows x output_dim values. */
AB_API ab_status ab_model_predict(const ab_model* model, const double* inputs, size_t rows,
                                  size_t samples, uint64_t seed, double* out);

#ifdef __cplusplus
}
#endif

#endif

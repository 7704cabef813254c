/* C interface to the cgap2 library.
 *
 * All functions return a cgap2_status. On failure the message of the most
 * recent error on the calling thread is available from cgap2_last_error().
 * Strings returned through `char**` are owned by the caller and released with
 * cgap2_string_free().
 */
#ifndef CGAP2_H
#define CGAP2_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CGAP2_API __declspec(dllexport)
#else
#define CGAP2_API __attribute__((visibility("default")))
#endif

/* Status codes double as process exit codes for the command-line tool. */
typedef enum cgap2_status {
  CGAP2_OK = 0,
  CGAP2_ERR_USAGE = 1,    /* bad arguments or configuration */
  CGAP2_ERR_DATA = 2,     /* dataset, checkpoint or window problem */
  CGAP2_ERR_PHASE = 3,    /* training phase precondition violated */
  CGAP2_ERR_INTERNAL = 4  /* anything else */
} cgap2_status;

typedef struct cgap2_run cgap2_run;
typedef struct cgap2_model cgap2_model;

typedef void (*cgap2_log_fn)(const char* line, void* user);

CGAP2_API const char* cgap2_version(void);
CGAP2_API const char* cgap2_last_error(void);
/* Error category of the last failure, e.g. "phase" or "config"; "" when none. */
CGAP2_API const char* cgap2_last_error_kind(void);
CGAP2_API void cgap2_string_free(char* s);

/* ---- run configuration and commands ---------------------------------- */

/* config_json may be NULL for the desk defaults. */
CGAP2_API cgap2_status cgap2_run_create(const char* config_json, cgap2_run** out);
CGAP2_API cgap2_status cgap2_run_load(const char* path, cgap2_run** out);
CGAP2_API void cgap2_run_free(cgap2_run* run);
/* Dotted field path and a JSON (or bare string) value: ("pose.epochs", "3"). */
CGAP2_API cgap2_status cgap2_run_set(cgap2_run* run, const char* field, const char* value);
CGAP2_API cgap2_status cgap2_run_config_json(const cgap2_run* run, char** out);
CGAP2_API cgap2_status cgap2_run_set_log(cgap2_run* run, cgap2_log_fn fn, void* user);
/* JSON summary of the last successful command; NULL before the first one. */
CGAP2_API const char* cgap2_run_result(const cgap2_run* run);

CGAP2_API cgap2_status cgap2_generate(cgap2_run* run, int overwrite);
/* phase: "pretrain", "pose", "classifier" or "all". */
CGAP2_API cgap2_status cgap2_train(cgap2_run* run, const char* phase, int overwrite);
/* checkpoint may be NULL or "" to pick the latest one in the output directory. */
CGAP2_API cgap2_status cgap2_eval(cgap2_run* run, const char* checkpoint, int overwrite);
/* axis: "gap", "context" or "arch"; values: comma list or NULL for the defaults. */
CGAP2_API cgap2_status cgap2_ablate(cgap2_run* run, const char* axis, const char* values, int overwrite);
CGAP2_API cgap2_status cgap2_classify_stream(cgap2_run* run, const char* checkpoint, int overwrite);

/* ---- models ----------------------------------------------------------- */

/* model_json: the "model" section of a run config, or NULL for the desk model. */
CGAP2_API cgap2_status cgap2_model_create(const char* model_json, uint64_t seed, cgap2_model** out);
/* Fresh model from a run's model section and seed. */
CGAP2_API cgap2_status cgap2_run_create_model(const cgap2_run* run, cgap2_model** out);
CGAP2_API void cgap2_model_free(cgap2_model* model);
CGAP2_API cgap2_status cgap2_model_load(cgap2_model* model, const char* checkpoint);
CGAP2_API cgap2_status cgap2_model_save(const cgap2_model* model, const char* checkpoint);
/* stage: "encoder", "temporal", "decoder", "classifier" or "all". */
CGAP2_API cgap2_status cgap2_model_count_parameters(const cgap2_model* model, const char* stage, uint64_t* out);
CGAP2_API cgap2_status cgap2_model_completed_phase(const cgap2_model* model, int* out);

#ifdef __cplusplus
}
#endif

#endif /* CGAP2_H */

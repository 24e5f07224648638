#ifndef MEMPROBE_H
#define MEMPROBE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define MEMPROBE_API __declspec(dllexport)
#else
#  define MEMPROBE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum memprobe_status {
  MEMPROBE_OK = 0,
  MEMPROBE_ERR_INVALID_ARGUMENT = 1,
  MEMPROBE_ERR_DIMENSION = 2,
  MEMPROBE_ERR_NUMERICAL = 3,
  MEMPROBE_ERR_PARSE = 4,
  MEMPROBE_ERR_IO = 5,
  MEMPROBE_ERR_INTERNAL = 6
} memprobe_status;

typedef struct memprobe_config memprobe_config;
typedef struct memprobe_model memprobe_model;

/* Message for the most recent failing call on this thread ("" if none). */
MEMPROBE_API const char* memprobe_last_error(void);
MEMPROBE_API const char* memprobe_version(void);

/* Experiment configuration: flat key=value pairs with section prefixes
 * (train.lr, degrade.pattern, ...). Every set is validated immediately. */
MEMPROBE_API memprobe_status memprobe_config_create(memprobe_config** out);
MEMPROBE_API void memprobe_config_destroy(memprobe_config* config);
MEMPROBE_API memprobe_status memprobe_config_load(memprobe_config* config, const char* path);
MEMPROBE_API memprobe_status memprobe_config_set(memprobe_config* config, const char* key, const char* value);

/* Runs "train", "degrade", "recover", "evaluate", "proxcheck" or "e2e".
 * Progress lines go to stderr when verbose is nonzero. */
MEMPROBE_API memprobe_status memprobe_run_stage(const memprobe_config* config, const char* stage, int verbose);

MEMPROBE_API memprobe_status memprobe_model_load(const char* path, memprobe_model** out);
MEMPROBE_API void memprobe_model_destroy(memprobe_model* model);
MEMPROBE_API memprobe_status memprobe_model_input_dim(const memprobe_model* model, size_t* out);
/* out must hold input_dim values. */
MEMPROBE_API memprobe_status memprobe_model_forward(const memprobe_model* model, const double* x, size_t len,
                                                    double* out);

/* Blind inpainting of one observation. estimate needs len values;
 * mask_out (optional) receives the estimated 0/1 mask. */
MEMPROBE_API memprobe_status memprobe_recover_unknown_h(const memprobe_model* model, const double* y, size_t len,
                                                        double gamma, uint64_t seed, double* estimate,
                                                        uint8_t* mask_out, size_t* outer_iters);

MEMPROBE_API memprobe_status memprobe_mse(const double* a, const double* b, size_t len, double* out);
/* +infinity for an MSE of zero. */
MEMPROBE_API memprobe_status memprobe_psnr(double mse, double* out);

#ifdef __cplusplus
}
#endif

#endif

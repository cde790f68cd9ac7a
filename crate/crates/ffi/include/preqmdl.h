#ifndef PREQMDL_H
#define PREQMDL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum PqStatus {
  PQ_STATUS_OK = 0,
  PQ_STATUS_NULL_POINTER = 1,
  PQ_STATUS_INVALID_ARGUMENT = 2,
  PQ_STATUS_CONFIG = 3,
  PQ_STATUS_FORMAT = 4,
  PQ_STATUS_IO = 5,
  PQ_STATUS_INVARIANT = 6,
  PQ_STATUS_EXHAUSTED = 7,
  PQ_STATUS_UTF8 = 8,
  PQ_STATUS_BUFFER_TOO_SMALL = 9,
  PQ_STATUS_PANIC = 10,
} PqStatus;

typedef enum PqReplayKind {
  PQ_REPLAY_KIND_UNIFORM = 0,
  // `param_a` is the rate.
  PQ_REPLAY_KIND_EXPONENTIAL = 1,
  // `param_a` is the scale, `param_b` the shape.
  PQ_REPLAY_KIND_PARETO = 2,
} PqReplayKind;

// Parsed experiment configuration.
typedef struct PqConfig PqConfig;

// In-memory example sequence.
typedef struct PqDataset PqDataset;

// Outcome of one prequential run.
typedef struct PqResult PqResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread; empty if none.
const char *pq_last_error(void);

// Library version as a static string.
const char *pq_version(void);

// Parses configuration text (`key = value` lines).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum PqStatus pq_config_parse(const char *text, struct PqConfig **out);

// Reads a configuration file; relative data paths resolve against its directory.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PqStatus pq_config_load(const char *path, struct PqConfig **out);

// Overrides the run seed.
//
// # Safety
// `config` must be a live handle.
enum PqStatus pq_config_set_seed(struct PqConfig *config, uint64_t seed);

// # Safety
// `config` must be null or a handle from this library, not yet freed.
void pq_config_free(struct PqConfig *config);

// Reads a whole PQDS file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PqStatus pq_dataset_open(const char *path, struct PqDataset **out);

// Loads the data source named by a configuration (shuffled if configured).
//
// # Safety
// `config` must be a live handle; `out` must be writable.
enum PqStatus pq_config_load_dataset(const struct PqConfig *config, struct PqDataset **out);

// Generates the synthetic channel task. `condition_on` lists the channels
// whose features are kept.
//
// # Safety
// `condition_on` must point to `condition_len` values; `out` must be writable.
enum PqStatus pq_dataset_generate_channel(size_t n,
                                          size_t channels,
                                          size_t classes,
                                          size_t dim_per_channel,
                                          double noise_std,
                                          uint64_t seed,
                                          const size_t *condition_on,
                                          size_t condition_len,
                                          struct PqDataset **out);

// # Safety
// `dataset` must be a live handle; the out-pointers must be writable.
enum PqStatus pq_dataset_shape(const struct PqDataset *dataset,
                               size_t *len,
                               size_t *dim,
                               size_t *num_classes);

// # Safety
// `dataset` must be null or a handle from this library, not yet freed.
void pq_dataset_free(struct PqDataset *dataset);

// Runs the configured protocol on `dataset`, or on the configuration's own
// data source when `dataset` is null.
//
// # Safety
// `config` must be a live handle, `dataset` null or a live handle, `out` writable.
enum PqStatus pq_run(const struct PqConfig *config,
                     const struct PqDataset *dataset,
                     struct PqResult **out);

// Runs a configuration and writes `steps.csv`, `summary.csv` and
// `config.txt` into `out_dir`, exactly as the command-line `run` does.
//
// # Safety
// `config` must be a live handle; `out_dir` a NUL-terminated string.
enum PqStatus pq_run_to_dir(const struct PqConfig *config, const char *out_dir);

// # Safety
// `result` must be a live handle.
size_t pq_result_len(const struct PqResult *result);

// Total code length in nats.
//
// # Safety
// `result` must be a live handle; `out` writable.
enum PqStatus pq_result_description_length(const struct PqResult *result, double *out);

// # Safety
// `result` must be a live handle; the out-pointers must be writable.
enum PqStatus pq_result_totals(const struct PqResult *result,
                               uint64_t *errors,
                               uint64_t *eval_flops,
                               uint64_t *train_flops);

// Copies the per-step losses into `buf`. Returns `BufferTooSmall` (and
// writes the required length to `written`) when `cap` is insufficient.
//
// # Safety
// `result` must be a live handle; `buf` must hold `cap` doubles; `written` writable.
enum PqStatus pq_result_step_losses(const struct PqResult *result,
                                    double *buf,
                                    size_t cap,
                                    size_t *written);

// # Safety
// `result` must be null or a handle from this library, not yet freed.
void pq_result_free(struct PqResult *result);

// Probability that a replay stream restarts when the learner moves from
// `t_prev` to `t_new`.
//
// # Safety
// `out` must be writable.
enum PqStatus pq_reset_probability(enum PqReplayKind kind,
                                   double param_a,
                                   double param_b,
                                   uint64_t t_prev,
                                   uint64_t t_new,
                                   double *out);

// NML parametric complexity of Bernoulli sequences of length `t`, in nats.
//
// # Safety
// `out` must be writable.
enum PqStatus pq_nml_complexity(size_t t, double *out);

// KT code length in nats of a bit sequence (nonzero bytes are ones).
//
// # Safety
// `bits` must point to `len` bytes; `out` writable.
enum PqStatus pq_kt_code_length(const uint8_t *bits, size_t len, double *out);

// Log posterior probabilities of models under a uniform prior, from their
// description lengths in nats. `log_probs` receives `len` values.
//
// # Safety
// `lengths` and `log_probs` must each hold `len` doubles.
enum PqStatus pq_model_posterior(const double *lengths, size_t len, double *log_probs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREQMDL_H */

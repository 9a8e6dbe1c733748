#ifndef SMCR_H
#define SMCR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum SmcrStatus {
  /**
   * Success.
   */
  Ok = 0,
  /**
   * A required pointer argument was null.
   */
  NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  InvalidUtf8 = 2,
  /**
   * Configuration rejected (unknown key, bad value, bad combination).
   */
  Config = 3,
  /**
   * Pipeline failure (I/O, numerics, degenerate data, ...).
   */
  Runtime = 4,
} SmcrStatus;

/**
 * Opaque training-configuration handle.
 */
typedef struct SmcrConfig SmcrConfig;

/**
 * Opaque dataset handle (one generated or loaded domain).
 */
typedef struct SmcrDataset SmcrDataset;

/**
 * Opaque encoder handle.
 */
typedef struct SmcrEncoder SmcrEncoder;

/**
 * Retrieval quality of one adaptation run: per-branch and fused mAP plus
 * fused CMC at ranks 1/5/10.
 */
typedef struct SmcrMetrics {
  double map_branch1;
  double map_branch2;
  double map_fused;
  double cmc1_fused;
  double cmc5_fused;
  double cmc10_fused;
} SmcrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the most recent error on this thread into `buf`
 * (NUL-terminated, truncated to `len` bytes). Returns the full message
 * length in bytes, excluding the NUL. `buf` may be null to query the length.
 */
uintptr_t smcr_last_error_message(char *buf, uintptr_t len);

/**
 * Loads a dataset directory written by the `smcr gen-data` stage.
 */
enum SmcrStatus smcr_dataset_load(const char *dir, struct SmcrDataset **out);

/**
 * Number of samples in the dataset; 0 for a null handle.
 */
uintptr_t smcr_dataset_len(const struct SmcrDataset *ds);

/**
 * Feature dimensionality of the dataset; 0 for a null handle.
 */
uintptr_t smcr_dataset_dim(const struct SmcrDataset *ds);

void smcr_dataset_free(struct SmcrDataset *ds);

/**
 * Creates a configuration with library defaults.
 */
enum SmcrStatus smcr_config_new(struct SmcrConfig **out);

/**
 * Sets one configuration entry using the config-file key names
 * (e.g. "epochs", "alpha", "cluster_eps", "hidden_dims"). Values use the
 * same textual syntax as the config file; unknown keys are rejected.
 */
enum SmcrStatus smcr_config_set(struct SmcrConfig *cfg, const char *key, const char *value);

void smcr_config_free(struct SmcrConfig *cfg);

/**
 * Pretrains an encoder on the synthetic + source pool.
 */
enum SmcrStatus smcr_pretrain(const struct SmcrConfig *cfg,
                              const struct SmcrDataset *synthetic,
                              const struct SmcrDataset *source,
                              struct SmcrEncoder **out);

/**
 * Creates a freshly initialized (untrained) encoder for `input_dim`.
 */
enum SmcrStatus smcr_encoder_init(const struct SmcrConfig *cfg,
                                  uintptr_t input_dim,
                                  struct SmcrEncoder **out);

/**
 * Runs the full two-branch adaptation. The target dataset must carry
 * ground-truth identities (they are withheld from training and used only
 * for the reported metrics). On success `out_b1`/`out_b2` receive the two
 * branch encoders and `metrics` the final-epoch retrieval quality.
 */
enum SmcrStatus smcr_adapt(const struct SmcrConfig *cfg,
                           const struct SmcrEncoder *pretrained,
                           const struct SmcrDataset *source,
                           const struct SmcrDataset *target,
                           struct SmcrEncoder **out_b1,
                           struct SmcrEncoder **out_b2,
                           struct SmcrMetrics *metrics);

/**
 * Evaluates a pair of branch encoders on a labeled target dataset with the
 * score-fusion weight `alpha`.
 */
enum SmcrStatus smcr_evaluate(const struct SmcrEncoder *b1,
                              const struct SmcrEncoder *b2,
                              const struct SmcrDataset *target,
                              double alpha,
                              struct SmcrMetrics *metrics);

/**
 * Writes an encoder to the text format used by the CLI stages.
 */
enum SmcrStatus smcr_encoder_save(const struct SmcrEncoder *enc, const char *path);

/**
 * Loads an encoder written by `smcr_encoder_save` or the CLI.
 */
enum SmcrStatus smcr_encoder_load(const char *path, struct SmcrEncoder **out);

void smcr_encoder_free(struct SmcrEncoder *enc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMCR_H */

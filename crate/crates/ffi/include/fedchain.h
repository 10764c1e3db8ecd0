#ifndef FEDCHAIN_H
#define FEDCHAIN_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes shared by every fallible call. The run/verify codes
 * mirror the CLI exit codes.
 */
typedef enum FcStatus {
  FcOk = 0,
  /**
   * Runtime failure: I/O, replay mismatch, unknown token.
   */
  FcErrRuntime = 1,
  /**
   * Invalid or unreadable task configuration.
   */
  FcErrConfig = 2,
  /**
   * The ownership claim did not match the on-chain commitment.
   */
  FcErrNotOwned = 3,
  /**
   * A required pointer argument was null.
   */
  FcErrNullArgument = 4,
  /**
   * A string argument was not valid UTF-8.
   */
  FcErrInvalidUtf8 = 5,
} FcStatus;

/**
 * Opaque replayed ledger. Created by `fc_ledger_open`, freed by
 * `fc_ledger_close`.
 */
typedef struct FcLedger FcLedger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Run a full experiment from a TOML config, writing report.json,
 * manifest.json, blocks.log and model.bin into `out_dir`.
 */
enum FcStatus fc_run(const char *config_path, const char *out_dir);

/**
 * Replay a block log into a new ledger handle. On success writes the
 * handle to `out` and returns `FC_OK`.
 */
enum FcStatus fc_ledger_open(const char *log_path, struct FcLedger **out);

/**
 * Release a ledger handle. Passing null is a no-op.
 */
void fc_ledger_close(struct FcLedger *ledger);

/**
 * Chain height (block count including genesis); 0 for a null handle.
 */
uint64_t fc_ledger_height(const struct FcLedger *ledger);

/**
 * Copy the 32-byte state root of the last block into `out_root`.
 */
enum FcStatus fc_ledger_state_root(const struct FcLedger *ledger, uint8_t *out_root);

/**
 * Total incentive tokens minted so far; 0 for a null handle.
 */
uint64_t fc_ledger_total_minted(const struct FcLedger *ledger);

/**
 * Number of model-ownership tokens minted; 0 for a null handle.
 */
uint64_t fc_ledger_token_count(const struct FcLedger *ledger);

/**
 * Check an ownership claim against a token on an open ledger.
 * `claimed_bits` holds `k` values in {+1, -1}.
 */
enum FcStatus fc_ledger_verify_ownership(const struct FcLedger *ledger,
                                         uint64_t token_id,
                                         const int8_t *claimed_bits,
                                         uintptr_t k,
                                         uint64_t claimed_seed);

/**
 * Offline ownership check over run artifacts, equivalent to the CLI
 * `verify` command: OK means OWNED.
 */
enum FcStatus fc_verify(const char *model_path,
                        const char *log_path,
                        uint64_t token_id,
                        uint64_t seed);

/**
 * Compute the commitment digest binding `k` watermark bits (+1/-1) to a
 * key seed; writes 32 bytes to `out_digest`.
 */
enum FcStatus fc_commitment(const int8_t *bits,
                            uintptr_t k,
                            uint64_t key_seed,
                            uint8_t *out_digest);

/**
 * Extract `k` watermark bits from a weight slice of length `d` using the
 * key derived from `key_seed`. Writes +1/-1 values into `out_bits`.
 */
enum FcStatus fc_extract_bits(const double *weights,
                              uintptr_t d,
                              uintptr_t k,
                              uint64_t key_seed,
                              int8_t *out_bits);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDCHAIN_H */

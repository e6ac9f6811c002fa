#ifndef QNET_H
#define QNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define QNET_GATE_H 0

#define QNET_GATE_X 1

#define QNET_GATE_Y 2

#define QNET_GATE_Z 3

#define QNET_GATE_RX 4

#define QNET_GATE_RY 5

#define QNET_GATE_RZ 6

#define QNET_GATE_PHASE 7

#define QNET_GATE_CNOT 8

#define QNET_GATE_CPHASE 9

/**
 * Controlled 2x2 unitary; params are the 8 reals `re00, im00, re01, im01,
 * re10, im10, re11, im11`.
 */
#define QNET_GATE_CU 10

#define QNET_GATE_SWAP 11

#define QNET_GATE_TOFFOLI 12

/**
 * Result of every fallible call.
 */
typedef enum {
  QNET_STATUS_OK = 0,
  QNET_STATUS_NULL_POINTER = 1,
  QNET_STATUS_INVALID_ARGUMENT = 2,
  QNET_STATUS_INDEX = 3,
  QNET_STATUS_SIZE = 4,
  QNET_STATUS_NUMERICAL = 5,
  QNET_STATUS_CONFIGURATION = 6,
  QNET_STATUS_RUN_FAILED = 7,
  QNET_STATUS_RESOURCE = 8,
  QNET_STATUS_IO = 9,
  QNET_STATUS_PANIC = 10,
} QnetStatus;

/**
 * Seeded random source for measurements.
 */
typedef struct QnetRng QnetRng;

/**
 * Ensemble of identically shaped density matrices.
 */
typedef struct QnetStream QnetStream;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qnet_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *qnet_last_error_message(void);

/**
 * Allocates `count` systems of `system_size` qubits, each in |0...0>.
 * `single_precision` selects 32-bit components.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
QnetStatus qnet_stream_new(size_t system_size,
                           size_t count,
                           bool single_precision,
                           QnetStream **out);

/**
 * # Safety
 * `stream` must be null or a handle from [`qnet_stream_new`] not yet freed.
 */
void qnet_stream_free(QnetStream *stream);

/**
 * Number of systems; 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or a live handle.
 */
size_t qnet_stream_len(const QnetStream *stream);

/**
 * Qubits per system; 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or a live handle.
 */
size_t qnet_stream_system_size(const QnetStream *stream);

/**
 * Payload bytes of the whole block: systems x 4^N x component size.
 *
 * # Safety
 * `stream` must be null or a live handle.
 */
size_t qnet_stream_block_bytes(const QnetStream *stream);

/**
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
QnetStatus qnet_rng_new(uint64_t seed, QnetRng **out);

/**
 * # Safety
 * `rng` must be null or a handle from [`qnet_rng_new`] not yet freed.
 */
void qnet_rng_free(QnetRng *rng);

/**
 * Applies gate `gate` (a `QNET_GATE_*` code) to qubit positions `targets`
 * of system `system`.
 *
 * # Safety
 * `stream` must be a live handle; `targets` and `params` must point to
 * `n_targets` and `n_params` elements (or be null when the count is 0).
 */
QnetStatus qnet_apply_gate(QnetStream *stream,
                           size_t system,
                           uint32_t gate,
                           const size_t *targets,
                           size_t n_targets,
                           const double *params,
                           size_t n_params);

/**
 * Measures one qubit in the computational basis and collapses its system.
 *
 * # Safety
 * `stream` and `rng` must be live handles; `bit` must be writable.
 */
QnetStatus qnet_measure(QnetStream *stream,
                        size_t system,
                        size_t qubit,
                        QnetRng *rng,
                        uint8_t *bit);

/**
 * Copies the density matrix of `system` into `out` as row-major
 * interleaved (re, im) doubles; `out_len` must be at least `2 * 4^N`.
 *
 * # Safety
 * `stream` must be a live handle; `out` must point to `out_len` doubles.
 */
QnetStatus qnet_read_state(const QnetStream *stream, size_t system, double *out, size_t out_len);

/**
 * Runs a demo described by a TOML run-config and hands back the result
 * table and report as a JSON string, to be released with
 * [`qnet_string_free`].
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out_json` writable.
 */
QnetStatus qnet_run_demo_json(const char *config_toml, char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void qnet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QNET_H */

#ifndef MCPOLY_H
#define MCPOLY_H

/* generated by cbindgen from mcpoly-capi; do not edit */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define MCPOLY_OK 0

#define MCPOLY_ERR_PARSE 2

#define MCPOLY_ERR_VALIDATION 3

#define MCPOLY_ERR_BUDGET 4

#define MCPOLY_ERR_INTERNAL 5

/**
 * Opaque handle to a built code plus its source distribution.
 */
typedef struct McpolyCode McpolyCode;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; do not free it.
 */
const char *mcpoly_last_error_message(void);

/**
 * Frees a string returned through an `out` parameter.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library (or null).
 */
void mcpoly_string_free(char *s);

/**
 * Solves a JSON chain instance with the named method ("brute", "iterate"
 * or "ellipsoid") and writes the report as JSON to `out_report`.
 *
 * # Safety
 * Inputs must be valid NUL-terminated strings; `out_report` must be a
 * valid pointer. The result string is freed with `mcpoly_string_free`.
 */
int mcpoly_solve_json(const char *instance_json, const char *method, char **out_report);

/**
 * Builds a minimum-cost code with `m` trees for a source given either as
 * a JSON object or as "p/q" lines. `height_cap` of 0 picks the default.
 *
 * # Safety
 * `source_text` must be a valid NUL-terminated string and `out_handle`
 * a valid pointer. The handle is freed with `mcpoly_code_free`.
 */
int mcpoly_code_build(const char *source_text,
                      uintptr_t m,
                      uintptr_t height_cap,
                      struct McpolyCode **out_handle);

/**
 * Loads a code file produced by `mcpoly_code_to_json` or the CLI.
 *
 * # Safety
 * `code_json` must be a valid NUL-terminated string and `out_handle` a
 * valid pointer. The handle is freed with `mcpoly_code_free`.
 */
int mcpoly_code_from_json(const char *code_json, struct McpolyCode **out_handle);

/**
 * Serializes the code (trees plus source) to JSON.
 *
 * # Safety
 * `handle` must come from this library and still be live; `out_json`
 * must be a valid pointer.
 */
int mcpoly_code_to_json(const struct McpolyCode *handle, char **out_json);

/**
 * Encodes a message of symbol letters ('a', 'b', ...) to a "0"/"1" string.
 *
 * # Safety
 * `handle` must be live, `message` a valid NUL-terminated string and
 * `out_bits` a valid pointer.
 */
int mcpoly_code_encode(const struct McpolyCode *handle, const char *message, char **out_bits);

/**
 * Decodes a "0"/"1" string back to symbol letters. A negative `count`
 * decodes until the bits run out; otherwise exactly `count` symbols are
 * produced (trailing empty codewords included).
 *
 * # Safety
 * `handle` must be live, `bits` a valid NUL-terminated string and
 * `out_message` a valid pointer.
 */
int mcpoly_code_decode(const struct McpolyCode *handle,
                       const char *bits,
                       intptr_t count,
                       char **out_message);

/**
 * Frees a code handle.
 *
 * # Safety
 * `handle` must come from this library and not be freed twice.
 */
void mcpoly_code_free(struct McpolyCode *handle);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MCPOLY_H */

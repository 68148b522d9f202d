#ifndef TIMELINE_EVAL_H
#define TIMELINE_EVAL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum TeStatus {
  TE_STATUS_OK = 0,
  TE_STATUS_NULL_POINTER = 1,
  TE_STATUS_INVALID_UTF8 = 2,
  TE_STATUS_UNKNOWN_EVENT = 3,
  TE_STATUS_DUPLICATE_EVENT = 4,
  TE_STATUS_SELF_RELATION = 5,
  TE_STATUS_CYCLIC_GRAPH = 6,
  TE_STATUS_PARSE_ERROR = 7,
  TE_STATUS_PANIC = 8,
} TeStatus;

/**
 * Opaque timeline graph.
 */
typedef struct TeGraph TeGraph;

/**
 * Precision, recall and F1.
 */
typedef struct TeScore {
  double precision;
  double recall;
  double f1;
} TeScore;

/**
 * Library version as a static NUL-terminated string.
 */
const char *te_version(void);

/**
 * Message for the last failed call on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *te_last_error_message(void);

/**
 * New empty graph; release with `te_graph_free`.
 */
struct TeGraph *te_graph_new(void);

/**
 * # Safety
 * `graph` must be null or a handle from this library not yet freed.
 */
void te_graph_free(struct TeGraph *graph);

/**
 * Adds an event with a 1-based textual index.
 *
 * # Safety
 * `graph` must be a live handle and `id` a NUL-terminated string.
 */
enum TeStatus te_graph_add_event(struct TeGraph *graph, const char *id, size_t index);

/**
 * Adds a precedence edge: `before` starts before `after`.
 *
 * # Safety
 * `graph` must be a live handle; the ids NUL-terminated strings.
 */
enum TeStatus te_graph_add_edge(struct TeGraph *graph, const char *before, const char *after);

/**
 * Adds a COEX link.
 *
 * # Safety
 * `graph` must be a live handle; the ids NUL-terminated strings.
 */
enum TeStatus te_graph_add_coex(struct TeGraph *graph, const char *a, const char *b);

/**
 * Number of events, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t te_graph_event_count(const struct TeGraph *graph);

/**
 * Sizes of the COEX-expanded transitive closure.
 *
 * # Safety
 * `graph` must be a live handle; the outputs writable.
 */
enum TeStatus te_graph_closure_sizes(const struct TeGraph *graph,
                                     size_t *before_pairs,
                                     size_t *coex_pairs);

/**
 * Longest-path layers as a JSON array of id arrays. The string is
 * released with `te_string_free`.
 *
 * # Safety
 * `graph` must be a live handle; `out` writable.
 */
enum TeStatus te_graph_layering_json(const struct TeGraph *graph, char **out);

/**
 * Parses standoff annotations over `text` into a new graph.
 *
 * # Safety
 * `annotation` and `text` must be NUL-terminated; `out` writable.
 */
enum TeStatus te_graph_from_standoff(const char *annotation,
                                     const char *text_,
                                     struct TeGraph **out);

/**
 * Temporal awareness of `pred` against `gold`; COEX pairs count when
 * `include_coex` is true.
 *
 * # Safety
 * Both handles must be live; `out` writable.
 */
enum TeStatus te_temporal_awareness(const struct TeGraph *gold,
                                    const struct TeGraph *pred,
                                    bool include_coex,
                                    struct TeScore *out);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void te_string_free(char *s);

#endif  /* TIMELINE_EVAL_H */

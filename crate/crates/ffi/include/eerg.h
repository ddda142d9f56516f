#ifndef EERG_H
#define EERG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EergStatus {
  EERG_STATUS_OK = 0,
  EERG_STATUS_NULL_POINTER = 1,
  EERG_STATUS_INVALID_UTF8 = 2,
  EERG_STATUS_IO = 3,
  EERG_STATUS_PARSE = 4,
  EERG_STATUS_VALIDATION = 5,
  EERG_STATUS_CLASSIFICATION = 6,
  EERG_STATUS_INVALID_ARGUMENT = 7,
  EERG_STATUS_INTERNAL = 8,
} EergStatus;

/**
 * A loaded, validated campaign.
 */
typedef struct EergCampaign EergCampaign;

/**
 * A relation graph built from one campaign.
 */
typedef struct EergGraph EergGraph;

typedef struct EergStats {
  uint64_t runs;
  uint64_t frames;
  uint64_t ground_truth;
  uint64_t predictions;
} EergStats;

typedef struct EergCounts {
  uint64_t r0;
  uint64_t r1;
  uint64_t r2;
  uint64_t r3;
} EergCounts;

typedef struct EergBox {
  double x_min;
  double y_min;
  double x_max;
  double y_max;
} EergBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads and validates a campaign file. `permissive` registers unknown
 * entities instead of rejecting them.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EergStatus eerg_campaign_load(const char *path, bool permissive, struct EergCampaign **out);

/**
 * The built-in two-identification fixture.
 *
 * # Safety
 * `out` must be writable.
 */
enum EergStatus eerg_campaign_example_fixture(struct EergCampaign **out);

/**
 * # Safety
 * `campaign` must come from an `eerg_campaign_*` constructor and not have
 * been freed. Null is ignored.
 */
void eerg_campaign_free(struct EergCampaign *campaign);

/**
 * # Safety
 * `campaign` must be a live handle; `out` must be writable.
 */
enum EergStatus eerg_campaign_stats(const struct EergCampaign *campaign, struct EergStats *out);

/**
 * Total R0-R3 counts over the campaign.
 *
 * # Safety
 * `campaign` must be a live handle; `out` must be writable.
 */
enum EergStatus eerg_evaluate(const struct EergCampaign *campaign,
                              double iou_threshold,
                              double min_confidence,
                              struct EergCounts *out);

/**
 * Classifies the campaign and aggregates the relation graph.
 *
 * # Safety
 * `campaign` must be a live handle; `out` must be writable.
 */
enum EergStatus eerg_graph_build(const struct EergCampaign *campaign,
                                 double iou_threshold,
                                 double min_confidence,
                                 struct EergGraph **out);

/**
 * # Safety
 * `graph` must come from [`eerg_graph_build`] and not have been freed.
 * Null is ignored.
 */
void eerg_graph_free(struct EergGraph *graph);

/**
 * Number of distinct relation chains in the graph.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum EergStatus eerg_graph_relation_count(const struct EergGraph *graph, size_t *out);

/**
 * DOT rendering of the graph.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum EergStatus eerg_graph_to_dot(const struct EergGraph *graph, char **out);

/**
 * Line-oriented text dump of the graph.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum EergStatus eerg_graph_to_text(const struct EergGraph *graph, char **out);

/**
 * Findings report as JSON.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum EergStatus eerg_findings_json(const struct EergGraph *graph, uint64_t min_support, char **out);

/**
 * Number of findings and of grouped hypotheses.
 *
 * # Safety
 * `graph` must be a live handle; both outputs must be writable.
 */
enum EergStatus eerg_findings_count(const struct EergGraph *graph,
                                    uint64_t min_support,
                                    size_t *findings,
                                    size_t *hypotheses);

/**
 * Intersection over union of two boxes.
 *
 * # Safety
 * `a` and `b` must be readable; `out` must be writable.
 */
enum EergStatus eerg_iou(const struct EergBox *a, const struct EergBox *b, double *out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void eerg_string_free(char *s);

/**
 * Message of the most recent failed call on this thread, or an empty
 * string. Valid until the next failing call on the same thread.
 */
const char *eerg_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *eerg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EERG_H */

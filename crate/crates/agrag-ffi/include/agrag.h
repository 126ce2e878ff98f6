#ifndef AGRAG_H
#define AGRAG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum AgragStatus {
  AgragStatusOk = 0,
  AgragStatusConfig = 1,
  AgragStatusCorpus = 2,
  AgragStatusProvider = 3,
  AgragStatusIndex = 4,
  AgragStatusGraph = 5,
  AgragStatusIo = 6,
  AgragStatusInvalidArgument = 7,
  AgragStatusPanic = 8,
} AgragStatus;

/**
 * Opaque pipeline configuration handle.
 */
typedef struct AgragConfig AgragConfig;

/**
 * Opaque loaded-index handle.
 */
typedef struct AgragIndex AgragIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the last error message recorded on this thread, or null. The
 * pointer is owned by the library and valid until the next failing call
 * on the same thread.
 */
const char *agrag_last_error(void);

/**
 * Frees a string returned by this library. Null is a no-op.
 */
void agrag_string_free(char *ptr);

/**
 * Creates a configuration with built-in defaults (mock provider).
 */
enum AgragStatus agrag_config_default(struct AgragConfig **out);

/**
 * Loads a TOML configuration file.
 */
enum AgragStatus agrag_config_load(const char *path, struct AgragConfig **out);

/**
 * Releases a configuration handle. Null is a no-op.
 */
void agrag_config_free(struct AgragConfig *config);

/**
 * Builds an index per the configuration (corpus_path and index_path must
 * be set) and writes the build report as JSON into `out_report_json`.
 */
enum AgragStatus agrag_index_build(const struct AgragConfig *config, char **out_report_json);

/**
 * Opens a saved index file.
 */
enum AgragStatus agrag_index_open(const char *path, struct AgragIndex **out);

/**
 * Releases an index handle. Null is a no-op.
 */
void agrag_index_free(struct AgragIndex *index);

/**
 * Answers a query. The full result (answer, reasoning graph, retrieved
 * chunks, trace) is written as a JSON document; `explain` attaches
 * per-stage timings. `out_degraded` (optional) receives 1 when graph
 * retrieval degraded to hybrid-only.
 */
enum AgragStatus agrag_query(const struct AgragIndex *index,
                             const struct AgragConfig *config,
                             const char *query,
                             int32_t explain,
                             int32_t *out_degraded,
                             char **out_json);

/**
 * Dumps index contents as JSON, narrowed by `selectors` (an array of
 * `selector_count` key=value strings; pass null/0 for a full dump).
 */
enum AgragStatus agrag_inspect(const struct AgragIndex *index,
                               const char *const *selectors,
                               uintptr_t selector_count,
                               char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGRAG_H */

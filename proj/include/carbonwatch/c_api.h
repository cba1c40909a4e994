#ifndef CARBONWATCH_C_API_H
#define CARBONWATCH_C_API_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Stable C interface for language bindings. Strings returned by the library
 * are heap-allocated and must be released with cw_free_string. No function
 * lets a C++ exception escape. */

typedef struct cw_tracker cw_tracker;

/* Creates a tracker from a JSON object using the config-file keys. NULL or ""
 * means defaults. On failure returns NULL and, when err is non-NULL, writes a
 * NUL-terminated message of at most errlen bytes. */
cw_tracker* cw_tracker_create(const char* config_json, char* err, size_t errlen);

void cw_tracker_epoch_start(cw_tracker* tracker);
void cw_tracker_epoch_end(cw_tracker* tracker);
void cw_tracker_stop(cw_tracker* tracker);
/* Stops (if still running) and frees the tracker. NULL is ignored. */
void cw_tracker_destroy(cw_tracker* tracker);

/* One of "created", "in_epoch", "between_epochs", "stopped". Static storage. */
const char* cw_tracker_phase(const cw_tracker* tracker);
int cw_tracker_epochs_completed(const cw_tracker* tracker);

/* Prediction as JSON, or NULL when none has been made yet. */
char* cw_tracker_prediction_json(const cw_tracker* tracker);
/* Summary as JSON, or NULL before stop. */
char* cw_tracker_summary_json(const cw_tracker* tracker);
/* Path of the machine log, or NULL when logging is off. */
char* cw_tracker_log_path(const cw_tracker* tracker);

/* Parses a machine log and returns it as one JSON object, or NULL with an
 * error message. */
char* cw_parse_log_json(const char* path, char* err, size_t errlen);

void cw_free_string(char* s);

const char* cw_version(void);

#ifdef __cplusplus
}
#endif

#endif

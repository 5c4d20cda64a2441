/* dpt — dual pseudo training at desk scale.
 *
 * C API over the C++ core. All functionality is exposed through an opaque
 * session handle and one JSON-in / JSON-out dispatch call; the CLI is a thin
 * wrapper over this surface.
 *
 * Thread model: a session may only be used from one thread at a time.
 * Strings returned through out-parameters are owned by the caller and must
 * be released with dpt_free().
 */
#ifndef DPT_DPT_H
#define DPT_DPT_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct dpt_session dpt_session;

/* Status codes double as CLI exit codes. */
typedef enum dpt_status {
  DPT_OK = 0,
  DPT_ERR_INTERNAL = 1,         /* unexpected failure */
  DPT_ERR_MISSING_ARTIFACT = 2, /* referenced file or checkpoint not found */
  DPT_ERR_CONFIG = 3,           /* config validation, bad arguments, parse errors */
  DPT_ERR_NUMERIC = 4           /* non-finite values, training or sampling blow-up */
} dpt_status;

/* Create / destroy a session. Returns NULL on allocation failure. */
dpt_session* dpt_session_new(void);
void dpt_session_free(dpt_session* session);

/* Run one command. `command` is one of: gen-data, train-classifier,
 * pseudo-label, train-diffusion, sample, retrain-probe, refine, evaluate,
 * run-pipeline. `args_json` is a JSON object ("{}" for all defaults is not
 * valid — a "config" path is required; see the header comment in the status
 * block of any command for the accepted keys). On success *status_json_out
 * (if non-NULL) receives a malloc'd JSON status block. On failure the
 * return code categorizes the error and dpt_last_error() has the message.
 */
dpt_status dpt_run(dpt_session* session, const char* command, const char* args_json,
                   char** status_json_out);

/* Message for the most recent failing dpt_run on this session, or "" */
const char* dpt_last_error(const dpt_session* session);

/* Release a string returned by this library. */
void dpt_free(char* ptr);

const char* dpt_version(void);

#ifdef __cplusplus
}
#endif

#endif /* DPT_DPT_H */

/* C interface of the mazeslam library.
 *
 * Every call returns an ms_status. On failure ms_last_error() describes the
 * problem for the calling thread until its next call. Strings handed out by
 * the library are released with ms_string_free. Paths are UTF-8; NULL means
 * "not given" where a parameter is documented as optional.
 */
#ifndef MAZESLAM_H
#define MAZESLAM_H

#include <stdint.h>

#if defined(_WIN32)
#define MS_API __declspec(dllexport)
#else
#define MS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ms_status {
    MS_OK = 0,
    MS_ERR_USAGE = 1,   /* bad arguments or config values */
    MS_ERR_INPUT = 2,   /* unreadable or malformed input file */
    MS_ERR_RUNTIME = 3  /* failure while running */
} ms_status;

typedef struct ms_config ms_config;
typedef struct ms_server ms_server;

MS_API const char* ms_version(void);
MS_API const char* ms_last_error(void);
MS_API void ms_string_free(char* s);

/* Run configuration. Unknown keys are rejected when parsing. */
MS_API ms_status ms_config_new(ms_config** out);
MS_API ms_status ms_config_load(const char* path, ms_config** out);
MS_API ms_status ms_config_parse(const char* json, ms_config** out);
MS_API void ms_config_free(ms_config* cfg);
MS_API ms_status ms_config_set_seed(ms_config* cfg, uint64_t seed);
MS_API ms_status ms_config_set_mode(ms_config* cfg, const char* mode);
MS_API ms_status ms_config_set_world(ms_config* cfg, const char* world_path);
MS_API ms_status ms_config_set_port(ms_config* cfg, int port);
MS_API ms_status ms_config_to_json(const ms_config* cfg, char** out);

/* Pipelines. Each writes its artifacts plus config.json and summary.json to
 * out_dir and, when summary is non-NULL, returns the summary JSON. */

/* Exactly one of script_path and teleop_log_path. world_path overrides the
 * configured world. Writes log.jsonl. */
MS_API ms_status ms_simulate(const ms_config* cfg, const char* world_path, const char* script_path,
                             const char* teleop_log_path, const char* out_dir, char** summary);

/* mode (optional) overrides the configured mode. Writes map.pgm, map.yaml,
 * trajectory.csv, odometry.csv. */
MS_API ms_status ms_slam(const ms_config* cfg, const char* log_path, const char* mode, const char* out_dir,
                         char** summary);

/* Writes estimates.csv and errors.csv (t,pos_err_m,heading_err_rad). */
MS_API ms_status ms_localize(const ms_config* cfg, const char* map_path, const char* log_path, const char* out_dir,
                             char** summary);

/* goal_heading is used when has_heading is non-zero. Writes trajectory.csv
 * and path.csv. */
MS_API ms_status ms_navigate(const ms_config* cfg, const char* world_path, double goal_x, double goal_y,
                             int has_heading, double goal_heading, const char* out_dir, char** summary);

/* All fields optional; at least one comparison must be possible. The truth
 * map comes from truth_map_path or else from rasterizing world_path. The
 * truth trajectory comes from truth_path or else from the gt records of
 * log_path. Writes report.txt, errors.csv for trajectories, and truth_map.pgm/
 * .yaml when the reference map is rasterized from a world. */
typedef struct ms_eval_inputs {
    const char* map_path;
    const char* truth_map_path;
    const char* world_path;
    const char* trajectory_path;
    const char* truth_path;
    const char* log_path;
} ms_eval_inputs;

MS_API ms_status ms_eval(const ms_config* cfg, const ms_eval_inputs* in, const char* out_dir, char** summary);

/* Live WebSocket session. Port 0 in the config picks a free port. A positive
 * duration stops the session after that much sim time. Shutdown writes
 * map.pgm, map.yaml, log.jsonl, config.json, trajectory.csv. */
MS_API ms_status ms_server_new(const ms_config* cfg, const char* world_path, const char* out_dir, double duration_s,
                               ms_server** out);
MS_API int ms_server_port(const ms_server* srv);
/* Serves on a background thread. */
MS_API ms_status ms_server_start(ms_server* srv);
/* Serves on the calling thread until stopped, SIGINT/SIGTERM, or duration. */
MS_API ms_status ms_server_run(ms_server* srv);
MS_API ms_status ms_server_stop(ms_server* srv);
MS_API ms_status ms_server_wait(ms_server* srv);
MS_API void ms_server_free(ms_server* srv);

#ifdef __cplusplus
}
#endif

#endif /* MAZESLAM_H */

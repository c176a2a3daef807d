#ifndef AGV_SIDELINK_H
#define AGV_SIDELINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum AgvStatus {
  AGV_STATUS_OK = 0,
  AGV_STATUS_NULL_POINTER = 1,
  AGV_STATUS_INVALID_UTF8 = 2,
  AGV_STATUS_INVALID_ARGUMENT = 3,
  AGV_STATUS_INVALID_CONFIG = 4,
  AGV_STATUS_PARSE_ERROR = 5,
  AGV_STATUS_IO = 6,
  AGV_STATUS_CSV = 7,
  /**
   * The requested value is undefined for this report (no PRR samples).
   */
  AGV_STATUS_NO_DATA = 8,
  AGV_STATUS_INTERNAL = 9,
} AgvStatus;

/**
 * Traffic class selector for report getters.
 */
typedef enum AgvTraffic {
  AGV_TRAFFIC_A2A = 0,
  AGV_TRAFFIC_A2I = 1,
} AgvTraffic;

/**
 * Opaque scenario configuration.
 */
typedef struct AgvConfig AgvConfig;

/**
 * Opaque result of one run.
 */
typedef struct AgvReport AgvReport;

/**
 * Packet counters of one traffic class.
 */
typedef struct AgvCounts {
  uint64_t generated;
  uint64_t delivered;
  uint64_t partial;
  uint64_t expired;
} AgvCounts;

/**
 * Library version as a static NUL-terminated string.
 */
const char *agv_version(void);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *agv_last_error_message(void);

/**
 * New configuration holding the defaults. Never null.
 */
struct AgvConfig *agv_config_default(void);

/**
 * Parses a TOML scenario; unspecified fields keep their defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AgvStatus agv_config_from_toml(const char *toml, struct AgvConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void agv_config_free(struct AgvConfig *cfg);

/**
 * Checks every configuration invariant.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum AgvStatus agv_config_validate(const struct AgvConfig *cfg);

/**
 * Sets the allocation scheme: `random`, `mode1`, `mode2_noreeval`,
 * `mode2` or `cooperative`.
 *
 * # Safety
 * `cfg` must be a live handle and `mode` a NUL-terminated string.
 */
enum AgvStatus agv_config_set_mode(struct AgvConfig *cfg, const char *mode);

/**
 * Sets the duplex mode: `half` or `full`.
 *
 * # Safety
 * `cfg` must be a live handle and `duplex` a NUL-terminated string.
 */
enum AgvStatus agv_config_set_duplex(struct AgvConfig *cfg, const char *duplex);

/**
 * Group size K. Checked by validation and at run time, not here.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum AgvStatus agv_config_set_agvs(struct AgvConfig *cfg, uint32_t n);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum AgvStatus agv_config_set_period_ms(struct AgvConfig *cfg, uint32_t period_ms);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum AgvStatus agv_config_set_harq(struct AgvConfig *cfg, bool enabled);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum AgvStatus agv_config_set_seed(struct AgvConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum AgvStatus agv_config_set_duration_s(struct AgvConfig *cfg, double seconds);

/**
 * Validates and simulates `cfg`; on success `*out` receives a new report.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum AgvStatus agv_run(const struct AgvConfig *cfg, struct AgvReport **out);

/**
 * # Safety
 * `report` must come from this library and not be used afterwards. Null
 * is ignored.
 */
void agv_report_free(struct AgvReport *report);

/**
 * A2A packet reception ratio. [`AgvStatus::NoData`] when no packet was
 * counted.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum AgvStatus agv_report_prr(const struct AgvReport *report, double *out);

/**
 * Delivered unique-packet throughput of one class in Mbps.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum AgvStatus agv_report_throughput_mbps(const struct AgvReport *report,
                                          enum AgvTraffic traffic,
                                          double *out);

/**
 * Packet counters of one class.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum AgvStatus agv_report_counts(const struct AgvReport *report,
                                 enum AgvTraffic traffic,
                                 struct AgvCounts *out);

/**
 * Writes the report as a one-row KPI CSV file.
 *
 * # Safety
 * `report` must be a live handle and `path` a NUL-terminated string.
 */
enum AgvStatus agv_report_export_csv(const struct AgvReport *report, const char *path);

#endif  /* AGV_SIDELINK_H */

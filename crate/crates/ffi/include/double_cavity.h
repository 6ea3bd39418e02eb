/* C ABI for the double-cavity sweep library.
 *
 * Status codes: 0 success, 2 invalid input, 3 numerical failure.
 * All results come back through out-pointers. Handles are opaque and must
 * be released with the matching *_free function. dc_last_error retrieves
 * the message for the most recent failure on the calling thread.
 */
#ifndef DOUBLE_CAVITY_H
#define DOUBLE_CAVITY_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define DC_OK 0
#define DC_INVALID 2
#define DC_NUMERICAL 3

/* Scheme ids for dc_sweep_run. */
#define DC_SCHEME_ASOE 0
#define DC_SCHEME_DSOE 1
#define DC_SCHEME_DFOE 2

typedef struct DcCrossing DcCrossing;
typedef struct DcScenario DcScenario;
typedef struct DcSweep DcSweep;

/* Copy the last error message into buf (NUL-terminated, truncated to len).
 * Returns the untruncated message length. buf may be NULL to query. */
size_t dc_last_error(char *buf, size_t len);

/* Scalar helpers. */
int dc_reflectivity(double wavenumber, double strength, double *out);
int dc_strength_for_reflectivity(double wavenumber, double reflectivity, double *out);
int dc_lz_probability(double delta, double gamma, double speed, double *out);
int dc_relativistic_correction_ratio(double speed, double refractive_index, double *out);

/* Avoided-crossing fit. */
int dc_crossing_fit(double total_length, double strength, size_t pair,
                    double fit_tolerance, DcCrossing **out);
int dc_crossing_delta(const DcCrossing *h, double *out);
int dc_crossing_gamma(const DcCrossing *h, double *out);
int dc_crossing_omega_av(const DcCrossing *h, double *out);
int dc_crossing_validity_ratio(const DcCrossing *h, double displacement,
                               double speed, double *out);
void dc_crossing_free(DcCrossing *h);

/* Scenario files and sweep runs. */
int dc_scenario_load(const char *path, DcScenario **out);
int dc_scenario_run(const DcScenario *h, const char *out_dir);
void dc_scenario_free(DcScenario *h);

int dc_sweep_run(const DcScenario *h, int scheme, DcSweep **out);
size_t dc_sweep_len(const DcSweep *h);
int dc_sweep_tau(const DcSweep *h, size_t row, double *out);
int dc_sweep_population(const DcSweep *h, size_t row, int mode, double *out);
int dc_sweep_energy_change(const DcSweep *h, size_t row, double *out);
int dc_sweep_pressure(const DcSweep *h, size_t row, double *out);
int dc_sweep_work_energy_residual(const DcSweep *h, double *out);
void dc_sweep_free(DcSweep *h);

#ifdef __cplusplus
}
#endif

#endif /* DOUBLE_CAVITY_H */

/* tmld: transport-map Langevin dynamics sampling library.
 *
 * C interface around the C++ core: opaque handles, status codes, and
 * coarse-grained command entry points used by the CLI. All functions are
 * thread-safe as long as each handle is only mutated (created/freed) from one
 * thread; evaluation calls on a shared handle are safe concurrently.
 */
#ifndef TMLD_H
#define TMLD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tmld_status {
  TMLD_OK = 0,
  TMLD_ERR_RUNTIME = 1, /* unexpected failure */
  TMLD_ERR_INVALID = 2, /* bad parameters, config, schema or io */
  TMLD_ERR_NUMERIC = 3  /* numerics failure (divergence, no convergence) */
} tmld_status;

typedef struct tmld_target tmld_target;
typedef struct tmld_map tmld_map;

/* Message for the most recent error on this thread (empty string if none). */
const char* tmld_last_error(void);

/* ---- targets ------------------------------------------------------------ */

/* cfg is the target JSON, e.g. {"name":"banana","s":4.0,"b":0.01}. */
tmld_status tmld_target_create(const char* json_cfg, tmld_target** out);
void tmld_target_free(tmld_target* t);
int tmld_target_dim(const tmld_target* t);
tmld_status tmld_target_log_density(const tmld_target* t, const double* y, double* out);
tmld_status tmld_target_grad_log_density(const tmld_target* t, const double* y, double* grad);
int tmld_target_has_exact_map(const tmld_target* t);
tmld_status tmld_target_exact_map(const tmld_target* t, tmld_map** out);
/* n rows of d columns written to out */
tmld_status tmld_target_sample_exact(const tmld_target* t, uint64_t seed, size_t n, double* out);

/* ---- transport maps ------------------------------------------------------ */

tmld_status tmld_map_load(const char* path, tmld_map** out);
tmld_status tmld_map_from_json(const char* json_text, tmld_map** out);
tmld_status tmld_map_save(const tmld_map* m, const char* path);
void tmld_map_free(tmld_map* m);
int tmld_map_dim(const tmld_map* m);
tmld_status tmld_map_forward(const tmld_map* m, const double* y, double* x);
tmld_status tmld_map_inverse(const tmld_map* m, const double* x, double* y);
/* row-major d*d */
tmld_status tmld_map_jacobian(const tmld_map* m, const double* y, double* jac);
tmld_status tmld_map_log_det_jacobian(const tmld_map* m, const double* y, double* out);
tmld_status tmld_map_grad_log_det(const tmld_map* m, const double* y, double* out);
tmld_status tmld_pushforward_grad_log_density(const tmld_target* t, const tmld_map* m, const double* x,
                                              double* out);

/* ---- map training --------------------------------------------------------- */

/* samples: row-major n x d. rectifier: "softplus" or "shifted-elu".
 * report_json (optional) receives the per-component training report. */
tmld_status tmld_train_map(const double* samples, size_t n, int d, int total_order, const char* rectifier,
                           int quadrature_points, int standardize, tmld_map** out, char* report_json,
                           size_t report_capacity);

/* ---- sampling -------------------------------------------------------------- */

/* sampler_json: {"scheme":"tmula","h":1e-3,...}; map may be NULL for schemes
 * that do not use one. states must hold (K+1)*d doubles; rows_out receives the
 * number of rows written, diverged_at -1 or the divergence step. */
tmld_status tmld_run_chain(const tmld_target* t, const char* sampler_json, const tmld_map* map,
                           const double* y0, size_t K, uint64_t seed, double* states, size_t* rows_out,
                           long* diverged_at);

/* ---- diagnostics ------------------------------------------------------------ */

tmld_status tmld_ergodic_average(const double* phis, size_t n, double* out);
tmld_status tmld_batch_means_avar(const double* phis, size_t n, double* out);
/* IMQ-kernel kernelized Stein discrepancy of points against the target score */
tmld_status tmld_ksd(const double* points, size_t n, const tmld_target* t, double kernel_c,
                     double kernel_beta, unsigned jobs, double* out);
tmld_status tmld_wasserstein_bound(double m, double L, double h, long k, int d, double dist0_sq, double rho,
                                   double* out);
/* covariances row-major d*d */
tmld_status tmld_gaussian_w2_squared(const double* mean1, const double* cov1, const double* mean2,
                                     const double* cov2, int d, double* out);
tmld_status tmld_optimal_rate(double m, double L, double* r, double* dr_dL);
tmld_status tmld_onestep_discrepancy(const tmld_target* t, const tmld_map* m, const double* y, double h,
                                     size_t n_mc, uint64_t seed, double* mc_estimate, double* closed_form,
                                     double* rel_err);

/* ---- CLI command backends ---------------------------------------------------- */
/* Return process exit codes: 0 ok, 2 config error, 3 numerics error. */

int tmld_cmd_sample(const char* config_path, const char* out_path, unsigned jobs);
int tmld_cmd_train_map(const char* samples_csv, int total_order, const char* out_path,
                       const char* rectifier, int quadrature_points, int standardize,
                       const char* report_path);
int tmld_cmd_diagnose(const char* chains_dir, const char* target_cfg, const char* phi, size_t burn_in,
                      const char* out_path, size_t ksd_points, int svg, unsigned jobs);
/* exit code 1 when a check fails */
int tmld_cmd_verify(const char* suite, const char* out_path, uint64_t seed, unsigned jobs);
int tmld_cmd_run_experiment(const char* name_or_config, const char* out_dir, uint64_t seed, int desk_scale,
                            int svg, unsigned jobs);

#ifdef __cplusplus
}
#endif

#endif /* TMLD_H */

#ifndef MIPH_MIPH_H
#define MIPH_MIPH_H

/* C interface to the mIPH library. Every handle is opaque and owned by the
 * caller, who releases it with the matching *_free function. Functions return
 * a status code; on failure miph_last_error() describes the problem (the
 * message is per thread and stays valid until the next call on that thread).
 *
 * Units: times and ages passed to model functions are in model units
 * (years / 100). CSV files use years. Functions taking ages in years say so.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MIPH_API __declspec(dllexport)
#else
#define MIPH_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum miph_status {
  MIPH_OK = 0,
  MIPH_ERR_INPUT = 2,
  MIPH_ERR_NUMERICAL = 3,
  MIPH_ERR_INTERNAL = 4
} miph_status;

typedef struct miph_model miph_model;
typedef struct miph_data miph_data;
typedef struct miph_fit_report miph_fit_report;

typedef enum miph_design {
  MIPH_DESIGN_INTERCEPT = 0, /* (1) */
  MIPH_DESIGN_AGES = 1,      /* (1, a1, a2) */
  MIPH_DESIGN_COUPLE = 2     /* (1, a1, a2, a1 * a2) */
} miph_design;

MIPH_API const char* miph_last_error(void);

/* Data sets in the couple CSV schema. */
MIPH_API miph_status miph_data_load_csv(const char* path, miph_design design, miph_data** out);
MIPH_API miph_status miph_data_save_csv(const miph_data* data, const char* path);
MIPH_API void miph_data_free(miph_data* data);
MIPH_API size_t miph_data_rows(const miph_data* data);
/* Row m of the data: times (model units), indicators and ages (model units). */
MIPH_API miph_status miph_data_row(const miph_data* data, size_t m, double times[2],
                                   int deltas[2], double ages[2]);

/* Models. T matrices are row-major p x p, one per margin, concatenated.
 * gamma is row-major p x g (g from the design) or NULL together with a
 * fixed initial vector pi of length p. */
MIPH_API miph_status miph_model_create(size_t p, size_t d, const double* t_matrices,
                                       const double* betas, miph_design design,
                                       const double* gamma, const double* pi,
                                       miph_model** out);
MIPH_API miph_status miph_model_load_json(const char* path, miph_model** out);
MIPH_API miph_status miph_model_save_json(const miph_model* model, const char* path);
MIPH_API void miph_model_free(miph_model* model);
MIPH_API size_t miph_model_states(const miph_model* model);
MIPH_API size_t miph_model_margins(const miph_model* model);
MIPH_API double miph_model_beta(const miph_model* model, size_t margin);

/* Start-state distribution for a couple with the given entry ages in years.
 * pi_out has length p. */
MIPH_API miph_status miph_model_initial_vector(const miph_model* model, double age1_years,
                                               double age2_years, double* pi_out);

/* Functionals at a point y (length d) under initial vector pi (length p). */
MIPH_API miph_status miph_joint_density(const miph_model* model, const double* pi,
                                        const double* y, double* out);
MIPH_API miph_status miph_joint_survival(const miph_model* model, const double* pi,
                                         const double* y, double* out);
MIPH_API miph_status miph_joint_cdf(const miph_model* model, const double* pi,
                                    const double* y, double* out);

/* Dependence measures for margins k and l (0-based). */
MIPH_API miph_status miph_kendall_tau(const miph_model* model, const double* pi, size_t k,
                                      size_t l, double* out);
MIPH_API miph_status miph_spearman_rho(const miph_model* model, const double* pi, size_t k,
                                       size_t l, double* out);
/* Bivariate models only. */
MIPH_API miph_status miph_psi1(const miph_model* model, const double* pi, double y1, double y2,
                               double* out);
/* E(Y_target | Y_given >= y) / E(Y_target). */
MIPH_API miph_status miph_psi2(const miph_model* model, const double* pi, size_t target,
                               size_t given, double y, double* out);
MIPH_API miph_status miph_cross_ratio(const miph_model* model, const double* pi, double y1,
                                      double y2, double* out);
/* E(Y_i) when given < 0, otherwise E(Y_i | Y_given >= threshold). */
MIPH_API miph_status miph_conditional_expectation(const miph_model* model, const double* pi,
                                                  size_t i, long given, double threshold,
                                                  double* out);

/* Simulates n couples. Entry ages in years are drawn uniformly from the
 * n_ages supplied pairs (ages_years is n_ages x 2, row-major). */
MIPH_API miph_status miph_simulate(const miph_model* model, const double* ages_years,
                                   size_t n_ages, size_t n, double censoring_rate,
                                   uint64_t seed, miph_data** out);

typedef enum miph_structure { MIPH_STRUCTURE_COXIAN = 0, MIPH_STRUCTURE_GENERAL = 1 } miph_structure;

typedef struct miph_fit_options {
  size_t p;
  miph_structure structure;
  size_t max_iterations;
  /* Stop when successive log-likelihoods differ by less than this; NaN
   * selects 1e-7 * n, a value <= 0 runs all iterations. */
  double loglik_tolerance;
  uint64_t seed;
  double initial_beta; /* applied to every margin */
  int freeze_betas;
  size_t istep_every;
  int istep_coordinate; /* 0: joint search over all betas */
  unsigned threads;
} miph_fit_options;

MIPH_API void miph_fit_options_default(miph_fit_options* options);
MIPH_API miph_status miph_fit(const miph_data* data, const miph_fit_options* options,
                              miph_fit_report** out);
MIPH_API void miph_fit_report_free(miph_fit_report* report);
MIPH_API size_t miph_fit_report_iterations(const miph_fit_report* report);
MIPH_API int miph_fit_report_converged(const miph_fit_report* report);
MIPH_API double miph_fit_report_loglik(const miph_fit_report* report, size_t iteration);
MIPH_API size_t miph_fit_report_warning_count(const miph_fit_report* report);
MIPH_API const char* miph_fit_report_warning(const miph_fit_report* report, size_t index);
/* Copy of the fitted model; release with miph_model_free. */
MIPH_API miph_status miph_fit_report_model(const miph_fit_report* report, miph_model** out);

/* Observed log-likelihood of a data set under a model. */
MIPH_API miph_status miph_observed_loglik(const miph_model* model, const miph_data* data,
                                          unsigned threads, double* out);

/* Conditional Kaplan-Meier survival 1 - F(t | ages) of one margin on a grid
 * of times (model units). Ages in years; the bandwidth applies to ages in
 * model units. */
MIPH_API miph_status miph_beran_curve(const miph_data* data, size_t margin, double age1_years,
                                      double age2_years, double bandwidth, const double* grid,
                                      size_t n_grid, unsigned threads, double* survival_out);

#ifdef __cplusplus
}
#endif

#endif

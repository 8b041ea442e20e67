/* C interface to the cgeo library: exact and geometric effective
 * information for Gaussian causal models. All functions are thread-safe;
 * models are immutable once created. */
#ifndef CGEO_CGEO_H
#define CGEO_CGEO_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CGEO_BUILDING_LIBRARY)
#    define CGEO_API __declspec(dllexport)
#  else
#    define CGEO_API __declspec(dllimport)
#  endif
#else
#  define CGEO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cg_status {
  CG_OK = 0,
  CG_INVALID_ARGUMENT = 1,
  CG_UNKNOWN_MODEL = 2,
  CG_DOMAIN = 3,
  CG_UNREACHABLE = 4,
  CG_DEGENERATE = 5,
  CG_USE_MONTE_CARLO = 6,
  CG_REGIME = 7,
  CG_NUMERIC = 8,
  CG_BUFFER_TOO_SMALL = 9,
  CG_INTERNAL = 10
} cg_status;

typedef enum cg_method {
  CG_METHOD_QUADRATURE = 0,
  CG_METHOD_MONTE_CARLO = 1,
  CG_METHOD_GEOMETRIC = 2,
  CG_METHOD_DIMMER_APPROX = 3
} cg_method;

enum {
  CG_FLAG_NEGATIVE_GEOMETRIC = 1u, /* EI_g < 0; it no longer tracks exact EI */
  CG_FLAG_UNCONVERGED = 2u,        /* node doubling moved the result by > 1e-3 nats */
  CG_FLAG_UNRELIABLE = 4u          /* Monte Carlo stderr > 20% of the estimate */
};

typedef struct cg_model cg_model;

typedef struct cg_ei_report {
  double nats;
  double bits;
  cg_method method;
  int has_volume_term;
  double volume_term;
  int has_mean_mismatch;
  double mean_mismatch;
  int has_stderr;
  double stderr_nats;
  int has_seed;
  uint64_t seed;
  int has_convergence_delta;
  double convergence_delta;
  unsigned flags;
  char grid[128];
} cg_ei_report;

typedef struct cg_quadrature_spec {
  int nodes_per_axis;       /* >= 21, default 201 */
  int trapezoid;            /* 0: Gauss-Legendre (default), 1: trapezoid */
  double effect_tail_sigmas;/* >= 4, default 8 */
  int check_convergence;    /* rerun with doubled nodes */
  int threads;              /* 0: all cores */
} cg_quadrature_spec;

typedef struct cg_grid_spec {
  int nodes_per_axis; /* default 101 */
  int threads;
} cg_grid_spec;

typedef struct cg_mc_spec {
  long outer_samples; /* default 20000 */
  int inner_samples;  /* default 256 */
  uint64_t seed;      /* default 1 */
  int batches;        /* default 20 */
  int threads;
} cg_mc_spec;

CGEO_API void cg_quadrature_spec_default(cg_quadrature_spec* spec);
CGEO_API void cg_grid_spec_default(cg_grid_spec* spec);
CGEO_API void cg_mc_spec_default(cg_mc_spec* spec);

CGEO_API const char* cg_version(void);
CGEO_API const char* cg_status_name(cg_status status);
/* Message of the last failure on the calling thread; never NULL. */
CGEO_API const char* cg_last_error(void);

/* Buffer-returning calls write a NUL-terminated string and set *needed to
 * the required size including the terminator (needed may be NULL). A buffer
 * that is too small receives an empty string. */
CGEO_API cg_status cg_list_models(int as_json, char* buf, size_t cap, size_t* needed);

/* params_json may be NULL or "" for defaults. */
CGEO_API cg_status cg_model_create(const char* name, const char* params_json, cg_model** out);
CGEO_API void cg_model_destroy(cg_model* model);
CGEO_API cg_status cg_model_params(const cg_model* model, char* buf, size_t cap, size_t* needed);
CGEO_API int cg_model_theta_dim(const cg_model* model);
CGEO_API int cg_model_has_submanifolds(const cg_model* model);

CGEO_API cg_status cg_ei_exact_quadrature(const cg_model* model, const cg_quadrature_spec* spec,
                                          cg_ei_report* out);
CGEO_API cg_status cg_ei_exact_mc(const cg_model* model, const cg_mc_spec* spec, cg_ei_report* out);
/* submanifold: NULL or "" for the full model, "A" or "B" for the two-species coarse-grainings. */
CGEO_API cg_status cg_ei_geometric(const cg_model* model, const char* submanifold,
                                   const cg_grid_spec* spec, cg_ei_report* out);
CGEO_API cg_status cg_ei_dimmer_approx(const cg_model* model, int nodes, cg_ei_report* out);

/* theta must lie in the model's parameter domain (CG_DOMAIN otherwise).
 * Row-major dim x dim outputs; either pointer may be NULL. */
CGEO_API cg_status cg_metrics(const cg_model* model, const double* theta, size_t dim, double* g_out,
                              double* h_out);
/* Eigenvalues of h^-1 g, descending; basis (row-major, columns are vectors) may be NULL. */
CGEO_API cg_status cg_eigen(const cg_model* model, const double* theta, size_t dim, double* eigenvalues_out,
                            double* basis_out);
CGEO_API cg_status cg_mismatch(const cg_model* model, const double* theta, size_t dim, double* out);

/* decay-confounder only. h_stat_series may be NULL; it fails with CG_REGIME
 * when sigma_T / sigma_x > 0.1. */
CGEO_API cg_status cg_decay_confounder_metrics(const cg_model* model, double theta, double* h_caus,
                                               double* h_stat, double* h_stat_series);

CGEO_API cg_status cg_make_grid(double from, double to, int steps, int log_spaced, double* out);

/* Crossings of curves a and b (NaN marks an invalid point). Writes up to cap
 * crossings; *count receives the total found. */
CGEO_API cg_status cg_find_crossings(const double* a, const double* b, const double* grid, size_t n,
                                     int log_spaced, double* value_out, double* lo_out, double* hi_out,
                                     size_t cap, size_t* count);

#ifdef __cplusplus
}
#endif

#endif /* CGEO_CGEO_H */

#ifndef MESHMORPH_H
#define MESHMORPH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MmStatus {
  MM_STATUS_OK = 0,
  MM_STATUS_NULL_POINTER = 1,
  MM_STATUS_INVALID_ARGUMENT = 2,
  MM_STATUS_NUMERICAL = 3,
  MM_STATUS_DEGENERATE = 4,
  MM_STATUS_IO = 5,
  MM_STATUS_CONFIG = 6,
  MM_STATUS_BUFFER_TOO_SMALL = 7,
  MM_STATUS_PANIC = 8,
} MmStatus;

/**
 * Fitted vector-valued interpolant.
 */
typedef struct MmInterpolant MmInterpolant;

/**
 * Simplicial mesh with its quality fields.
 */
typedef struct MmMesh MmMesh;

/**
 * Finished smoothing run.
 */
typedef struct MmRun MmRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, excluding the
 * terminating NUL; 0 when the last call succeeded.
 */
size_t mm_last_error_length(void);

/**
 * Copies the last error message (NUL-terminated) into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
enum MmStatus mm_last_error_message(char *buf, size_t len);

/**
 * φ(εr) = (3 + 3εr + ε²r²)e^{−εr}.
 *
 * # Safety
 * `out` must be a valid pointer to one double.
 */
enum MmStatus mm_matern_c4(double eps, double r, double *out);

/**
 * Shape parameter ε* whose interpolation matrix on `centers` has one-norm
 * condition number `target_condition` (the default bracket is searched).
 *
 * # Safety
 * `centers` must hold `n * dim` doubles; `out_eps` must be writable.
 */
enum MmStatus mm_find_shape_parameter(const double *centers,
                                      size_t n,
                                      size_t dim,
                                      double target_condition,
                                      double *out_eps);

/**
 * Fits an interpolant to `targets` (n × dim) at `sites` (n × dim).
 *
 * # Safety
 * Arrays must hold `n * dim` doubles; `out` must be writable. The handle
 * written to `out` is released with [`mm_interpolant_free`].
 */
enum MmStatus mm_interpolant_fit(const double *sites,
                                 const double *targets,
                                 size_t n,
                                 size_t dim,
                                 double eps_star,
                                 struct MmInterpolant **out);

/**
 * Evaluates at `n` points. `eps` holds one shape parameter per point, or is
 * null to use the fitted ε* everywhere. Writes `n * dim` doubles to `out`.
 *
 * # Safety
 * `interp` must come from [`mm_interpolant_fit`]; `points` and `out` must
 * hold `n * dim` doubles and `eps` (if non-null) `n` doubles.
 */
enum MmStatus mm_interpolant_evaluate(const struct MmInterpolant *interp,
                                      const double *points,
                                      size_t n,
                                      const double *eps,
                                      double *out);

/**
 * Shape parameter the interpolant was fitted with.
 *
 * # Safety
 * `interp` must come from [`mm_interpolant_fit`] or be null (returns NaN).
 */
double mm_interpolant_eps(const struct MmInterpolant *interp);

/**
 * # Safety
 * `interp` must come from [`mm_interpolant_fit`] and not be used afterwards.
 */
void mm_interpolant_free(struct MmInterpolant *interp);

/**
 * Delaunay tessellation of `n` points (triangles in 2D, tetrahedra in 3D).
 *
 * # Safety
 * `points` must hold `n * dim` doubles; `out` must be writable. Release the
 * handle with [`mm_mesh_free`].
 */
enum MmStatus mm_mesh_tessellate(const double *points, size_t n, size_t dim, struct MmMesh **out);

/**
 * # Safety
 * `mesh` must be a live handle or null (returns 0).
 */
size_t mm_mesh_num_vertices(const struct MmMesh *mesh);

/**
 * # Safety
 * `mesh` must be a live handle or null (returns 0).
 */
size_t mm_mesh_num_elements(const struct MmMesh *mesh);

/**
 * # Safety
 * `mesh` must be a live handle or null (returns 0).
 */
size_t mm_mesh_dim(const struct MmMesh *mesh);

/**
 * Copies the connectivity (`num_elements × (dim + 1)` indices) into `out`.
 *
 * # Safety
 * `mesh` must be a live handle; `out` must hold `len` entries.
 */
enum MmStatus mm_mesh_elements(const struct MmMesh *mesh, size_t *out, size_t len);

/**
 * Copies the per-element quality q_e (one value per element) into `out`.
 *
 * # Safety
 * `mesh` must be a live handle; `out` must hold `len` doubles.
 */
enum MmStatus mm_mesh_element_quality(const struct MmMesh *mesh, double *out, size_t len);

/**
 * Copies the per-vertex quality q_y (one value per vertex) into `out`.
 *
 * # Safety
 * `mesh` must be a live handle; `out` must hold `len` doubles.
 */
enum MmStatus mm_mesh_vertex_quality(const struct MmMesh *mesh, double *out, size_t len);

/**
 * Number of elements with nonpositive orientation.
 *
 * # Safety
 * `mesh` must be a live handle or null (returns 0).
 */
size_t mm_mesh_inverted_count(const struct MmMesh *mesh);

/**
 * Writes the mesh with `q_e` and `q_y` fields as legacy ASCII VTK.
 *
 * # Safety
 * `mesh` must be a live handle and `path` a NUL-terminated UTF-8 string.
 */
enum MmStatus mm_mesh_write_vtk(const struct MmMesh *mesh, const char *path);

/**
 * # Safety
 * `mesh` must come from this library and not be used afterwards.
 */
void mm_mesh_free(struct MmMesh *mesh);

/**
 * Runs the experiment described by a config file (output files are written
 * to its `output_dir`).
 *
 * # Safety
 * `config_path` must be a NUL-terminated UTF-8 string; `out` must be
 * writable. Release the handle with [`mm_run_free`].
 */
enum MmStatus mm_run_config(const char *config_path, struct MmRun **out);

/**
 * Number of recorded ‖q_e‖₂ values.
 *
 * # Safety
 * `run` must be a live handle or null (returns 0).
 */
size_t mm_run_history_len(const struct MmRun *run);

/**
 * Copies the ‖q_e‖₂ history into `out`.
 *
 * # Safety
 * `run` must be a live handle; `out` must hold `len` doubles.
 */
enum MmStatus mm_run_history(const struct MmRun *run, double *out, size_t len);

/**
 * History index of the returned mesh.
 *
 * # Safety
 * `run` must be a live handle or null (returns 0).
 */
size_t mm_run_best_iteration(const struct MmRun *run);

/**
 * # Safety
 * `run` must be a live handle or null (returns NaN).
 */
double mm_run_eps_star(const struct MmRun *run);

/**
 * New mesh handle holding a copy of the best mesh of the run.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum MmStatus mm_run_best_mesh(const struct MmRun *run, struct MmMesh **out);

/**
 * # Safety
 * `run` must come from [`mm_run_config`] and not be used afterwards.
 */
void mm_run_free(struct MmRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MESHMORPH_H */

#ifndef O3DSIM_H
#define O3DSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  O3D_STATUS_OK = 0,
  O3D_STATUS_NULL_ARGUMENT = 1,
  O3D_STATUS_INVALID_ARGUMENT = 2,
  O3D_STATUS_PARSE_ERROR = 3,
  O3D_STATUS_IO_ERROR = 4,
  O3D_STATUS_NOT_FOUND = 5,
  O3D_STATUS_NO_INSTANCES = 6,
  O3D_STATUS_RANK_OUT_OF_RANGE = 7,
  O3D_STATUS_INVALID_START = 8,
  O3D_STATUS_UNREACHABLE = 9,
  O3D_STATUS_INVALID_STATE = 10,
  O3D_STATUS_PANIC = 11,
} O3dStatus;

// Opaque instance map.
typedef struct O3dMap O3dMap;

// Merge parameters. Background labels are always the engine defaults.
typedef struct {
  double delta_nn;
  double tau_geo;
  double tau_sem;
  double tau_refine;
  double voxel_size;
  double dbscan_eps;
  size_t dbscan_min_pts;
  size_t min_points;
  size_t min_detections;
} O3dMergeConfig;

typedef struct {
  double cell_size;
  double z_min;
  double z_max;
  double floor_z;
  double robot_radius;
  double grid_padding;
} O3dNavConfig;

typedef struct {
  double x;
  double y;
  size_t row;
  size_t col;
  uint32_t node_id;
  // Cosine similarity of the selected node to the query.
  double score;
} O3dGoal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

O3dMergeConfig o3d_merge_config_default(void);

O3dNavConfig o3d_nav_config_default(void);

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on this thread.
const char *o3d_last_error(void);

const char *o3d_version(void);

// Creates an empty map. `config` may be null for defaults.
//
// # Safety
// `config` must be null or point to a valid config; `out` must be writable.
O3dStatus o3d_map_new(const O3dMergeConfig *config, O3dMap **out);

// # Safety
// `map` must be null or a handle from this library that is not yet freed.
void o3d_map_free(O3dMap *map);

// Reads a frame-record file and runs the full pipeline: update with every
// frame, refine, finalize.
//
// # Safety
// `path` must be a NUL-terminated string; `config` null or valid; `out`
// writable.
O3dStatus o3d_map_build_from_file(const char *path, const O3dMergeConfig *config, O3dMap **out);

// Integrates one frame: `header_json` is the sequence header line,
// `frame_json` one frame-record line. Relative depth PNG paths resolve
// against `base_dir`, which may be null when depth is inline.
//
// # Safety
// `map` must be a live handle; the strings NUL-terminated (or null where
// allowed).
O3dStatus o3d_map_update_json(O3dMap *map,
                              const char *header_json,
                              const char *frame_json,
                              const char *base_dir);

// # Safety
// `map` must be a live handle; `absorbed` null or writable.
O3dStatus o3d_map_refine(O3dMap *map, size_t *absorbed);

// # Safety
// `map` must be a live handle; `dropped` null or writable.
O3dStatus o3d_map_finalize(O3dMap *map, size_t *dropped);

// Number of nodes; 0 for a null handle.
//
// # Safety
// `map` must be null or a live handle.
size_t o3d_map_node_count(const O3dMap *map);

// Copies up to `capacity` node ids, ascending, into `ids` and stores the
// total node count in `total`.
//
// # Safety
// `map` must be a live handle; `ids` writable for `capacity` elements;
// `total` null or writable.
O3dStatus o3d_map_node_ids(const O3dMap *map, uint32_t *ids, size_t capacity, size_t *total);

// Writes the map directory: manifest plus per-node and scene PLYs.
//
// # Safety
// `map` must be a live handle; `dir` NUL-terminated.
O3dStatus o3d_map_export(const O3dMap *map, const char *dir);

// # Safety
// `dir` must be NUL-terminated; `out` writable.
O3dStatus o3d_map_load(const char *dir, O3dMap **out);

// Ranks nodes against `embedding`, picks the `instance_rank`-th (1-based),
// and returns the reachable goal cell nearest to it from `(start_x,
// start_y)`. `nav` may be null for defaults.
//
// # Safety
// `map` must be a live handle; `embedding` readable for `dim` doubles;
// `nav` null or valid; `out` writable.
O3dStatus o3d_map_query(const O3dMap *map,
                        const double *embedding,
                        size_t dim,
                        size_t instance_rank,
                        double start_x,
                        double start_y,
                        const O3dNavConfig *nav,
                        O3dGoal *out);

// Fraction of `source` points with a `target` point within `delta`.
//
// # Safety
// `source` readable for `3 * n_source` doubles, `target` for
// `3 * n_target`; `out` writable.
O3dStatus o3d_nnratio(const double *source,
                      size_t n_source,
                      const double *target,
                      size_t n_target,
                      double delta,
                      double *out);

// `(1 + cos(a, b)) / 2`.
//
// # Safety
// `a` and `b` readable for `dim` doubles; `out` writable.
O3dStatus o3d_semantic_similarity(const double *a, const double *b, size_t dim, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* O3DSIM_H */

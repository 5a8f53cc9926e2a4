/* C interface to the netsync estimators.
 *
 * All functions returning int use these status codes. On any non-zero
 * status, netsync_last_error() returns a human-readable message for the
 * most recent failure on the calling thread; the pointer stays valid until
 * the next failing call on that thread.
 *
 * Maintained by hand; the crate tests check it against the exported
 * symbols.
 */

#ifndef NETSYNC_H
#define NETSYNC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
    NETSYNC_OK = 0,
    NETSYNC_ERR_INVALID_INPUT = 1,
    NETSYNC_ERR_NUMERICAL = 2,
    NETSYNC_ERR_NULL_POINTER = 3,
    NETSYNC_ERR_UTF8 = 4,
    NETSYNC_ERR_PANIC = 5
};

/* Opaque graph handle. Create with netsync_graph_from_json, release with
 * netsync_graph_free. */
typedef struct NetsyncGraph NetsyncGraph;

/* Message describing the most recent failure on this thread. Never NULL;
 * empty string when nothing has failed yet. */
const char *netsync_last_error(void);

/* Parses a graph from JSON:
 *   {"vertices": ["a", ...],
 *    "edges": [{"id": "e1", "source": "a", "target": "b"}, ...]}
 * Writes a new handle to *out on success. */
int netsync_graph_from_json(const char *json, NetsyncGraph **out);

/* Releases a handle. Accepts NULL. */
void netsync_graph_free(NetsyncGraph *g);

/* Counts; both return 0 for NULL. */
size_t netsync_graph_vertex_count(const NetsyncGraph *g);
size_t netsync_graph_edge_count(const NetsyncGraph *g);

/* Spanning-tree count of the graph and its natural log (-inf when the graph
 * is disconnected). Either output pointer may be NULL. */
int netsync_graph_tree_count(const NetsyncGraph *g, double *value,
                             double *ln_value);

/* Maximum-likelihood vertex values from scalar Gaussian edge measurements
 * with equal variance sigma2. r holds one measured difference
 * (target - source) per edge, in graph edge order; out receives one value
 * per vertex with ref_vertex pinned to 0. */
int netsync_estimate_real_iid(const NetsyncGraph *g, const double *r,
                              size_t r_len, double sigma2, size_t ref_vertex,
                              double *out);

/* Phase estimate from circle-valued measurements under von Mises noise with
 * common concentration kappa. angles holds one radian value per edge in
 * graph edge order. Runs a seeded randomized power-iteration start followed
 * by per-vertex likelihood refinement until the stationarity defect drops
 * below tol or max_rounds rounds elapse. out_angles receives one radian
 * value per vertex with ref_vertex pinned to 0. If the round cap is hit the
 * best state is still written, *converged (when non-NULL) is set to 0, and
 * the call returns NETSYNC_ERR_NUMERICAL. */
int netsync_estimate_circle_hybrid(const NetsyncGraph *g, const double *angles,
                                   size_t angles_len, double kappa,
                                   size_t ref_vertex, uint64_t seed, double tol,
                                   size_t max_rounds, double *out_angles,
                                   int *converged);

#ifdef __cplusplus
}
#endif

#endif /* NETSYNC_H */

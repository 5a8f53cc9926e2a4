//! Distributed Gaussian estimation: Jacobi sweeps of the normal equations
//! in which each vertex averages its neighbors' values shifted by the edge
//! measurements. One sweep reads only adjacent vertices, so the iteration
//! maps directly onto nearest-neighbor message passing.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian::{EstimateResult, Gauge};
use crate::graph::Graph;
use crate::incidence::IncidenceSet;

/// Iteration mode of the Jacobi splitting x <- N^-1 (D r + A x).
#[derive(Debug, Clone, Copy)]
pub struct JacobiOptions {
    /// Stop when the edge-space increment max |D^T (x' - x)| drops below.
    pub tol: f64,
    /// Cap on sweeps; `None` picks 10 n^2.
    pub max_iter: Option<usize>,
    /// Damping factor gamma in x <- (1-gamma) x + gamma sweep(x).
    /// `None` selects 1 (pure Jacobi), or 0.5 when the graph is bipartite,
    /// where the pure iteration has a -1 eigenvalue and cycles forever.
    pub damping: Option<f64>,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        JacobiOptions { tol: 1e-9, max_iter: None, damping: None }
    }
}

/// Outcome of a Jacobi run. `converged` is false when the sweep cap was hit;
/// the partial state is still returned for diagnosis.
#[derive(Debug, Clone)]
pub struct JacobiRun {
    pub estimate: EstimateResult,
    pub iterations: usize,
    pub converged: bool,
    pub last_delta: f64,
    pub damping: f64,
}

/// Spectrum of the iteration matrix N^-1 A.
#[derive(Debug, Clone, Copy)]
pub struct SpectralDiagnostics {
    pub spectral_radius: f64,
    pub lambda_min: f64,
    /// True when lambda_min is within 1e-9 of -1: the oscillatory mode of
    /// bipartite graphs that pure Jacobi cannot damp.
    pub bipartite_hazard: bool,
}

/// One pure Jacobi sweep: x'_v = mean over incident edges of the neighbor
/// value shifted by the measurement, sign-resolved by edge orientation.
pub fn jacobi_step(graph: &Graph, x: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = graph.vertex_count();
    let d = x.ncols();
    let mut next = DMatrix::zeros(n, d);
    for v in 0..n {
        let ends = graph.incident(v);
        let inv_deg = 1.0 / ends.len() as f64;
        for end in ends {
            let sign = if end.inward { 1.0 } else { -1.0 };
            for c in 0..d {
                next[(v, c)] += x[(end.neighbor, c)] + sign * r[(end.edge, c)];
            }
        }
        next.row_mut(v).scale_mut(inv_deg);
    }
    next
}

/// Eigenvalues of N^-1 A through the similar symmetric form
/// N^-1/2 A N^-1/2.
pub fn convergence_diagnostics(graph: &Graph, inc: &IncidenceSet) -> Result<SpectralDiagnostics> {
    let n = graph.vertex_count();
    if (0..n).any(|v| graph.degree(v) == 0) {
        return Err(Error::Disconnected("isolated vertex has no Jacobi update".into()));
    }
    let half: Vec<f64> = (0..n).map(|v| 1.0 / (graph.degree(v) as f64).sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| half[i] * inc.adjacency[(i, j)] * half[j]);
    let eig = sym.symmetric_eigen().eigenvalues;
    let lambda_min = eig.min();
    let spectral_radius = eig.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    Ok(SpectralDiagnostics {
        spectral_radius,
        lambda_min,
        bipartite_hazard: (lambda_min + 1.0).abs() < 1e-9,
    })
}

/// Runs damped Jacobi sweeps until the edge-space increment
/// max |D^T (x' - x)| falls below `tol`. The returned solution is re-gauged
/// to the reference vertex of `inc`.
pub fn jacobi_run(
    graph: &Graph,
    inc: &IncidenceSet,
    r: &DMatrix<f64>,
    opts: JacobiOptions,
) -> Result<JacobiRun> {
    let n = graph.vertex_count();
    let m = graph.edge_count();
    if !graph.is_connected() {
        return Err(Error::Disconnected("Jacobi needs a connected graph".into()));
    }
    if r.nrows() != m {
        return Err(Error::DimensionMismatch("measurement rows != edge count".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be > 0".into()));
    }
    let damping = match opts.damping {
        Some(g) if g > 0.0 && g <= 1.0 => g,
        Some(g) => return Err(Error::InvalidParameter(format!("damping {g} outside (0, 1]"))),
        // Two-coloring detects the -1 eigenvalue exactly on connected graphs.
        None => {
            if graph.bipartition().is_some() {
                0.5
            } else {
                1.0
            }
        }
    };
    let max_iter = opts.max_iter.unwrap_or(10 * n * n);
    let d = r.ncols();
    let mut x = DMatrix::zeros(n, d);
    let mut last_delta = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let dt = inc.d.transpose();
    while iterations < max_iter {
        let sweep = jacobi_step(graph, &x, r);
        let next = if damping == 1.0 { sweep } else { &x * (1.0 - damping) + sweep * damping };
        iterations += 1;
        last_delta = (&dt * (&next - &x)).abs().max();
        x = next;
        if last_delta < opts.tol {
            converged = true;
            break;
        }
    }
    // Pin the reference vertex at zero per coordinate.
    let ref_row = x.row(inc.ref_vertex).clone_owned();
    for c in 0..d {
        x.column_mut(c).add_scalar_mut(-ref_row[c]);
    }
    let omega_hat = &dt * &x;
    let residual = r - &omega_hat;
    Ok(JacobiRun {
        estimate: EstimateResult {
            x_hat: x,
            omega_hat,
            residual,
            gauge: Gauge::Reference(inc.ref_vertex),
        },
        iterations,
        converged,
        last_delta,
        damping,
    })
}

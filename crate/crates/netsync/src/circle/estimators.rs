//! Phase estimators: exact eigenvector methods on the concentration-weighted
//! agreement matrix, the distributed power iteration, and the hybrid
//! refinement that walks from the eigenvector onto an exact critical point
//! of the likelihood.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::circle::{check_unit_phases, CircleModel};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Amplitudes below this are treated as a divergence diagnostic.
const AMPLITUDE_UNDERFLOW: f64 = 1e-300;
/// Eigenvalue gap below which the top eigenvector is flagged ambiguous.
const EIGEN_TIE_TOL: f64 = 1e-10;
/// Relative magnitude below which an eigenvector component has no phase.
const ZERO_COMPONENT_TOL: f64 = 1e-12;

/// Which matrix the global estimator diagonalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalEigenKind {
    /// Degree-and-concentration normalized operator N^-1 (A + beta I).
    Normalized,
    /// Raw weighted agreement matrix A.
    Adjacency,
}

/// Top-eigenvector phase estimate.
#[derive(Debug, Clone)]
pub struct GlobalEigenEstimate {
    pub phases: Vec<Complex64>,
    pub eigenvalue: f64,
    /// Distance to the second eigenvalue.
    pub gap: f64,
    /// Set when the top two eigenvalues are numerically tied; the phases are
    /// then one arbitrary member of the leading eigenspace.
    pub ambiguous: bool,
}

/// Distributed iteration state: per-vertex amplitude and unit phase.
#[derive(Debug, Clone)]
pub struct AmplitudePhaseState {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<Complex64>,
}

impl AmplitudePhaseState {
    /// Unit amplitudes, phases drawn uniformly on the circle.
    pub fn random_init<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        AmplitudePhaseState {
            amplitudes: vec![1.0; n],
            phases: (0..n)
                .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect(),
        }
    }

    pub fn from_phases(phases: Vec<Complex64>) -> Self {
        AmplitudePhaseState { amplitudes: vec![1.0; phases.len()], phases }
    }
}

/// Result of a run of synchronous power-iteration rounds.
#[derive(Debug, Clone)]
pub struct LocalPowerRun {
    pub state: AmplitudePhaseState,
    pub rounds: usize,
    pub converged: bool,
    pub last_delta: f64,
}

/// Stationarity report of a phase assignment.
#[derive(Debug, Clone)]
pub struct CriticalPointReport {
    /// |Im((A x)_v conj(x_v))| per vertex.
    pub defects: Vec<f64>,
    /// Re((A x)_v conj(x_v)), the per-vertex stationarity multiplier.
    pub multipliers: Vec<f64>,
    pub max_defect: f64,
    /// Updates skipped because the local multiplier was non-positive or the
    /// update direction vanished.
    pub kappa_clamps: usize,
}

/// Result of the hybrid refinement.
#[derive(Debug, Clone)]
pub struct HybridRun {
    pub phases: Vec<Complex64>,
    pub report: CriticalPointReport,
    pub rounds: usize,
    pub converged: bool,
}

/// (A x)_v = sum over incident edges of kappa_e x_u r_e^(+-1): measurements
/// are taken as-is on inward edges and conjugated on outward ones, so each
/// term transports the neighbor's value across the edge. With noise-free
/// data this fixes the truth: (A x*)_v = (sum kappa_e) x*_v.
pub(crate) fn apply_augmented(
    graph: &Graph,
    kappa: &[f64],
    r: &[Complex64],
    values: &[Complex64],
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); graph.vertex_count()];
    for (v, slot) in out.iter_mut().enumerate() {
        for end in graph.incident(v) {
            let transport = if end.inward { r[end.edge] } else { r[end.edge].conj() };
            *slot += kappa[end.edge] * values[end.neighbor] * transport;
        }
    }
    out
}

fn validate_circle_inputs(graph: &Graph, model: &CircleModel, r: &[Complex64]) -> Result<()> {
    let m = graph.edge_count();
    model.validate(m)?;
    if r.len() != m {
        return Err(Error::DimensionMismatch("measurement count != edge count".into()));
    }
    check_unit_phases("r", r)?;
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be finite and >= 0")));
    }
    Ok(())
}

/// Concentration-weighted vertex loads and the Hermitian agreement matrix.
/// Returns (n_aug, a_aug) with n_aug_v = sum of incident kappa_e plus beta;
/// the estimators use N_aug^-1 (A_aug + beta I).
pub fn build_q_matrix(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    beta: f64,
) -> Result<(DVector<f64>, DMatrix<Complex64>)> {
    validate_circle_inputs(graph, model, r)?;
    check_beta(beta)?;
    let n = graph.vertex_count();
    let mut a = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut loads = DVector::zeros(n);
    for (e, edge) in graph.edges().iter().enumerate() {
        let k = model.kappa[e];
        a[(edge.target, edge.source)] += k * r[e];
        a[(edge.source, edge.target)] += k * r[e].conj();
        loads[edge.source] += k;
        loads[edge.target] += k;
    }
    for v in 0..n {
        loads[v] += beta;
        if loads[v] <= 0.0 {
            return Err(Error::Disconnected(format!(
                "vertex {v} has no incident concentration; its update is undefined"
            )));
        }
    }
    debug_assert!((&a - a.adjoint()).iter().all(|z| z.norm() < 1e-12));
    Ok((loads, a))
}

pub(crate) fn phases_from_eigenvector(y: &[Complex64]) -> Result<Vec<Complex64>> {
    let max = y.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    y.iter()
        .enumerate()
        .map(|(v, val)| {
            if val.norm() < ZERO_COMPONENT_TOL * max {
                Err(Error::ZeroEigenvectorComponent(v))
            } else {
                Ok(val / val.norm())
            }
        })
        .collect()
}

/// Exact top-eigenvector estimate. The normalized variant diagonalizes the
/// similar Hermitian form N^-1/2 (A + beta I) N^-1/2 and maps the
/// eigenvector back through N^-1/2.
pub fn global_eigen_estimate(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    kind: GlobalEigenKind,
    beta: f64,
) -> Result<GlobalEigenEstimate> {
    if !graph.is_connected() {
        return Err(Error::Disconnected("global estimator needs a connected graph".into()));
    }
    let (loads, a) = build_q_matrix(graph, model, r, beta)?;
    let n = graph.vertex_count();
    let matrix = match kind {
        GlobalEigenKind::Adjacency => a,
        GlobalEigenKind::Normalized => {
            let half: Vec<f64> = (0..n).map(|v| 1.0 / loads[v].sqrt()).collect();
            DMatrix::from_fn(n, n, |i, j| {
                let shift = if i == j { Complex64::new(beta, 0.0) } else { Complex64::new(0.0, 0.0) };
                (a[(i, j)] + shift) * (half[i] * half[j])
            })
        }
    };
    // Average away round-off asymmetry before the Hermitian solver.
    let matrix = (&matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = matrix.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let top = order[0];
    let eigenvalue = eig.eigenvalues[top];
    let gap = if n > 1 { eigenvalue - eig.eigenvalues[order[1]] } else { f64::INFINITY };
    let mut y: Vec<Complex64> = eig.eigenvectors.column(top).iter().copied().collect();
    if kind == GlobalEigenKind::Normalized {
        for (v, val) in y.iter_mut().enumerate() {
            *val /= loads[v].sqrt();
        }
    }
    Ok(GlobalEigenEstimate {
        phases: phases_from_eigenvector(&y)?,
        eigenvalue,
        gap,
        ambiguous: gap < EIGEN_TIE_TOL,
    })
}

/// One synchronous round of the distributed power iteration
/// y_v = (sum_e kappa_e a_u x_u r_e^(+-1) + beta a_v x_v) / (load_v + beta).
/// Every term a vertex uses comes from an adjacent vertex.
pub fn local_power_step(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    state: &AmplitudePhaseState,
    beta: f64,
) -> Result<AmplitudePhaseState> {
    validate_circle_inputs(graph, model, r)?;
    check_beta(beta)?;
    let n = graph.vertex_count();
    if state.amplitudes.len() != n || state.phases.len() != n {
        return Err(Error::DimensionMismatch("state length != vertex count".into()));
    }
    let values: Vec<Complex64> = state
        .phases
        .iter()
        .zip(&state.amplitudes)
        .map(|(x, a)| x * *a)
        .collect();
    let ax = apply_augmented(graph, &model.kappa, r, &values);
    let mut amplitudes = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    for v in 0..n {
        let load: f64 = graph.incident(v).iter().map(|end| model.kappa[end.edge]).sum();
        if load + beta <= 0.0 {
            return Err(Error::Disconnected(format!("vertex {v} has no incident edges")));
        }
        let y = (ax[v] + beta * values[v]) / (load + beta);
        let mag = y.norm();
        if mag < AMPLITUDE_UNDERFLOW {
            return Err(Error::Numerical(format!(
                "amplitude underflow at vertex {v}: |y| = {mag:.3e}"
            )));
        }
        amplitudes.push(mag);
        phases.push(y / mag);
    }
    Ok(AmplitudePhaseState { amplitudes, phases })
}

/// Runs power-iteration rounds until the largest per-vertex phase change
/// falls below `tol` or `max_rounds` is hit. After each round the amplitude
/// vector is rescaled to unit maximum; the dynamics are linear, so this
/// leaves phases and relative amplitudes untouched while blocking the
/// geometric decay that would otherwise underflow on long runs.
pub fn run_local_power(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    init: AmplitudePhaseState,
    beta: f64,
    tol: f64,
    max_rounds: usize,
) -> Result<LocalPowerRun> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be > 0".into()));
    }
    let mut state = init;
    let mut last_delta = f64::INFINITY;
    for rounds in 1..=max_rounds {
        let mut next = local_power_step(graph, model, r, &state, beta)?;
        let peak = next.amplitudes.iter().fold(0.0f64, |a, &b| a.max(b));
        for a in &mut next.amplitudes {
            *a /= peak;
        }
        last_delta = next
            .phases
            .iter()
            .zip(&state.phases)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        state = next;
        if last_delta < tol {
            return Ok(LocalPowerRun { state, rounds, converged: true, last_delta });
        }
    }
    Ok(LocalPowerRun { state, rounds: max_rounds, converged: false, last_delta })
}

/// Largest concentration-weighted vertex load, max over vertices of the
/// incident kappa sum. Gershgorin bounds every eigenvalue of the agreement
/// matrix by this value, so a refinement shift `beta` at or above it turns
/// each synchronous update into a majorization step: the likelihood never
/// decreases on the way to the critical point.
pub fn max_vertex_load(graph: &Graph, model: &CircleModel) -> Result<f64> {
    model.validate(graph.edge_count())?;
    let mut loads = vec![0.0f64; graph.vertex_count()];
    for (edge, &k) in graph.edges().iter().zip(&model.kappa) {
        loads[edge.source] += k;
        loads[edge.target] += k;
    }
    Ok(loads.into_iter().fold(0.0, f64::max))
}

/// Critical-point refinement: each vertex replaces its phase with the phase
/// of (A x)_v + beta x_v until its stationarity defect
/// |Im((A x)_v conj(x_v))| is below `threshold`; vertices whose defect
/// already passes hold still. The beta shift leaves the fixed points and the
/// defect untouched (Im(beta x conj(x)) = 0) but damps the synchronous
/// dynamics, which otherwise can flip in lockstep when the state is
/// anti-aligned. A non-positive local multiplier Re((A x)_v conj(x_v)) is
/// counted as a clamp but the phase still moves: the per-vertex likelihood
/// term is maximized by the phase of the update direction regardless of the
/// multiplier's sign, and holding still there deadlocks.
pub fn hybrid_ml_refine(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    start: &[Complex64],
    beta: f64,
    threshold: f64,
    max_rounds: usize,
) -> Result<HybridRun> {
    validate_circle_inputs(graph, model, r)?;
    check_beta(beta)?;
    if start.len() != graph.vertex_count() {
        return Err(Error::DimensionMismatch("start phases != vertex count".into()));
    }
    check_unit_phases("start", start)?;
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter("threshold must be > 0".into()));
    }
    let mut x = start.to_vec();
    let mut rounds = 0;
    let mut converged = false;
    let mut kappa_clamps = 0usize;
    loop {
        let ax = apply_augmented(graph, &model.kappa, r, &x);
        let s: Vec<Complex64> = ax.iter().zip(&x).map(|(a, xv)| a * xv.conj()).collect();
        if s.iter().all(|sv| sv.im.abs() < threshold) {
            converged = true;
            let report = report_from(&s, kappa_clamps);
            return Ok(HybridRun { phases: x, report, rounds, converged });
        }
        if rounds >= max_rounds {
            break;
        }
        for v in 0..x.len() {
            if s[v].im.abs() < threshold {
                continue;
            }
            if s[v].re <= 0.0 {
                kappa_clamps += 1;
            }
            let step = ax[v] + beta * x[v];
            let mag = step.norm();
            if mag >= AMPLITUDE_UNDERFLOW {
                x[v] = step / mag;
            }
        }
        rounds += 1;
    }
    let ax = apply_augmented(graph, &model.kappa, r, &x);
    let s: Vec<Complex64> = ax.iter().zip(&x).map(|(a, xv)| a * xv.conj()).collect();
    let report = report_from(&s, kappa_clamps);
    Ok(HybridRun { phases: x, report, rounds, converged })
}

fn report_from(s: &[Complex64], kappa_clamps: usize) -> CriticalPointReport {
    let defects: Vec<f64> = s.iter().map(|sv| sv.im.abs()).collect();
    let multipliers: Vec<f64> = s.iter().map(|sv| sv.re).collect();
    let max_defect = defects.iter().fold(0.0f64, |a, &b| a.max(b));
    CriticalPointReport { defects, multipliers, max_defect, kappa_clamps }
}

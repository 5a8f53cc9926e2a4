//! Circle-valued synchronization: vertex phases observed through von Mises
//! perturbed edge differences r_e = x_t(e) * conj(x_s(e)) * noise. Phases
//! are unit-modulus complex numbers; angles are radians everywhere.

pub mod bessel;
pub mod estimators;
pub mod sampler;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::FisherReport;
use crate::graph::Graph;
use crate::incidence::IncidenceSet;

pub use bessel::{bessel_ratio, ln_bessel_i0};
pub use estimators::{
    build_q_matrix, global_eigen_estimate, hybrid_ml_refine, local_power_step, max_vertex_load,
    run_local_power, AmplitudePhaseState, CriticalPointReport, GlobalEigenEstimate,
    GlobalEigenKind, HybridRun, LocalPowerRun,
};
pub use sampler::{sample_von_mises, sample_von_mises_many};

/// Per-edge von Mises concentrations.
#[derive(Debug, Clone)]
pub struct CircleModel {
    pub kappa: Vec<f64>,
}

impl CircleModel {
    pub fn common(kappa: f64, m: usize) -> Self {
        CircleModel { kappa: vec![kappa; m] }
    }

    pub fn per_edge(kappa: Vec<f64>) -> Self {
        CircleModel { kappa }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.kappa.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} concentrations for {m} edges",
                self.kappa.len()
            )));
        }
        if let Some(k) = self.kappa.iter().find(|k| !(**k > 0.0) || !k.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa = {k} must be finite and > 0")));
        }
        Ok(())
    }
}

pub(crate) fn check_unit_phases(label: &str, xs: &[Complex64]) -> Result<()> {
    for (i, x) in xs.iter().enumerate() {
        if (x.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "{label}[{i}] has modulus {:.6}, expected 1",
                x.norm()
            )));
        }
    }
    Ok(())
}

/// Noise-free measurements r_e = x_target * conj(x_source).
pub fn ideal_measurements(graph: &Graph, x: &[Complex64]) -> Result<Vec<Complex64>> {
    if x.len() != graph.vertex_count() {
        return Err(Error::DimensionMismatch("phase count != vertex count".into()));
    }
    check_unit_phases("x", x)?;
    Ok(graph.edges().iter().map(|e| x[e.target] * x[e.source].conj()).collect())
}

/// Von Mises log-likelihood of edge predictions `omega` given measurements
/// `r`, including the normalizing constants -ln(2 pi I0(kappa_e)).
pub fn log_likelihood_edges(model: &CircleModel, r: &[Complex64], omega: &[Complex64]) -> Result<f64> {
    let m = model.kappa.len();
    if r.len() != m || omega.len() != m {
        return Err(Error::DimensionMismatch("edge vectors do not match model".into()));
    }
    check_unit_phases("r", r)?;
    check_unit_phases("omega", omega)?;
    let mut ll = 0.0;
    for e in 0..m {
        ll += model.kappa[e] * (omega[e].conj() * r[e]).re;
        ll -= (std::f64::consts::TAU).ln() + ln_bessel_i0(model.kappa[e])?;
    }
    Ok(ll)
}

/// Log-likelihood of a vertex phase assignment.
pub fn log_likelihood(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    x: &[Complex64],
) -> Result<f64> {
    model.validate(graph.edge_count())?;
    let omega = ideal_measurements(graph, x)?;
    log_likelihood_edges(model, r, &omega)
}

/// Per-vertex critical-point defects |Im((A x)_v conj(x_v))|: each entry is
/// the gradient of the log-likelihood in the vertex's phase direction, and
/// all must vanish at a stationary point.
pub fn critical_point_defects(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    x: &[Complex64],
) -> Result<Vec<f64>> {
    model.validate(graph.edge_count())?;
    if x.len() != graph.vertex_count() {
        return Err(Error::DimensionMismatch("phase count != vertex count".into()));
    }
    check_unit_phases("r", r)?;
    check_unit_phases("x", x)?;
    let ax = estimators::apply_augmented(graph, &model.kappa, r, x);
    Ok(ax.iter().zip(x).map(|(a, xv)| (a * xv.conj()).im.abs()).collect())
}

/// Circular error 1 - |mean_{v != ref} x_hat_v conj(x_true_v)|^2.
/// Zero iff the estimate matches the truth up to a global rotation; the
/// modulus makes the score gauge-invariant.
pub fn circular_error(x_hat: &[Complex64], x_true: &[Complex64], ref_vertex: usize) -> Result<f64> {
    let n = x_hat.len();
    if x_true.len() != n {
        return Err(Error::DimensionMismatch("phase vectors differ in length".into()));
    }
    if ref_vertex >= n || n < 2 {
        return Err(Error::InvalidParameter("reference vertex out of range or n < 2".into()));
    }
    check_unit_phases("x_hat", x_hat)?;
    check_unit_phases("x_true", x_true)?;
    let mut mean = Complex64::new(0.0, 0.0);
    for v in 0..n {
        if v != ref_vertex {
            mean += x_hat[v] * x_true[v].conj();
        }
    }
    mean /= (n - 1) as f64;
    Ok(1.0 - mean.norm_sqr())
}

/// Fisher information of the reduced phase problem: D_W diag(kappa_e A(kappa_e)) D_W^T,
/// with the determinant cross-checked through the weighted spanning-tree sum.
pub fn fisher_report_circle(
    graph: &Graph,
    inc: &IncidenceSet,
    model: &CircleModel,
) -> Result<FisherReport> {
    let m = graph.edge_count();
    model.validate(m)?;
    if !graph.is_connected() {
        return Err(Error::Disconnected("Fisher analysis needs a connected graph".into()));
    }
    let weights: Vec<f64> = model
        .kappa
        .iter()
        .map(|&k| bessel_ratio(k).map(|a| k * a))
        .collect::<Result<_>>()?;
    let mut scaled = inc.d_w.clone();
    for (e, &w) in weights.iter().enumerate() {
        scaled.column_mut(e).scale_mut(w);
    }
    let fisher = scaled * inc.d_w.transpose();
    let det_direct = fisher.determinant();
    let det_tree_formula = if m <= 16 {
        inc.enumerate_spanning_trees(graph)?
            .iter()
            .map(|t| t.iter().map(|&e| weights[e]).product::<f64>())
            .sum()
    } else {
        inc.weighted_tree_sum(&weights)?
    };
    let estimator_covariance = fisher
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("circle Fisher matrix is not positive definite".into()))?
        .inverse();
    Ok(FisherReport { fisher, det_direct, det_tree_formula, estimator_covariance })
}

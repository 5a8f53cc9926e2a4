//! Product-space synchronization: node variables live in R^d x T^q, edges
//! carry a linear difference with per-coordinate Gaussian noise and phase
//! ratios with per-coordinate von Mises noise, all independent. Independence
//! makes the likelihood separate per coordinate, so the exact solver runs
//! one real estimate per linear coordinate and one phase estimate per
//! circular coordinate; the Fisher information assembles the same way, one
//! weighted Laplacian block per coordinate.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circle::{
    bessel_ratio, hybrid_ml_refine, max_vertex_load, run_local_power, AmplitudePhaseState,
    CircleModel, CriticalPointReport,
};
use crate::error::{Error, Result};
use crate::gaussian::{self, NoiseModel};
use crate::graph::Graph;
use crate::incidence::IncidenceSet;

/// Element of R^d x T^q: d reals and q unit-modulus phases.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub linear: Vec<f64>,
    pub circular: Vec<Complex64>,
}

impl GroupElement {
    pub fn new(linear: Vec<f64>, circular: Vec<Complex64>) -> Result<Self> {
        let g = GroupElement { linear, circular };
        g.validate()?;
        Ok(g)
    }

    pub fn identity(d: usize, q: usize) -> Self {
        GroupElement { linear: vec![0.0; d], circular: vec![Complex64::new(1.0, 0.0); q] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.linear.len(), self.circular.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite linear component".into()));
        }
        crate::circle::check_unit_phases("circular component", &self.circular)
    }

    fn check_dims(&self, other: &GroupElement) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "group elements have shapes {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// Componentwise group operation: linear parts add, phases multiply.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        self.check_dims(other)?;
        Ok(GroupElement {
            linear: self.linear.iter().zip(&other.linear).map(|(a, b)| a + b).collect(),
            circular: self.circular.iter().zip(&other.circular).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            linear: self.linear.iter().map(|a| -a).collect(),
            circular: self.circular.iter().map(|a| a.conj()).collect(),
        }
    }

    /// self composed with the inverse of `other`; composing the result with
    /// `other` returns self.
    pub fn difference(&self, other: &GroupElement) -> Result<GroupElement> {
        self.compose(&other.inverse())
    }
}

/// Independent per-edge, per-coordinate noise: Gaussian variances for the
/// linear block, von Mises concentrations for the circular block. Row e
/// describes edge e.
#[derive(Debug, Clone)]
pub struct ProductNoiseModel {
    pub linear_variances: Vec<Vec<f64>>,
    pub kappa: Vec<Vec<f64>>,
}

impl ProductNoiseModel {
    /// Same noise on every edge.
    pub fn common(variances: &[f64], kappas: &[f64], m: usize) -> Self {
        ProductNoiseModel {
            linear_variances: vec![variances.to_vec(); m],
            kappa: vec![kappas.to_vec(); m],
        }
    }

    /// Checks shape consistency against `m` edges and returns (d, q).
    pub fn validate(&self, m: usize) -> Result<(usize, usize)> {
        if self.linear_variances.len() != m || self.kappa.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "noise rows ({}, {}) != edge count {m}",
                self.linear_variances.len(),
                self.kappa.len()
            )));
        }
        let d = self.linear_variances.first().map_or(0, Vec::len);
        let q = self.kappa.first().map_or(0, Vec::len);
        if d + q == 0 {
            return Err(Error::InvalidParameter("noise model has no coordinates".into()));
        }
        for row in &self.linear_variances {
            if row.len() != d {
                return Err(Error::DimensionMismatch("ragged variance rows".into()));
            }
            if row.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter("variances must be finite and > 0".into()));
            }
        }
        for row in &self.kappa {
            if row.len() != q {
                return Err(Error::DimensionMismatch("ragged concentration rows".into()));
            }
            if row.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
                return Err(Error::InvalidParameter(
                    "concentrations must be finite and > 0".into(),
                ));
            }
        }
        Ok((d, q))
    }

    fn linear_column(&self, j: usize) -> Vec<f64> {
        self.linear_variances.iter().map(|row| row[j]).collect()
    }

    fn kappa_column(&self, k: usize) -> Vec<f64> {
        self.kappa.iter().map(|row| row[k]).collect()
    }

    /// Per-edge Fisher block: diag(1/sigma_1^2 .. 1/sigma_d^2,
    /// kappa_1 A(kappa_1) .. kappa_q A(kappa_q)), linear coordinates first.
    pub fn edge_fisher_block(&self, e: usize) -> Result<EdgeFisherBlock> {
        let d = self.linear_variances[e].len();
        let q = self.kappa[e].len();
        let mut diag = Vec::with_capacity(d + q);
        for &v in &self.linear_variances[e] {
            diag.push(1.0 / v);
        }
        for &k in &self.kappa[e] {
            diag.push(k * bessel_ratio(k)?);
        }
        Ok(EdgeFisherBlock { block: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)) })
    }
}

/// Per-edge Fisher information block, (d+q) square.
#[derive(Debug, Clone)]
pub struct EdgeFisherBlock {
    pub block: DMatrix<f64>,
}

/// Knobs for the circular sub-estimators inside the product solver.
#[derive(Debug, Clone)]
pub struct ProductOptions {
    pub ref_vertex: usize,
    /// Seeds the random phase initialization; circular coordinate k draws
    /// from stream k of this seed.
    pub seed: u64,
    /// Power-iteration rounds before switching to the critical-point
    /// refinement. `None` switches when the power stage converges (or the
    /// round budget runs out), which is the reliable default: refining from
    /// the settled eigenvector state avoids the spurious local maxima a
    /// half-mixed start can climb into.
    pub power_rounds: Option<usize>,
    /// Stationarity defect threshold for the refinement.
    pub threshold: f64,
    pub max_rounds: usize,
}

impl Default for ProductOptions {
    fn default() -> Self {
        ProductOptions {
            ref_vertex: 0,
            seed: 0,
            power_rounds: None,
            threshold: 1e-9,
            max_rounds: 10_000,
        }
    }
}

/// Product-space estimate at the reference gauge: the reference vertex
/// carries the group identity.
#[derive(Debug, Clone)]
pub struct ProductEstimate {
    /// Per-vertex estimates.
    pub elements: Vec<GroupElement>,
    /// Fitted edge differences implied by the vertex estimates.
    pub edge_estimates: Vec<GroupElement>,
    /// Max weighted-current residual per linear coordinate.
    pub linear_residuals: Vec<f64>,
    /// Stationarity report per circular coordinate.
    pub circular_reports: Vec<CriticalPointReport>,
    pub circular_converged: Vec<bool>,
}

fn split_measurements(
    graph: &Graph,
    r: &[GroupElement],
    d: usize,
    q: usize,
) -> Result<(DMatrix<f64>, Vec<Vec<Complex64>>)> {
    let m = graph.edge_count();
    if r.len() != m {
        return Err(Error::DimensionMismatch("measurement count != edge count".into()));
    }
    for g in r {
        g.validate()?;
        if g.dims() != (d, q) {
            return Err(Error::DimensionMismatch(format!(
                "measurement shape {:?} != noise shape ({d}, {q})",
                g.dims()
            )));
        }
    }
    let linear = DMatrix::from_fn(m, d, |e, j| r[e].linear[j]);
    let circular = (0..q)
        .map(|k| r.iter().map(|g| g.circular[k]).collect())
        .collect();
    Ok((linear, circular))
}

/// Exact ML estimate in R^d x T^q. Linear coordinates solve the weighted
/// least-squares system in closed form; each circular coordinate runs the
/// regularized power iteration from a seeded random start and then the
/// critical-point refinement.
pub fn ml_estimate_product(
    graph: &Graph,
    r: &[GroupElement],
    model: &ProductNoiseModel,
    opts: &ProductOptions,
) -> Result<ProductEstimate> {
    let n = graph.vertex_count();
    let m = graph.edge_count();
    let (d, q) = model.validate(m)?;
    if opts.ref_vertex >= n {
        return Err(Error::UnknownVertex(format!("reference index {}", opts.ref_vertex)));
    }
    if !graph.is_connected() {
        return Err(Error::Disconnected("estimation needs a connected graph".into()));
    }
    let (linear_r, circular_r) = split_measurements(graph, r, d, q)?;
    let inc = IncidenceSet::build(graph, opts.ref_vertex)?;

    let mut linear_x = DMatrix::zeros(n, d);
    let mut linear_residuals = Vec::with_capacity(d);
    for j in 0..d {
        let sub_model = NoiseModel::DiagonalScalar { variances: model.linear_column(j) };
        let sub_r = DMatrix::from_column_slice(m, 1, linear_r.column(j).as_slice());
        let est = gaussian::ml_estimate(&inc, &sub_r, &sub_model)?;
        linear_x.set_column(j, &est.x_hat.column(0));
        linear_residuals.push(gaussian::kirchhoff_residual(&inc, &est.residual, &sub_model)?);
    }

    let mut circular_x: Vec<Vec<Complex64>> = Vec::with_capacity(q);
    let mut circular_reports = Vec::with_capacity(q);
    let mut circular_converged = Vec::with_capacity(q);
    for (k, col) in circular_r.iter().enumerate() {
        let kappa = model.kappa_column(k);
        let beta = kappa.iter().sum::<f64>() / m as f64;
        let sub_model = CircleModel::per_edge(kappa);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(k as u64);
        let state = AmplitudePhaseState::random_init(n, &mut rng);
        let cap = opts.power_rounds.unwrap_or(opts.max_rounds);
        let warm = run_local_power(graph, &sub_model, col, state, beta, opts.threshold, cap)?;
        let budget = opts.max_rounds.saturating_sub(warm.rounds).max(1);
        let run = hybrid_ml_refine(
            graph,
            &sub_model,
            col,
            &warm.state.phases,
            max_vertex_load(graph, &sub_model)?,
            opts.threshold,
            budget,
        )?;
        let anchor = run.phases[opts.ref_vertex].conj();
        circular_x.push(run.phases.iter().map(|x| x * anchor).collect());
        circular_reports.push(run.report);
        circular_converged.push(run.converged);
    }

    let elements: Vec<GroupElement> = (0..n)
        .map(|v| GroupElement {
            linear: (0..d).map(|j| linear_x[(v, j)]).collect(),
            circular: (0..q).map(|k| circular_x[k][v]).collect(),
        })
        .collect();
    let edge_estimates: Vec<GroupElement> = graph
        .edges()
        .iter()
        .map(|edge| elements[edge.target].difference(&elements[edge.source]))
        .collect::<Result<_>>()?;
    Ok(ProductEstimate {
        elements,
        edge_estimates,
        linear_residuals,
        circular_reports,
        circular_converged,
    })
}

/// Joint log-likelihood of vertex assignment `x` given measurements `r`:
/// Gaussian terms per linear coordinate plus von Mises terms per circular
/// coordinate, summed over edges.
pub fn log_likelihood_product(
    graph: &Graph,
    model: &ProductNoiseModel,
    r: &[GroupElement],
    x: &[GroupElement],
) -> Result<f64> {
    let m = graph.edge_count();
    let n = graph.vertex_count();
    let (d, q) = model.validate(m)?;
    if x.len() != n {
        return Err(Error::DimensionMismatch("assignment length != vertex count".into()));
    }
    for g in x {
        g.validate()?;
        if g.dims() != (d, q) {
            return Err(Error::DimensionMismatch("assignment shape != noise shape".into()));
        }
    }
    let (linear_r, circular_r) = split_measurements(graph, r, d, q)?;
    let mut ll = 0.0;
    for (e, edge) in graph.edges().iter().enumerate() {
        for j in 0..d {
            let fitted = x[edge.target].linear[j] - x[edge.source].linear[j];
            let dev = linear_r[(e, j)] - fitted;
            let v = model.linear_variances[e][j];
            ll -= 0.5 * (dev * dev / v + (std::f64::consts::TAU * v).ln());
        }
        for k in 0..q {
            let fitted = x[edge.target].circular[k] * x[edge.source].circular[k].conj();
            let kap = model.kappa[e][k];
            ll += kap * (circular_r[k][e] * fitted.conj()).re;
            ll -= (std::f64::consts::TAU).ln() + crate::circle::ln_bessel_i0(kap)?;
        }
    }
    Ok(ll)
}

/// Fisher information of the product problem at the reference gauge,
/// coordinate-major: one weighted Laplacian block per coordinate (linear
/// coordinates first), zero between coordinates by independence.
#[derive(Debug, Clone)]
pub struct ProductFisherReport {
    pub fisher: DMatrix<f64>,
    pub det_direct: f64,
    /// Product over coordinates of the per-coordinate weighted tree sums.
    pub det_factorized: f64,
    /// Sum over tuples of one spanning tree per coordinate of the tuple's
    /// weight product; populated for small instances only.
    pub det_multi_tree: Option<f64>,
    pub edge_blocks: Vec<EdgeFisherBlock>,
    pub estimator_covariance: DMatrix<f64>,
}

impl ProductFisherReport {
    /// Sum of error variances across all coordinates and free vertices.
    pub fn trace_inverse(&self) -> f64 {
        self.estimator_covariance.trace()
    }
}

/// Gate for the multi-spanning-tree enumeration cross-check.
const MULTI_TREE_COORD_LIMIT: usize = 3;
const MULTI_TREE_EDGE_LIMIT: usize = 10;
const MULTI_TREE_TUPLE_LIMIT: usize = 5_000_000;

pub fn fisher_report_product(
    graph: &Graph,
    model: &ProductNoiseModel,
    ref_vertex: usize,
) -> Result<ProductFisherReport> {
    let m = graph.edge_count();
    let (d, q) = model.validate(m)?;
    if !graph.is_connected() {
        return Err(Error::Disconnected("Fisher analysis needs a connected graph".into()));
    }
    let inc = IncidenceSet::build(graph, ref_vertex)?;
    let p = d + q;
    let reduced = graph.vertex_count() - 1;

    // Coordinate weight vectors, linear first.
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..d {
        weights.push(model.linear_column(j).iter().map(|v| 1.0 / v).collect());
    }
    for k in 0..q {
        weights.push(
            model
                .kappa_column(k)
                .iter()
                .map(|&kap| bessel_ratio(kap).map(|a| kap * a))
                .collect::<Result<_>>()?,
        );
    }

    let mut fisher = DMatrix::zeros(p * reduced, p * reduced);
    let mut det_factorized = 1.0;
    for (c, w) in weights.iter().enumerate() {
        let mut scaled = inc.d_w.clone();
        for (e, &we) in w.iter().enumerate() {
            scaled.column_mut(e).scale_mut(we);
        }
        let block = scaled * inc.d_w.transpose();
        fisher.view_mut((c * reduced, c * reduced), (reduced, reduced)).copy_from(&block);
        det_factorized *= inc.weighted_tree_sum(w)?;
    }
    let det_direct = fisher.clone().lu().determinant();

    let det_multi_tree = if p <= MULTI_TREE_COORD_LIMIT && m <= MULTI_TREE_EDGE_LIMIT {
        let trees = inc.enumerate_spanning_trees(graph)?;
        if trees.len().pow(p as u32) <= MULTI_TREE_TUPLE_LIMIT {
            // Tree-products per coordinate, then the sum over tuples
            // factorizes as the product of per-coordinate sums; enumerate
            // the tuples anyway so the cross-check exercises the
            // multi-tree indexing rather than the shortcut.
            let per_coord: Vec<Vec<f64>> = weights
                .iter()
                .map(|w| {
                    trees
                        .iter()
                        .map(|t| t.iter().map(|&e| w[e]).product::<f64>())
                        .collect()
                })
                .collect();
            let mut total = 0.0;
            let mut tuple = vec![0usize; p];
            loop {
                total += (0..p).map(|c| per_coord[c][tuple[c]]).product::<f64>();
                let mut c = 0;
                loop {
                    if c == p {
                        break;
                    }
                    tuple[c] += 1;
                    if tuple[c] < trees.len() {
                        break;
                    }
                    tuple[c] = 0;
                    c += 1;
                }
                if c == p {
                    break;
                }
            }
            Some(total)
        } else {
            None
        }
    } else {
        None
    };

    let estimator_covariance = fisher
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("product Fisher matrix".into()))?
        .inverse();
    let edge_blocks =
        (0..m).map(|e| model.edge_fisher_block(e)).collect::<Result<Vec<_>>>()?;
    Ok(ProductFisherReport {
        fisher,
        det_direct,
        det_factorized,
        det_multi_tree,
        edge_blocks,
        estimator_covariance,
    })
}

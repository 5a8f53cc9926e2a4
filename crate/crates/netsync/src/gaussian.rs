use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::incidence::IncidenceSet;

/// Edge-noise covariance for real-valued measurements.
///
/// Vector variants use coordinate-major stacking throughout: the flat index
/// of (coordinate c, edge e) is `c * m + e`, matching the Kronecker layout
/// of the estimator equations.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Equal variance sigma^2 on every edge, independent.
    IidScalar { sigma2: f64 },
    /// Independent edges with per-edge variances.
    DiagonalScalar { variances: Vec<f64> },
    /// Arbitrary m x m covariance across edges.
    FullScalar { covariance: DMatrix<f64> },
    /// d-dimensional measurements, every edge sharing one d x d covariance,
    /// independent across edges.
    IidVector { covariance: DMatrix<f64> },
    /// Arbitrary md x md covariance, coordinate-major.
    FullVector { covariance: DMatrix<f64> },
}

impl NoiseModel {
    /// Measurement dimension per edge.
    pub fn dim(&self, m: usize) -> Result<usize> {
        match self {
            NoiseModel::IidScalar { .. }
            | NoiseModel::DiagonalScalar { .. }
            | NoiseModel::FullScalar { .. } => Ok(1),
            NoiseModel::IidVector { covariance } => Ok(covariance.nrows()),
            NoiseModel::FullVector { covariance } => {
                let rows = covariance.nrows();
                if m == 0 || rows % m != 0 {
                    return Err(Error::DimensionMismatch(format!(
                        "full vector covariance has {rows} rows, not a multiple of m = {m}"
                    )));
                }
                Ok(rows / m)
            }
        }
    }

    /// Validates shape and positive definiteness against an m-edge graph.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            NoiseModel::IidScalar { sigma2 } => {
                if !(*sigma2 > 0.0) {
                    return Err(Error::InvalidParameter(format!("sigma2 = {sigma2} must be > 0")));
                }
            }
            NoiseModel::DiagonalScalar { variances } => {
                if variances.len() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "{} variances for {m} edges",
                        variances.len()
                    )));
                }
                if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
                    return Err(Error::InvalidParameter(format!("variance {v} must be > 0")));
                }
            }
            NoiseModel::FullScalar { covariance } => check_spd(covariance, m)?,
            NoiseModel::IidVector { covariance } => check_spd(covariance, covariance.nrows())?,
            NoiseModel::FullVector { covariance } => {
                self.dim(m)?;
                check_spd(covariance, covariance.nrows())?;
            }
        }
        Ok(())
    }
}

fn check_spd(r: &DMatrix<f64>, expected: usize) -> Result<()> {
    if r.nrows() != expected || r.ncols() != expected {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, expected {expected}x{expected}",
            r.nrows(),
            r.ncols()
        )));
    }
    let scale = r.abs().max().max(f64::MIN_POSITIVE);
    if (r - r.transpose()).abs().max() > 1e-10 * scale {
        return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
    }
    let eig = r.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    if !(eig.min() > 1e-12 * max) {
        return Err(Error::NotPositiveDefinite(format!(
            "eigenvalue ratio {:.3e} / {:.3e} below 1e-12",
            eig.min(),
            max
        )));
    }
    Ok(())
}

/// Gauge fixing applied to the vertex solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// Reference vertex pinned to zero.
    Reference(usize),
    /// Solution shifted to zero mean over all vertices.
    MeanZero,
}

/// Result of a real-space estimate. Matrices are n x d (vertices) and
/// m x d (edges) with coordinates in columns; scalar problems have d = 1.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub x_hat: DMatrix<f64>,
    pub omega_hat: DMatrix<f64>,
    pub residual: DMatrix<f64>,
    pub gauge: Gauge,
}

/// Fisher information at the reference gauge, with the determinant computed
/// both directly and through the spanning-tree route.
#[derive(Debug, Clone)]
pub struct FisherReport {
    pub fisher: DMatrix<f64>,
    pub det_direct: f64,
    pub det_tree_formula: f64,
    pub estimator_covariance: DMatrix<f64>,
}

impl FisherReport {
    /// Trace of the inverse Fisher matrix (sum of error variances).
    pub fn trace_inverse(&self) -> f64 {
        self.estimator_covariance.trace()
    }
}

/// Maximum-likelihood estimate of vertex offsets from edge differences.
/// `r` is m x d with one measurement coordinate per column.
pub fn ml_estimate(inc: &IncidenceSet, r: &DMatrix<f64>, model: &NoiseModel) -> Result<EstimateResult> {
    let m = inc.d.ncols();
    model.validate(m)?;
    let d = model.dim(m)?;
    if r.nrows() != m || r.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "measurements are {}x{}, expected {m}x{d}",
            r.nrows(),
            r.ncols()
        )));
    }
    let chol = |mat: DMatrix<f64>| {
        mat.cholesky()
            .ok_or_else(|| Error::Disconnected("normal equations are singular".into()))
    };
    let x_reduced: DMatrix<f64> = match model {
        // The iid estimate does not depend on sigma^2; likewise the shared
        // covariance drops out of the iid vector estimate.
        NoiseModel::IidScalar { .. } | NoiseModel::IidVector { .. } => {
            chol(inc.laplacian_reduced.clone())?.solve(&(&inc.d_w * r))
        }
        NoiseModel::DiagonalScalar { variances } => {
            let w: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
            let dw_w = scale_columns(&inc.d_w, &w);
            chol(&dw_w * inc.d_w.transpose())?.solve(&(dw_w * r))
        }
        NoiseModel::FullScalar { covariance } => {
            let rinv = chol(covariance.clone())?.inverse();
            let dw_rinv = &inc.d_w * rinv;
            chol(&dw_rinv * inc.d_w.transpose())?.solve(&(dw_rinv * r))
        }
        NoiseModel::FullVector { covariance } => {
            let rinv = chol(covariance.clone())?.inverse();
            let b = kron_identity_left(d, &inc.d_w);
            let b_rinv = &b * rinv;
            let fisher = &b_rinv * b.transpose();
            let stacked = stack_columns(r);
            let x = chol(fisher)?.solve(&(b_rinv * stacked));
            unstack_columns(&x, d)
        }
    };
    let x_hat = insert_zero_row(&x_reduced, inc.ref_vertex);
    let omega_hat = inc.d.transpose() * &x_hat;
    let residual = r - &omega_hat;
    Ok(EstimateResult { x_hat, omega_hat, residual, gauge: Gauge::Reference(inc.ref_vertex) })
}

/// Weighted net residual flow into each vertex, D R^-1 (r - omega_hat),
/// returned as the maximum absolute entry over vertices and coordinates.
/// Vanishes at the maximum-likelihood point.
pub fn kirchhoff_residual(inc: &IncidenceSet, residual: &DMatrix<f64>, model: &NoiseModel) -> Result<f64> {
    let m = inc.d.ncols();
    let d = model.dim(m)?;
    if residual.nrows() != m || residual.ncols() != d {
        return Err(Error::DimensionMismatch("residual shape does not match model".into()));
    }
    let weighted: DMatrix<f64> = match model {
        NoiseModel::IidScalar { sigma2 } => residual / *sigma2,
        NoiseModel::DiagonalScalar { variances } => {
            let mut out = residual.clone();
            for (e, v) in variances.iter().enumerate() {
                out.row_mut(e).scale_mut(1.0 / v);
            }
            out
        }
        NoiseModel::FullScalar { covariance } => covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?
            .solve(residual),
        NoiseModel::IidVector { covariance } => {
            let rinv = covariance
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?
                .inverse();
            residual * rinv
        }
        NoiseModel::FullVector { covariance } => {
            let stacked = stack_columns(residual);
            let solved = covariance
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?
                .solve(&stacked);
            unstack_columns(&solved, d)
        }
    };
    Ok((&inc.d * weighted).abs().max())
}

/// Mean-zero solution of the normal equations via the rank-one completion
/// (L + mu/n 1 1^T) x = D r. The result does not depend on mu > 0.
pub fn mean_zero_gauge(inc: &IncidenceSet, r: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu = {mu} must be > 0")));
    }
    let n = inc.d.nrows();
    if r.nrows() != inc.d.ncols() {
        return Err(Error::DimensionMismatch("measurement rows != edge count".into()));
    }
    let ones = DMatrix::from_element(n, n, mu / n as f64);
    let completed = &inc.laplacian + ones;
    let chol = completed
        .cholesky()
        .ok_or_else(|| Error::Disconnected("completed Laplacian is singular".into()))?;
    Ok(chol.solve(&(&inc.d * r)))
}

/// Fisher information of the reduced (reference-gauge) problem.
pub fn fisher_report(graph: &Graph, inc: &IncidenceSet, model: &NoiseModel) -> Result<FisherReport> {
    let m = inc.d.ncols();
    let n = inc.d.nrows();
    model.validate(m)?;
    if !graph.is_connected() {
        return Err(Error::Disconnected("Fisher analysis needs a connected graph".into()));
    }
    let fisher: DMatrix<f64> = match model {
        NoiseModel::IidScalar { sigma2 } => &inc.laplacian_reduced / *sigma2,
        NoiseModel::DiagonalScalar { variances } => {
            let w: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
            scale_columns(&inc.d_w, &w) * inc.d_w.transpose()
        }
        NoiseModel::FullScalar { covariance } => {
            let rinv = covariance.clone().cholesky().unwrap().inverse();
            &inc.d_w * rinv * inc.d_w.transpose()
        }
        NoiseModel::IidVector { covariance } => {
            let rinv = covariance.clone().cholesky().unwrap().inverse();
            rinv.kronecker(&inc.laplacian_reduced)
        }
        NoiseModel::FullVector { covariance } => {
            let d = model.dim(m)?;
            let rinv = covariance.clone().cholesky().unwrap().inverse();
            let b = kron_identity_left(d, &inc.d_w);
            &b * rinv * b.transpose()
        }
    };
    let det_direct = fisher.determinant();
    let det_tree_formula = tree_route_det(graph, inc, model, n, m)?;
    let estimator_covariance = fisher
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Fisher matrix is not positive definite".into()))?
        .inverse();
    Ok(FisherReport { fisher, det_direct, det_tree_formula, estimator_covariance })
}

/// Spanning-tree evaluation of det F. Exhaustive enumeration is used where
/// affordable; beyond those sizes the weighted-determinant form is returned.
fn tree_route_det(
    graph: &Graph,
    inc: &IncidenceSet,
    model: &NoiseModel,
    n: usize,
    m: usize,
) -> Result<f64> {
    const ENUM_EDGES: usize = 16;
    const PAIR_EDGES: usize = 10;
    match model {
        NoiseModel::IidScalar { sigma2 } => {
            let t = if m <= ENUM_EDGES {
                inc.enumerate_spanning_trees(graph)?.len() as f64
            } else {
                inc.spanning_tree_count(graph).value
            };
            Ok(t / sigma2.powi(n as i32 - 1))
        }
        NoiseModel::DiagonalScalar { variances } => {
            let w: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
            if m <= ENUM_EDGES {
                Ok(inc
                    .enumerate_spanning_trees(graph)?
                    .iter()
                    .map(|t| t.iter().map(|&e| w[e]).product::<f64>())
                    .sum())
            } else {
                inc.weighted_tree_sum(&w)
            }
        }
        NoiseModel::FullScalar { covariance } => {
            if m <= PAIR_EDGES {
                let rinv = covariance.clone().cholesky().unwrap().inverse();
                let trees = inc.enumerate_spanning_trees(graph)?;
                let mut total = 0.0;
                for s in &trees {
                    for s2 in &trees {
                        let alpha = inc.tree_pair_sign(s, s2, graph)?;
                        let minor = rinv.select_rows(s).select_columns(s2).determinant();
                        total += alpha * minor;
                    }
                }
                Ok(total)
            } else {
                let rinv = covariance.clone().cholesky().unwrap().inverse();
                Ok((&inc.d_w * rinv * inc.d_w.transpose()).determinant())
            }
        }
        NoiseModel::IidVector { covariance } => {
            let d = covariance.nrows() as i32;
            let t = inc.spanning_tree_count(graph);
            let det_r = covariance.determinant();
            Ok(t.value.powi(d) / det_r.powi(n as i32 - 1))
        }
        NoiseModel::FullVector { covariance } => {
            let d = model.dim(m)?;
            let rinv = covariance.clone().cholesky().unwrap().inverse();
            if m <= PAIR_EDGES {
                let trees = inc.enumerate_spanning_trees(graph)?;
                if trees.len().pow(d as u32) <= 4096 {
                    return multi_tree_det(inc, graph, &trees, &rinv, d, m);
                }
            }
            let b = kron_identity_left(d, &inc.d_w);
            Ok((&b * rinv * b.transpose()).determinant())
        }
    }
}

/// det F for the coupled vector model as a sum over d-tuples of spanning
/// trees (S_1..S_d), with sign prod_j det(D_W S_j D_W S'_j^T) and the
/// matching minor of R^-1 in coordinate-major indexing.
fn multi_tree_det(
    inc: &IncidenceSet,
    graph: &Graph,
    trees: &[Vec<usize>],
    rinv: &DMatrix<f64>,
    d: usize,
    m: usize,
) -> Result<f64> {
    let k = trees.len();
    let signs: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| inc.tree_pair_sign(&trees[i], &trees[j], graph).unwrap()).collect())
        .collect::<Vec<_>>();
    let tuples: Vec<Vec<usize>> = multi_indices(k, d);
    let flat = |tuple: &[usize]| -> Vec<usize> {
        let mut idx = Vec::with_capacity(d * (graph.vertex_count() - 1));
        for (coord, &ti) in tuple.iter().enumerate() {
            idx.extend(trees[ti].iter().map(|&e| coord * m + e));
        }
        idx
    };
    let mut total = 0.0;
    for s in &tuples {
        let rows = flat(s);
        for s2 in &tuples {
            let alpha: f64 = (0..d).map(|j| signs[s[j]][s2[j]]).product();
            let minor = rinv.select_rows(&rows).select_columns(&flat(s2)).determinant();
            total += alpha * minor;
        }
    }
    Ok(total)
}

fn multi_indices(base: usize, digits: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..digits {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..base).map(move |b| {
                    let mut next = prefix.clone();
                    next.push(b);
                    next
                })
            })
            .collect();
    }
    out
}

fn scale_columns(mat: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = mat.clone();
    for (e, &we) in w.iter().enumerate() {
        out.column_mut(e).scale_mut(we);
    }
    out
}

/// I_d kron M in coordinate-major layout (coordinate blocks on the outside).
fn kron_identity_left(d: usize, mat: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = mat.shape();
    let mut out = DMatrix::zeros(d * r, d * c);
    for k in 0..d {
        out.view_mut((k * r, k * c), (r, c)).copy_from(mat);
    }
    out
}

/// m x d matrix -> coordinate-major md vector (column after column).
fn stack_columns(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, d) = mat.shape();
    let mut out = DMatrix::zeros(m * d, 1);
    for c in 0..d {
        out.view_mut((c * m, 0), (m, 1)).copy_from(&mat.column(c));
    }
    out
}

fn unstack_columns(vec: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let rows = vec.nrows() / d;
    let mut out = DMatrix::zeros(rows, d);
    for c in 0..d {
        out.column_mut(c).copy_from(&vec.view((c * rows, 0), (rows, 1)));
    }
    out
}

fn insert_zero_row(reduced: &DMatrix<f64>, at: usize) -> DMatrix<f64> {
    reduced.clone().insert_row(at, 0.0)
}

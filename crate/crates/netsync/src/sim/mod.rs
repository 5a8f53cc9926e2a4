//! Round-based Monte Carlo simulator. A configuration names a graph, a
//! measurement space, a noise sweep, and a set of estimators; every
//! (sweep value, trial) pair draws one truth assignment and one noisy data
//! set, runs all configured estimators on that same data, and records an
//! error metric with round and message counts. Local algorithms run through
//! the message-passing harness; direct and eigenvector methods run as
//! centralized references.

pub mod harness;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abelian::{
    fisher_report_product, ml_estimate_product, GroupElement, ProductNoiseModel, ProductOptions,
};
use crate::circle::{
    circular_error, fisher_report_circle, global_eigen_estimate, max_vertex_load,
    sample_von_mises, CircleModel, GlobalEigenKind,
};
use crate::error::{Error, Result};
use crate::gaussian::{self, NoiseModel};
use crate::graph::Graph;
use crate::incidence::IncidenceSet;
use crate::io;

/// Where the simulated network comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    File { path: String },
    Ring { n: usize },
    Path { n: usize },
    Complete { n: usize },
    Star { n: usize },
    /// Uniform random spanning tree plus `extra` distinct non-tree edges.
    RandomConnected { n: usize, extra: usize, seed: u64 },
}

impl GraphSource {
    /// Builds the graph; `base` resolves relative file paths.
    pub fn resolve(&self, base: Option<&Path>) -> Result<Graph> {
        match self {
            GraphSource::File { path } => {
                let p = Path::new(path);
                let full = match (p.is_relative(), base) {
                    (true, Some(b)) => b.join(p),
                    _ => p.to_path_buf(),
                };
                io::load_graph(&full)
            }
            GraphSource::Ring { n } => Graph::ring(*n),
            GraphSource::Path { n } => Graph::path(*n),
            GraphSource::Complete { n } => Graph::complete(*n),
            GraphSource::Star { n } => Graph::star(*n),
            GraphSource::RandomConnected { n, extra, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Graph::random_connected(*n, *extra, &mut rng)
            }
        }
    }
}

/// Measurement space of a simulation. The sweep list holds noise levels:
/// sigma for the real space, kappa for the circle, and kappa for the product
/// (whose linear noise stays at the fixed sigma below).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    Real {
        #[serde(default = "default_dim")]
        d: usize,
    },
    Circle,
    Product {
        d: usize,
        q: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

fn default_dim() -> usize {
    1
}

fn default_sigma() -> f64 {
    0.3
}

/// Estimators the simulator knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "direct_ML")]
    DirectMl,
    #[serde(rename = "jacobi")]
    Jacobi,
    #[serde(rename = "global_Q")]
    GlobalQ,
    #[serde(rename = "global_A")]
    GlobalA,
    #[serde(rename = "local_Q")]
    LocalQ,
    #[serde(rename = "hybrid_ML")]
    HybridMl,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::DirectMl => "direct_ML",
            EstimatorKind::Jacobi => "jacobi",
            EstimatorKind::GlobalQ => "global_Q",
            EstimatorKind::GlobalA => "global_A",
            EstimatorKind::LocalQ => "local_Q",
            EstimatorKind::HybridMl => "hybrid_ML",
        }
    }

    fn supports(&self, space: &SpaceSpec) -> bool {
        match space {
            SpaceSpec::Real { .. } => {
                matches!(self, EstimatorKind::DirectMl | EstimatorKind::Jacobi)
            }
            SpaceSpec::Circle => matches!(
                self,
                EstimatorKind::GlobalQ
                    | EstimatorKind::GlobalA
                    | EstimatorKind::LocalQ
                    | EstimatorKind::HybridMl
            ),
            SpaceSpec::Product { .. } => matches!(self, EstimatorKind::DirectMl),
        }
    }
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_rounds() -> usize {
    10_000
}

/// Simulation configuration; JSON files mirror this shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub graph: GraphSource,
    pub space: SpaceSpec,
    /// Noise levels to sweep (sigma or kappa, per the space).
    pub sweep: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub trials: usize,
    pub seed: u64,
    /// Convergence tolerance; for the hybrid refinement this is the
    /// stationarity-defect threshold.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Regularization for the circle-space power iteration; the default
    /// (absent) uses the mean concentration, which keeps the leading
    /// eigenvalue dominant in magnitude on frustrated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Round cap for the hybrid estimator's power stage; switch-over to the
    /// refinement happens at convergence or the cap, whichever comes first.
    /// Absent, the power stage gets the full round budget: refining from the
    /// settled state avoids the spurious maxima a half-mixed start can reach.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_rounds: Option<usize>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.trials as u64 >= 1 << 32 || self.sweep.len() >= 1 << 16 {
            return Err(Error::TooLarge(
                "trial/sweep counts exceed the RNG stream layout".into(),
            ));
        }
        if self.sweep.is_empty() {
            return Err(Error::InvalidParameter("sweep list is empty".into()));
        }
        if self.sweep.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter("sweep values must be finite and > 0".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators configured".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be > 0".into()));
        }
        if self.max_rounds == 0 || self.power_rounds == Some(0) {
            return Err(Error::InvalidParameter("round budgets must be >= 1".into()));
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::InvalidParameter("beta must be finite and >= 0".into()));
            }
        }
        if let SpaceSpec::Real { d } = self.space {
            if d == 0 {
                return Err(Error::InvalidParameter("real dimension must be >= 1".into()));
            }
        }
        if let SpaceSpec::Product { d, q, sigma } = self.space {
            if q == 0 {
                return Err(Error::InvalidParameter(
                    "product space needs at least one circular coordinate".into(),
                ));
            }
            let _ = d;
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidParameter("sigma must be finite and > 0".into()));
            }
        }
        for est in &self.estimators {
            if !est.supports(&self.space) {
                return Err(Error::InvalidParameter(format!(
                    "estimator {} does not apply to this space",
                    est.name()
                )));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: SimConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

/// One estimator run on one trial's data.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub sweep: f64,
    pub estimator: &'static str,
    pub trial: usize,
    /// Circular error for phase spaces, mean squared vertex error otherwise;
    /// NaN when the estimator failed outright.
    pub metric: f64,
    pub rounds: usize,
    pub converged: bool,
    pub messages: u64,
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub sweep: f64,
    pub estimator: &'static str,
    /// Mean metric over trials that produced a finite value.
    pub mean_metric: f64,
    pub trials: usize,
    pub converged: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    /// (sweep, trace of the inverse Fisher information) per sweep value.
    pub fisher_reference: Vec<(f64, f64)>,
}

/// Vertex truth labels for one trial.
#[derive(Debug, Clone)]
pub enum TruthAssignment {
    Real(DMatrix<f64>),
    Circle(Vec<Complex64>),
    Product(Vec<GroupElement>),
}

/// Edge measurements for one trial.
#[derive(Debug, Clone)]
pub enum EdgeData {
    Real(DMatrix<f64>),
    Circle(Vec<Complex64>),
    Product(Vec<GroupElement>),
}

/// Noise level of a single trial, derived from the sweep value.
#[derive(Debug, Clone, Copy)]
pub enum TrialNoise {
    Real { sigma: f64 },
    Circle { kappa: f64 },
    Product { sigma: f64, kappa: f64 },
}

/// Truth prior: uniform reals in [0, 10), uniform phases. Estimators are
/// gauge-invariant, so the scale is immaterial.
pub fn sample_truth<R: Rng + ?Sized>(rng: &mut R, n: usize, space: &SpaceSpec) -> TruthAssignment {
    let phase = |rng: &mut R| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
    match space {
        SpaceSpec::Real { d } => {
            TruthAssignment::Real(DMatrix::from_fn(n, *d, |_, _| rng.random_range(0.0..10.0)))
        }
        SpaceSpec::Circle => TruthAssignment::Circle((0..n).map(|_| phase(rng)).collect()),
        SpaceSpec::Product { d, q, .. } => TruthAssignment::Product(
            (0..n)
                .map(|_| GroupElement {
                    linear: (0..*d).map(|_| rng.random_range(0.0..10.0)).collect(),
                    circular: (0..*q).map(|_| phase(rng)).collect(),
                })
                .collect(),
        ),
    }
}

/// Edge data r_e = (truth difference along e) composed with sampled noise.
pub fn generate_measurements<R: Rng + ?Sized>(
    rng: &mut R,
    graph: &Graph,
    truth: &TruthAssignment,
    noise: &TrialNoise,
) -> Result<EdgeData> {
    let one = Complex64::new(1.0, 0.0);
    match (truth, noise) {
        (TruthAssignment::Real(x), TrialNoise::Real { sigma }) => {
            let gauss = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
            let r = DMatrix::from_fn(graph.edge_count(), x.ncols(), |e, j| {
                let edge = &graph.edges()[e];
                x[(edge.target, j)] - x[(edge.source, j)] + sigma * gauss(rng)
            });
            Ok(EdgeData::Real(r))
        }
        (TruthAssignment::Circle(x), TrialNoise::Circle { kappa }) => {
            let r = graph
                .edges()
                .iter()
                .map(|e| {
                    sample_von_mises(rng, one, *kappa)
                        .map(|noise| x[e.target] * x[e.source].conj() * noise)
                })
                .collect::<Result<_>>()?;
            Ok(EdgeData::Circle(r))
        }
        (TruthAssignment::Product(x), TrialNoise::Product { sigma, kappa }) => {
            let gauss = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
            let r = graph
                .edges()
                .iter()
                .map(|e| {
                    let clean = x[e.target].difference(&x[e.source])?;
                    let linear =
                        clean.linear.iter().map(|v| v + sigma * gauss(rng)).collect();
                    let circular = clean
                        .circular
                        .iter()
                        .map(|z| sample_von_mises(rng, one, *kappa).map(|n| z * n))
                        .collect::<Result<_>>()?;
                    Ok(GroupElement { linear, circular })
                })
                .collect::<Result<_>>()?;
            Ok(EdgeData::Product(r))
        }
        _ => Err(Error::DimensionMismatch("truth and noise spaces disagree".into())),
    }
}

fn trial_noise(space: &SpaceSpec, sweep: f64) -> TrialNoise {
    match space {
        SpaceSpec::Real { .. } => TrialNoise::Real { sigma: sweep },
        SpaceSpec::Circle => TrialNoise::Circle { kappa: sweep },
        SpaceSpec::Product { sigma, .. } => TrialNoise::Product { sigma: *sigma, kappa: sweep },
    }
}

/// RNG sub-stream layout: sweep index in the top 16 bits, trial in the
/// middle 32, purpose in the bottom 16, so parallel trials reproduce exactly.
fn stream_id(sweep_idx: usize, trial: usize, purpose: u64) -> u64 {
    ((sweep_idx as u64) << 48) | ((trial as u64) << 16) | purpose
}

fn stream_rng(seed: u64, sweep_idx: usize, trial: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(sweep_idx, trial, purpose));
    rng
}

/// splitmix64 finalizer, for deriving independent 64-bit seeds.
fn mix_seed(seed: u64, id: u64) -> u64 {
    let mut z = seed.wrapping_add(id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PURPOSE_TRUTH: u64 = 0;
const PURPOSE_NOISE: u64 = 1;
const PURPOSE_INIT: u64 = 2;

fn mean_squared_vertex_error(x_hat: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let n = truth.nrows();
    let d = truth.ncols();
    let mut total = 0.0;
    for j in 0..d {
        for v in 0..n {
            let gauged_truth = truth[(v, j)] - truth[(0, j)];
            let gauged_hat = x_hat[(v, j)] - x_hat[(0, j)];
            total += (gauged_hat - gauged_truth).powi(2);
        }
    }
    total / ((n - 1) as f64 * d as f64)
}

struct TrialContext<'a> {
    graph: &'a Graph,
    inc: &'a IncidenceSet,
    config: &'a SimConfig,
    sweep_idx: usize,
    sweep: f64,
    trial: usize,
}

impl TrialContext<'_> {
    fn record(
        &self,
        estimator: EstimatorKind,
        metric: f64,
        rounds: usize,
        converged: bool,
        messages: u64,
    ) -> TrialRecord {
        TrialRecord {
            sweep: self.sweep,
            estimator: estimator.name(),
            trial: self.trial,
            metric,
            rounds,
            converged,
            messages,
        }
    }

    fn failed(&self, estimator: EstimatorKind) -> TrialRecord {
        self.record(estimator, f64::NAN, 0, false, 0)
    }
}

fn run_real_estimator(
    ctx: &TrialContext<'_>,
    estimator: EstimatorKind,
    truth: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> TrialRecord {
    match estimator {
        EstimatorKind::DirectMl => {
            let model = if r.ncols() == 1 {
                NoiseModel::IidScalar { sigma2: ctx.sweep * ctx.sweep }
            } else {
                NoiseModel::IidVector {
                    covariance: DMatrix::identity(r.ncols(), r.ncols()) * (ctx.sweep * ctx.sweep),
                }
            };
            match gaussian::ml_estimate(ctx.inc, r, &model) {
                Ok(est) => ctx.record(
                    estimator,
                    mean_squared_vertex_error(&est.x_hat, truth),
                    0,
                    true,
                    0,
                ),
                Err(_) => ctx.failed(estimator),
            }
        }
        EstimatorKind::Jacobi => {
            let damping = if ctx.graph.bipartition().is_some() { 0.5 } else { 1.0 };
            let init = vec![vec![0.0; r.ncols()]; ctx.graph.vertex_count()];
            match harness::harness_jacobi(
                ctx.graph,
                r,
                init,
                damping,
                ctx.config.tol,
                ctx.config.max_rounds,
            ) {
                Ok(run) => {
                    let x_hat = DMatrix::from_fn(ctx.graph.vertex_count(), r.ncols(), |v, j| {
                        run.state[v][j]
                    });
                    ctx.record(
                        estimator,
                        mean_squared_vertex_error(&x_hat, truth),
                        run.rounds,
                        run.converged,
                        run.messages,
                    )
                }
                Err(_) => ctx.failed(estimator),
            }
        }
        _ => ctx.failed(estimator),
    }
}

fn run_circle_estimator(
    ctx: &TrialContext<'_>,
    estimator: EstimatorKind,
    truth: &[Complex64],
    r: &[Complex64],
    init: &[Complex64],
) -> TrialRecord {
    let model = CircleModel::common(ctx.sweep, ctx.graph.edge_count());
    let beta = ctx.config.beta.unwrap_or(ctx.sweep);
    let ce = |phases: &[Complex64]| circular_error(phases, truth, 0);
    match estimator {
        EstimatorKind::GlobalQ | EstimatorKind::GlobalA => {
            let kind = if estimator == EstimatorKind::GlobalQ {
                GlobalEigenKind::Normalized
            } else {
                GlobalEigenKind::Adjacency
            };
            match global_eigen_estimate(ctx.graph, &model, r, kind, 0.0)
                .and_then(|est| ce(&est.phases))
            {
                Ok(metric) => ctx.record(estimator, metric, 0, true, 0),
                Err(_) => ctx.failed(estimator),
            }
        }
        EstimatorKind::LocalQ => {
            match harness::harness_local_power(
                ctx.graph,
                &model,
                r,
                init,
                beta,
                ctx.config.tol,
                ctx.config.max_rounds,
            ) {
                Ok(run) => {
                    let phases: Vec<Complex64> = run.state.iter().map(|s| s.phase).collect();
                    match ce(&phases) {
                        Ok(metric) => ctx.record(
                            estimator,
                            metric,
                            run.rounds,
                            run.converged,
                            run.messages,
                        ),
                        Err(_) => ctx.failed(estimator),
                    }
                }
                Err(_) => ctx.failed(estimator),
            }
        }
        EstimatorKind::HybridMl => {
            let cap = ctx.config.power_rounds.unwrap_or(ctx.config.max_rounds);
            let warm = match harness::harness_local_power(
                ctx.graph,
                &model,
                r,
                init,
                beta,
                ctx.config.tol,
                cap,
            ) {
                Ok(run) => run,
                Err(_) => return ctx.failed(estimator),
            };
            let start: Vec<Complex64> = warm.state.iter().map(|s| s.phase).collect();
            let shift = match max_vertex_load(ctx.graph, &model) {
                Ok(shift) => shift,
                Err(_) => return ctx.failed(estimator),
            };
            let budget = ctx.config.max_rounds.saturating_sub(warm.rounds).max(1);
            match harness::harness_hybrid_refine(
                ctx.graph,
                &model,
                r,
                &start,
                shift,
                ctx.config.tol,
                budget,
            ) {
                Ok(run) => {
                    let phases: Vec<Complex64> = run.state.iter().map(|s| s.phase).collect();
                    match ce(&phases) {
                        Ok(metric) => ctx.record(
                            estimator,
                            metric,
                            warm.rounds + run.rounds,
                            run.converged,
                            warm.messages + run.messages,
                        ),
                        Err(_) => ctx.failed(estimator),
                    }
                }
                Err(_) => ctx.failed(estimator),
            }
        }
        _ => ctx.failed(estimator),
    }
}

fn run_product_estimator(
    ctx: &TrialContext<'_>,
    estimator: EstimatorKind,
    truth: &[GroupElement],
    r: &[GroupElement],
    sigma: f64,
) -> TrialRecord {
    if estimator != EstimatorKind::DirectMl {
        return ctx.failed(estimator);
    }
    let m = ctx.graph.edge_count();
    let (d, q) = truth[0].dims();
    let model = ProductNoiseModel::common(
        &vec![sigma * sigma; d],
        &vec![ctx.sweep; q],
        m,
    );
    let opts = ProductOptions {
        ref_vertex: 0,
        seed: mix_seed(ctx.config.seed, stream_id(ctx.sweep_idx, ctx.trial, PURPOSE_INIT)),
        power_rounds: ctx.config.power_rounds,
        threshold: ctx.config.tol,
        max_rounds: ctx.config.max_rounds,
    };
    match ml_estimate_product(ctx.graph, r, &model, &opts) {
        Ok(est) => {
            let mut total = 0.0;
            for k in 0..q {
                let hat: Vec<Complex64> =
                    est.elements.iter().map(|g| g.circular[k]).collect();
                let tru: Vec<Complex64> = truth.iter().map(|g| g.circular[k]).collect();
                match circular_error(&hat, &tru, 0) {
                    Ok(ce) => total += ce,
                    Err(_) => return ctx.failed(estimator),
                }
            }
            let converged = est.circular_converged.iter().all(|&c| c);
            ctx.record(estimator, total / q as f64, 0, converged, 0)
        }
        Err(_) => ctx.failed(estimator),
    }
}

fn run_trial(ctx: &TrialContext<'_>) -> Result<Vec<TrialRecord>> {
    let config = ctx.config;
    let n = ctx.graph.vertex_count();
    let mut truth_rng = stream_rng(config.seed, ctx.sweep_idx, ctx.trial, PURPOSE_TRUTH);
    let truth = sample_truth(&mut truth_rng, n, &config.space);
    let mut noise_rng = stream_rng(config.seed, ctx.sweep_idx, ctx.trial, PURPOSE_NOISE);
    let noise = trial_noise(&config.space, ctx.sweep);
    let data = generate_measurements(&mut noise_rng, ctx.graph, &truth, &noise)?;
    // One shared random initialization per trial, so the power iteration and
    // the hybrid run refine the same start.
    let mut init_rng = stream_rng(config.seed, ctx.sweep_idx, ctx.trial, PURPOSE_INIT);
    let init: Vec<Complex64> = (0..n)
        .map(|_| Complex64::from_polar(1.0, init_rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();

    let records = config
        .estimators
        .iter()
        .map(|&estimator| match (&truth, &data) {
            (TruthAssignment::Real(x), EdgeData::Real(r)) => {
                run_real_estimator(ctx, estimator, x, r)
            }
            (TruthAssignment::Circle(x), EdgeData::Circle(r)) => {
                run_circle_estimator(ctx, estimator, x, r, &init)
            }
            (TruthAssignment::Product(x), EdgeData::Product(r)) => {
                let sigma = match noise {
                    TrialNoise::Product { sigma, .. } => sigma,
                    _ => unreachable!(),
                };
                run_product_estimator(ctx, estimator, x, r, sigma)
            }
            _ => unreachable!("truth and data spaces always match"),
        })
        .collect();
    Ok(records)
}

fn fisher_trace(graph: &Graph, inc: &IncidenceSet, space: &SpaceSpec, sweep: f64) -> Result<f64> {
    match space {
        SpaceSpec::Real { d } => {
            let model = if *d == 1 {
                NoiseModel::IidScalar { sigma2: sweep * sweep }
            } else {
                NoiseModel::IidVector {
                    covariance: DMatrix::identity(*d, *d) * (sweep * sweep),
                }
            };
            Ok(gaussian::fisher_report(graph, inc, &model)?.trace_inverse())
        }
        SpaceSpec::Circle => {
            let model = CircleModel::common(sweep, graph.edge_count());
            Ok(fisher_report_circle(graph, inc, &model)?.trace_inverse())
        }
        SpaceSpec::Product { d, q, sigma } => {
            let model = ProductNoiseModel::common(
                &vec![sigma * sigma; *d],
                &vec![sweep; *q],
                graph.edge_count(),
            );
            Ok(fisher_report_product(graph, &model, 0)?.trace_inverse())
        }
    }
}

/// Runs the full sweep. Trials execute in parallel; the output is sorted by
/// (sweep index, estimator order, trial) and is identical for identical
/// configurations.
pub fn run_experiment(config: &SimConfig, base: Option<&Path>) -> Result<ExperimentResult> {
    config.validate()?;
    let graph = config.graph.resolve(base)?;
    if !graph.is_connected() {
        return Err(Error::Disconnected("simulation needs a connected graph".into()));
    }
    let inc = IncidenceSet::build(&graph, 0)?;

    let jobs: Vec<(usize, usize)> = (0..config.sweep.len())
        .flat_map(|s| (0..config.trials).map(move |t| (s, t)))
        .collect();
    let nested: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(sweep_idx, trial)| {
            let ctx = TrialContext {
                graph: &graph,
                inc: &inc,
                config,
                sweep_idx,
                sweep: config.sweep[sweep_idx],
                trial,
            };
            run_trial(&ctx)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<TrialRecord> = nested.into_iter().flatten().collect();

    let estimator_order: BTreeMap<&'static str, usize> = config
        .estimators
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name(), i))
        .collect();
    let sweep_order: BTreeMap<u64, usize> = config
        .sweep
        .iter()
        .enumerate()
        .map(|(i, s)| (s.to_bits(), i))
        .collect();
    records.sort_by_key(|rec| {
        (sweep_order[&rec.sweep.to_bits()], estimator_order[rec.estimator], rec.trial)
    });

    let mut summary = Vec::with_capacity(config.sweep.len() * config.estimators.len());
    for (sweep_idx, &sweep) in config.sweep.iter().enumerate() {
        for estimator in &config.estimators {
            let rows = records.iter().filter(|rec| {
                sweep_order[&rec.sweep.to_bits()] == sweep_idx
                    && rec.estimator == estimator.name()
            });
            let mut total = 0.0;
            let mut finite = 0usize;
            let mut converged = 0usize;
            let mut trials = 0usize;
            for rec in rows {
                trials += 1;
                if rec.metric.is_finite() {
                    total += rec.metric;
                    finite += 1;
                }
                if rec.converged {
                    converged += 1;
                }
            }
            summary.push(SummaryRow {
                sweep,
                estimator: estimator.name(),
                mean_metric: if finite > 0 { total / finite as f64 } else { f64::NAN },
                trials,
                converged,
            });
        }
    }

    let fisher_reference = config
        .sweep
        .iter()
        .map(|&s| fisher_trace(&graph, &inc, &config.space, s).map(|t| (s, t)))
        .collect::<Result<_>>()?;

    Ok(ExperimentResult { records, summary, fisher_reference })
}

pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("sweep,estimator,trial,metric,rounds,converged,messages\n");
    for rec in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            io::format_sig(rec.sweep),
            rec.estimator,
            rec.trial,
            io::format_sig(rec.metric),
            rec.rounds,
            rec.converged,
            rec.messages
        ));
    }
    out
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from("sweep,estimator,mean_metric,trials,converged\n");
    for row in summary {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            io::format_sig(row.sweep),
            row.estimator,
            io::format_sig(row.mean_metric),
            row.trials,
            row.converged
        ));
    }
    out
}

pub fn fisher_csv(reference: &[(f64, f64)]) -> String {
    let mut out = String::from("sweep,trace_inv_fisher\n");
    for (sweep, trace) in reference {
        out.push_str(&format!("{},{}\n", io::format_sig(*sweep), io::format_sig(*trace)));
    }
    out
}

/// One candidate edge in a design study.
#[derive(Debug, Clone)]
pub struct DesignCandidate {
    pub source: String,
    pub target: String,
    /// Spanning-tree count of the graph with this edge added.
    pub tree_count: f64,
    /// det of the unit-weight Fisher information with this edge added.
    pub det_fisher: f64,
    /// Competition rank, 1 = best; ties share a rank.
    pub rank: usize,
}

/// Ranks candidate edges by the spanning-tree count (equivalently the
/// unit-weight Fisher determinant) of the augmented graph, descending.
pub fn network_design_report(
    graph: &Graph,
    candidates: &[(String, String)],
) -> Result<Vec<DesignCandidate>> {
    if !graph.is_connected() {
        return Err(Error::Disconnected("design study needs a connected base graph".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate edges".into()));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for (i, (source, target)) in candidates.iter().enumerate() {
        let vertices: Vec<String> = graph.vertex_ids().to_vec();
        let mut edges: Vec<(String, String, String)> = graph
            .edges()
            .iter()
            .map(|e| {
                (
                    e.id.clone(),
                    graph.vertex_id(e.source).to_string(),
                    graph.vertex_id(e.target).to_string(),
                )
            })
            .collect();
        if !vertices.contains(source) || !vertices.contains(target) {
            return Err(Error::UnknownVertex(format!("candidate {source}-{target}")));
        }
        edges.push((format!("cand{}", i + 1), source.clone(), target.clone()));
        let augmented = Graph::from_parts(vertices, edges)?;
        let inc = IncidenceSet::build(&augmented, 0)?;
        let count = inc.spanning_tree_count(&augmented);
        let det_fisher = inc.weighted_tree_sum(&vec![1.0; augmented.edge_count()])?;
        rows.push(DesignCandidate {
            source: source.clone(),
            target: target.clone(),
            tree_count: count.value,
            det_fisher,
            rank: 0,
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[b]
            .tree_count
            .partial_cmp(&rows[a].tree_count)
            .unwrap()
            .then_with(|| (&rows[a].source, &rows[a].target).cmp(&(&rows[b].source, &rows[b].target)))
    });
    let mut ranked = Vec::with_capacity(rows.len());
    let mut last_count = f64::INFINITY;
    let mut last_rank = 0;
    for (position, &idx) in order.iter().enumerate() {
        let mut row = rows[idx].clone();
        if row.tree_count < last_count {
            last_rank = position + 1;
            last_count = row.tree_count;
        }
        row.rank = last_rank;
        ranked.push(row);
    }
    Ok(ranked)
}

/// All vertex pairs with no edge between them, as candidate edges.
pub fn missing_edges(graph: &Graph) -> Vec<(String, String)> {
    let n = graph.vertex_count();
    let mut present = vec![false; n * n];
    for e in graph.edges() {
        present[e.source * n + e.target] = true;
        present[e.target * n + e.source] = true;
    }
    let mut out = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if !present[u * n + v] {
                out.push((graph.vertex_id(u).to_string(), graph.vertex_id(v).to_string()));
            }
        }
    }
    out
}

pub fn design_csv(rows: &[DesignCandidate]) -> String {
    let mut out = String::from("source,target,tree_count,det_fisher,rank\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.source,
            row.target,
            io::format_sig(row.tree_count),
            io::format_sig(row.det_fisher),
            row.rank
        ));
    }
    out
}

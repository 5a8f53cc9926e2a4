//! Command-line interface. Four subcommands: `analyze` reports graph and
//! design quantities, `estimate` runs one estimator on measurement data,
//! `simulate` executes a sweep configuration, and `design` ranks candidate
//! edges. Exit codes: 0 success, 1 input error, 2 numerical failure or
//! non-convergence. Expected failures print one diagnostic line to stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::abelian::{self, GroupElement, ProductNoiseModel, ProductOptions};
use crate::circle::{
    self, global_eigen_estimate, hybrid_ml_refine, max_vertex_load, run_local_power,
    AmplitudePhaseState, CircleModel, GlobalEigenKind,
};
use crate::error::{Error, Result};
use crate::gaussian::{self, NoiseModel};
use crate::graph::Graph;
use crate::incidence::{self, IncidenceSet};
use crate::jacobi::{self, JacobiOptions};
use crate::{io, sim};

#[derive(Parser)]
#[command(
    name = "netsync",
    version,
    about = "Network synchronization from noisy edge difference measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report size, connectivity, spanning-tree count, and iteration spectrum
    /// of a graph.
    Analyze(AnalyzeArgs),
    /// Estimate vertex values from edge measurements.
    Estimate(EstimateArgs),
    /// Run a simulation sweep from a JSON configuration.
    Simulate(SimulateArgs),
    /// Rank candidate edges by the spanning-tree count they would add.
    Design(DesignArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Graph JSON file.
    graph: PathBuf,
    /// Reference vertex id (defaults to the first vertex).
    #[arg(long = "ref")]
    ref_vertex: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SpaceArg {
    Real,
    Circle,
    Product,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Closed-form (or block coordinate) maximum likelihood.
    Direct,
    /// Distributed Jacobi iteration (real space).
    Jacobi,
    /// Leading-eigenvector phase estimate (circle).
    Eigen,
    /// Power-iteration start plus per-vertex likelihood refinement (circle).
    Hybrid,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum GaugeArg {
    /// Pin the reference vertex to the identity.
    Reference,
    /// Shift real solutions to zero mean (real space only).
    MeanZero,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum EigenArg {
    /// Degree-plus-concentration normalized connection matrix.
    Q,
    /// Raw connection adjacency.
    A,
}

#[derive(Args)]
struct EstimateArgs {
    /// Graph JSON file.
    graph: PathBuf,
    /// Measurements JSON file.
    measurements: PathBuf,
    #[arg(long, value_enum)]
    space: SpaceArg,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Gaussian edge variance (real space scalar, and product linear part).
    #[arg(long)]
    sigma2: Option<f64>,
    /// Noise model JSON file (real space; overrides --sigma2).
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Von Mises concentration: one value for all edges, or one per edge
    /// (comma-separated, measurement order). Product spaces take one value
    /// per circular coordinate.
    #[arg(long, value_delimiter = ',')]
    kappa: Vec<f64>,
    /// Reference vertex id (defaults to the first vertex).
    #[arg(long = "ref")]
    ref_vertex: Option<String>,
    #[arg(long, value_enum, default_value_t = GaugeArg::Reference)]
    gauge: GaugeArg,
    /// Convergence tolerance (hybrid: stationarity-defect threshold).
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Iteration cap for jacobi and hybrid runs.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Jacobi damping factor in (0, 1]; default 1, or 0.5 on bipartite graphs.
    #[arg(long)]
    gamma: Option<f64>,
    /// Power-iteration regularization; default is the mean concentration.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value_t = EigenArg::Q)]
    eigen_kind: EigenArg,
    /// Round cap for the hybrid power stage; default lets it run until the
    /// phases settle (within the iteration cap) before refinement starts.
    #[arg(long)]
    power_rounds: Option<usize>,
    /// Seed for randomized initialization (NETSYNC_SEED overrides).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// True vertex values; adds error metrics to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the estimate here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation configuration JSON file.
    config: PathBuf,
    /// Output directory for records.csv, summary.csv, and fisher.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DesignArgs {
    /// Graph JSON file.
    graph: PathBuf,
    /// `all-missing`, or a JSON file of [source, target] id pairs.
    #[arg(long, default_value = "all-missing")]
    candidates: String,
    /// Write the ranking CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI and returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { 0 } else { 1 };
        }
    };
    let outcome = match cli.command {
        Command::Analyze(args) => analyze(&args),
        Command::Estimate(args) => estimate(&args),
        Command::Simulate(args) => simulate(&args),
        Command::Design(args) => design(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("netsync: {err}");
            match err {
                Error::Numerical(_)
                | Error::NonConvergence { .. }
                | Error::ZeroEigenvectorComponent(_) => 2,
                _ => 1,
            }
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => io::write_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    emit(out, &text)
}

fn resolve_ref(graph: &Graph, id: &Option<String>) -> Result<usize> {
    match id {
        Some(id) => graph.vertex(id),
        None => Ok(0),
    }
}

/// Seed precedence: NETSYNC_SEED environment variable, then the flag.
fn effective_seed(flag: u64) -> Result<u64> {
    match std::env::var("NETSYNC_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("NETSYNC_SEED is not a u64: `{text}`"))),
        Err(_) => Ok(flag),
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<i32> {
    let graph = io::load_graph(&args.graph)?;
    let ref_vertex = resolve_ref(&graph, &args.ref_vertex)?;
    let inc = IncidenceSet::build(&graph, ref_vertex)?;
    let trees = inc.spanning_tree_count(&graph);
    let connected = graph.is_connected();
    let mut report = Map::new();
    report.insert("vertices".into(), json!(graph.vertex_count()));
    report.insert("edges".into(), json!(graph.edge_count()));
    report.insert("connected".into(), json!(connected));
    report.insert("components".into(), json!(graph.connected_components()));
    report.insert("cycle_rank".into(), json!(incidence::cycle_rank(&graph)));
    report.insert("bipartite".into(), json!(graph.bipartition().is_some()));
    report.insert("reference_vertex".into(), json!(graph.vertex_id(ref_vertex)));
    report.insert("spanning_trees".into(), json!(trees.value));
    report.insert(
        "ln_spanning_trees".into(),
        if trees.ln.is_finite() { json!(trees.ln) } else { Value::Null },
    );
    report.insert(
        "det_reduced_laplacian".into(),
        json!(inc.laplacian_reduced.determinant()),
    );
    // The Jacobi spectrum needs every vertex to have a neighbor.
    if connected && graph.edge_count() > 0 {
        let diag = jacobi::convergence_diagnostics(&graph, &inc)?;
        report.insert(
            "jacobi".into(),
            json!({
                "spectral_radius": diag.spectral_radius,
                "lambda_min": diag.lambda_min,
                "bipartite_hazard": diag.bipartite_hazard,
                "suggested_damping": if diag.bipartite_hazard { 0.5 } else { 1.0 },
            }),
        );
    } else {
        report.insert("jacobi".into(), Value::Null);
    }
    emit_json(args.out.as_deref(), &Value::Object(report))?;
    Ok(0)
}

/// Truth file: vertex id to value, in the measurement value shapes.
#[derive(Deserialize)]
struct TruthFile {
    vertices: BTreeMap<String, io::MeasurementValue>,
}

fn load_truth(path: &Path) -> Result<TruthFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn truth_real(graph: &Graph, file: &TruthFile, d: usize) -> Result<DMatrix<f64>> {
    let n = graph.vertex_count();
    let mut x = DMatrix::zeros(n, d);
    for (id, value) in &file.vertices {
        let v = graph.vertex(id)?;
        match value {
            io::MeasurementValue::Scalar(s) if d == 1 => x[(v, 0)] = *s,
            io::MeasurementValue::Vector(vals) if vals.len() == d => {
                for (j, val) in vals.iter().enumerate() {
                    x[(v, j)] = *val;
                }
            }
            _ => {
                return Err(Error::DimensionMismatch(format!(
                    "truth value for `{id}` does not have dimension {d}"
                )))
            }
        }
    }
    if file.vertices.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "truth file covers {} of {n} vertices",
            file.vertices.len()
        )));
    }
    Ok(x)
}

fn truth_circle(graph: &Graph, file: &TruthFile) -> Result<Vec<Complex64>> {
    let n = graph.vertex_count();
    let mut x = vec![Complex64::new(1.0, 0.0); n];
    let mut seen = 0;
    for (id, value) in &file.vertices {
        let v = graph.vertex(id)?;
        match value {
            io::MeasurementValue::Scalar(theta) => {
                x[v] = Complex64::from_polar(1.0, *theta);
                seen += 1;
            }
            _ => {
                return Err(Error::Parse(format!(
                    "truth value for `{id}` must be an angle in radians"
                )))
            }
        }
    }
    if seen != n {
        return Err(Error::DimensionMismatch(format!("truth file covers {seen} of {n} vertices")));
    }
    Ok(x)
}

fn truth_product(graph: &Graph, file: &TruthFile, d: usize, q: usize) -> Result<Vec<GroupElement>> {
    let n = graph.vertex_count();
    let mut x = vec![GroupElement::identity(d, q); n];
    let mut seen = 0;
    for (id, value) in &file.vertices {
        let v = graph.vertex(id)?;
        match value {
            io::MeasurementValue::Product { linear, circular }
                if linear.len() == d && circular.len() == q =>
            {
                x[v] = GroupElement {
                    linear: linear.clone(),
                    circular: circular
                        .iter()
                        .map(|theta| Complex64::from_polar(1.0, *theta))
                        .collect(),
                };
                seen += 1;
            }
            _ => {
                return Err(Error::DimensionMismatch(format!(
                    "truth value for `{id}` does not have shape ({d} linear, {q} circular)"
                )))
            }
        }
    }
    if seen != n {
        return Err(Error::DimensionMismatch(format!("truth file covers {seen} of {n} vertices")));
    }
    Ok(x)
}

fn mean_squared_vertex_error(x_hat: &DMatrix<f64>, truth: &DMatrix<f64>, ref_vertex: usize) -> f64 {
    let n = truth.nrows();
    let d = truth.ncols();
    let mut total = 0.0;
    for j in 0..d {
        for v in 0..n {
            let gauged_truth = truth[(v, j)] - truth[(ref_vertex, j)];
            let gauged_hat = x_hat[(v, j)] - x_hat[(ref_vertex, j)];
            total += (gauged_hat - gauged_truth).powi(2);
        }
    }
    total / ((n - 1) as f64 * d as f64)
}

fn real_noise_model(args: &EstimateArgs, d: usize) -> Result<NoiseModel> {
    if let Some(path) = &args.noise {
        return io::load_noise_spec(path)?.to_model();
    }
    let sigma2 = args.sigma2.unwrap_or(1.0);
    if d == 1 {
        Ok(NoiseModel::IidScalar { sigma2 })
    } else {
        Ok(NoiseModel::IidVector { covariance: DMatrix::identity(d, d) * sigma2 })
    }
}

fn kappa_list(args: &EstimateArgs, count: usize, what: &str) -> Result<Vec<f64>> {
    match args.kappa.len() {
        0 => Ok(vec![1.0; count]),
        1 => Ok(vec![args.kappa[0]; count]),
        k if k == count => Ok(args.kappa.clone()),
        k => Err(Error::DimensionMismatch(format!(
            "--kappa has {k} entries; expected 1 or {count} ({what})"
        ))),
    }
}

fn real_vertex_values(graph: &Graph, x: &DMatrix<f64>) -> Value {
    let mut map = Map::new();
    for v in 0..graph.vertex_count() {
        let row: Vec<f64> = (0..x.ncols()).map(|j| x[(v, j)]).collect();
        let value = if row.len() == 1 { json!(row[0]) } else { json!(row) };
        map.insert(graph.vertex_id(v).to_string(), value);
    }
    Value::Object(map)
}

fn phase_vertex_values(graph: &Graph, phases: &[Complex64], ref_vertex: usize) -> Value {
    let anchor = phases[ref_vertex].conj();
    let mut map = Map::new();
    for v in 0..graph.vertex_count() {
        map.insert(graph.vertex_id(v).to_string(), json!((phases[v] * anchor).arg()));
    }
    Value::Object(map)
}

fn estimate_real(args: &EstimateArgs, graph: &Graph, report: &mut Map<String, Value>) -> Result<i32> {
    if !matches!(args.method, MethodArg::Direct | MethodArg::Jacobi) {
        return Err(Error::InvalidParameter(
            "real-space methods are `direct` and `jacobi`".into(),
        ));
    }
    let file = io::load_measurements(&args.measurements)?;
    let r = io::measurements_real(graph, &file)?;
    let ref_vertex = resolve_ref(graph, &args.ref_vertex)?;
    let inc = IncidenceSet::build(graph, ref_vertex)?;
    let model = real_noise_model(args, r.ncols())?;
    let mut code = 0;
    let x_hat = match args.method {
        MethodArg::Direct => {
            let est = gaussian::ml_estimate(&inc, &r, &model)?;
            report.insert(
                "max_current_residual".into(),
                json!(gaussian::kirchhoff_residual(&inc, &est.residual, &model)?),
            );
            match args.gauge {
                GaugeArg::Reference => est.x_hat,
                GaugeArg::MeanZero => gaussian::mean_zero_gauge(&inc, &r, 1.0)?,
            }
        }
        MethodArg::Jacobi => {
            let opts = JacobiOptions {
                tol: args.tol,
                max_iter: args.max_iter,
                damping: args.gamma,
            };
            let run = jacobi::jacobi_run(graph, &inc, &r, opts)?;
            report.insert("iterations".into(), json!(run.iterations));
            report.insert("converged".into(), json!(run.converged));
            report.insert("last_delta".into(), json!(run.last_delta));
            report.insert("damping".into(), json!(run.damping));
            if !run.converged {
                eprintln!(
                    "netsync: jacobi stopped after {} sweeps with delta {:.3e} above tol {:.3e}",
                    run.iterations, run.last_delta, args.tol
                );
                code = 2;
            }
            let x = run.estimate.x_hat;
            match args.gauge {
                GaugeArg::Reference => x,
                GaugeArg::MeanZero => {
                    let mut shifted = x;
                    let n = shifted.nrows();
                    for mut col in shifted.column_iter_mut() {
                        let mean = col.iter().sum::<f64>() / n as f64;
                        col.add_scalar_mut(-mean);
                    }
                    shifted
                }
            }
        }
        _ => {
            return Err(Error::InvalidParameter(
                "real-space methods are `direct` and `jacobi`".into(),
            ))
        }
    };
    let gauge_label = match args.gauge {
        GaugeArg::Reference => format!("reference:{}", graph.vertex_id(ref_vertex)),
        GaugeArg::MeanZero => "mean-zero".into(),
    };
    report.insert("gauge".into(), json!(gauge_label));
    if let Some(path) = &args.truth {
        let truth = truth_real(graph, &load_truth(path)?, x_hat.ncols())?;
        report.insert(
            "mean_squared_error".into(),
            json!(mean_squared_vertex_error(&x_hat, &truth, ref_vertex)),
        );
    }
    report.insert("estimates".into(), real_vertex_values(graph, &x_hat));
    Ok(code)
}

fn estimate_circle(
    args: &EstimateArgs,
    graph: &Graph,
    report: &mut Map<String, Value>,
) -> Result<i32> {
    if args.gauge == GaugeArg::MeanZero {
        return Err(Error::InvalidParameter(
            "phases are anchored at the reference vertex; `mean-zero` applies to real spaces"
                .into(),
        ));
    }
    if !matches!(args.method, MethodArg::Eigen | MethodArg::Hybrid) {
        return Err(Error::InvalidParameter("circle methods are `eigen` and `hybrid`".into()));
    }
    let file = io::load_measurements(&args.measurements)?;
    let r = io::measurements_circle(graph, &file)?;
    let ref_vertex = resolve_ref(graph, &args.ref_vertex)?;
    let m = graph.edge_count();
    let model = CircleModel::per_edge(kappa_list(args, m, "one per edge")?);
    let mean_kappa = model.kappa.iter().sum::<f64>() / m as f64;
    let beta = args.beta.unwrap_or(mean_kappa);
    let max_iter = args.max_iter.unwrap_or(10_000);
    let mut code = 0;
    let phases = match args.method {
        MethodArg::Eigen => {
            let kind = match args.eigen_kind {
                EigenArg::Q => GlobalEigenKind::Normalized,
                EigenArg::A => GlobalEigenKind::Adjacency,
            };
            let est = global_eigen_estimate(graph, &model, &r, kind, args.beta.unwrap_or(0.0))?;
            report.insert("eigenvalue".into(), json!(est.eigenvalue));
            report.insert("spectral_gap".into(), json!(est.gap));
            report.insert("ambiguous".into(), json!(est.ambiguous));
            if est.ambiguous {
                eprintln!(
                    "netsync: leading eigenvalue is nearly tied (gap {:.3e}); estimate unstable",
                    est.gap
                );
                code = 2;
            }
            est.phases
        }
        MethodArg::Hybrid => {
            let seed = effective_seed(args.seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = AmplitudePhaseState::random_init(graph.vertex_count(), &mut rng);
            let cap = args.power_rounds.unwrap_or(max_iter);
            let warm = run_local_power(graph, &model, &r, init, beta, args.tol, cap)?;
            let run = hybrid_ml_refine(
                graph,
                &model,
                &r,
                &warm.state.phases,
                max_vertex_load(graph, &model)?,
                args.tol,
                max_iter.saturating_sub(warm.rounds).max(1),
            )?;
            report.insert("power_rounds".into(), json!(warm.rounds));
            report.insert("refine_rounds".into(), json!(run.rounds));
            report.insert("converged".into(), json!(run.converged));
            report.insert("max_defect".into(), json!(run.report.max_defect));
            report.insert("amplitude_clamps".into(), json!(run.report.kappa_clamps));
            report.insert(
                "log_likelihood".into(),
                json!(circle::log_likelihood(graph, &model, &r, &run.phases)?),
            );
            if !run.converged {
                eprintln!(
                    "netsync: hybrid refinement stopped after {} rounds with defect {:.3e} above tol {:.3e}",
                    run.rounds, run.report.max_defect, args.tol
                );
                code = 2;
            }
            run.phases
        }
        _ => {
            return Err(Error::InvalidParameter(
                "circle methods are `eigen` and `hybrid`".into(),
            ))
        }
    };
    report.insert("gauge".into(), json!(format!("reference:{}", graph.vertex_id(ref_vertex))));
    if let Some(path) = &args.truth {
        let truth = truth_circle(graph, &load_truth(path)?)?;
        report.insert(
            "circular_error".into(),
            json!(circle::circular_error(&phases, &truth, ref_vertex)?),
        );
    }
    report.insert("estimates".into(), phase_vertex_values(graph, &phases, ref_vertex));
    Ok(code)
}

fn estimate_product(
    args: &EstimateArgs,
    graph: &Graph,
    report: &mut Map<String, Value>,
) -> Result<i32> {
    if args.gauge == GaugeArg::MeanZero {
        return Err(Error::InvalidParameter(
            "product estimates are anchored at the reference vertex".into(),
        ));
    }
    if args.method != MethodArg::Direct {
        return Err(Error::InvalidParameter("product spaces support `direct` only".into()));
    }
    let file = io::load_measurements(&args.measurements)?;
    let r = io::measurements_product(graph, &file)?;
    let (d, q) = r
        .first()
        .map(GroupElement::dims)
        .ok_or_else(|| Error::DimensionMismatch("no measurements".into()))?;
    let ref_vertex = resolve_ref(graph, &args.ref_vertex)?;
    let model = ProductNoiseModel::common(
        &vec![args.sigma2.unwrap_or(1.0); d],
        &kappa_list(args, q, "one per circular coordinate")?,
        graph.edge_count(),
    );
    let opts = ProductOptions {
        ref_vertex,
        seed: effective_seed(args.seed)?,
        power_rounds: args.power_rounds,
        threshold: args.tol,
        max_rounds: args.max_iter.unwrap_or(10_000),
    };
    let est = abelian::ml_estimate_product(graph, &r, &model, &opts)?;
    let converged = est.circular_converged.iter().all(|&c| c);
    report.insert("converged".into(), json!(converged));
    report.insert("max_current_residuals".into(), json!(est.linear_residuals));
    report.insert(
        "max_defects".into(),
        json!(est.circular_reports.iter().map(|c| c.max_defect).collect::<Vec<_>>()),
    );
    report.insert(
        "log_likelihood".into(),
        json!(abelian::log_likelihood_product(graph, &model, &r, &est.elements)?),
    );
    report.insert("gauge".into(), json!(format!("reference:{}", graph.vertex_id(ref_vertex))));
    let mut code = 0;
    if !converged {
        eprintln!("netsync: circular refinement left a stationarity defect above tol {:.3e}", args.tol);
        code = 2;
    }
    if let Some(path) = &args.truth {
        let truth = truth_product(graph, &load_truth(path)?, d, q)?;
        let mut ce_total = 0.0;
        for k in 0..q {
            let hat: Vec<Complex64> = est.elements.iter().map(|g| g.circular[k]).collect();
            let tru: Vec<Complex64> = truth.iter().map(|g| g.circular[k]).collect();
            ce_total += circle::circular_error(&hat, &tru, ref_vertex)?;
        }
        report.insert("circular_error".into(), json!(ce_total / q as f64));
        let n = graph.vertex_count();
        let hat = DMatrix::from_fn(n, d, |v, j| est.elements[v].linear[j]);
        let tru = DMatrix::from_fn(n, d, |v, j| truth[v].linear[j]);
        report.insert(
            "mean_squared_error".into(),
            json!(mean_squared_vertex_error(&hat, &tru, ref_vertex)),
        );
    }
    let mut estimates = Map::new();
    for (v, g) in est.elements.iter().enumerate() {
        estimates.insert(
            graph.vertex_id(v).to_string(),
            json!({
                "linear": g.linear,
                "circular": g.circular.iter().map(|z| z.arg()).collect::<Vec<_>>(),
            }),
        );
    }
    report.insert("estimates".into(), Value::Object(estimates));
    Ok(code)
}

fn estimate(args: &EstimateArgs) -> Result<i32> {
    let graph = io::load_graph(&args.graph)?;
    let mut report = Map::new();
    report.insert(
        "space".into(),
        json!(match args.space {
            SpaceArg::Real => "real",
            SpaceArg::Circle => "circle",
            SpaceArg::Product => "product",
        }),
    );
    report.insert(
        "method".into(),
        json!(match args.method {
            MethodArg::Direct => "direct",
            MethodArg::Jacobi => "jacobi",
            MethodArg::Eigen => "eigen",
            MethodArg::Hybrid => "hybrid",
        }),
    );
    let code = match args.space {
        SpaceArg::Real => estimate_real(args, &graph, &mut report)?,
        SpaceArg::Circle => estimate_circle(args, &graph, &mut report)?,
        SpaceArg::Product => estimate_product(args, &graph, &mut report)?,
    };
    emit_json(args.out.as_deref(), &Value::Object(report))?;
    Ok(code)
}

fn simulate(args: &SimulateArgs) -> Result<i32> {
    let mut config = sim::load_config(&args.config)?;
    if let Ok(text) = std::env::var("NETSYNC_SEED") {
        config.seed = text
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("NETSYNC_SEED is not a u64: `{text}`")))?;
    }
    let base = args.config.parent().map(Path::to_path_buf);
    let result = sim::run_experiment(&config, base.as_deref())?;
    std::fs::create_dir_all(&args.out)?;
    io::write_atomic(&args.out.join("records.csv"), &sim::records_csv(&result.records))?;
    io::write_atomic(&args.out.join("summary.csv"), &sim::summary_csv(&result.summary))?;
    io::write_atomic(&args.out.join("fisher.csv"), &sim::fisher_csv(&result.fisher_reference))?;
    println!(
        "wrote {} trial records ({} summary rows) to {}",
        result.records.len(),
        result.summary.len(),
        args.out.display()
    );
    Ok(0)
}

fn design(args: &DesignArgs) -> Result<i32> {
    let graph = io::load_graph(&args.graph)?;
    let candidates = if args.candidates == "all-missing" {
        let missing = sim::missing_edges(&graph);
        if missing.is_empty() {
            return Err(Error::InvalidParameter(
                "graph is complete; no missing edges to rank".into(),
            ));
        }
        missing
    } else {
        let text = std::fs::read_to_string(Path::new(&args.candidates))?;
        let pairs: Vec<(String, String)> = serde_json::from_str(&text)?;
        pairs
    };
    let report = sim::network_design_report(&graph, &candidates)?;
    emit(args.out.as_deref(), &sim::design_csv(&report))?;
    Ok(0)
}

// Exercised end to end through the binary in the integration tests; the unit
// tests here cover pure helpers.
#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_lists_expand_and_validate() {
        let base = EstimateArgs {
            graph: PathBuf::new(),
            measurements: PathBuf::new(),
            space: SpaceArg::Circle,
            method: MethodArg::Eigen,
            sigma2: None,
            noise: None,
            kappa: vec![2.0],
            ref_vertex: None,
            gauge: GaugeArg::Reference,
            tol: 1e-9,
            max_iter: None,
            gamma: None,
            beta: None,
            eigen_kind: EigenArg::Q,
            power_rounds: None,
            seed: 0,
            truth: None,
            out: None,
        };
        assert_eq!(kappa_list(&base, 3, "per edge").unwrap(), vec![2.0, 2.0, 2.0]);
        let mut multi = base;
        multi.kappa = vec![1.0, 2.0];
        assert_eq!(multi.kappa.clone(), kappa_list(&multi, 2, "per edge").unwrap());
        assert!(kappa_list(&multi, 3, "per edge").is_err());
        multi.kappa.clear();
        assert_eq!(kappa_list(&multi, 2, "per edge").unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn command_line_parses_the_documented_flags() {
        let cli = Cli::try_parse_from([
            "netsync",
            "estimate",
            "g.json",
            "m.json",
            "--space",
            "circle",
            "--method",
            "hybrid",
            "--kappa",
            "1.5,2.5",
            "--ref",
            "v2",
            "--tol",
            "1e-8",
            "--power-rounds",
            "30",
        ])
        .unwrap();
        match cli.command {
            Command::Estimate(args) => {
                assert_eq!(args.kappa, vec![1.5, 2.5]);
                assert_eq!(args.ref_vertex.as_deref(), Some("v2"));
                assert_eq!(args.power_rounds, Some(30));
                assert!(matches!(args.method, MethodArg::Hybrid));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["netsync", "estimate", "g.json"]).is_err());
    }

    #[test]
    fn gauge_and_space_mismatches_are_input_errors() {
        let graph = Graph::ring(3).unwrap();
        let mut report = Map::new();
        let mut args = Cli::try_parse_from([
            "netsync",
            "estimate",
            "g.json",
            "m.json",
            "--space",
            "circle",
            "--method",
            "direct",
        ])
        .map(|cli| match cli.command {
            Command::Estimate(a) => a,
            _ => unreachable!(),
        })
        .unwrap();
        let err = estimate_circle(&args, &graph, &mut report).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
        args.gauge = GaugeArg::MeanZero;
        let err = estimate_circle(&args, &graph, &mut report).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }
}

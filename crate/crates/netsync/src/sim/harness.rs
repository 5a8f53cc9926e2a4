//! Synchronous message-passing harness. Each round every vertex publishes
//! its state, one message per edge direction, and computes its next state
//! from its own previous state plus the inbox alone; the harness hands the
//! update closure nothing else, and re-checks against the edge table that
//! every delivered message really comes across an incident edge.

use num_complex::Complex64;

use crate::circle::CircleModel;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// A received message: the neighbor's previous-round value, labeled with the
/// edge it crossed and the edge's orientation at the receiver.
#[derive(Debug, Clone, Copy)]
pub struct Message<'a, T> {
    pub edge: usize,
    /// True when the edge points into the receiving vertex.
    pub inward: bool,
    pub value: &'a T,
}

#[derive(Debug, Clone)]
pub struct HarnessRun<T> {
    pub state: Vec<T>,
    pub rounds: usize,
    pub converged: bool,
    pub last_delta: f64,
    /// Total messages delivered: two per edge per round.
    pub messages: u64,
}

/// Runs synchronous rounds until `delta(prev, next) < tol` or the round
/// budget is exhausted. Update errors abort the run.
pub fn run_rounds<T, F, D>(
    graph: &Graph,
    init: Vec<T>,
    mut update: F,
    mut delta: D,
    tol: f64,
    max_rounds: usize,
) -> Result<HarnessRun<T>>
where
    T: Clone,
    F: FnMut(usize, &T, &[Message<'_, T>]) -> Result<T>,
    D: FnMut(&[T], &[T]) -> f64,
{
    let n = graph.vertex_count();
    if init.len() != n {
        return Err(Error::DimensionMismatch("initial state length != vertex count".into()));
    }
    let mut state = init;
    let mut messages = 0u64;
    let mut last_delta = f64::INFINITY;
    for rounds in 1..=max_rounds {
        let mut next = Vec::with_capacity(n);
        let mut inbox: Vec<Message<'_, T>> = Vec::new();
        for v in 0..n {
            inbox.clear();
            for end in graph.incident(v) {
                // Locality audit: the message's edge must join v to the
                // claimed sender, per the edge table.
                let edge = &graph.edges()[end.edge];
                let joins = (edge.source == end.neighbor && edge.target == v)
                    || (edge.target == end.neighbor && edge.source == v);
                assert!(joins, "message on edge {} not incident to vertex {v}", edge.id);
                inbox.push(Message { edge: end.edge, inward: end.inward, value: &state[end.neighbor] });
            }
            next.push(update(v, &state[v], &inbox)?);
        }
        messages += 2 * graph.edge_count() as u64;
        last_delta = delta(&state, &next);
        state = next;
        if last_delta < tol {
            return Ok(HarnessRun { state, rounds, converged: true, last_delta, messages });
        }
    }
    Ok(HarnessRun { state, rounds: max_rounds, converged: false, last_delta, messages })
}

/// Power-iteration vertex state with the amplitude kept in log scale so long
/// runs cannot underflow: the published pair is (log-amplitude, unit phase).
#[derive(Debug, Clone, Copy)]
pub struct LogAmplitudePhase {
    pub log_amp: f64,
    pub phase: Complex64,
}

fn power_update(
    model: &CircleModel,
    r: &[Complex64],
    beta: f64,
    own: &LogAmplitudePhase,
    inbox: &[Message<'_, LogAmplitudePhase>],
) -> Result<LogAmplitudePhase> {
    // Work relative to the largest incoming log-amplitude; the common shift
    // cancels from the phases and keeps every exponential in range.
    let mut shift = if beta > 0.0 { own.log_amp } else { f64::NEG_INFINITY };
    let mut load = beta;
    for msg in inbox {
        shift = shift.max(msg.value.log_amp);
        load += model.kappa[msg.edge];
    }
    if load <= 0.0 {
        return Err(Error::Disconnected("vertex has no incident concentration".into()));
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for msg in inbox {
        let transport = if msg.inward { r[msg.edge] } else { r[msg.edge].conj() };
        sum += model.kappa[msg.edge]
            * (msg.value.log_amp - shift).exp()
            * msg.value.phase
            * transport;
    }
    if beta > 0.0 {
        sum += beta * (own.log_amp - shift).exp() * own.phase;
    }
    sum /= load;
    let mag = sum.norm();
    if mag < 1e-300 {
        return Err(Error::Numerical("power-iteration amplitude collapsed".into()));
    }
    Ok(LogAmplitudePhase { log_amp: shift + mag.ln(), phase: sum / mag })
}

fn max_phase_delta(prev: &[LogAmplitudePhase], next: &[LogAmplitudePhase]) -> f64 {
    prev.iter()
        .zip(next)
        .map(|(a, b)| (a.phase - b.phase).norm())
        .fold(0.0f64, f64::max)
}

/// Distributed power iteration through the harness.
pub fn harness_local_power(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    init_phases: &[Complex64],
    beta: f64,
    tol: f64,
    max_rounds: usize,
) -> Result<HarnessRun<LogAmplitudePhase>> {
    let init = init_phases
        .iter()
        .map(|&phase| LogAmplitudePhase { log_amp: 0.0, phase })
        .collect();
    run_rounds(
        graph,
        init,
        |_, own, inbox| power_update(model, r, beta, own, inbox),
        max_phase_delta,
        tol,
        max_rounds,
    )
}

/// Hybrid refinement vertex state: the phase plus its current stationarity
/// defect, so the vertex can stop on a purely local criterion.
#[derive(Debug, Clone, Copy)]
pub struct RefineState {
    pub phase: Complex64,
    pub defect: f64,
}

/// Critical-point refinement through the harness: a vertex whose defect
/// |Im((A x)_v conj(x_v))| is below `threshold` holds still, others move to
/// the phase of (A x)_v + beta x_v. The run converges when every vertex's
/// recomputed defect passes.
pub fn harness_hybrid_refine(
    graph: &Graph,
    model: &CircleModel,
    r: &[Complex64],
    start: &[Complex64],
    beta: f64,
    threshold: f64,
    max_rounds: usize,
) -> Result<HarnessRun<RefineState>> {
    let init = start
        .iter()
        .map(|&phase| RefineState { phase, defect: f64::INFINITY })
        .collect();
    run_rounds(
        graph,
        init,
        |_, own, inbox| {
            let mut ax = Complex64::new(0.0, 0.0);
            for msg in inbox {
                let transport = if msg.inward { r[msg.edge] } else { r[msg.edge].conj() };
                ax += model.kappa[msg.edge] * msg.value.phase * transport;
            }
            let defect = (ax * own.phase.conj()).im.abs();
            if defect < threshold {
                return Ok(RefineState { phase: own.phase, defect });
            }
            let step = ax + beta * own.phase;
            let mag = step.norm();
            let phase = if mag >= 1e-300 { step / mag } else { own.phase };
            Ok(RefineState { phase, defect })
        },
        |_, next| next.iter().map(|s| s.defect).fold(0.0f64, f64::max),
        threshold,
        max_rounds,
    )
}

/// One Jacobi sweep per round through the harness, for d-dimensional real
/// states: x_v <- (1-damping) x_v + damping (sum of signed measurements +
/// neighbor values) / degree.
pub fn harness_jacobi(
    graph: &Graph,
    r: &nalgebra::DMatrix<f64>,
    init: Vec<Vec<f64>>,
    damping: f64,
    tol: f64,
    max_rounds: usize,
) -> Result<HarnessRun<Vec<f64>>> {
    let d = r.ncols();
    run_rounds(
        graph,
        init,
        |v, own, inbox| {
            if graph.degree(v) == 0 {
                return Err(Error::Disconnected(format!("vertex {v} is isolated")));
            }
            let mut acc = vec![0.0; d];
            for msg in inbox {
                let sign = if msg.inward { 1.0 } else { -1.0 };
                for (j, a) in acc.iter_mut().enumerate() {
                    *a += sign * r[(msg.edge, j)] + msg.value[j];
                }
            }
            let deg = graph.degree(v) as f64;
            Ok(own
                .iter()
                .zip(&acc)
                .map(|(x, a)| (1.0 - damping) * x + damping * a / deg)
                .collect())
        },
        // Convergence measured on edge differences of the change, matching
        // the centralized solver's criterion.
        |prev, next| {
            graph
                .edges()
                .iter()
                .map(|e| {
                    (0..d)
                        .map(|j| {
                            let dt = next[e.target][j] - prev[e.target][j];
                            let ds = next[e.source][j] - prev[e.source][j];
                            (dt - ds).abs()
                        })
                        .fold(0.0f64, f64::max)
                })
                .fold(0.0f64, f64::max)
        },
        tol,
        max_rounds,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{circular_error, ideal_measurements, run_local_power, AmplitudePhaseState};
    use crate::gaussian::{self, NoiseModel};
    use crate::incidence::IncidenceSet;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
            .collect()
    }

    #[test]
    fn message_count_is_two_per_edge_per_round() {
        let g = Graph::ring(5).unwrap();
        let run = run_rounds(
            &g,
            vec![0.0f64; 5],
            |_, own, inbox| Ok(own + inbox.len() as f64 * 0.0),
            |_, _| 1.0,
            0.5,
            7,
        )
        .unwrap();
        assert_eq!(run.messages, 7 * 2 * 5);
        assert!(!run.converged);
    }

    #[test]
    fn inbox_carries_previous_round_neighbor_values() {
        // Counting rounds: each vertex's value becomes 1 + min over
        // neighbors, so after k rounds the value is the BFS depth capped at
        // k. Any same-round leakage would shortcut the propagation.
        let g = Graph::path(6).unwrap();
        let mut front = vec![0.0f64; 6];
        front[0] = 100.0;
        let run = run_rounds(
            &g,
            front,
            |v, own, inbox| {
                if v == 0 {
                    return Ok(*own);
                }
                let best = inbox.iter().map(|m| *m.value).fold(f64::NEG_INFINITY, f64::max);
                Ok(own.max(best - 1.0))
            },
            |_, _| 1.0,
            0.5,
            3,
        )
        .unwrap();
        assert_eq!(run.state, vec![100.0, 99.0, 98.0, 97.0, 0.0, 0.0]);
    }

    #[test]
    fn harness_power_matches_the_centralized_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Graph::random_connected(7, 4, &mut rng).unwrap();
        let m = g.edge_count();
        let model = CircleModel::per_edge((0..m).map(|_| rng.random_range(0.5..4.0)).collect());
        let truth = random_phases(&mut rng, 7);
        let r = ideal_measurements(&g, &truth).unwrap();
        let init = random_phases(&mut rng, 7);
        let beta = model.kappa.iter().sum::<f64>() / m as f64;
        let harness = harness_local_power(&g, &model, &r, &init, beta, 1e-11, 5000).unwrap();
        let central = run_local_power(
            &g,
            &model,
            &r,
            AmplitudePhaseState::from_phases(init),
            beta,
            1e-11,
            5000,
        )
        .unwrap();
        assert!(harness.converged && central.converged);
        let hp: Vec<Complex64> = harness.state.iter().map(|s| s.phase).collect();
        assert!(circular_error(&hp, &central.state.phases, 0).unwrap() < 1e-12);
    }

    #[test]
    fn harness_power_survives_long_runs_without_underflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = Graph::ring(5).unwrap();
        let model = CircleModel::common(1.0, 5);
        let truth = random_phases(&mut rng, 5);
        let r: Vec<Complex64> = ideal_measurements(&g, &truth)
            .unwrap()
            .into_iter()
            .map(|z| {
                z * crate::circle::sample_von_mises(&mut rng, Complex64::new(1.0, 0.0), 1.0)
                    .unwrap()
            })
            .collect();
        let init = random_phases(&mut rng, 5);
        // Zero tolerance forces the full budget. The raw amplitude after this
        // many rounds is far below 1e-300; the log-scale state keeps going.
        let run = harness_local_power(&g, &model, &r, &init, 1.0, 0.0, 20_000).unwrap();
        assert_eq!(run.rounds, 20_000);
        assert!(!run.converged);
        assert!(run.state.iter().all(|s| s.phase.norm().is_finite()));
        assert!(run.state.iter().all(|s| s.log_amp.is_finite()));
    }

    #[test]
    fn harness_hybrid_reaches_a_critical_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = Graph::ring(5).unwrap();
        let model = CircleModel::common(2.0, 5);
        let truth = random_phases(&mut rng, 5);
        let r: Vec<Complex64> = ideal_measurements(&g, &truth)
            .unwrap()
            .into_iter()
            .map(|z| {
                z * crate::circle::sample_von_mises(&mut rng, Complex64::new(1.0, 0.0), 2.0)
                    .unwrap()
            })
            .collect();
        let init = random_phases(&mut rng, 5);
        let warm = harness_local_power(&g, &model, &r, &init, 2.0, 1e-300, 50)
            .unwrap_or_else(|_| panic!("warm start failed"));
        let phases: Vec<Complex64> = warm.state.iter().map(|s| s.phase).collect();
        let run = harness_hybrid_refine(&g, &model, &r, &phases, 2.0, 1e-9, 5000).unwrap();
        assert!(run.converged);
        let x: Vec<Complex64> = run.state.iter().map(|s| s.phase).collect();
        let report = crate::circle::critical_point_defects(&g, &model, &r, &x).unwrap();
        assert!(report.iter().all(|&d| d < 1e-9));
    }

    #[test]
    fn harness_jacobi_matches_the_direct_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let g = Graph::ring(5).unwrap();
        let r = DMatrix::from_fn(5, 1, |_, _| rng.random_range(-1.0..1.0));
        let run =
            harness_jacobi(&g, &r, vec![vec![0.0]; 5], 1.0, 1e-12, 100_000).unwrap();
        assert!(run.converged);
        let inc = IncidenceSet::build(&g, 0).unwrap();
        let direct = gaussian::ml_estimate(&inc, &r, &NoiseModel::IidScalar { sigma2: 1.0 }).unwrap();
        for v in 0..5 {
            let gauged = run.state[v][0] - run.state[0][0];
            assert!((gauged - direct.x_hat[(v, 0)]).abs() < 1e-8);
        }
    }
}

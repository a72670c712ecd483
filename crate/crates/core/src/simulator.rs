//! Deterministic synchronous round loop, metrics and run summaries.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::config::{AlgorithmSpec, EclSettings, ExperimentConfig, GraphSpec, ProblemSpec};
use crate::ecl::{self, AlphaMode, EclConfig, InnerSolver, NodeState};
use crate::gossip::{self, GossipConfig};
use crate::linalg::Vector;
use crate::objective::{
    centralized_optimum, generate_logistic, generate_quadratics, generate_scalar, Objective,
    QuadraticObjective, SpectrumReport,
};
use crate::theory::{TheoryInputs, TheoryReport};
use crate::topology::Graph;
use crate::transport::{InMemoryTransport, Transport};
use crate::{Error, Result};

/// Environment variable capping the node-phase thread pool (0 = serial).
pub const THREADS_ENV: &str = "CONSENSUS_SPLITTING_THREADS";

/// `dist_to_opt` at or below this counts as converged in summaries.
pub const CONVERGED_TOL: f64 = 1e-10;

/// Relative `‖Δz‖` at which the reference dual iteration stops.
const REFERENCE_TOL: f64 = 1e-12;
const REFERENCE_MAX_ROUNDS: usize = 200_000;

/// Per-node objectives for `n_nodes` nodes.
pub fn partition(problem: &ProblemSpec, n_nodes: usize, seed: u64) -> Result<Vec<Objective>> {
    match problem {
        ProblemSpec::Scalar {
            centers: None,
            curvatures: None,
            heterogeneity,
        } => generate_scalar(n_nodes, *heterogeneity, seed),
        ProblemSpec::Scalar {
            centers,
            curvatures,
            ..
        } => {
            let default_centers: Vec<f64>;
            let centers = match centers {
                Some(c) => c,
                None => {
                    default_centers = (0..n_nodes).map(|i| i as f64).collect();
                    &default_centers
                }
            };
            if centers.len() != n_nodes {
                return Err(Error::config(
                    "problem.centers",
                    format!("{} centers for {n_nodes} nodes", centers.len()),
                ));
            }
            let curvature = |i: usize| curvatures.as_ref().map_or(1.0, |q| q[i]);
            if curvatures.as_ref().is_some_and(|q| q.len() != n_nodes) {
                return Err(Error::config(
                    "problem.curvatures",
                    format!("expected {n_nodes} entries"),
                ));
            }
            centers
                .iter()
                .enumerate()
                .map(|(i, &c)| QuadraticObjective::scalar(curvature(i), c).map(Objective::from))
                .collect()
        }
        ProblemSpec::Quadratic(spec) => generate_quadratics(n_nodes, spec, seed),
        ProblemSpec::Logistic {
            d,
            samples,
            ridge,
            heterogeneity,
        } => generate_logistic(n_nodes, *d, *samples, *ridge, *heterogeneity, seed),
    }
}

/// Resolves the graph; edge-list paths are taken relative to `base_dir`.
pub fn build_graph(spec: &GraphSpec, base_dir: Option<&Path>) -> Result<Graph> {
    match spec {
        GraphSpec::Preset { kind, n } => Graph::preset(*kind, *n),
        GraphSpec::EdgeList { path } => {
            let p = match base_dir {
                Some(dir) => dir.join(path),
                None => path.into(),
            };
            Graph::parse_edge_list(&std::fs::read_to_string(&p)?)
        }
    }
}

/// Pool sized by [`THREADS_ENV`]; `None` means serial.
pub fn pool_from_env() -> Result<Option<rayon::ThreadPool>> {
    let n = match std::env::var(THREADS_ENV) {
        Err(_) => return Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::config(THREADS_ENV, format!("cannot parse `{v}`: {e}")))?,
    };
    if n == 0 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub dist_to_opt: f64,
    pub consensus_err: f64,
    pub z_residual: Option<f64>,
    pub bytes_sent: u64,
    pub cum_bytes: u64,
}

pub const CSV_HEADER: &str = "round,dist_to_opt,consensus_err,z_residual,bytes_sent,cum_bytes";

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{},{}",
            self.round,
            self.dist_to_opt,
            self.consensus_err,
            self.z_residual.unwrap_or(f64::NAN),
            self.bytes_sent,
            self.cum_bytes
        )
    }
}

enum Engine {
    Ecl {
        states: Vec<NodeState>,
        cfg: EclConfig,
    },
    Gossip {
        w: Vec<Vector>,
        cfg: GossipConfig,
    },
}

pub struct Simulation {
    graph: Graph,
    objectives: Vec<Arc<Objective>>,
    w_star: Vector,
    spectrum: SpectrumReport,
    engine: Engine,
    transport: InMemoryTransport,
    pool: Option<rayon::ThreadPool>,
    reference_z: Option<Vec<Vector>>,
    round: usize,
    cum_bytes: u64,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig, graph: Graph) -> Result<Self> {
        let objectives: Vec<Arc<Objective>> = partition(&cfg.problem, graph.n_nodes(), cfg.seed)?
            .into_iter()
            .map(Arc::new)
            .collect();
        let owned: Vec<Objective> = objectives.iter().map(|o| (**o).clone()).collect();
        let (w_star, spectrum) = centralized_optimum(&owned)?;
        let engine = match &cfg.algorithm {
            AlgorithmSpec::Ecl(s) | AlgorithmSpec::Cecl(s) => {
                let ecl_cfg = s.to_config(cfg.seed);
                ecl_cfg.validate()?;
                Engine::Ecl {
                    states: ecl::init_states(&graph, &objectives, s.w0)?,
                    cfg: ecl_cfg,
                }
            }
            AlgorithmSpec::Gossip { eta, local_steps } => {
                let gcfg = GossipConfig::metropolis_hastings(&graph, *eta, *local_steps);
                gcfg.validate(&graph)?;
                Engine::Gossip {
                    w: objectives.iter().map(|o| Vector::zeros(o.dim())).collect(),
                    cfg: gcfg,
                }
            }
        };
        let mut sim = Simulation {
            graph,
            objectives,
            w_star,
            spectrum,
            engine,
            transport: InMemoryTransport::new(),
            pool: None,
            reference_z: None,
            round: 0,
            cum_bytes: 0,
        };
        if cfg.reference {
            sim.compute_reference()?;
        }
        Ok(sim)
    }

    /// Resolves the graph from the config, then builds the simulation.
    pub fn from_config(cfg: &ExperimentConfig, base_dir: Option<&Path>) -> Result<Self> {
        Self::new(cfg, build_graph(&cfg.graph, base_dir)?)
    }

    pub fn with_pool(mut self, pool: Option<rayon::ThreadPool>) -> Self {
        self.pool = pool;
        self
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn w_star(&self) -> &Vector {
        &self.w_star
    }

    pub fn spectrum(&self) -> SpectrumReport {
        self.spectrum
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn iterates(&self) -> Vec<Vector> {
        match &self.engine {
            Engine::Ecl { states, .. } => states.iter().map(|s| s.w.clone()).collect(),
            Engine::Gossip { w, .. } => w.clone(),
        }
    }

    pub fn ecl_states(&self) -> Option<&[NodeState]> {
        match &self.engine {
            Engine::Ecl { states, .. } => Some(states),
            Engine::Gossip { .. } => None,
        }
    }

    pub fn ecl_config(&self) -> Option<&EclConfig> {
        match &self.engine {
            Engine::Ecl { cfg, .. } => Some(cfg),
            Engine::Gossip { .. } => None,
        }
    }

    pub fn reference_z(&self) -> Option<&[Vector]> {
        self.reference_z.as_deref()
    }

    /// Overwrites every `z_{i|j}`, in [`ecl::stacked_z`] order.
    pub fn set_duals(&mut self, z: &[Vector]) -> Result<()> {
        let Engine::Ecl { states, .. } = &mut self.engine else {
            return Err(Error::InvalidArgument(
                "gossip has no dual variables".into(),
            ));
        };
        let total: usize = states.iter().map(|s| s.degree()).sum();
        if z.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                actual: z.len(),
            });
        }
        let mut it = z.iter();
        for s in states.iter_mut() {
            let d = s.dim();
            for edge in s.duals.values_mut() {
                let v = it.next().expect("length checked");
                crate::linalg::check_dim(d, v.len())?;
                edge.z = v.clone();
            }
        }
        Ok(())
    }

    /// Dual fixed point from uncompressed, exact, unrelaxed ECL with the
    /// run's penalty, iterated until `‖Δz‖ <= 1e-12 max(1, ‖z‖)`.
    fn compute_reference(&mut self) -> Result<()> {
        let Engine::Ecl { states, cfg } = &self.engine else {
            return Ok(());
        };
        let ref_cfg = EclConfig {
            theta: 1.0,
            solver: InnerSolver::Exact,
            // identity for every round while alpha still sees the real k%
            warmup_rounds: usize::MAX,
            ..*cfg
        };
        let mut ref_states = states.clone();
        let mut transport = InMemoryTransport::new();
        let mut prev = ecl::stacked_z(&ref_states);
        for round in 0..REFERENCE_MAX_ROUNDS {
            ecl::run_round(
                &mut ref_states,
                &ref_cfg,
                round,
                &mut transport,
                self.pool.as_ref(),
            )?;
            let z = ecl::stacked_z(&ref_states);
            let step = ecl::stacked_distance(&z, &prev);
            let scale = z
                .iter()
                .map(|v| v.norm_squared())
                .sum::<f64>()
                .sqrt()
                .max(1.0);
            if !step.is_finite() {
                return Err(Error::Solver(format!(
                    "reference dual iteration diverged at round {round}"
                )));
            }
            if step <= REFERENCE_TOL * scale {
                self.reference_z = Some(z);
                return Ok(());
            }
            prev = z;
        }
        Err(Error::Solver(format!(
            "reference dual iteration did not settle within {REFERENCE_MAX_ROUNDS} rounds"
        )))
    }

    /// Metrics for the current state with the given per-round traffic.
    pub fn metrics(&self, bytes_sent: u64) -> RoundMetrics {
        let w = self.iterates();
        let dist = w
            .iter()
            .map(|wi| (wi - &self.w_star).norm_squared())
            .sum::<f64>()
            .sqrt();
        let consensus = self
            .graph
            .edges()
            .iter()
            .map(|&(i, j)| (&w[i] - &w[j]).norm())
            .fold(0.0, f64::max);
        let z_residual = match (&self.engine, &self.reference_z) {
            (Engine::Ecl { states, .. }, Some(zbar)) => {
                Some(ecl::stacked_distance(&ecl::stacked_z(states), zbar))
            }
            _ => None,
        };
        RoundMetrics {
            round: self.round,
            dist_to_opt: dist,
            consensus_err: consensus,
            z_residual,
            bytes_sent,
            cum_bytes: self.cum_bytes,
        }
    }

    /// Runs one round and returns the metrics after it.
    pub fn step(&mut self) -> Result<RoundMetrics> {
        let traffic = match &mut self.engine {
            Engine::Ecl { states, cfg } => ecl::run_round(
                states,
                cfg,
                self.round,
                &mut self.transport,
                self.pool.as_ref(),
            )?,
            Engine::Gossip { w, cfg } => gossip::gossip_round(
                w,
                &self.objectives,
                &self.graph,
                cfg,
                self.round,
                &mut self.transport,
            )?,
        };
        if self.transport.in_flight() != 0 {
            return Err(Error::Protocol(format!(
                "undelivered payloads after round {}",
                self.round
            )));
        }
        self.round += 1;
        self.cum_bytes += traffic.bytes_sent;
        Ok(self.metrics(traffic.bytes_sent))
    }

    /// Theory report for this instance when one applies: ECL-family runs
    /// with a single fixed penalty.
    pub fn theory(&self) -> Option<TheoryReport> {
        let cfg = self.ecl_config()?;
        let AlphaMode::Fixed(alpha) = cfg.alpha else {
            return None;
        };
        let (n_min, n_max) = self.graph.degree_bounds();
        TheoryReport::compute(TheoryInputs {
            mu: self.spectrum.mu,
            l: self.spectrum.l,
            alpha,
            n_min,
            n_max,
            tau: cfg.compression.tau(),
            theta: cfg.theta,
        })
        .ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRecord {
    pub round: usize,
    pub dist_to_opt: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    /// Recorded rows: round 0, every `metric_stride`-th round, and the last.
    pub metrics: Vec<RoundMetrics>,
    pub final_metrics: RoundMetrics,
    pub diverged: Option<DivergenceRecord>,
    pub theory: Option<TheoryReport>,
}

/// Runs `cfg` to completion or to the divergence guard.
pub fn run(cfg: &ExperimentConfig, sim: &mut Simulation) -> Result<RunReport> {
    let initial = sim.metrics(0);
    let limit = 1e6 * initial.dist_to_opt.max(1.0);
    let mut metrics = vec![initial];
    let mut last = initial;
    let mut diverged = None;
    for _ in 0..cfg.rounds {
        last = sim.step()?;
        let bad = !last.dist_to_opt.is_finite() || last.dist_to_opt > limit;
        if last.round.is_multiple_of(cfg.metric_stride) || last.round == cfg.rounds || bad {
            metrics.push(last);
        }
        if bad {
            diverged = Some(DivergenceRecord {
                round: last.round,
                dist_to_opt: last.dist_to_opt,
            });
            break;
        }
    }
    Ok(RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        metrics,
        final_metrics: last,
        diverged,
        theory: sim.theory(),
    })
}

impl RunReport {
    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "# seed={} name={}", self.seed, self.name)?;
        writeln!(out, "{CSV_HEADER}")?;
        for m in &self.metrics {
            writeln!(out, "{}", m.csv_row())?;
        }
        Ok(())
    }

    /// First recorded round with `dist_to_opt <= CONVERGED_TOL`.
    pub fn converged_round(&self) -> Option<usize> {
        self.metrics
            .iter()
            .find(|m| m.dist_to_opt <= CONVERGED_TOL)
            .map(|m| m.round)
    }

    /// Per-round geometric-mean contraction of `z_residual` (or of
    /// `dist_to_opt` without a reference) over recorded rows still above
    /// round-off. Needs two ratios at least.
    pub fn measured_slope(&self) -> Option<f64> {
        let series: Vec<(usize, f64)> = self
            .metrics
            .iter()
            .map(|m| (m.round, m.z_residual.unwrap_or(m.dist_to_opt)))
            .take_while(|&(_, v)| v.is_finite() && v > 1e-12)
            .collect();
        if series.len() < 3 {
            return None;
        }
        let (r0, v0) = series[0];
        let (r1, v1) = series[series.len() - 1];
        Some(((v1.ln() - v0.ln()) / (r1 - r0) as f64).exp())
    }

    pub fn render_summary(&self) -> String {
        let na = || "n/a".to_string();
        let m = &self.final_metrics;
        let mut rows = vec![
            ("name", self.name.clone()),
            ("seed", self.seed.to_string()),
            ("rounds run", m.round.to_string()),
            (
                "converged",
                self.converged_round().map_or("no".to_string(), |r| {
                    format!("round {r} (dist_to_opt <= {CONVERGED_TOL:e})")
                }),
            ),
            ("final dist_to_opt", format!("{:e}", m.dist_to_opt)),
            ("final consensus", format!("{:e}", m.consensus_err)),
            ("total bytes", m.cum_bytes.to_string()),
            (
                "measured slope",
                self.measured_slope().map_or_else(na, |s| format!("{s:.6}")),
            ),
            (
                "theory rho",
                self.theory.map_or_else(na, |t| format!("{:.6}", t.rho)),
            ),
        ];
        if let Some(t) = &self.theory {
            rows.push(("theory delta", format!("{:.6}", t.delta)));
            rows.push(("theory tau_min", format!("{:.6}", t.tau_min)));
            if !t.admissible() {
                rows.push((
                    "theory status",
                    "tau below tau_min: no certified rate".into(),
                ));
            }
        }
        if let Some(d) = &self.diverged {
            rows.push((
                "aborted",
                format!(
                    "divergence guard at round {} (dist_to_opt {:e})",
                    d.round, d.dist_to_opt
                ),
            ));
        }
        rows.iter().map(|(k, v)| format!("{k:<18} {v}\n")).collect()
    }
}

/// Convenience for settings shared by ECL and C-ECL configs.
pub fn ecl_settings(cfg: &ExperimentConfig) -> Option<&EclSettings> {
    match &cfg.algorithm {
        AlgorithmSpec::Ecl(s) | AlgorithmSpec::Cecl(s) => Some(s),
        AlgorithmSpec::Gossip { .. } => None,
    }
}

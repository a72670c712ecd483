//! Node-local state machine of edge-consensus learning (ECL) and its
//! communication-compressed variant (C-ECL).
//!
//! One round at node `i`:
//!
//! 1. `w_i <- argmin f_i(w) + (alpha/2) sum_j |A_{i|j} w - z_{i|j}/alpha|^2`
//! 2. `y_{i|j} <- z_{i|j} - 2 alpha A_{i|j} w_i` for every neighbor `j`
//! 3. send `comp(y_{i|j}; omega_{j|i})` to `j`
//! 4. on receipt of `comp(y_{j|i}; omega_{i|j})`:
//!    `z_{i|j} <- z_{i|j} + theta (comp(y_{j|i}) - comp(z_{i|j}))`
//!
//! Step 4 is `z + theta comp(y - z)` by linearity of `comp`. With the
//! identity operator it is the plain relaxed update `(1-theta) z + theta y`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::compression::{wire, CompressionOperator, Mask, MaskStream, Payload};
use crate::linalg::{check_dim, Vector};
use crate::objective::{solve_exact, solve_inexact, Objective, QuadraticProx, WUpdate};
use crate::theory::alpha_rule;
use crate::topology::Graph;
use crate::transport::Transport;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDualState {
    pub z: Vector,
    pub y: Vector,
}

impl EdgeDualState {
    pub fn zeros(d: usize) -> Self {
        EdgeDualState {
            z: Vector::zeros(d),
            y: Vector::zeros(d),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    pub w: Vector,
    /// Keyed by neighbor id.
    pub duals: BTreeMap<usize, EdgeDualState>,
    pub objective: Arc<Objective>,
    prepared: Option<Arc<QuadraticProx>>,
}

impl NodeState {
    pub fn new(id: usize, graph: &Graph, objective: Arc<Objective>, w0: Vector) -> Result<Self> {
        check_dim(objective.dim(), w0.len())?;
        let d = objective.dim();
        let duals = graph
            .neighbors(id)
            .iter()
            .map(|&j| (j, EdgeDualState::zeros(d)))
            .collect();
        Ok(NodeState {
            id,
            w: w0,
            duals,
            objective,
            prepared: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn degree(&self) -> usize {
        self.duals.len()
    }

    fn sign(&self, j: usize) -> f64 {
        if self.id < j {
            1.0
        } else {
            -1.0
        }
    }
}

/// Builds one state per node with zero duals.
pub fn init_states(
    graph: &Graph,
    objectives: &[Arc<Objective>],
    w0: f64,
) -> Result<Vec<NodeState>> {
    if objectives.len() != graph.n_nodes() {
        return Err(Error::InvalidArgument(format!(
            "{} objectives for {} nodes",
            objectives.len(),
            graph.n_nodes()
        )));
    }
    objectives
        .iter()
        .enumerate()
        .map(|(i, obj)| NodeState::new(i, graph, obj.clone(), Vector::from_element(obj.dim(), w0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSolver {
    Exact,
    /// `local_steps` linearized proximal-gradient steps of size `eta`.
    Inexact {
        eta: f64,
        local_steps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    Fixed(f64),
    /// Per-node `1 / (eta |N_i| (100 K / k - 1))`.
    Rule {
        eta: f64,
        local_steps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EclConfig {
    pub theta: f64,
    pub alpha: AlphaMode,
    pub solver: InnerSolver,
    pub compression: CompressionOperator,
    /// Rounds at the start that bypass compression.
    pub warmup_rounds: usize,
    /// Root of every per-pair mask stream.
    pub mask_seed: u64,
}

impl EclConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::config(
                "ecl.theta",
                format!("θ ∈ (0, 1] violated: theta = {}", self.theta),
            ));
        }
        match self.alpha {
            AlphaMode::Fixed(a) if !(a > 0.0 && a.is_finite()) => {
                return Err(Error::config(
                    "ecl.alpha",
                    format!("alpha must be positive, got {a}"),
                ));
            }
            AlphaMode::Rule { eta, local_steps } => {
                alpha_rule(eta, 1, local_steps, self.k_percent())
                    .map_err(|e| Error::config("ecl.alpha", e.to_string()))?;
            }
            _ => {}
        }
        if let InnerSolver::Inexact { eta, local_steps } = self.solver {
            if !(eta > 0.0) {
                return Err(Error::config(
                    "ecl.eta",
                    format!("eta must be positive, got {eta}"),
                ));
            }
            if local_steps == 0 {
                return Err(Error::config("ecl.local_steps", "must be at least 1"));
            }
        }
        Ok(())
    }

    fn k_percent(&self) -> f64 {
        self.compression.tau() * 100.0
    }

    pub fn alpha_for(&self, degree: usize) -> Result<f64> {
        match self.alpha {
            AlphaMode::Fixed(a) => Ok(a),
            AlphaMode::Rule { eta, local_steps } => {
                alpha_rule(eta, degree, local_steps, self.k_percent())
            }
        }
    }

    /// Operator in effect for `round`; warm-up rounds send full precision.
    pub fn operator_for(&self, round: usize) -> CompressionOperator {
        if round < self.warmup_rounds {
            CompressionOperator::Identity
        } else {
            self.compression
        }
    }
}

/// w-update followed by the reflected dual step for every neighbor.
pub fn local_update(state: &mut NodeState, cfg: &EclConfig) -> Result<()> {
    let alpha = cfg.alpha_for(state.degree())?;
    let d = state.dim();
    let signs: Vec<f64> = state.duals.keys().map(|&j| state.sign(j)).collect();
    let upd = WUpdate::new(
        d,
        state
            .duals
            .values()
            .map(|e| &e.z)
            .zip(signs.iter().copied()),
        alpha,
    )?;
    let w = match (cfg.solver, &*state.objective) {
        (InnerSolver::Exact, Objective::Quadratic(q)) => {
            let prox = match &state.prepared {
                Some(p) if p.penalty() == upd.penalty => p.clone(),
                _ => {
                    let p = Arc::new(QuadraticProx::prepare(q, upd.penalty));
                    state.prepared = Some(p.clone());
                    p
                }
            };
            prox.solve(q, &upd.drive)?
        }
        (InnerSolver::Exact, _) => solve_exact(&state.objective, &upd)?,
        (InnerSolver::Inexact { eta, local_steps }, _) => {
            solve_inexact(&state.objective, &state.w, &upd, eta, local_steps)?
        }
    };
    for (edge, sign) in state.duals.values_mut().zip(signs) {
        edge.y = &edge.z - &w * (2.0 * alpha * sign);
    }
    state.w = w;
    Ok(())
}

/// `z <- z + theta (received - comp(z; mask))`.
///
/// A dense payload means the identity operator was in effect and the mask
/// is ignored. A sparse payload must carry exactly the coordinates selected
/// by `mask`.
pub fn z_update(
    edge: &mut EdgeDualState,
    received: &Payload,
    mask: &Mask,
    theta: f64,
) -> Result<()> {
    let d = edge.z.len();
    check_dim(d, received.dim())?;
    match received {
        Payload::Dense(y) => {
            for (z, &yk) in edge.z.iter_mut().zip(y.iter()) {
                *z += theta * (yk - *z);
            }
        }
        Payload::Sparse(s) => {
            check_dim(d, mask.len())?;
            let mut expected = mask.indices();
            for &k in &s.indices {
                if expected.next() != Some(k as usize) {
                    return Err(Error::Protocol(format!(
                        "payload index {k} does not match the shared mask"
                    )));
                }
            }
            if expected.next().is_some() {
                return Err(Error::Protocol(
                    "payload is missing masked coordinates".into(),
                ));
            }
            for (&k, &yk) in s.indices.iter().zip(&s.values) {
                let z = &mut edge.z[k as usize];
                *z += theta * (yk - *z);
            }
        }
    }
    Ok(())
}

/// The uncompressed relaxed update `(1 - theta) z + theta y`.
pub fn relaxed_z_update(z: &Vector, y: &Vector, theta: f64) -> Vector {
    z * (1.0 - theta) + y * theta
}

/// Traffic of one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundTraffic {
    pub bytes_sent: u64,
    pub payloads: u64,
}

/// One synchronous round over all nodes. `round` is 0-based and keys the
/// masks. Compute runs on `pool` when given; results do not depend on it.
pub fn run_round(
    states: &mut [NodeState],
    cfg: &EclConfig,
    round: usize,
    transport: &mut dyn Transport,
    pool: Option<&rayon::ThreadPool>,
) -> Result<RoundTraffic> {
    let op = cfg.operator_for(round);
    let r = round as u64;

    // phase 1: local update and outgoing payloads
    let compute = |state: &mut NodeState| -> Result<Vec<(usize, Vec<u8>)>> {
        local_update(state, cfg)?;
        let d = state.dim();
        let mut out = Vec::with_capacity(state.degree());
        for (&j, edge) in &state.duals {
            // node j updates z_{j|i} with omega_{j|i}
            let mask = op.derive_mask(MaskStream::for_pair(cfg.mask_seed, j, state.id), r, d);
            out.push((j, wire::encode(&op.apply(&edge.y, &mask)?)));
        }
        Ok(out)
    };
    let outgoing: Vec<Vec<(usize, Vec<u8>)>> = match pool {
        Some(p) => p.install(|| states.par_iter_mut().map(compute).collect::<Result<_>>())?,
        None => states.iter_mut().map(compute).collect::<Result<_>>()?,
    };

    let mut traffic = RoundTraffic::default();
    for (i, msgs) in outgoing.into_iter().enumerate() {
        for (j, bytes) in msgs {
            traffic.bytes_sent += bytes.len() as u64;
            traffic.payloads += 1;
            transport.send(states[i].id, j, bytes);
        }
    }

    // phase 2: receive and update duals
    let mut inboxes: Vec<Vec<(usize, Vec<u8>)>> = Vec::with_capacity(states.len());
    for state in states.iter() {
        let mut inbox = Vec::with_capacity(state.degree());
        for &j in state.duals.keys() {
            let bytes = transport.recv(state.id, j).ok_or(Error::TransportLoss {
                from: j,
                to: state.id,
                round,
            })?;
            inbox.push((j, bytes));
        }
        inboxes.push(inbox);
    }
    let receive = |(state, inbox): (&mut NodeState, Vec<(usize, Vec<u8>)>)| -> Result<()> {
        let d = state.dim();
        for (j, bytes) in inbox {
            let mask = op.derive_mask(MaskStream::for_pair(cfg.mask_seed, state.id, j), r, d);
            let payload = if op.is_identity() {
                let v = wire::decode_dense(&bytes)?;
                check_dim(d, v.len())?;
                Payload::Dense(v)
            } else {
                Payload::Sparse(wire::decode_sparse(&bytes, d)?)
            };
            let edge = state.duals.get_mut(&j).expect("inbox keyed by neighbors");
            z_update(edge, &payload, &mask, cfg.theta)?;
        }
        Ok(())
    };
    match pool {
        Some(p) => p.install(|| {
            states
                .par_iter_mut()
                .zip(inboxes.into_par_iter())
                .map(receive)
                .collect::<Result<()>>()
        })?,
        None => states.iter_mut().zip(inboxes).try_for_each(receive)?,
    }
    Ok(traffic)
}

/// Stacked dual vector `z`, ordered by node then by neighbor id.
pub fn stacked_z(states: &[NodeState]) -> Vec<Vector> {
    states
        .iter()
        .flat_map(|s| s.duals.values().map(|e| e.z.clone()))
        .collect()
}

pub fn stacked_distance(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::SparseVector;
    use crate::objective::QuadraticObjective;
    use crate::topology::Preset;
    use crate::transport::InMemoryTransport;

    fn two_node() -> (Graph, Vec<NodeState>) {
        let g = Graph::preset(Preset::Chain, 2).unwrap();
        let objs: Vec<Arc<Objective>> = [1.0, 3.0]
            .iter()
            .map(|&c| Arc::new(QuadraticObjective::scalar(1.0, c).unwrap().into()))
            .collect();
        let states = init_states(&g, &objs, 0.0).unwrap();
        (g, states)
    }

    fn exact_cfg(theta: f64) -> EclConfig {
        EclConfig {
            theta,
            alpha: AlphaMode::Fixed(1.0),
            solver: InnerSolver::Exact,
            compression: CompressionOperator::Identity,
            warmup_rounds: 0,
            mask_seed: 0,
        }
    }

    #[test]
    fn two_node_local_update() {
        let (_, mut states) = two_node();
        let cfg = exact_cfg(1.0);
        local_update(&mut states[0], &cfg).unwrap();
        local_update(&mut states[1], &cfg).unwrap();
        assert_eq!(states[0].w[0], 0.5);
        assert_eq!(states[1].w[0], 1.5);
        assert_eq!(states[0].duals[&1].y[0], -1.0);
        assert_eq!(states[1].duals[&0].y[0], 3.0);
    }

    #[test]
    fn zero_primal_gives_zero_reflection() {
        let g = Graph::preset(Preset::Chain, 2).unwrap();
        let obj: Arc<Objective> = Arc::new(QuadraticObjective::scalar(1.0, 0.0).unwrap().into());
        let mut s = NodeState::new(0, &g, obj, Vector::zeros(1)).unwrap();
        local_update(&mut s, &exact_cfg(1.0)).unwrap();
        assert_eq!(s.w[0], 0.0);
        assert_eq!(s.duals[&1].y[0], 0.0);
    }

    #[test]
    fn two_node_rounds() {
        let (_, mut states) = two_node();
        let cfg = exact_cfg(1.0);
        let mut t = InMemoryTransport::new();
        run_round(&mut states, &cfg, 0, &mut t, None).unwrap();
        assert_eq!((states[0].w[0], states[1].w[0]), (0.5, 1.5));
        assert_eq!(states[0].duals[&1].z[0], 3.0);
        assert_eq!(states[1].duals[&0].z[0], -1.0);
        run_round(&mut states, &cfg, 1, &mut t, None).unwrap();
        assert_eq!((states[0].w[0], states[1].w[0]), (2.0, 2.0));
        assert_eq!(states[0].duals[&1].y[0], -1.0);
        assert_eq!(states[1].duals[&0].y[0], 3.0);
        assert_eq!(states[0].duals[&1].z[0], 3.0);
        assert_eq!(states[1].duals[&0].z[0], -1.0);
        assert_eq!(t.in_flight(), 0);
    }

    #[test]
    fn relaxed_update_two_forms() {
        let mut edge = EdgeDualState {
            z: Vector::from_element(1, 2.0),
            y: Vector::zeros(1),
        };
        let y = Vector::from_element(1, 4.0);
        let relaxed = relaxed_z_update(&edge.z, &y, 0.5);
        z_update(&mut edge, &Payload::Dense(y), &Mask(vec![true]), 0.5).unwrap();
        assert_eq!(edge.z[0], 3.0);
        assert_eq!(relaxed[0], 3.0);
    }

    #[test]
    fn z_update_rejects_mask_mismatch() {
        let mut edge = EdgeDualState::zeros(3);
        let mask = Mask(vec![true, false, true]);
        let bad = Payload::Sparse(SparseVector {
            dim: 3,
            indices: vec![0, 1],
            values: vec![1.0, 1.0],
        });
        assert!(matches!(
            z_update(&mut edge, &bad, &mask, 1.0),
            Err(Error::Protocol(_))
        ));
        let short = Payload::Sparse(SparseVector {
            dim: 3,
            indices: vec![0],
            values: vec![1.0],
        });
        assert!(matches!(
            z_update(&mut edge, &short, &mask, 1.0),
            Err(Error::Protocol(_))
        ));
        let good = Payload::Sparse(SparseVector {
            dim: 3,
            indices: vec![0, 2],
            values: vec![1.0, 5.0],
        });
        z_update(&mut edge, &good, &mask, 1.0).unwrap();
        assert_eq!(edge.z.as_slice(), &[1.0, 0.0, 5.0]);
    }

    #[test]
    fn transport_loss_is_an_error() {
        struct Lossy(InMemoryTransport);
        impl Transport for Lossy {
            fn send(&mut self, from: usize, to: usize, bytes: Vec<u8>) {
                if from != 1 {
                    self.0.send(from, to, bytes);
                }
            }
            fn recv(&mut self, to: usize, from: usize) -> Option<Vec<u8>> {
                self.0.recv(to, from)
            }
            fn in_flight(&self) -> usize {
                self.0.in_flight()
            }
        }
        let (_, mut states) = two_node();
        let mut t = Lossy(InMemoryTransport::new());
        let err = run_round(&mut states, &exact_cfg(1.0), 0, &mut t, None).unwrap_err();
        assert!(matches!(
            err,
            Error::TransportLoss {
                from: 1,
                to: 0,
                round: 0
            }
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = exact_cfg(0.0);
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("θ ∈ (0, 1]"), "{msg}");
        cfg.theta = 1.0;
        cfg.alpha = AlphaMode::Rule {
            eta: 0.1,
            local_steps: 1,
        };
        assert!(cfg.validate().is_err());
        cfg.compression = CompressionOperator::rand_k(50.0).unwrap();
        cfg.validate().unwrap();
        assert!((cfg.alpha_for(2).unwrap() - 1.0 / (0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn parallel_matches_serial() {
        let g = Graph::preset(Preset::Ring, 6).unwrap();
        let objs: Vec<Arc<Objective>> = crate::objective::generate_quadratics(
            6,
            &crate::objective::QuadraticSpec {
                d: 4,
                kappa: 5.0,
                spread: 2.0,
                heterogeneity: crate::objective::Heterogeneity::Heterogeneous,
                rotate: true,
            },
            1,
        )
        .unwrap()
        .into_iter()
        .map(Arc::new)
        .collect();
        let cfg = EclConfig {
            compression: CompressionOperator::rand_k(40.0).unwrap(),
            mask_seed: 99,
            ..exact_cfg(1.0)
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let mut a = init_states(&g, &objs, 0.0).unwrap();
        let mut b = a.clone();
        let (mut ta, mut tb) = (InMemoryTransport::new(), InMemoryTransport::new());
        for r in 0..20 {
            run_round(&mut a, &cfg, r, &mut ta, None).unwrap();
            run_round(&mut b, &cfg, r, &mut tb, Some(&pool)).unwrap();
        }
        assert_eq!(stacked_z(&a), stacked_z(&b));
        assert_eq!(ta.bytes_sent(), tb.bytes_sent());
    }
}

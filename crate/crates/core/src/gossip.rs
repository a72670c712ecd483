//! D-PSGD baseline: `K` local gradient steps, then one weighted average
//! with the neighbors.

use std::sync::Arc;

use crate::compression::{wire, Payload};
use crate::ecl::RoundTraffic;
use crate::linalg::{check_dim, Matrix, Vector};
use crate::objective::Objective;
use crate::topology::Graph;
use crate::transport::Transport;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GossipConfig {
    pub eta: f64,
    pub local_steps: usize,
    pub weights: Matrix,
}

impl GossipConfig {
    /// Metropolis–Hastings weights on `graph`.
    pub fn metropolis_hastings(graph: &Graph, eta: f64, local_steps: usize) -> Self {
        GossipConfig {
            eta,
            local_steps,
            weights: graph.mh_weights(),
        }
    }

    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config(
                "gossip.eta",
                format!("must be non-negative, got {}", self.eta),
            ));
        }
        if self.local_steps == 0 {
            return Err(Error::config("gossip.local_steps", "must be at least 1"));
        }
        let n = graph.n_nodes();
        if self.weights.nrows() != n || self.weights.ncols() != n {
            return Err(Error::config(
                "gossip.weights",
                format!("expected a {n}x{n} matrix"),
            ));
        }
        for i in 0..n {
            let row: f64 = self.weights.row(i).sum();
            if (row - 1.0).abs() > 1e-12 {
                return Err(Error::config(
                    "gossip.weights",
                    format!("row {i} sums to {row}"),
                ));
            }
            for j in 0..n {
                let wij = self.weights[(i, j)];
                if wij < 0.0 || (wij - self.weights[(j, i)]).abs() > 1e-12 {
                    return Err(Error::config(
                        "gossip.weights",
                        "weights must be symmetric and non-negative",
                    ));
                }
                if i != j && wij != 0.0 && !graph.is_adjacent(i, j) {
                    return Err(Error::config(
                        "gossip.weights",
                        format!("weight on non-edge ({i}, {j})"),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn gossip_round(
    w: &mut [Vector],
    objectives: &[Arc<Objective>],
    graph: &Graph,
    cfg: &GossipConfig,
    round: usize,
    transport: &mut dyn Transport,
) -> Result<RoundTraffic> {
    check_dim(graph.n_nodes(), w.len())?;
    check_dim(graph.n_nodes(), objectives.len())?;
    for (wi, f) in w.iter_mut().zip(objectives) {
        for _ in 0..cfg.local_steps {
            let g = f.grad(wi)?;
            wi.axpy(-cfg.eta, &g, 1.0);
        }
    }

    let mut traffic = RoundTraffic::default();
    for (i, wi) in w.iter().enumerate() {
        let bytes = wire::encode(&Payload::Dense(wi.clone()));
        for &j in graph.neighbors(i) {
            traffic.bytes_sent += bytes.len() as u64;
            traffic.payloads += 1;
            transport.send(i, j, bytes.clone());
        }
    }

    let mut next = Vec::with_capacity(w.len());
    for (i, wi) in w.iter().enumerate() {
        let mut acc = wi * cfg.weights[(i, i)];
        for &j in graph.neighbors(i) {
            let bytes = transport.recv(i, j).ok_or(Error::TransportLoss {
                from: j,
                to: i,
                round,
            })?;
            let wj = wire::decode_dense(&bytes)?;
            check_dim(wi.len(), wj.len())?;
            acc.axpy(cfg.weights[(i, j)], &wj, 1.0);
        }
        next.push(acc);
    }
    for (dst, src) in w.iter_mut().zip(next) {
        *dst = src;
    }
    Ok(traffic)
}

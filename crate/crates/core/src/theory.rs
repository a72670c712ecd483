//! Closed-form rate calculator for (compressed) edge-consensus splitting.
//!
//! `delta` is the contraction factor of the reflected resolvent built from
//! the strong-convexity / smoothness constants `(mu, L)` and the degree
//! bounds of the graph. Compression of quality `tau` is admissible when
//! `tau >= 1 - ((1 - delta)/(1 + delta))^2`, and any relaxation `theta`
//! inside [`theta_interval`] then contracts `|z - z_bar|` by
//! [`contraction_factor`] per round in expectation.

use std::fmt::Write as _;

use crate::{Error, Result};

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "delta must lie in [0, 1), got {delta}"
        )))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "tau must lie in (0, 1], got {tau}"
        )))
    }
}

fn check_constants(mu: f64, l: f64, alpha: f64, n_min: usize, n_max: usize) -> Result<()> {
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < mu <= L, got mu={mu}, L={l}"
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if n_min < 1 || n_min > n_max {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= N_min <= N_max, got N_min={n_min}, N_max={n_max}"
        )));
    }
    Ok(())
}

pub fn delta(mu: f64, l: f64, alpha: f64, n_min: usize, n_max: usize) -> Result<f64> {
    check_constants(mu, l, alpha, n_min, n_max)?;
    let hi = alpha * n_max as f64;
    let lo = alpha * n_min as f64;
    Ok(((hi - mu) / (hi + mu)).max((l - lo) / (l + lo)))
}

/// The same quantity written in terms of the smoothness `N_max/mu` and
/// strong convexity `N_min/L` of the dual function.
pub fn delta_dual_form(mu: f64, l: f64, alpha: f64, n_min: usize, n_max: usize) -> Result<f64> {
    check_constants(mu, l, alpha, n_min, n_max)?;
    let smooth = alpha * n_max as f64 / mu;
    let strong = alpha * n_min as f64 / l;
    Ok(((smooth - 1.0) / (smooth + 1.0)).max((1.0 - strong) / (1.0 + strong)))
}

pub fn tau_min(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let r = (1.0 - delta) / (1.0 + delta);
    Ok(1.0 - r * r)
}

/// Open interval of admissible `theta`, or `None` when it is empty.
pub fn theta_interval(delta: f64, tau: f64) -> Result<Option<(f64, f64)>> {
    check_delta(delta)?;
    check_tau(tau)?;
    let s = (1.0 - tau).sqrt();
    let lo = 2.0 * delta * s / ((1.0 - delta) * (1.0 - s));
    let hi = 2.0 / ((1.0 + delta) * (1.0 + s));
    Ok((lo < hi).then_some((lo, hi)))
}

pub fn contraction_factor(theta: f64, delta: f64, tau: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must be positive, got {theta}"
        )));
    }
    check_delta(delta)?;
    check_tau(tau)?;
    let s = (1.0 - tau).sqrt();
    let off = (1.0 - theta).abs();
    Ok(off + theta * delta + s * (theta + off * delta + delta))
}

/// The rate-minimizing relaxation. The factor is piecewise linear in
/// `theta` with a kink at 1, decreasing before it and increasing after.
pub fn argmin_theta(delta: f64, tau: f64) -> Result<f64> {
    let needed = tau_min(delta)?;
    check_tau(tau)?;
    if tau < needed {
        return Err(Error::InvalidArgument(format!(
            "tau = {tau} is below the admissible minimum {needed}"
        )));
    }
    Ok(1.0)
}

/// Per-node penalty `1 / (eta |N_i| (100 K / k - 1))`; with `k = 100` this
/// is `1 / (eta |N_i| (K - 1))`.
pub fn alpha_rule(eta: f64, degree: usize, local_steps: usize, k_percent: f64) -> Result<f64> {
    if !(eta > 0.0) || degree == 0 || local_steps == 0 || !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha rule needs eta > 0, degree >= 1, K >= 1, k% in (0, 100]; got eta={eta}, degree={degree}, K={local_steps}, k={k_percent}"
        )));
    }
    let effective = 100.0 * local_steps as f64 / k_percent - 1.0;
    if !(effective > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha rule is undefined for K={local_steps}, k={k_percent}% (effective local steps {effective}); set alpha explicitly"
        )));
    }
    Ok(1.0 / (eta * degree as f64 * effective))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub mu: f64,
    pub l: f64,
    pub alpha: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub tau: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryReport {
    pub inputs: TheoryInputs,
    pub delta: f64,
    pub tau_min: f64,
    pub theta_interval: Option<(f64, f64)>,
    pub rho: f64,
    pub prefactor: f64,
}

impl TheoryReport {
    pub fn compute(inputs: TheoryInputs) -> Result<Self> {
        let TheoryInputs {
            mu,
            l,
            alpha,
            n_min,
            n_max,
            tau,
            theta,
        } = inputs;
        let delta = delta(mu, l, alpha, n_min, n_max)?;
        Ok(TheoryReport {
            inputs,
            delta,
            tau_min: tau_min(delta)?,
            theta_interval: theta_interval(delta, tau)?,
            rho: contraction_factor(theta, delta, tau)?,
            prefactor: (n_max as f64).sqrt() / (mu + alpha * n_min as f64),
        })
    }

    /// Whether the convergence conditions hold for the configured `tau`.
    pub fn admissible(&self) -> bool {
        self.inputs.tau >= self.tau_min
    }

    pub fn theta_admissible(&self) -> bool {
        self.theta_interval
            .is_some_and(|(lo, hi)| lo < self.inputs.theta && self.inputs.theta < hi)
    }

    pub fn render_text(&self) -> String {
        let i = &self.inputs;
        let interval = match self.theta_interval {
            Some((lo, hi)) => format!("({lo:.6}, {hi:.6})"),
            None => "empty".to_string(),
        };
        let rows = [
            ("mu", format!("{}", i.mu)),
            ("L", format!("{}", i.l)),
            ("alpha", format!("{}", i.alpha)),
            ("N_min / N_max", format!("{} / {}", i.n_min, i.n_max)),
            ("tau", format!("{}", i.tau)),
            ("theta", format!("{}", i.theta)),
            ("delta", format!("{:.6}", self.delta)),
            ("tau_min", format!("{:.6}", self.tau_min)),
            ("theta interval", interval),
            ("rho(theta)", format!("{:.6}", self.rho)),
            ("prefactor", format!("{:.6}", self.prefactor)),
            (
                "status",
                if !self.admissible() {
                    "tau below tau_min: no certified rate".to_string()
                } else if !self.theta_admissible() {
                    "theta outside admissible interval".to_string()
                } else {
                    "linear rate certified".to_string()
                },
            ),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<16} {v}");
        }
        out
    }

    pub fn render_kv(&self) -> String {
        let i = &self.inputs;
        let (lo, hi) = match self.theta_interval {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => ("none".into(), "none".into()),
        };
        let mut out = String::new();
        for (k, v) in [
            ("mu", i.mu.to_string()),
            ("L", i.l.to_string()),
            ("alpha", i.alpha.to_string()),
            ("n_min", i.n_min.to_string()),
            ("n_max", i.n_max.to_string()),
            ("tau", i.tau.to_string()),
            ("theta", i.theta.to_string()),
            ("delta", self.delta.to_string()),
            ("tau_min", self.tau_min.to_string()),
            ("theta_lo", lo),
            ("theta_hi", hi),
            ("rho", self.rho.to_string()),
            ("prefactor", self.prefactor.to_string()),
            ("admissible", self.admissible().to_string()),
        ] {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

//! Per-node convex losses and the w-update solvers.
//!
//! The w-update at node `i` minimizes
//! `f_i(w) + (alpha/2) * sum_j |A_{i|j} w - z_{i|j}/alpha|^2`. Because every
//! `A_{i|j}` is `±I`, the penalty collapses to
//! `(alpha |N_i| / 2) |w|^2 - <w, sum_j sign_j z_{i|j}> + const`, which is what
//! [`WUpdate`] stores.

use nalgebra::{Cholesky, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{check_dim, sym_eig_bounds, Matrix, Vector};
use crate::{Error, Result};

/// `f(w) = 1/2 w'Qw - c'w`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    q: Matrix,
    c: Vector,
}

impl QuadraticObjective {
    pub fn new(q: Matrix, c: Vector) -> Result<Self> {
        let d = c.len();
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: q.nrows(),
            });
        }
        if (&q - q.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidArgument("Q is not symmetric".into()));
        }
        let (lo, _) = sym_eig_bounds(&q);
        if lo <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Q is not positive definite (smallest eigenvalue {lo})"
            )));
        }
        Ok(QuadraticObjective { q, c })
    }

    /// One-dimensional `f(w) = curvature/2 * (w - center)^2` up to a constant.
    pub fn scalar(curvature: f64, center: f64) -> Result<Self> {
        QuadraticObjective::new(
            Matrix::from_element(1, 1, curvature),
            Vector::from_element(1, curvature * center),
        )
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }
}

/// Ridge-regularized logistic loss averaged over local samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticObjective {
    /// One sample per row.
    features: Matrix,
    /// Labels in `{-1, +1}`.
    labels: Vec<f64>,
    ridge: f64,
}

impl LogisticObjective {
    pub fn new(features: Matrix, labels: Vec<f64>, ridge: f64) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "logistic objective needs samples".into(),
            ));
        }
        check_dim(features.nrows(), labels.len())?;
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidArgument("labels must be -1 or +1".into()));
        }
        if !(ridge > 0.0) {
            return Err(Error::InvalidArgument("ridge must be positive".into()));
        }
        Ok(LogisticObjective {
            features,
            labels,
            ridge,
        })
    }

    fn margins(&self, w: &Vector) -> Vector {
        let xw = &self.features * w;
        Vector::from_iterator(xw.len(), xw.iter().zip(&self.labels).map(|(v, y)| y * v))
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Curvature constants of a strongly convex, smooth function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumReport {
    pub mu: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(QuadraticObjective),
    Logistic(LogisticObjective),
}

impl From<QuadraticObjective> for Objective {
    fn from(q: QuadraticObjective) -> Self {
        Objective::Quadratic(q)
    }
}

impl From<LogisticObjective> for Objective {
    fn from(l: LogisticObjective) -> Self {
        Objective::Logistic(l)
    }
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.c.len(),
            Objective::Logistic(l) => l.features.ncols(),
        }
    }

    pub fn eval(&self, w: &Vector) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        Ok(match self {
            Objective::Quadratic(q) => 0.5 * w.dot(&(&q.q * w)) - q.c.dot(w),
            Objective::Logistic(l) => {
                let m = l.labels.len() as f64;
                let loss: f64 = l.margins(w).iter().map(|&t| softplus(-t)).sum();
                loss / m + 0.5 * l.ridge * w.norm_squared()
            }
        })
    }

    pub fn grad(&self, w: &Vector) -> Result<Vector> {
        check_dim(self.dim(), w.len())?;
        Ok(match self {
            Objective::Quadratic(q) => &q.q * w - &q.c,
            Objective::Logistic(l) => {
                let m = l.labels.len() as f64;
                let margins = l.margins(w);
                // d/dw softplus(-y x'w) = -y sigma(-y x'w) x
                let coef = Vector::from_iterator(
                    margins.len(),
                    margins
                        .iter()
                        .zip(&l.labels)
                        .map(|(&t, y)| -y * sigmoid(-t) / m),
                );
                l.features.transpose() * coef + w * l.ridge
            }
        })
    }

    pub fn hessian(&self, w: &Vector) -> Result<Matrix> {
        check_dim(self.dim(), w.len())?;
        Ok(match self {
            Objective::Quadratic(q) => q.q.clone(),
            Objective::Logistic(l) => {
                let m = l.labels.len() as f64;
                let d = self.dim();
                let margins = l.margins(w);
                let mut h = Matrix::identity(d, d) * l.ridge;
                for (row, &t) in l.features.row_iter().zip(margins.iter()) {
                    let s = sigmoid(t);
                    h += row.transpose() * row * (s * (1.0 - s) / m);
                }
                h
            }
        })
    }

    /// Strong-convexity and smoothness constants: exact for quadratics,
    /// `ridge` and `ridge + lambda_max(X'X)/(4m)` for logistic.
    pub fn spectrum(&self) -> SpectrumReport {
        match self {
            Objective::Quadratic(q) => {
                let (mu, l) = sym_eig_bounds(&q.q);
                SpectrumReport { mu, l }
            }
            Objective::Logistic(lg) => {
                let m = lg.labels.len() as f64;
                let gram = lg.features.transpose() * &lg.features;
                let (_, top) = sym_eig_bounds(&gram);
                SpectrumReport {
                    mu: lg.ridge,
                    l: lg.ridge + top / (4.0 * m),
                }
            }
        }
    }
}

/// The data of one node's w-update: `drive = sum_j sign_j z_{i|j}` and
/// `penalty = alpha * |N_i|`.
#[derive(Debug, Clone, PartialEq)]
pub struct WUpdate {
    pub drive: Vector,
    pub penalty: f64,
}

impl WUpdate {
    pub fn new<'a>(
        d: usize,
        duals: impl IntoIterator<Item = (&'a Vector, f64)>,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        let mut drive = Vector::zeros(d);
        let mut count = 0usize;
        for (z, sign) in duals {
            check_dim(d, z.len())?;
            drive.axpy(sign, z, 1.0);
            count += 1;
        }
        Ok(WUpdate {
            drive,
            penalty: alpha * count as f64,
        })
    }

    fn from_slices(duals: &[Vector], signs: &[f64], alpha: f64, d: usize) -> Result<Self> {
        check_dim(duals.len(), signs.len())?;
        WUpdate::new(d, duals.iter().zip(signs.iter().copied()), alpha)
    }
}

/// Exact minimizer of the w-update problem.
pub fn prox_exact(obj: &Objective, duals: &[Vector], signs: &[f64], alpha: f64) -> Result<Vector> {
    let upd = WUpdate::from_slices(duals, signs, alpha, obj.dim())?;
    solve_exact(obj, &upd)
}

/// Linearized w-update repeated `steps` times: each step solves
/// `argmin <w, grad f(v)> + |w - v|^2/(2 eta) + penalty/2 |w|^2 - <w, drive>`
/// and restarts from its result.
pub fn prox_inexact(
    obj: &Objective,
    w_prev: &Vector,
    duals: &[Vector],
    signs: &[f64],
    alpha: f64,
    eta: f64,
    steps: usize,
) -> Result<Vector> {
    let upd = WUpdate::from_slices(duals, signs, alpha, obj.dim())?;
    solve_inexact(obj, w_prev, &upd, eta, steps)
}

/// Factorization of `Q + penalty I`, reusable across rounds while the
/// penalty stays fixed.
#[derive(Debug, Clone)]
pub struct QuadraticProx {
    penalty: f64,
    lu: LU<f64, Dyn, Dyn>,
}

impl QuadraticProx {
    pub fn prepare(q: &QuadraticObjective, penalty: f64) -> Self {
        let d = q.c.len();
        QuadraticProx {
            penalty,
            lu: (&q.q + Matrix::identity(d, d) * penalty).lu(),
        }
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn solve(&self, q: &QuadraticObjective, drive: &Vector) -> Result<Vector> {
        let rhs = &q.c + drive;
        self.lu
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("w-update system is singular".into()))
    }
}

pub fn solve_exact(obj: &Objective, upd: &WUpdate) -> Result<Vector> {
    let d = obj.dim();
    check_dim(d, upd.drive.len())?;
    match obj {
        Objective::Quadratic(q) => QuadraticProx::prepare(q, upd.penalty).solve(q, &upd.drive),
        Objective::Logistic(_) => {
            let inner_grad =
                |w: &Vector| -> Result<Vector> { Ok(obj.grad(w)? + w * upd.penalty - &upd.drive) };
            newton(
                Vector::zeros(d),
                inner_grad,
                |w| Ok(obj.hessian(w)? + Matrix::identity(d, d) * upd.penalty),
                1e-12,
            )
        }
    }
}

pub fn solve_inexact(
    obj: &Objective,
    w_prev: &Vector,
    upd: &WUpdate,
    eta: f64,
    steps: usize,
) -> Result<Vector> {
    check_dim(obj.dim(), w_prev.len())?;
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eta must be positive, got {eta}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "local steps must be at least 1".into(),
        ));
    }
    let scale = 1.0 / (1.0 / eta + upd.penalty);
    let mut w = w_prev.clone();
    for _ in 0..steps {
        let g = obj.grad(&w)?;
        w = (&w / eta - g + &upd.drive) * scale;
    }
    Ok(w)
}

/// Newton's method with unit steps; the inner problems here are strongly
/// convex with bounded Hessian, and the step is halved if the gradient
/// norm grows.
fn newton(
    start: Vector,
    grad: impl Fn(&Vector) -> Result<Vector>,
    hess: impl Fn(&Vector) -> Result<Matrix>,
    tol: f64,
) -> Result<Vector> {
    const BUDGET: usize = 200;
    let mut w = start;
    let mut g = grad(&w)?;
    for _ in 0..BUDGET {
        if g.norm() <= tol {
            return Ok(w);
        }
        let h = hess(&w)?;
        let chol = Cholesky::new(h)
            .ok_or_else(|| Error::Solver("Hessian not positive definite".into()))?;
        let step = chol.solve(&g);
        let mut t = 1.0;
        loop {
            let cand = &w - &step * t;
            let gc = grad(&cand)?;
            if gc.norm() < g.norm() || t < 1e-8 {
                w = cand;
                g = gc;
                break;
            }
            t *= 0.5;
        }
    }
    if g.norm() <= tol {
        return Ok(w);
    }
    Err(Error::Solver(format!(
        "Newton did not reach gradient norm {tol:e} in {BUDGET} iterations (last {:e})",
        g.norm()
    )))
}

/// Minimizer of `sum_i f_i` and the curvature constants of the stacked
/// separable objective.
pub fn centralized_optimum(objs: &[Objective]) -> Result<(Vector, SpectrumReport)> {
    let first = objs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no objectives".into()))?;
    let d = first.dim();
    for o in objs {
        check_dim(d, o.dim())?;
    }
    let spectra: Vec<_> = objs.iter().map(Objective::spectrum).collect();
    let spectrum = SpectrumReport {
        mu: spectra.iter().map(|s| s.mu).fold(f64::INFINITY, f64::min),
        l: spectra
            .iter()
            .map(|s| s.l)
            .fold(f64::NEG_INFINITY, f64::max),
    };

    let all_quadratic = objs.iter().all(|o| matches!(o, Objective::Quadratic(_)));
    let w_star = if all_quadratic {
        let mut q_sum = Matrix::zeros(d, d);
        let mut c_sum = Vector::zeros(d);
        for o in objs {
            if let Objective::Quadratic(q) = o {
                q_sum += &q.q;
                c_sum += &q.c;
            }
        }
        let chol = Cholesky::new(q_sum)
            .ok_or_else(|| Error::Solver("sum of Q not positive definite".into()))?;
        chol.solve(&c_sum)
    } else {
        let grad = |w: &Vector| -> Result<Vector> {
            let mut g = Vector::zeros(d);
            for o in objs {
                g += o.grad(w)?;
            }
            Ok(g)
        };
        let hess = |w: &Vector| -> Result<Matrix> {
            let mut h = Matrix::zeros(d, d);
            for o in objs {
                h += o.hessian(w)?;
            }
            Ok(h)
        };
        newton(Vector::zeros(d), grad, hess, 1e-12)?
    };
    Ok((w_star, spectrum))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heterogeneity {
    Homogeneous,
    Heterogeneous,
}

impl std::str::FromStr for Heterogeneity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homogeneous" => Ok(Heterogeneity::Homogeneous),
            "heterogeneous" => Ok(Heterogeneity::Heterogeneous),
            other => Err(Error::InvalidArgument(format!(
                "unknown heterogeneity `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for Heterogeneity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Heterogeneity::Homogeneous => "homogeneous",
            Heterogeneity::Heterogeneous => "heterogeneous",
        })
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Parameters of a synthetic quadratic instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticSpec {
    pub d: usize,
    pub kappa: f64,
    pub spread: f64,
    pub heterogeneity: Heterogeneity,
    /// Random eigenbases; when false every Hessian is diagonal.
    pub rotate: bool,
}

/// Quadratics whose Hessians all have eigenvalues evenly spaced on
/// `[1, kappa]`, so the stacked objective has `mu = 1`, `L = kappa`.
///
/// Heterogeneous nodes get independent eigenbases and optima
/// `spread * N(0, I)`. Homogeneous nodes share one Hessian and their optima
/// lie within 1% of a common center.
pub fn generate_quadratics(
    n_nodes: usize,
    spec: &QuadraticSpec,
    seed: u64,
) -> Result<Vec<Objective>> {
    let QuadraticSpec {
        d,
        kappa,
        spread,
        heterogeneity,
        rotate,
    } = *spec;
    if d == 0 {
        return Err(Error::InvalidArgument(
            "dimension must be at least 1".into(),
        ));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "kappa must be >= 1, got {kappa}"
        )));
    }
    if d == 1 && kappa != 1.0 {
        return Err(Error::InvalidArgument(
            "a 1-dimensional quadratic needs kappa = 1".into(),
        ));
    }
    if !spread.is_finite() {
        return Err(Error::InvalidArgument("spread must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eigs = Vector::from_iterator(
        d,
        (0..d).map(|k| {
            if d == 1 {
                1.0
            } else {
                1.0 + (kappa - 1.0) * k as f64 / (d - 1) as f64
            }
        }),
    );
    let hessian = |rng: &mut ChaCha8Rng| {
        if !rotate {
            return Matrix::from_diagonal(&eigs);
        }
        let u = random_rotation(rng, d);
        let q = &u * Matrix::from_diagonal(&eigs) * u.transpose();
        // symmetrize away rounding
        (&q + q.transpose()) * 0.5
    };
    let mut out = Vec::with_capacity(n_nodes);
    match heterogeneity {
        Heterogeneity::Heterogeneous => {
            for _ in 0..n_nodes {
                let q = hessian(&mut rng);
                let m = gaussian_vector(&mut rng, d) * spread;
                let c = &q * m;
                out.push(QuadraticObjective::new(q, c)?.into());
            }
        }
        Heterogeneity::Homogeneous => {
            let q = hessian(&mut rng);
            let center = gaussian_vector(&mut rng, d) * spread;
            for _ in 0..n_nodes {
                let u: f64 = rng.random_range(-1.0..=1.0);
                let m = &center * (1.0 + 0.01 * u);
                let c = &q * m;
                out.push(QuadraticObjective::new(q.clone(), c)?.into());
            }
        }
    }
    Ok(out)
}

/// Unit-curvature scalar quadratics `(w - c_i)^2 / 2`. Heterogeneous nodes
/// use `c_i = i`; homogeneous nodes use `(n-1)/2 ± 0.01`.
pub fn generate_scalar(n_nodes: usize, mode: Heterogeneity, seed: u64) -> Result<Vec<Objective>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = (n_nodes as f64 - 1.0) / 2.0;
    (0..n_nodes)
        .map(|i| {
            let c = match mode {
                Heterogeneity::Heterogeneous => i as f64,
                Heterogeneity::Homogeneous => center + 0.01 * rng.random_range(-1.0..=1.0),
            };
            QuadraticObjective::scalar(1.0, c).map(Objective::from)
        })
        .collect()
}

/// Ridge logistic regression with Gaussian features. Heterogeneous nodes
/// label their samples with independent ground-truth separators.
pub fn generate_logistic(
    n_nodes: usize,
    d: usize,
    samples: usize,
    ridge: f64,
    mode: Heterogeneity,
    seed: u64,
) -> Result<Vec<Objective>> {
    if d == 0 || samples == 0 {
        return Err(Error::InvalidArgument(
            "logistic problem needs d >= 1 and samples >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = gaussian_vector(&mut rng, d);
    let mut out = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let truth = match mode {
            Heterogeneity::Homogeneous => shared.clone(),
            Heterogeneity::Heterogeneous => gaussian_vector(&mut rng, d),
        };
        let features = Matrix::from_fn(samples, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let labels = (0..samples)
            .map(|r| {
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.1;
                if features.row(r).dot(&truth.transpose()) + noise >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        out.push(LogisticObjective::new(features, labels, ridge)?.into());
    }
    Ok(out)
}

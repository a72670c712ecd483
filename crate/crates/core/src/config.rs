//! Flat `key=value` experiment files.
//!
//! ```text
//! # comments start with '#'
//! name = ring8-hetero-cecl-k20
//! seed = 7
//! graph.kind = ring
//! graph.n = 8
//! problem.kind = scalar
//! problem.heterogeneity = heterogeneous
//! algorithm = cecl
//! ecl.theta = 1
//! ecl.alpha = auto
//! compression.kind = rand-k
//! compression.k_percent = 20
//! rounds = 500
//! ```
//!
//! `compression.seed` roots the mask streams separately from `seed`, which
//! also draws the problem data.
//!
//! Every key is validated before anything runs; unknown or repeated keys
//! are errors. [`ExperimentConfig::dump`] writes the canonical form, which
//! parses back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::compression::CompressionOperator;
use crate::ecl::{AlphaMode, EclConfig, InnerSolver};
use crate::objective::{Heterogeneity, QuadraticSpec};
use crate::topology::Preset;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Preset { kind: Preset, n: usize },
    EdgeList { path: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    /// `curvature_i / 2 * (w - center_i)^2`. Without explicit centers the
    /// heterogeneity mode picks them.
    Scalar {
        centers: Option<Vec<f64>>,
        curvatures: Option<Vec<f64>>,
        heterogeneity: Heterogeneity,
    },
    Quadratic(QuadraticSpec),
    Logistic {
        d: usize,
        samples: usize,
        ridge: f64,
        heterogeneity: Heterogeneity,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EclSettings {
    pub theta: f64,
    pub alpha: AlphaMode,
    pub solver: InnerSolver,
    pub compression: CompressionOperator,
    pub warmup_rounds: usize,
    pub w0: f64,
    /// Root of the mask streams; defaults to the experiment seed.
    pub mask_seed: Option<u64>,
}

impl EclSettings {
    pub fn to_config(&self, seed: u64) -> EclConfig {
        EclConfig {
            theta: self.theta,
            alpha: self.alpha,
            solver: self.solver,
            compression: self.compression,
            warmup_rounds: self.warmup_rounds,
            mask_seed: self.mask_seed.unwrap_or(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgorithmSpec {
    /// Uncompressed; the settings' compression is always the identity.
    Ecl(EclSettings),
    Cecl(EclSettings),
    Gossip {
        eta: f64,
        local_steps: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub graph: GraphSpec,
    pub problem: ProblemSpec,
    pub algorithm: AlgorithmSpec,
    pub rounds: usize,
    pub metric_stride: usize,
    /// Precompute the dual fixed point so `z_residual` can be reported.
    pub reference: bool,
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            if map
                .insert(k.to_string(), (idx + 1, v.to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(Entries { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|(_, v)| v)
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(v) if v.parse::<f64>().is_ok_and(|x| !x.is_finite()) => {
                Err(Error::config(key, format!("must be finite, got `{v}`")))
            }
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.take_parsed(key)?
            .ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take_parsed(key)?.unwrap_or(default))
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|t| match t.trim().parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    Ok(_) => Err(Error::config(
                        key,
                        format!("list entry `{t}` must be finite"),
                    )),
                    Err(e) => Err(Error::config(key, format!("bad list entry `{t}`: {e}"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Parse {
                line,
                message: format!("unknown key `{k}`"),
            }),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let name = e.or("name", "experiment".to_string())?;
        let seed = e.or("seed", 0u64)?;

        let graph = match e.require::<String>("graph.kind")?.as_str() {
            "file" => GraphSpec::EdgeList {
                path: e.require("graph.path")?,
            },
            kind => GraphSpec::Preset {
                kind: kind
                    .parse()
                    .map_err(|err: Error| Error::config("graph.kind", err.to_string()))?,
                n: e.require("graph.n")?,
            },
        };

        let heterogeneity = |e: &mut Entries| -> Result<Heterogeneity> {
            e.take_parsed("problem.heterogeneity")
                .map(|h| h.unwrap_or(Heterogeneity::Heterogeneous))
        };
        let problem = match e.require::<String>("problem.kind")?.as_str() {
            "scalar" => ProblemSpec::Scalar {
                centers: e.list("problem.centers")?,
                curvatures: e.list("problem.curvatures")?,
                heterogeneity: heterogeneity(&mut e)?,
            },
            "quadratic" => ProblemSpec::Quadratic(QuadraticSpec {
                d: e.require("problem.d")?,
                kappa: e.or("problem.kappa", 1.0)?,
                spread: e.or("problem.spread", 1.0)?,
                heterogeneity: heterogeneity(&mut e)?,
                rotate: e.or("problem.rotate", true)?,
            }),
            "logistic" => ProblemSpec::Logistic {
                d: e.require("problem.d")?,
                samples: e.require("problem.samples")?,
                ridge: positive("problem.ridge", e.require("problem.ridge")?)?,
                heterogeneity: heterogeneity(&mut e)?,
            },
            other => {
                return Err(Error::config(
                    "problem.kind",
                    format!("unknown problem kind `{other}`"),
                ))
            }
        };

        let algorithm_name: String = e.require("algorithm")?;
        let algorithm = match algorithm_name.as_str() {
            "ecl" | "cecl" => {
                let theta: f64 = e.or("ecl.theta", 1.0)?;
                let eta: Option<f64> = e.take_parsed("ecl.eta")?;
                let local_steps: Option<usize> = e.take_parsed("ecl.local_steps")?;
                let alpha = match e.take("ecl.alpha").as_deref() {
                    None => return Err(Error::config("ecl.alpha", "missing required key")),
                    Some("auto") => AlphaMode::Rule {
                        eta: eta.ok_or_else(|| {
                            Error::config("ecl.eta", "required by ecl.alpha=auto")
                        })?,
                        local_steps: local_steps.ok_or_else(|| {
                            Error::config("ecl.local_steps", "required by ecl.alpha=auto")
                        })?,
                    },
                    Some(v) => AlphaMode::Fixed(v.parse::<f64>().map_err(|err| {
                        Error::config("ecl.alpha", format!("cannot parse `{v}`: {err}"))
                    })?),
                };
                let solver = match e.or("ecl.solver", "exact".to_string())?.as_str() {
                    "exact" => InnerSolver::Exact,
                    "inexact" => InnerSolver::Inexact {
                        eta: eta.ok_or_else(|| {
                            Error::config("ecl.eta", "required by the inexact solver")
                        })?,
                        local_steps: local_steps.unwrap_or(1),
                    },
                    other => {
                        return Err(Error::config(
                            "ecl.solver",
                            format!("unknown solver `{other}`"),
                        ))
                    }
                };
                let compression = match e.or("compression.kind", "identity".to_string())?.as_str() {
                    "identity" => CompressionOperator::Identity,
                    "rand-k" => CompressionOperator::rand_k(e.require("compression.k_percent")?)
                        .map_err(|err| Error::config("compression.k_percent", err.to_string()))?,
                    other => {
                        return Err(Error::config(
                            "compression.kind",
                            format!("unknown compression `{other}`"),
                        ))
                    }
                };
                let settings = EclSettings {
                    theta,
                    alpha,
                    solver,
                    compression,
                    warmup_rounds: e.or("ecl.warmup_rounds", 0)?,
                    w0: e.or("ecl.w0", 0.0)?,
                    mask_seed: e.take_parsed("compression.seed")?,
                };
                settings.to_config(seed).validate()?;
                if algorithm_name == "ecl" {
                    if !compression.is_identity() {
                        return Err(Error::config(
                            "compression.kind",
                            "algorithm=ecl is uncompressed; use algorithm=cecl",
                        ));
                    }
                    AlgorithmSpec::Ecl(settings)
                } else {
                    AlgorithmSpec::Cecl(settings)
                }
            }
            "gossip" => {
                let eta: f64 = e.require("gossip.eta")?;
                if !(eta >= 0.0 && eta.is_finite()) {
                    return Err(Error::config(
                        "gossip.eta",
                        format!("must be non-negative, got {eta}"),
                    ));
                }
                let local_steps: usize = e.or("gossip.local_steps", 1)?;
                if local_steps == 0 {
                    return Err(Error::config("gossip.local_steps", "must be at least 1"));
                }
                AlgorithmSpec::Gossip { eta, local_steps }
            }
            other => {
                return Err(Error::config(
                    "algorithm",
                    format!("unknown algorithm `{other}`"),
                ))
            }
        };

        let rounds: usize = e.require("rounds")?;
        if rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        let metric_stride: usize = e.or("metric_stride", 1)?;
        if metric_stride == 0 {
            return Err(Error::config("metric_stride", "must be at least 1"));
        }
        let reference = e.or("reference", false)?;
        e.finish()?;

        let cfg = ExperimentConfig {
            name,
            seed,
            graph,
            problem,
            algorithm,
            rounds,
            metric_stride,
            reference,
        };
        cfg.validate_problem()?;
        Ok(cfg)
    }

    fn validate_problem(&self) -> Result<()> {
        match &self.problem {
            ProblemSpec::Scalar {
                centers,
                curvatures,
                ..
            } => {
                if let (Some(c), GraphSpec::Preset { n, .. }) = (centers, &self.graph) {
                    if c.len() != *n {
                        return Err(Error::config(
                            "problem.centers",
                            format!("{} centers for {n} nodes", c.len()),
                        ));
                    }
                }
                if let Some(q) = curvatures {
                    if let Some(bad) = q.iter().find(|&&v| !(v > 0.0)) {
                        return Err(Error::config(
                            "problem.curvatures",
                            format!("must be positive, got {bad}"),
                        ));
                    }
                    if let Some(c) = centers {
                        if c.len() != q.len() {
                            return Err(Error::config(
                                "problem.curvatures",
                                "length differs from problem.centers",
                            ));
                        }
                    }
                }
            }
            ProblemSpec::Quadratic(q) => {
                if q.d == 0 {
                    return Err(Error::config("problem.d", "must be at least 1"));
                }
                if !(q.kappa >= 1.0) {
                    return Err(Error::config(
                        "problem.kappa",
                        format!("must be >= 1, got {}", q.kappa),
                    ));
                }
            }
            ProblemSpec::Logistic { d, samples, .. } => {
                if *d == 0 || *samples == 0 {
                    return Err(Error::config(
                        "problem",
                        "logistic needs problem.d >= 1 and problem.samples >= 1",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Canonical text form.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        kv("name", self.name.clone());
        kv("seed", self.seed.to_string());
        match &self.graph {
            GraphSpec::Preset { kind, n } => {
                kv("graph.kind", kind.to_string());
                kv("graph.n", n.to_string());
            }
            GraphSpec::EdgeList { path } => {
                kv("graph.kind", "file".into());
                kv("graph.path", path.clone());
            }
        }
        match &self.problem {
            ProblemSpec::Scalar {
                centers,
                curvatures,
                heterogeneity,
            } => {
                kv("problem.kind", "scalar".into());
                if let Some(c) = centers {
                    kv("problem.centers", join(c));
                }
                if let Some(q) = curvatures {
                    kv("problem.curvatures", join(q));
                }
                kv("problem.heterogeneity", heterogeneity.to_string());
            }
            ProblemSpec::Quadratic(q) => {
                kv("problem.kind", "quadratic".into());
                kv("problem.d", q.d.to_string());
                kv("problem.kappa", q.kappa.to_string());
                kv("problem.spread", q.spread.to_string());
                kv("problem.heterogeneity", q.heterogeneity.to_string());
                kv("problem.rotate", q.rotate.to_string());
            }
            ProblemSpec::Logistic {
                d,
                samples,
                ridge,
                heterogeneity,
            } => {
                kv("problem.kind", "logistic".into());
                kv("problem.d", d.to_string());
                kv("problem.samples", samples.to_string());
                kv("problem.ridge", ridge.to_string());
                kv("problem.heterogeneity", heterogeneity.to_string());
            }
        }
        match &self.algorithm {
            AlgorithmSpec::Ecl(s) | AlgorithmSpec::Cecl(s) => {
                let name = if matches!(self.algorithm, AlgorithmSpec::Ecl(_)) {
                    "ecl"
                } else {
                    "cecl"
                };
                kv("algorithm", name.into());
                kv("ecl.theta", s.theta.to_string());
                let mut eta = None;
                let mut steps = None;
                match s.alpha {
                    AlphaMode::Fixed(a) => kv("ecl.alpha", a.to_string()),
                    AlphaMode::Rule {
                        eta: e,
                        local_steps,
                    } => {
                        kv("ecl.alpha", "auto".into());
                        eta = Some(e);
                        steps = Some(local_steps);
                    }
                }
                match s.solver {
                    InnerSolver::Exact => kv("ecl.solver", "exact".into()),
                    InnerSolver::Inexact {
                        eta: e,
                        local_steps,
                    } => {
                        kv("ecl.solver", "inexact".into());
                        // the solver and the alpha rule share these keys
                        eta = Some(e);
                        steps = Some(local_steps);
                    }
                }
                if let Some(e) = eta {
                    kv("ecl.eta", e.to_string());
                }
                if let Some(k) = steps {
                    kv("ecl.local_steps", k.to_string());
                }
                kv("ecl.warmup_rounds", s.warmup_rounds.to_string());
                kv("ecl.w0", s.w0.to_string());
                match s.compression {
                    CompressionOperator::Identity => kv("compression.kind", "identity".into()),
                    CompressionOperator::RandK { k_percent } => {
                        kv("compression.kind", "rand-k".into());
                        kv("compression.k_percent", k_percent.to_string());
                    }
                }
                if let Some(m) = s.mask_seed {
                    kv("compression.seed", m.to_string());
                }
            }
            AlgorithmSpec::Gossip { eta, local_steps } => {
                kv("algorithm", "gossip".into());
                kv("gossip.eta", eta.to_string());
                kv("gossip.local_steps", local_steps.to_string());
            }
        }
        kv("rounds", self.rounds.to_string());
        kv("metric_stride", self.metric_stride.to_string());
        kv("reference", self.reference.to_string());
        out
    }
}

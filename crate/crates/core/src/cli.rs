//! Command-line driver. [`main_with`] does the work and reports through
//! the given writers so tests can run it in-process.
//!
//! Exit codes: 0 success, 1 configuration or runtime error, 2 divergence
//! guard tripped, 3 `tau < tau_min` in `theory`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::compression::CompressionOperator;
use crate::config::{AlgorithmSpec, ExperimentConfig};
use crate::linalg::Vector;
use crate::presets::{self, PRESETS};
use crate::simulator::{self, Simulation};
use crate::theory::{TheoryInputs, TheoryReport};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_INADMISSIBLE: i32 = 3;

/// Largest instance `trace` will print.
pub const TRACE_MAX_NODES: usize = 3;
pub const TRACE_MAX_DIM: usize = 2;

#[derive(Debug, Parser)]
#[command(
    name = "consensus-splitting",
    version,
    about = "ECL / C-ECL consensus optimization simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its metric CSV and summary.
    Run(RunArgs),
    /// Print the convergence-theory report for given constants.
    Theory(TheoryArgs),
    /// Estimate the compression contract constant empirically.
    VerifyCompression(VerifyArgs),
    /// Print every w, y, z value per round for a tiny ECL preset.
    Trace(TraceArgs),
    /// List the bundled presets.
    Presets,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment file in `key = value` form.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled preset name.
    #[arg(long)]
    pub preset: Option<String>,
    /// CSV destination; without it the CSV goes to stdout and the summary to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress the summary.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub mu: f64,
    #[arg(long = "L")]
    pub l: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub n_min: usize,
    #[arg(long)]
    pub n_max: usize,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// Only the machine-readable `key=value` block.
    #[arg(long)]
    pub kv: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Operator: `identity`, `rand-K` or `rand-K%`.
    #[arg(long)]
    pub operator: String,
    #[arg(long, default_value_t = 1000)]
    pub d: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Bundled preset name.
    pub preset: String,
    /// Overrides the preset's round count.
    #[arg(long)]
    pub rounds: Option<usize>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Divergence { .. } => EXIT_DIVERGED,
                _ => EXIT_CONFIG,
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Run(a) => cmd_run(&a, out, err),
        Command::Theory(a) => cmd_theory(&a, out),
        Command::VerifyCompression(a) => cmd_verify(&a, out),
        Command::Trace(a) => cmd_trace(&a.preset, a.rounds, out),
        Command::Presets => {
            for (name, _) in PRESETS {
                writeln!(out, "{name}")?;
            }
            Ok(EXIT_OK)
        }
    }
}

/// Loads the experiment named by `--config` or `--preset`, with the directory
/// that relative edge-list paths resolve against.
pub fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let (mut cfg, base) = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            let base = path.parent().map(Path::to_path_buf);
            (ExperimentConfig::parse(&text)?, base)
        }
        (None, Some(name)) => (presets::preset(name)?, None),
        (None, None) => {
            return Err(Error::InvalidArgument(
                "one of --config or --preset is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok((cfg, base))
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (cfg, base) = load_config(args)?;
    let pool = simulator::pool_from_env()?;
    let mut sim = Simulation::from_config(&cfg, base.as_deref())?.with_pool(pool);
    let report = simulator::run(&cfg, &mut sim)?;

    let summary_sink: &mut dyn Write = match &args.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            report.write_csv(&mut f)?;
            f.flush()?;
            out
        }
        None => {
            report.write_csv(out)?;
            err
        }
    };
    if !args.quiet {
        write!(summary_sink, "{}", report.render_summary())?;
    }
    Ok(if report.diverged.is_some() {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    })
}

pub fn cmd_theory(a: &TheoryArgs, out: &mut dyn Write) -> Result<i32> {
    let report = TheoryReport::compute(TheoryInputs {
        mu: a.mu,
        l: a.l,
        alpha: a.alpha,
        n_min: a.n_min,
        n_max: a.n_max,
        tau: a.tau,
        theta: a.theta,
    })?;
    if !a.kv {
        writeln!(out, "{}", report.render_text())?;
    }
    write!(out, "{}", report.render_kv())?;
    Ok(if report.admissible() {
        EXIT_OK
    } else {
        EXIT_INADMISSIBLE
    })
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let op: CompressionOperator = a.operator.parse()?;
    let estimate = op.verify_contract(a.d, a.samples, a.seed)?;
    writeln!(out, "operator        {op}")?;
    writeln!(out, "d               {}", a.d)?;
    writeln!(out, "samples         {}", a.samples)?;
    writeln!(out, "nominal tau     {}", op.tau())?;
    writeln!(out, "empirical tau   {estimate:.6}")?;
    writeln!(out, "abs deviation   {:.6}", (estimate - op.tau()).abs())?;
    Ok(EXIT_OK)
}

fn fmt_vec(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

/// Stable per-round dump: node ids are 0-based, `y[i|j]` and `z[i|j]` are
/// node i's variables for its edge with j, all taken after the round.
pub fn cmd_trace(name: &str, rounds: Option<usize>, out: &mut dyn Write) -> Result<i32> {
    let cfg = presets::preset(name)?;
    if !matches!(
        cfg.algorithm,
        AlgorithmSpec::Ecl(_) | AlgorithmSpec::Cecl(_)
    ) {
        return Err(Error::InvalidArgument(format!(
            "trace needs an ECL preset; `{name}` is gossip"
        )));
    }
    let mut sim = Simulation::from_config(&cfg, None)?;
    let n = sim.graph().n_nodes();
    let d = sim.w_star().len();
    if n > TRACE_MAX_NODES || d > TRACE_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "trace is limited to n <= {TRACE_MAX_NODES} and d <= {TRACE_MAX_DIM}; `{name}` has n = {n}, d = {d}"
        )));
    }
    writeln!(out, "# trace {name} seed={}", cfg.seed)?;
    writeln!(out, "w* = {}", fmt_vec(sim.w_star()))?;
    let dump = |sim: &Simulation, out: &mut dyn Write| -> Result<()> {
        writeln!(out, "round {}", sim.round())?;
        for s in sim.ecl_states().expect("ECL preset") {
            writeln!(out, "  w[{}] = {}", s.id, fmt_vec(&s.w))?;
            for (j, e) in &s.duals {
                writeln!(out, "  y[{}|{j}] = {}", s.id, fmt_vec(&e.y))?;
                writeln!(out, "  z[{}|{j}] = {}", s.id, fmt_vec(&e.z))?;
            }
        }
        Ok(())
    };
    dump(&sim, out)?;
    for _ in 0..rounds.unwrap_or(cfg.rounds) {
        sim.step()?;
        dump(&sim, out)?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("consensus-splitting").chain(args.iter().copied());
        let code = main_with(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn theory_examples() {
        let (code, out, _) = call(&[
            "theory", "--mu", "1", "--L", "10", "--alpha", "1", "--n-min", "2", "--n-max", "2",
            "--tau", "1.0",
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("0.666667"), "{out}");
        assert!(out.contains("(0.000000, 1.200000)"), "{out}");

        let (code, out, _) = call(&[
            "theory", "--mu", "1", "--L", "10", "--alpha", "1", "--n-min", "2", "--n-max", "2",
            "--tau", "0.9",
        ]);
        assert_eq!(code, EXIT_INADMISSIBLE);
        assert!(out.contains("tau_min          0.960000"), "{out}");

        let (code, out, _) = call(&[
            "theory", "--mu", "1", "--L", "1", "--alpha", "1", "--n-min", "1", "--n-max", "1",
            "--tau", "1", "--theta", "1", "--kv",
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(
            out.contains("delta=0\n") && out.contains("rho=0\n"),
            "{out}"
        );
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&["run"]).0, EXIT_CONFIG);
        assert_eq!(call(&["bogus"]).0, EXIT_CONFIG);
        let (code, _, err) = call(&["run", "--preset", "missing"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("unknown preset"));
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn trace_refuses_large_instances() {
        let (code, _, err) = call(&["trace", "ring8-kappa10-ecl"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("limited to n <= 3"), "{err}");
    }

    #[test]
    fn verify_compression_reports_tau() {
        let (code, out, _) = call(&[
            "verify-compression",
            "--operator",
            "rand-20%",
            "--d",
            "100",
            "--samples",
            "2000",
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("nominal tau     0.2"), "{out}");
    }
}

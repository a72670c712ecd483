use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_consensus-splitting"))
}

fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env_remove("CONSENSUS_SPLITTING_THREADS")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn two_node_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    let out = run(&[
        "run",
        "--preset",
        "two-node-trace",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary = text(&out.stdout);
    assert!(summary.contains("converged          round 2"), "{summary}");
    assert!(summary.contains("measured slope     n/a"), "{summary}");
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("# seed=0 name=two-node-trace\nround,dist_to_opt,"));
}

#[test]
fn csv_rounds_follow_stride() {
    let out = run(&["run", "--preset", "ring8-hetero-cecl-k20", "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stderr.is_empty());
    let rounds: Vec<usize> = text(&out.stdout)
        .lines()
        .skip(2)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(rounds.len(), 51);
    assert!(rounds.windows(2).all(|w| w[1] == w[0] + 10));
}

#[test]
fn zero_theta_exits_with_constraint_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    let good = consensus_splitting::presets::preset_text("two-node-trace").unwrap();
    std::fs::write(&cfg, good.replace("ecl.theta = 1", "ecl.theta = 0")).unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("θ ∈ (0, 1]"));
    assert!(out.stdout.is_empty(), "nothing runs before validation");
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("blowup.cfg");
    std::fs::write(
        &cfg,
        "graph.kind = ring\ngraph.n = 4\nproblem.kind = scalar\nalgorithm = gossip\ngossip.eta = 3\nrounds = 200\n",
    )
    .unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("divergence guard at round"));
}

#[test]
fn theory_exit_codes() {
    let base = [
        "theory", "--mu", "1", "--L", "10", "--alpha", "1", "--n-min", "2", "--n-max", "2", "--tau",
    ];
    let ok = run(&[&base[..], &["1.0"]].concat());
    assert_eq!(ok.status.code(), Some(0));
    let bad = run(&[&base[..], &["0.9"]].concat());
    assert_eq!(bad.status.code(), Some(3));
    assert!(text(&bad.stdout).contains("no certified rate"));
}

#[test]
fn seed_override_changes_header_and_data() {
    let a = run(&["run", "--preset", "ring8-kappa10-ecl", "--quiet"]);
    let b = run(&[
        "run",
        "--preset",
        "ring8-kappa10-ecl",
        "--quiet",
        "--seed",
        "9",
    ]);
    assert!(text(&b.stdout).starts_with("# seed=9 "));
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn edge_list_path_is_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("graphs")).unwrap();
    std::fs::write(
        dir.path().join("graphs/star.txt"),
        "# star\n0 1\n0 2\n0 3\n",
    )
    .unwrap();
    let cfg = dir.path().join("star.cfg");
    std::fs::write(
        &cfg,
        "graph.kind = file\ngraph.path = graphs/star.txt\nproblem.kind = scalar\nalgorithm = ecl\n\
         ecl.alpha = 1\nrounds = 300\n",
    )
    .unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(elsewhere.path())
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(Path::new(&elsewhere.path().join("x.csv")).exists());
    assert!(text(&out.stdout).contains("converged          round"));
}

#[test]
fn trace_golden_layout() {
    let out = run(&["trace", "two-node-trace", "--rounds", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let s = text(&out.stdout);
    let round1 = "round 1\n  w[0] = (0.5)\n  y[0|1] = (-1)\n  z[0|1] = (3)\n  w[1] = (1.5)\n  y[1|0] = (3)\n  z[1|0] = (-1)\n";
    let round2 = "round 2\n  w[0] = (2)\n  y[0|1] = (-1)\n  z[0|1] = (3)\n  w[1] = (2)\n  y[1|0] = (3)\n  z[1|0] = (-1)\n";
    assert!(s.contains(round1), "{s}");
    assert!(s.ends_with(round2), "{s}");
}

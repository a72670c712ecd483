//! Replays the checked-in fuzz corpus through the same checks the fuzz
//! targets make, so seeds stay meaningful on a stable toolchain.

use std::path::PathBuf;

use consensus_splitting::compression::{wire, Payload};
use consensus_splitting::config::ExperimentConfig;
use consensus_splitting::topology::Graph;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus for {target}");
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn edge_list_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("parse_edge_list") {
        if let Ok(g) = Graph::parse_edge_list(std::str::from_utf8(&data).unwrap()) {
            let again = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
            assert_eq!(again.edges(), g.edges(), "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn config_seeds() {
    for (name, data) in corpus("parse_config") {
        let cfg = ExperimentConfig::parse(std::str::from_utf8(&data).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.dump()).unwrap(), cfg, "{name}");
    }
}

#[test]
fn dense_seeds() {
    for (name, data) in corpus("decode_dense") {
        match wire::decode_dense(&data) {
            Ok(v) => assert_eq!(wire::encode(&Payload::Dense(v)), data, "{name}"),
            Err(_) => assert_eq!(name, "truncated"),
        }
    }
}

#[test]
fn sparse_seeds() {
    for (name, data) in corpus("decode_sparse") {
        let (&dim, rest) = data.split_first().unwrap();
        match wire::decode_sparse(rest, dim as usize) {
            Ok(v) => assert_eq!(wire::encode(&Payload::Sparse(v)), rest, "{name}"),
            Err(_) => assert!(name == "unsorted" || name == "out_of_range", "{name}"),
        }
    }
}

//! Linear, odd compression operators and the payload wire format.
//!
//! `rand-k%` keeps each coordinate independently with probability `k/100`.
//! Its mask for a directed pair in a given round is a pure function of the
//! pair's seed and the round number, so both endpoints can rebuild it
//! without exchanging anything.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{check_dim, Vector};
use crate::{Error, Result};

pub mod wire;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompressionOperator {
    Identity,
    RandK { k_percent: f64 },
}

impl CompressionOperator {
    pub fn rand_k(k_percent: f64) -> Result<Self> {
        if !(k_percent > 0.0 && k_percent <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "k% must lie in (0, 100], got {k_percent}"
            )));
        }
        Ok(CompressionOperator::RandK { k_percent })
    }

    /// Compression quality: `E|comp(x) - x|^2 <= (1 - tau)|x|^2`.
    pub fn tau(&self) -> f64 {
        match *self {
            CompressionOperator::Identity => 1.0,
            CompressionOperator::RandK { k_percent } => k_percent / 100.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CompressionOperator::Identity)
    }

    /// Mask for `stream` in `round`. The identity operator keeps everything.
    pub fn derive_mask(&self, stream: MaskStream, round: u64, d: usize) -> Mask {
        match *self {
            CompressionOperator::Identity => Mask(vec![true; d]),
            CompressionOperator::RandK { k_percent } => {
                stream.bernoulli(round, d, k_percent / 100.0)
            }
        }
    }

    /// `comp(x; mask)`. The identity ignores the mask and returns `x` dense.
    pub fn apply(&self, x: &Vector, mask: &Mask) -> Result<Payload> {
        match self {
            CompressionOperator::Identity => Ok(Payload::Dense(x.clone())),
            CompressionOperator::RandK { .. } => {
                Ok(Payload::Sparse(SparseVector::masked(x, mask)?))
            }
        }
    }

    /// Monte-Carlo estimate of `tau` as `1 - mean(|comp(x) - x|^2 / |x|^2)`
    /// over standard Gaussian `x` and fresh masks.
    pub fn verify_contract(&self, d: usize, n_samples: usize, seed: u64) -> Result<f64> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "dimension must be at least 1".into(),
            ));
        }
        if n_samples < 1000 {
            return Err(Error::InvalidArgument(format!(
                "need at least 1000 samples, got {n_samples}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stream = MaskStream::new(seed);
        let mut total = 0.0;
        for s in 0..n_samples {
            let x = Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let mask = self.derive_mask(stream, s as u64, d);
            let err = (self.apply(&x, &mask)?.to_dense() - &x).norm_squared();
            total += err / x.norm_squared();
        }
        Ok(1.0 - total / n_samples as f64)
    }
}

impl fmt::Display for CompressionOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressionOperator::Identity => f.write_str("identity"),
            CompressionOperator::RandK { k_percent } => write!(f, "rand-{k_percent}%"),
        }
    }
}

impl FromStr for CompressionOperator {
    type Err = Error;

    /// Accepts `identity`, `rand-K` and `rand-K%`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "identity" {
            return Ok(CompressionOperator::Identity);
        }
        let k = s
            .strip_prefix("rand-")
            .map(|rest| rest.trim_end_matches('%'))
            .and_then(|k| k.parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown compression `{s}`")))?;
        CompressionOperator::rand_k(k)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed material of one directed dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MaskStream {
    pub edge_seed: u64,
}

impl MaskStream {
    pub fn new(edge_seed: u64) -> Self {
        MaskStream { edge_seed }
    }

    /// Stream for the mask `omega_{i|j}`: used by node `j` to compress
    /// `y_{j|i}` and by node `i` to compress `z_{i|j}`. The unordered edge
    /// picks the key; the direction bit separates `omega_{i|j}` from
    /// `omega_{j|i}`.
    pub fn for_pair(run_seed: u64, i: usize, j: usize) -> Self {
        let (lo, hi) = (i.min(j) as u64, i.max(j) as u64);
        let direction = u64::from(i < j);
        let key =
            splitmix64(splitmix64(splitmix64(run_seed) ^ lo) ^ hi.rotate_left(32)) ^ direction;
        MaskStream::new(splitmix64(key))
    }

    /// Independent Bernoulli(`p`) coordinates, keyed by `(edge_seed, round)`.
    pub fn bernoulli(&self, round: u64, d: usize, p: f64) -> Mask {
        let mut rng = ChaCha8Rng::seed_from_u64(self.edge_seed);
        rng.set_stream(round);
        Mask((0..d).map(|_| rng.random::<f64>() < p).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask(pub Vec<bool>);

impl Mask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| k)
    }
}

/// Sorted coordinate list of a vector of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn masked(x: &Vector, mask: &Mask) -> Result<Self> {
        check_dim(x.len(), mask.len())?;
        let indices: Vec<u32> = mask.indices().map(|k| k as u32).collect();
        let values = indices.iter().map(|&k| x[k as usize]).collect();
        Ok(SparseVector {
            dim: x.len(),
            indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for (&k, &v) in self.indices.iter().zip(&self.values) {
            out[k as usize] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(Vector),
    Sparse(SparseVector),
}

impl Payload {
    pub fn dim(&self) -> usize {
        match self {
            Payload::Dense(v) => v.len(),
            Payload::Sparse(s) => s.dim,
        }
    }

    pub fn to_dense(&self) -> Vector {
        match self {
            Payload::Dense(v) => v.clone(),
            Payload::Sparse(s) => s.to_dense(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Payload::Dense(v) => wire::dense_len(v.len()),
            Payload::Sparse(s) => wire::sparse_len(s.nnz()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_of(bits: &[u8]) -> Mask {
        Mask(bits.iter().map(|&b| b == 1).collect())
    }

    #[test]
    fn full_percentage_mask_is_all_ones() {
        let op = CompressionOperator::rand_k(100.0).unwrap();
        for seed in [0, 1, u64::MAX] {
            for round in [0, 7, 1_000_000] {
                assert_eq!(
                    op.derive_mask(MaskStream::new(seed), round, 257)
                        .count_ones(),
                    257
                );
            }
        }
    }

    #[test]
    fn masks_are_deterministic() {
        let op = CompressionOperator::rand_k(30.0).unwrap();
        let s = MaskStream::for_pair(11, 3, 4);
        assert_eq!(op.derive_mask(s, 5, 500), op.derive_mask(s, 5, 500));
        assert_ne!(op.derive_mask(s, 5, 500), op.derive_mask(s, 6, 500));
        assert_ne!(
            MaskStream::for_pair(11, 3, 4),
            MaskStream::for_pair(11, 4, 3),
            "the two directions of an edge use distinct streams"
        );
    }

    #[test]
    fn mask_density_concentrates() {
        let op = CompressionOperator::rand_k(10.0).unwrap();
        for seed in 0..5 {
            let m = op.derive_mask(MaskStream::new(seed), 3, 100_000);
            let frac = m.count_ones() as f64 / 1e5;
            assert!((0.094..=0.106).contains(&frac), "seed {seed}: {frac}");
        }
    }

    #[test]
    fn apply_is_hadamard_product() {
        let op = CompressionOperator::rand_k(50.0).unwrap();
        let x = Vector::from_column_slice(&[1.0, 2.0, 3.0]);
        let Payload::Sparse(s) = op.apply(&x, &mask_of(&[1, 0, 1])).unwrap() else {
            panic!("expected sparse payload")
        };
        assert_eq!(s.indices, vec![0, 2]);
        assert_eq!(s.values, vec![1.0, 3.0]);
        assert!(op.apply(&x, &mask_of(&[1, 0])).is_err());

        let id = CompressionOperator::Identity;
        assert_eq!(
            id.apply(&x, &mask_of(&[0, 0, 0])).unwrap(),
            Payload::Dense(x)
        );
    }

    #[test]
    fn compressing_zero_gives_zero() {
        let op = CompressionOperator::rand_k(20.0).unwrap();
        for round in 0..10 {
            let m = op.derive_mask(MaskStream::new(round), round, 64);
            assert_eq!(
                op.apply(&Vector::zeros(64), &m).unwrap().to_dense(),
                Vector::zeros(64)
            );
        }
    }

    #[test]
    fn contract_estimates() {
        assert_eq!(
            CompressionOperator::Identity
                .verify_contract(50, 1000, 1)
                .unwrap(),
            1.0
        );
        let full = CompressionOperator::rand_k(100.0).unwrap();
        assert_eq!(full.verify_contract(50, 1000, 1).unwrap(), 1.0);
        let op = CompressionOperator::rand_k(10.0).unwrap();
        let tau = op.verify_contract(1000, 10_000, 2).unwrap();
        assert!((0.09..=0.11).contains(&tau), "{tau}");
        assert!(op.verify_contract(10, 10, 2).is_err());
    }

    #[test]
    fn parse_operator() {
        assert_eq!(
            "identity".parse::<CompressionOperator>().unwrap(),
            CompressionOperator::Identity
        );
        assert_eq!(
            "rand-20%".parse::<CompressionOperator>().unwrap(),
            CompressionOperator::RandK { k_percent: 20.0 }
        );
        assert!("rand-0".parse::<CompressionOperator>().is_err());
        assert!("rand-101".parse::<CompressionOperator>().is_err());
        assert!("top-5".parse::<CompressionOperator>().is_err());
    }

    fn arb_vec(d: usize) -> impl Strategy<Value = Vector> {
        prop::collection::vec(-1e6f64..1e6, d).prop_map(Vector::from_vec)
    }

    proptest! {
        #[test]
        fn linear_and_odd(x in arb_vec(32), y in arb_vec(32), bits in prop::collection::vec(any::<bool>(), 32)) {
            let op = CompressionOperator::rand_k(37.0).unwrap();
            let m = Mask(bits);
            let sum = op.apply(&(&x + &y), &m).unwrap().to_dense();
            let split = op.apply(&x, &m).unwrap().to_dense() + op.apply(&y, &m).unwrap().to_dense();
            prop_assert_eq!(sum, split);
            let neg = op.apply(&(-&x), &m).unwrap().to_dense();
            prop_assert_eq!(neg, -op.apply(&x, &m).unwrap().to_dense());
        }
    }
}

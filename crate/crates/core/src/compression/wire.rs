//! Payload byte layout. All integers and floats are little-endian.
//!
//! ```text
//! dense:  u32 count | count x f64 value
//! sparse: u32 count | count x (u32 index, f64 value)
//! ```
//!
//! Neither layout carries a type tag or the vector dimension; the receiver
//! knows both from the round schedule.

use super::{Payload, SparseVector};
use crate::linalg::Vector;
use crate::{Error, Result};

const COUNT: usize = 4;
const INDEX: usize = 4;
const VALUE: usize = 8;

pub fn dense_len(count: usize) -> usize {
    COUNT + count * VALUE
}

pub fn sparse_len(nnz: usize) -> usize {
    COUNT + nnz * (INDEX + VALUE)
}

pub fn encode(payload: &Payload) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.encoded_len());
    match payload {
        Payload::Dense(v) => {
            out.extend_from_slice(&(v.len() as u32).to_le_bytes());
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Payload::Sparse(s) => {
            out.extend_from_slice(&(s.nnz() as u32).to_le_bytes());
            for (k, x) in s.indices.iter().zip(&s.values) {
                out.extend_from_slice(&k.to_le_bytes());
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

fn read_count(bytes: &[u8]) -> Result<(usize, &[u8])> {
    if bytes.len() < COUNT {
        return Err(Error::Payload(format!(
            "{} bytes is too short for a count",
            bytes.len()
        )));
    }
    let (head, rest) = bytes.split_at(COUNT);
    let count = u32::from_le_bytes(head.try_into().expect("4 bytes")) as usize;
    Ok((count, rest))
}

fn read_f64(chunk: &[u8]) -> f64 {
    f64::from_le_bytes(chunk.try_into().expect("8 bytes"))
}

/// Decodes a dense payload; the buffer must be consumed exactly.
pub fn decode_dense(bytes: &[u8]) -> Result<Vector> {
    let (count, body) = read_count(bytes)?;
    if Some(body.len()) != count.checked_mul(VALUE) {
        return Err(Error::Payload(format!(
            "dense count {count} needs {} body bytes, found {}",
            count.saturating_mul(VALUE),
            body.len()
        )));
    }
    Ok(Vector::from_iterator(
        count,
        body.chunks_exact(VALUE).map(read_f64),
    ))
}

/// Decodes a sparse payload of dimension `dim`. Indices must be strictly
/// increasing and below `dim`.
pub fn decode_sparse(bytes: &[u8], dim: usize) -> Result<SparseVector> {
    let (count, body) = read_count(bytes)?;
    if Some(body.len()) != count.checked_mul(INDEX + VALUE) {
        return Err(Error::Payload(format!(
            "sparse count {count} needs {} body bytes, found {}",
            count.saturating_mul(INDEX + VALUE),
            body.len()
        )));
    }
    let mut indices = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for entry in body.chunks_exact(INDEX + VALUE) {
        let k = u32::from_le_bytes(entry[..INDEX].try_into().expect("4 bytes"));
        if k as usize >= dim {
            return Err(Error::Payload(format!(
                "index {k} out of range for dimension {dim}"
            )));
        }
        if indices.last().is_some_and(|&prev| prev >= k) {
            return Err(Error::Payload(format!(
                "index {k} is not strictly increasing"
            )));
        }
        indices.push(k);
        values.push(read_f64(&entry[INDEX..]));
    }
    Ok(SparseVector {
        dim,
        indices,
        values,
    })
}

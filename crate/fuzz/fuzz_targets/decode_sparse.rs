#![no_main]

use consensus_splitting::compression::{wire, Payload};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // first byte picks the declared dimension
    let Some((&dim, rest)) = data.split_first() else {
        return;
    };
    if let Ok(v) = wire::decode_sparse(rest, dim as usize) {
        assert_eq!(wire::encode(&Payload::Sparse(v)), rest);
    }
});

#![no_main]

use consensus_splitting::compression::{wire, Payload};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = wire::decode_dense(data) {
        assert_eq!(wire::encode(&Payload::Dense(v)), data);
    }
});

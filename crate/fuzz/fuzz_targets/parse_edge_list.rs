#![no_main]

use consensus_splitting::topology::Graph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(g) = Graph::parse_edge_list(text) {
            let again = Graph::parse_edge_list(&g.to_edge_list()).expect("dumped graph parses");
            assert_eq!(again.edges(), g.edges());
        }
    }
});

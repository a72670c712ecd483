//! Synchronous message channels between nodes.

use std::collections::{BTreeMap, VecDeque};

/// A lossless channel with per-edge FIFO ordering.
pub trait Transport {
    fn send(&mut self, from: usize, to: usize, bytes: Vec<u8>);
    fn recv(&mut self, to: usize, from: usize) -> Option<Vec<u8>>;
    /// Payloads sent but not yet received.
    fn in_flight(&self) -> usize;
}

#[derive(Debug, Default)]
pub struct InMemoryTransport {
    queues: BTreeMap<(usize, usize), VecDeque<Vec<u8>>>,
    bytes_sent: u64,
    payloads_sent: u64,
}

impl InMemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn payloads_sent(&self) -> u64 {
        self.payloads_sent
    }
}

impl Transport for InMemoryTransport {
    fn send(&mut self, from: usize, to: usize, bytes: Vec<u8>) {
        self.bytes_sent += bytes.len() as u64;
        self.payloads_sent += 1;
        self.queues.entry((from, to)).or_default().push_back(bytes);
    }

    fn recv(&mut self, to: usize, from: usize) -> Option<Vec<u8>> {
        self.queues.get_mut(&(from, to))?.pop_front()
    }

    fn in_flight(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }
}

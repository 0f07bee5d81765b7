//! Replayable randomness for one simulated world.
//!
//! A [`SamplePath`] holds the four baseline sequences of unit-rate exponential
//! variates (arrivals and services for both job classes). Every variate is a
//! pure function of `(seed, stream, index)`: the value at index `j` is derived
//! from a ChaCha keystream positioned at word `2j` of the stream's own nonce,
//! so lookahead code can read arbitrarily far ahead without perturbing what the
//! live simulation will later consume.

use std::cell::RefCell;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// One of the four baseline processes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamId {
    /// Inter-arrival variates of high-type jobs.
    ArrivalHigh,
    /// Inter-arrival variates of low-type jobs.
    ArrivalLow,
    /// Service variates of high-type jobs, indexed by acceptance order.
    ServiceHigh,
    /// Service variates of low-type jobs, indexed by acceptance order.
    ServiceLow,
}

impl StreamId {
    pub const ALL: [StreamId; 4] =
        [StreamId::ArrivalHigh, StreamId::ArrivalLow, StreamId::ServiceHigh, StreamId::ServiceLow];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            StreamId::ArrivalHigh => 0,
            StreamId::ArrivalLow => 1,
            StreamId::ServiceHigh => 2,
            StreamId::ServiceLow => 3,
        }
    }
}

// Materialize in blocks so repeated single-step extension amortizes the
// keystream repositioning.
const BLOCK: usize = 1024;

/// Lazily materialized, memoized Exp(1) sequences keyed by `(seed, stream, index)`.
///
/// Interior mutability keeps reads `&self`; a path belongs to a single
/// replication and is not shared across threads.
#[derive(Debug)]
pub struct SamplePath {
    seed: u64,
    variates: [RefCell<Vec<f64>>; 4],
}

impl SamplePath {
    pub fn new(seed: u64) -> Self {
        Self { seed, variates: Default::default() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of variates materialized so far on `stream`.
    pub fn realized_len(&self, stream: StreamId) -> usize {
        self.variates[stream.index()].borrow().len()
    }

    /// The `index`-th (zero-based) unit-mean exponential variate of `stream`.
    #[inline]
    pub fn value_at(&self, stream: StreamId, index: usize) -> f64 {
        let cell = &self.variates[stream.index()];
        if let Some(&v) = cell.borrow().get(index) {
            return v;
        }
        let mut values = cell.borrow_mut();
        let target = (index / BLOCK + 1) * BLOCK;
        let start = values.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.index() as u64);
        rng.set_word_pos(2 * start as u128);
        values.reserve(target - start);
        for _ in start..target {
            values.push(exp_from_bits(rng.next_u64()));
        }
        values[index]
    }
}

/// Inverse-CDF transform of a 53-bit uniform on the open interval (0, 1).
#[inline]
fn exp_from_bits(bits: u64) -> f64 {
    let u = ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -u.ln()
}

/// Next-unconsumed index per stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    next: [usize; 4],
}

impl Cursor {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn position(&self, stream: StreamId) -> usize {
        self.next[stream.index()]
    }

    /// Returns the variate under the cursor for `stream` and advances past it.
    #[inline]
    pub fn draw_next(&mut self, path: &SamplePath, stream: StreamId) -> f64 {
        let slot = &mut self.next[stream.index()];
        let v = path.value_at(stream, *slot);
        *slot += 1;
        v
    }
}

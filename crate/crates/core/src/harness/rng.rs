//! Counter-based random streams.
//!
//! Every random draw in an experiment comes from a ChaCha8 stream selected
//! by `(master seed, domain, slot, state, basis, extra)`. A stream's output
//! does not depend on which worker runs it or in which order, so serial and
//! parallel runs agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::qstate::InputState;
use crate::tomography::Basis;

/// Experiment family owning a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Domain {
    Characterize = 1,
    EfficiencyScan = 2,
    RandomAccess = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub domain: Domain,
    pub slot: u16,
    pub state: Option<InputState>,
    /// `None` selects the bootstrap stream.
    pub basis: Option<Basis>,
    pub extra: u16,
}

impl StreamKey {
    pub fn new(domain: Domain, slot: usize) -> Self {
        Self {
            domain,
            slot: slot as u16,
            state: None,
            basis: None,
            extra: 0,
        }
    }

    pub fn state(mut self, state: InputState) -> Self {
        self.state = Some(state);
        self
    }

    pub fn basis(mut self, basis: Option<Basis>) -> Self {
        self.basis = basis;
        self
    }

    pub fn extra(mut self, extra: usize) -> Self {
        self.extra = extra as u16;
        self
    }

    /// `domain:8 | slot:16 | state:8 | basis:8 | extra:16 | 0:8`
    pub fn pack(&self) -> u64 {
        let state = self.state.map_or(0xFF, |s| s.index() as u64);
        let basis = self.basis.map_or(0xFF, |b| b.index() as u64);
        (self.domain as u64) << 56
            | (self.slot as u64) << 40
            | state << 32
            | basis << 24
            | (self.extra as u64) << 8
    }
}

pub fn stream(master_seed: u64, key: StreamKey) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(key.pack());
    rng
}

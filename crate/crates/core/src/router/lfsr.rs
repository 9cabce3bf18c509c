//! Galois linear feedback shift registers used as per-router random bit
//! sources for the randomized round-robin arbiter.

use crate::error::{Error, Result};

/// Feedback mask for `x^8 + x^6 + x^5 + x^4 + 1` in right-shifting Galois form.
pub const TAPS_8: u64 = 0xB8;

/// One Galois step. Returns the output bit and the next state.
pub fn lfsr_next(state: u64, taps: u64) -> Result<(bool, u64)> {
    if state == 0 {
        return Err(Error::ZeroState);
    }
    let out = state & 1 == 1;
    let mut next = state >> 1;
    if out {
        next ^= taps;
    }
    Ok((out, next))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lfsr {
    state: u64,
    taps: u64,
    width: u32,
}

impl Lfsr {
    pub fn new(seed: u64, taps: u64, width: u32) -> Result<Self> {
        let mask = if width >= 64 {
            u64::MAX
        } else {
            (1u64 << width) - 1
        };
        let state = seed & mask;
        if state == 0 {
            return Err(Error::ZeroState);
        }
        Ok(Lfsr { state, taps, width })
    }

    /// The 8-bit maximal-length register.
    pub fn eight_bit(seed: u8) -> Result<Self> {
        Self::new(u64::from(seed), TAPS_8, 8)
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn step(&mut self) -> bool {
        let (bit, next) = lfsr_next(self.state, self.taps).expect("state stays nonzero");
        self.state = next;
        bit
    }

    /// Advances one step and returns bit `index` of the new state, so that
    /// routers tapping different bits see different streams.
    pub fn step_bit(&mut self, index: u32) -> bool {
        self.step();
        self.bit(index)
    }

    pub fn bit(&self, index: u32) -> bool {
        (self.state >> (index % self.width)) & 1 == 1
    }

    /// Cycle length from the current state, up to `limit` steps.
    pub fn period(&self, limit: u64) -> Option<u64> {
        let mut s = self.clone();
        for i in 1..=limit {
            s.step();
            if s.state == self.state {
                return Some(i);
            }
        }
        None
    }
}

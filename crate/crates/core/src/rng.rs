//! Deterministic random numbers: SplitMix64 for uniform bits, Box–Muller for
//! normals.
//!
//! The generator is fixed here so that every seeded run in this crate is
//! bit-reproducible:
//!
//! * `next_u64`: SplitMix64 (Steele, Lea, Flood), state advanced by the
//!   golden-ratio increment `0x9E3779B97F4A7C15`.
//! * `next_f64`: top 53 bits, mapped to `(0, 1]`.
//! * `next_normal`: one Box–Muller draw `sqrt(-2 ln u1) cos(2π u2)` per
//!   pair of uniforms; the sine partner is discarded.

use std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `(0, 1]`.
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    /// Uniform integer in `0..n`.
    pub fn next_below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Independent child stream; the parent advances by one draw.
    pub fn split(&mut self) -> RngState {
        RngState::new(self.next_u64())
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

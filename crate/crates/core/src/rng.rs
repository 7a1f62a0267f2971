//! Seeded random streams.
//!
//! Every stream is a PCG XSL-RR 128/64 generator built with
//! `Pcg64::new(seed ^ SEED_MIX, (purpose << 32) | index)`. Uniform doubles
//! are `(next_u64 >> 11) * 2^-53`; normals use the Box-Muller cosine branch
//! with `u1 = 1 - uniform()` so the logarithm never sees zero. One normal
//! consumes exactly two `u64` draws.

use rand::{Rng, RngCore};
use rand_pcg::Pcg64;

pub type SimRng = Pcg64;

pub const SEED_MIX: u128 = 0x9e37_79b9_7f4a_7c15_f39c_c060_5ced_c834;

/// Stream purposes, kept disjoint so datasets, evaluation and training never
/// share draws for the same index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Scenario = 0,
    Dataset = 1,
    Eval = 2,
    Init = 3,
    Shuffle = 4,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    let stream_id = ((purpose as u128) << 32) | index as u128;
    Pcg64::new(seed as u128 ^ SEED_MIX, stream_id)
}

#[inline]
pub fn uniform01<R: RngCore>(rng: &mut R) -> f64 {
    rng.gen::<f64>()
}

#[inline]
pub fn uniform<R: RngCore>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

#[inline]
pub fn gaussian<R: RngCore>(rng: &mut R) -> f64 {
    let u1 = 1.0 - uniform01(rng);
    let u2 = uniform01(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

//! Grid-addressable Gaussian draws.
//!
//! Every noise increment in the crate is identified by `(seed, stream, k)`
//! rather than by its position in a draw sequence. The generator positions a
//! ChaCha12 keystream at the word pair belonging to index `k` of the given
//! stream and maps the pair through Box-Muller. Addressing instead of
//! sequencing is what lets bridge refinement reproduce coarse nodes
//! bit-exactly and makes ensemble output independent of how work is split
//! across threads.
//!
//! Consumption is fixed at two 64-bit words per index pair: indices `2j` and
//! `2j+1` share the words at positions `(2j, 2j+1)` and take the cosine and
//! sine halves of the transform respectively.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Derive an independent sub-seed, e.g. one per ensemble member.
/// SplitMix64-style finalizer; stateless and collision-resistant in practice.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    fn fin(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    fin(seed ^ fin(index))
}

/// Stateless view of one seed's Gaussian grid.
#[derive(Clone, Copy, Debug)]
pub struct GaussianGrid {
    seed: u64,
}

/// Map two uniform words to the Box-Muller pair (r cos, r sin).
#[inline]
fn box_muller(w1: u64, w2: u64) -> (f64, f64) {
    // (0, 1] so the log is finite; 2^-53 granularity.
    let u1 = ((w1 >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
    let u2 = (w2 >> 11) as f64 * (1.0 / 9007199254740992.0);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

impl GaussianGrid {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng_at(&self, stream: u64, word_index: u128) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        // ChaCha words are 32 bits; a u64 draw consumes two of them.
        rng.set_word_pos(word_index * 2);
        rng
    }

    /// Standard normal draw number `k` of `stream`. Random access.
    pub fn normal(&self, stream: u64, k: u64) -> f64 {
        let j = k & !1;
        let mut rng = self.rng_at(stream, j as u128);
        let w1 = rng.next_u64();
        let w2 = rng.next_u64();
        let (c, s) = box_muller(w1, w2);
        if k & 1 == 0 {
            c
        } else {
            s
        }
    }

    /// Fill `out` with draws `start_k, start_k+1, ...` of `stream`.
    /// Identical values to repeated [`GaussianGrid::normal`] calls, produced
    /// without repositioning per draw.
    pub fn fill_normals(&self, stream: u64, start_k: u64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let first_pair = start_k & !1;
        let mut rng = self.rng_at(stream, first_pair as u128);
        let mut k = first_pair;
        let mut i = 0usize;
        while i < out.len() {
            let w1 = rng.next_u64();
            let w2 = rng.next_u64();
            let (c, s) = box_muller(w1, w2);
            if k >= start_k {
                out[i] = c;
                i += 1;
            }
            if i < out.len() && k + 1 >= start_k {
                out[i] = s;
                i += 1;
            }
            k += 2;
        }
    }
}

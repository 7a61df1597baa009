//! Two-sided discretized Brownian paths, the noise realizations driving
//! everything stochastic in the crate.
//!
//! A path is a window of W on a uniform grid with a node pinned at local
//! time 0. Storage is anchored once in the frame of the seed: raw node
//! values never change after creation. The two operations that look like
//! mutation are bookkeeping only:
//!
//! * [`shift`] moves the anchor node (the Wiener shift `W(s+.) - W(s)`),
//!   leaving raw storage untouched, so shifting is exact: shifted increments
//!   are bit-identical to the original ones and shifts compose exactly;
//! * [`refine`] inserts bridge midpoints addressed by seed-frame cell index,
//!   so coarse nodes are copied bit-exactly and refinement commutes with
//!   shifting.
//!
//! Increment draws are addressed as `(seed, stream, index)`: stream 0 feeds
//! the forward half, stream 1 the backward half (independent, as the two
//! sigma-algebras of past and future are), and stream `1 + level` feeds the
//! midpoints creating refinement level `level`.

use crate::error::{Error, Result};
use crate::rng::GaussianGrid;

/// Relative slack when matching a time to a grid node.
const ALIGN_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct BrownianPath {
    seed: u64,
    level: u32,
    dt: f64,
    /// Seed-frame index of `raw[0]` on the current-level grid.
    start: i64,
    /// Seed-frame index of the node serving as local time 0.
    anchor: i64,
    /// W in the seed frame. `raw` at the seed origin is exactly 0.
    raw: Vec<f64>,
}

fn zigzag(c: i64) -> u64 {
    if c >= 0 {
        2 * c as u64
    } else {
        (-2 * c - 1) as u64
    }
}

/// Sample a fresh path covering at least `[t_min, t_max]` with step `dt`.
pub fn sample_path(seed: u64, t_min: f64, t_max: f64, dt: f64) -> Result<BrownianPath> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Grid(format!("dt must be positive, got {dt}")));
    }
    if !(t_min.is_finite() && t_max.is_finite()) || t_min > 0.0 || t_max < 0.0 || t_min >= t_max {
        return Err(Error::Grid(format!(
            "window must satisfy t_min <= 0 <= t_max and t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    let n_back = ((-t_min) / dt - ALIGN_TOL).ceil().max(0.0) as usize;
    let n_fwd = (t_max / dt - ALIGN_TOL).ceil().max(0.0) as usize;
    let n = n_back + n_fwd + 1;
    let grid = GaussianGrid::new(seed);
    let sqrt_dt = dt.sqrt();

    let mut raw = vec![0.0; n];
    // Forward from the origin node.
    if n_fwd > 0 {
        let mut incr = vec![0.0; n_fwd];
        grid.fill_normals(0, 0, &mut incr);
        let mut w = 0.0;
        for (i, eta) in incr.iter().enumerate() {
            w += sqrt_dt * eta;
            raw[n_back + 1 + i] = w;
        }
    }
    // Backward, an independent stream.
    if n_back > 0 {
        let mut incr = vec![0.0; n_back];
        grid.fill_normals(1, 0, &mut incr);
        let mut w = 0.0;
        for (i, eta) in incr.iter().enumerate() {
            w += sqrt_dt * eta;
            raw[n_back - 1 - i] = w;
        }
    }

    Ok(BrownianPath {
        seed,
        level: 0,
        dt,
        start: -(n_back as i64),
        anchor: 0,
        raw,
    })
}

impl BrownianPath {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn node_count(&self) -> usize {
        self.raw.len()
    }

    /// Index of the node at local time 0.
    pub fn zero_index(&self) -> usize {
        (self.anchor - self.start) as usize
    }

    pub fn t_min(&self) -> f64 {
        (self.start - self.anchor) as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        (self.start + self.raw.len() as i64 - 1 - self.anchor) as f64 * self.dt
    }

    pub fn time_of(&self, i: usize) -> f64 {
        (self.start + i as i64 - self.anchor) as f64 * self.dt
    }

    /// W at node `i`, anchored so that the node at local time 0 reads 0.
    pub fn value(&self, i: usize) -> f64 {
        self.raw[i] - self.raw[self.zero_index()]
    }

    /// Realized increment `W(t_{i+1}) - W(t_i)`; independent of anchoring.
    pub fn increment(&self, i: usize) -> f64 {
        self.raw[i + 1] - self.raw[i]
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        let slack = ALIGN_TOL * self.dt;
        self.t_min() <= a + slack && b - slack <= self.t_max()
    }

    /// Node index for a grid-aligned local time.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let f = t / self.dt + (self.anchor - self.start) as f64;
        let i = f.round();
        if (f - i).abs() > ALIGN_TOL {
            return Err(Error::Grid(format!(
                "time {t} is not on the dt = {} grid",
                self.dt
            )));
        }
        if i < 0.0 || i >= self.raw.len() as f64 {
            return Err(Error::Coverage(format!(
                "time {t} outside window [{}, {}]",
                self.t_min(),
                self.t_max()
            )));
        }
        Ok(i as usize)
    }

    /// W at a grid-aligned local time.
    pub fn w_at(&self, t: f64) -> Result<f64> {
        Ok(self.value(self.index_of(t)?))
    }
}

/// The Wiener shift: the path of `W(s + .) - W(s)`, re-anchored at 0.
/// `s` must be a grid time inside the window. Storage is shared-by-value;
/// no node value is recomputed, so shifts compose exactly.
pub fn shift(path: &BrownianPath, s: f64) -> Result<BrownianPath> {
    let i = path.index_of(s)?;
    let mut out = path.clone();
    out.anchor = path.start + i as i64;
    Ok(out)
}

/// Brownian-bridge refinement by a power-of-two factor. Coarse nodes are
/// copied bit-exactly; each midpoint draw is addressed by the seed-frame
/// index of its parent cell, so the result does not depend on the order of
/// earlier shifts.
pub fn refine(path: &BrownianPath, factor: u32) -> Result<BrownianPath> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::Grid(format!(
            "refinement factor must be a power of two, got {factor}"
        )));
    }
    let mut out = path.clone();
    let mut f = factor;
    while f > 1 {
        halve(&mut out);
        f /= 2;
    }
    Ok(out)
}

fn halve(p: &mut BrownianPath) {
    let n = p.raw.len();
    let grid = GaussianGrid::new(p.seed);
    let new_level = p.level + 1;
    let stream = 1 + new_level as u64;
    // Bridge midpoint: mean of the endpoints plus N(0, dt/4) with dt the
    // coarse step.
    let half_sigma = 0.5 * p.dt.sqrt();
    let mut raw = vec![0.0; 2 * n - 1];
    for i in 0..n {
        raw[2 * i] = p.raw[i];
    }
    for i in 0..n - 1 {
        let cell = p.start + i as i64;
        let eta = grid.normal(stream, zigzag(cell));
        raw[2 * i + 1] = 0.5 * (p.raw[i] + p.raw[i + 1]) + half_sigma * eta;
    }
    p.raw = raw;
    p.level = new_level;
    p.dt *= 0.5;
    p.start *= 2;
    p.anchor *= 2;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchored_at_zero_and_deterministic() {
        let p = sample_path(7, -2.0, 3.0, 0.5).unwrap();
        assert_eq!(p.w_at(0.0).unwrap(), 0.0);
        assert_eq!(p.t_min(), -2.0);
        assert_eq!(p.t_max(), 3.0);
        assert_eq!(p.node_count(), 11);

        let q = sample_path(7, -2.0, 3.0, 0.5).unwrap();
        for i in 0..p.node_count() {
            assert_eq!(p.value(i).to_bits(), q.value(i).to_bits());
        }
        let r = sample_path(8, -2.0, 3.0, 0.5).unwrap();
        assert!((0..p.node_count()).any(|i| p.value(i) != r.value(i)));
    }

    #[test]
    fn rejects_bad_windows() {
        assert!(sample_path(1, 1.0, 2.0, 0.1).is_err());
        assert!(sample_path(1, -1.0, -0.5, 0.1).is_err());
        assert!(sample_path(1, -1.0, 1.0, 0.0).is_err());
        assert!(sample_path(1, -1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn increment_variance_matches_dt() {
        // Sample variance of W(1) over many seeds; W(1) is a single draw on
        // a dt = 1 grid.
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for seed in 0..n {
            let p = sample_path(seed, 0.0, 1.0, 1.0).unwrap();
            let w = p.w_at(1.0).unwrap();
            sum += w;
            sum2 += w * w;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn shift_is_exact_bookkeeping() {
        let p = sample_path(11, -4.0, 4.0, 0.25).unwrap();
        let s = shift(&p, 1.25).unwrap();
        assert_eq!(s.w_at(0.0).unwrap(), 0.0);
        assert_eq!(s.t_min(), -5.25);
        assert_eq!(s.t_max(), 2.75);
        // Increments over matching windows are bit-identical.
        let i0 = p.index_of(1.25).unwrap();
        let j0 = s.index_of(0.0).unwrap();
        for k in 0..4 {
            assert_eq!(
                p.increment(i0 + k).to_bits(),
                s.increment(j0 + k).to_bits()
            );
        }
        // theta_0 is the identity.
        let id = shift(&p, 0.0).unwrap();
        for i in 0..p.node_count() {
            assert_eq!(p.value(i).to_bits(), id.value(i).to_bits());
        }
        // Composition equals the single shift, bit for bit.
        let ab = shift(&shift(&p, 0.75).unwrap(), 0.5).unwrap();
        let once = shift(&p, 1.25).unwrap();
        for i in 0..p.node_count() {
            assert_eq!(ab.value(i).to_bits(), once.value(i).to_bits());
        }
        // Off-grid and out-of-window shifts are rejected.
        assert!(shift(&p, 0.3).is_err());
        assert!(shift(&p, 9.0).is_err());
    }

    #[test]
    fn refine_preserves_coarse_nodes() {
        let p = sample_path(3, -1.0, 2.0, 0.5).unwrap();
        let r = refine(&p, 4).unwrap();
        assert_eq!(r.dt(), 0.125);
        assert_eq!(r.node_count(), 4 * (p.node_count() - 1) + 1);
        for i in 0..p.node_count() {
            assert_eq!(p.value(i).to_bits(), r.value(4 * i).to_bits());
            assert_eq!(p.time_of(i), r.time_of(4 * i));
        }
        // Identity refinement.
        let r1 = refine(&p, 1).unwrap();
        for i in 0..p.node_count() {
            assert_eq!(p.value(i).to_bits(), r1.value(i).to_bits());
        }
        assert!(refine(&p, 3).is_err());
        assert!(refine(&p, 0).is_err());
    }

    #[test]
    fn refine_commutes_with_shift() {
        let p = sample_path(99, -2.0, 2.0, 0.5).unwrap();
        let a = refine(&shift(&p, -1.0).unwrap(), 2).unwrap();
        let b = shift(&refine(&p, 2).unwrap(), -1.0).unwrap();
        assert_eq!(a.node_count(), b.node_count());
        for i in 0..a.node_count() {
            assert_eq!(a.value(i).to_bits(), b.value(i).to_bits(), "node {i}");
        }
    }

    #[test]
    fn refined_increments_have_halved_variance() {
        let mut sum2 = 0.0;
        let mut count = 0usize;
        for seed in 0..2000 {
            let p = sample_path(seed, 0.0, 1.0, 0.25).unwrap();
            let r = refine(&p, 2).unwrap();
            for i in 0..r.node_count() - 1 {
                let d = r.increment(i);
                sum2 += d * d;
                count += 1;
            }
        }
        let var = sum2 / count as f64;
        assert!((var - 0.125).abs() < 0.125 * 0.02, "var {var}");
    }

    proptest! {
        #[test]
        fn shift_group_property(
            seed in 0u64..1000,
            a in -8i64..8, b in -8i64..8,
        ) {
            let p = sample_path(seed, -4.0, 4.0, 0.25).unwrap();
            let sa = 0.25 * a as f64;
            let sb = 0.25 * b as f64;
            // Keep the anchor inside the window.
            prop_assume!((sa + sb).abs() <= 4.0 && sa.abs() <= 4.0);
            let two = shift(&shift(&p, sa).unwrap(), sb).unwrap();
            let one = shift(&p, sa + sb).unwrap();
            for i in 0..p.node_count() {
                prop_assert_eq!(two.value(i).to_bits(), one.value(i).to_bits());
            }
        }

        #[test]
        fn coverage_and_lookup_agree(seed in 0u64..200, k in 0usize..17) {
            let p = sample_path(seed, -2.0, 2.0, 0.25).unwrap();
            let t = -2.0 + 0.25 * k as f64;
            let i = p.index_of(t).unwrap();
            prop_assert!((p.time_of(i) - t).abs() < 1e-12);
        }
    }
}

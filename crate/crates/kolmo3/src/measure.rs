//! Empirical measures and the statistics built on them: KS distances,
//! the stationary law on invariant rays, occupation measures on invariant
//! cones, vanishing-noise concentration sweeps, and the density-shape
//! (P-bifurcation) probe.
//!
//! All weak-convergence claims are tested through one-dimensional
//! marginals (radius on a ray, log-radius and angle on a cone): every
//! limit object of the underlying system lives on a one-dimensional set,
//! so marginal statistics are the faithful desk-scale diagnostics.

use crate::error::{Error, Result};
use crate::flow::{dist_to_polyline, orbit_polyline, section_point};
use crate::logistic::{density_mode, g_explicit, u_g};
use crate::model::{dist, norm, scale, ModelParams, State3};
use crate::path::sample_path;
use crate::rng::mix_seed;
use crate::sde::decompose_record;
use rayon::prelude::*;

/// Weighted sample cloud with a declared primary 1-D coordinate, kept
/// sorted, plus optional 3-D sample points and a secondary coordinate
/// (the angle, for measures living on a cone).
///
/// Weights are normalized at construction and stay summed to 1 within
/// 1e-12 through merges.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    coords: Vec<f64>,
    weights: Vec<f64>,
    /// Cumulative weight through each sample (right-continuous CDF values).
    cum: Vec<f64>,
    points: Option<Vec<State3>>,
    angles: Option<Vec<f64>>,
    /// Effective raw sample count; sets the relative mass under merges.
    pool: f64,
}

impl EmpiricalMeasure {
    fn build(
        mut entries: Vec<(f64, f64, Option<State3>, Option<f64>)>,
        pool: f64,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParams("empirical measure needs samples".into()));
        }
        let mut total = 0.0;
        for &(c, w, _, _) in &entries {
            if !(c.is_finite() && w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParams(
                    "sample coordinates must be finite and weights nonnegative".into(),
                ));
            }
            total += w;
        }
        if !(total > 0.0) {
            return Err(Error::InvalidParams("total weight must be positive".into()));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = entries.len();
        let mut coords = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut cum = Vec::with_capacity(n);
        let has_points = entries.iter().all(|e| e.2.is_some());
        let has_angles = entries.iter().all(|e| e.3.is_some());
        let mut points = has_points.then(|| Vec::with_capacity(n));
        let mut angles = has_angles.then(|| Vec::with_capacity(n));
        let mut running = 0.0;
        for (c, w, pt, ang) in entries {
            let w = w / total;
            running += w;
            coords.push(c);
            weights.push(w);
            cum.push(running);
            if let (Some(ps), Some(p)) = (points.as_mut(), pt) {
                ps.push(p);
            }
            if let (Some(an), Some(a)) = (angles.as_mut(), ang) {
                an.push(a);
            }
        }
        // Pin the final cumulative value against rounding drift.
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Ok(Self { coords, weights, cum, points, angles, pool })
    }

    /// Equal-weight measure from scalar samples.
    pub fn from_scalars(samples: &[f64]) -> Result<Self> {
        let w = 1.0;
        let entries = samples.iter().map(|&c| (c, w, None, None)).collect();
        Self::build(entries, samples.len() as f64)
    }

    /// Measure from explicit `(coordinate, weight)` pairs; weights are
    /// normalized.
    pub fn from_weighted(pairs: &[(f64, f64)]) -> Result<Self> {
        let entries = pairs.iter().map(|&(c, w)| (c, w, None, None)).collect();
        Self::build(entries, pairs.len() as f64)
    }

    /// Equal-weight measure over 3-D samples with their declared
    /// coordinates: `(primary, angle, point)`.
    pub fn from_cone_samples(samples: Vec<(f64, f64, State3)>) -> Result<Self> {
        let n = samples.len() as f64;
        let entries =
            samples.into_iter().map(|(c, a, p)| (c, 1.0, Some(p), Some(a))).collect();
        Self::build(entries, n)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> Option<&[State3]> {
        self.points.as_deref()
    }

    pub fn angles(&self) -> Option<&[f64]> {
        self.angles.as_deref()
    }

    /// Compensated sum of the weights; stays at 1 within 1e-12 even for
    /// clouds of millions of samples.
    pub fn weight_sum(&self) -> f64 {
        let mut s = 0.0f64;
        let mut c = 0.0f64;
        for &w in &self.weights {
            let y = w - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
        }
        s
    }

    /// Right-continuous empirical CDF at `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let k = self.coords.partition_point(|&c| c <= x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    /// Weighted mean of an arbitrary per-sample statistic of the points.
    pub fn mean_point_stat<F: Fn(State3) -> f64>(&self, f: F) -> Result<f64> {
        let pts = self
            .points
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("measure carries no 3-D points".into()))?;
        Ok(pts.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum())
    }

    /// Mass-weighted merge. Associative and order-independent up to
    /// floating-point rounding: each side contributes in proportion to its
    /// effective raw sample count.
    pub fn merge(&self, other: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
        let pool = self.pool + other.pool;
        let mut entries = Vec::with_capacity(self.len() + other.len());
        for (m, share) in [(self, self.pool / pool), (other, other.pool / pool)] {
            for i in 0..m.len() {
                entries.push((
                    m.coords[i],
                    m.weights[i] * share,
                    m.points.as_ref().map(|p| p[i]),
                    m.angles.as_ref().map(|a| a[i]),
                ));
            }
        }
        Self::build(entries, pool)
    }
}

/// Kolmogorov-Smirnov distance between an empirical measure and a
/// continuous CDF, taken as the sup over both sides of every jump.
pub fn ks_distance<F: Fn(f64) -> f64>(emp: &EmpiricalMeasure, cdf: F) -> Result<f64> {
    if emp.is_empty() {
        return Err(Error::InvalidParams("KS distance needs a nonempty measure".into()));
    }
    let mut worst = 0.0f64;
    let mut before = 0.0;
    for i in 0..emp.len() {
        let g = cdf(emp.coords[i]);
        let after = emp.cum[i];
        worst = worst.max((before - g).abs()).max((after - g).abs());
        before = after;
    }
    Ok(worst)
}

/// Two-sample Kolmogorov-Smirnov distance: the exact sup-difference of the
/// two step CDFs. Identical measures give exactly 0.
pub fn ks_distance_two(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParams("KS distance needs nonempty measures".into()));
    }
    let mut i = 0usize;
    let mut j = 0usize;
    let mut fa = 0.0f64;
    let mut fb = 0.0f64;
    let mut worst = 0.0f64;
    while i < a.len() || j < b.len() {
        let ca = a.coords.get(i).copied().unwrap_or(f64::INFINITY);
        let cb = b.coords.get(j).copied().unwrap_or(f64::INFINITY);
        let x = ca.min(cb);
        while i < a.len() && a.coords[i] == x {
            fa = a.cum[i];
            i += 1;
        }
        while j < b.len() && b.coords[j] == x {
            fb = b.cum[j];
            j += 1;
        }
        worst = worst.max((fa - fb).abs());
    }
    Ok(worst)
}

/// Density of the stationary law on the ray of the equilibrium `q`, with
/// respect to arc length, evaluated at the 3-D point `x`. Points off the
/// ray carry density 0.
pub fn mu_q_density(p: &ModelParams, q: State3, x: State3) -> Result<f64> {
    let nq = norm(q);
    if nq == 0.0 {
        return Err(Error::InvalidParams(
            "the origin carries a point mass, not a density on a ray".into(),
        ));
    }
    // Ray coordinate of x: the scale r with x = r q, if any.
    let r = (x[0] * q[0] + x[1] * q[1] + x[2] * q[2]) / (nq * nq);
    if r <= 0.0 || dist(x, scale(q, r)) > 1e-9 * (1.0 + norm(x)) {
        // Still surface the domain errors eagerly for off-ray points.
        crate::logistic::stationary_density(p, 1.0)?;
        return Ok(0.0);
    }
    Ok(crate::logistic::stationary_density(p, r)? / nq)
}

const OCCUPATION_DT: f64 = 1e-2;
const OCCUPATION_STRIDE: usize = 10;
const ANGLE_VERTICES: usize = 512;

/// Default burn-in horizon: conservative multiple of the slowest
/// relaxation rate toward the stationary radius.
pub fn default_burn_in(p: &ModelParams) -> f64 {
    10.0 / (2.0 * p.alpha - p.sigma2())
}

/// Time-occupation measure of the solution on the invariant cone of level
/// `h`, started from the canonical section point.
pub fn occupation_measure_on_cone(
    p: &ModelParams,
    seed: u64,
    h: f64,
    t_end: f64,
    burn_in: f64,
) -> Result<EmpiricalMeasure> {
    let det = ModelParams::deterministic(p.alpha, p.d)?;
    let x0 = section_point(&det, h)?;
    occupation_measure_from(p, seed, h, x0, t_end, burn_in)
}

/// Same occupation measure from an arbitrary start on the cone of level
/// `h` (any positive multiple of a cycle point qualifies).
///
/// The trajectory is produced by the exact radial-factor decomposition,
/// which conserves the cone level identically; a fixed-step scheme would
/// let the level diffuse over long horizons and blur the angular
/// coordinate. Samples are taken every `OCCUPATION_STRIDE` path nodes
/// after `burn_in` and reported in `(log radius, angle)` coordinates,
/// with the raw 3-D points attached.
pub fn occupation_measure_from(
    p: &ModelParams,
    seed: u64,
    h: f64,
    x0: State3,
    t_end: f64,
    burn_in: f64,
) -> Result<EmpiricalMeasure> {
    if !(t_end > burn_in && burn_in >= 0.0) {
        return Err(Error::InvalidParams("need t_end > burn_in >= 0".into()));
    }
    let det = ModelParams::deterministic(p.alpha, p.d)?;
    let poly = orbit_polyline(&det, h, ANGLE_VERTICES)?;
    let t_end = (t_end / OCCUPATION_DT).ceil() * OCCUPATION_DT;
    let path = sample_path(seed, 0.0, t_end, OCCUPATION_DT)?;
    let rec = decompose_record(p, &path, x0, 1.0, t_end)?;
    let mut samples: Vec<(f64, f64, State3)> = Vec::new();
    let mut nearest = 0usize;
    let k = ANGLE_VERTICES;
    for (i, (&t, &x)) in rec.times.iter().zip(&rec.states).enumerate() {
        if t < burn_in || i % OCCUPATION_STRIDE != 0 {
            continue;
        }
        let radius = norm(x);
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::BlowUp { t, guard: f64::INFINITY });
        }
        // Angle: nearest cycle vertex to the ray direction, warm-started
        // from the previous sample (the angle moves slowly between
        // samples); vertices are equal-time spaced, so the index is the
        // Haar-uniform angle variable.
        let dir = scale(x, 1.0 / radius);
        let mut best = nearest;
        let mut best_d = f64::INFINITY;
        for off in 0..=(k / 4) {
            for cand in [(nearest + off) % k, (nearest + k - off % k) % k] {
                let d = dist(dir, poly[cand]);
                if d < best_d {
                    best_d = d;
                    best = cand;
                }
            }
        }
        nearest = best;
        let angle = 2.0 * std::f64::consts::PI * best as f64 / k as f64;
        samples.push((radius.ln(), angle, x));
    }
    EmpiricalMeasure::from_cone_samples(samples)
}

/// Independent draws from the stationary radial law, produced by running
/// the scalar radial solution forward long enough to forget its start.
/// Parallel over seeds; the result does not depend on the thread count.
pub fn stationary_radius_samples(
    p: &ModelParams,
    base_seed: u64,
    n: usize,
    t_relax: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    if p.noise_dominates() {
        return Err(Error::NotApplicable(
            "no nontrivial stationary radius when sigma^2 >= 2 alpha".into(),
        ));
    }
    (0..n)
        .into_par_iter()
        .map(|k| {
            let path = sample_path(mix_seed(base_seed, k as u64), 0.0, t_relax, dt)?;
            g_explicit(p, &path, 1.0, t_relax)
        })
        .collect()
}

/// Draws of the stationary radius via the pullback fixed point on
/// independent backward windows, deep enough that the truncation tail is
/// below `tol` even against typical Brownian fluctuations; windows are
/// extended automatically for the rare path that needs more depth.
pub fn pullback_radius_samples(
    p: &ModelParams,
    base_seed: u64,
    n: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    if p.noise_dominates() {
        return Err(Error::NotApplicable(
            "no pullback fixed point when sigma^2 >= 2 alpha".into(),
        ));
    }
    let a = p.a_eff();
    // Depth from 2 a S - 8 sigma sqrt(S) >= ln(1/tol): covers four
    // standard deviations of the window's Brownian spread.
    let l = (1.0 / tol).ln();
    let root = (8.0 * p.sigma + (64.0 * p.sigma2() + 8.0 * a * l).sqrt()) / (4.0 * a);
    let depth = (root * root).max(10.0);
    let dt = 5e-3;
    (0..n)
        .into_par_iter()
        .map(|k| {
            let seed = mix_seed(base_seed, k as u64);
            let mut d = depth;
            for _ in 0..4 {
                let path = sample_path(seed, -d, 0.0, dt)?;
                match u_g(p, &path, tol) {
                    Ok(u) => return Ok(u.value),
                    Err(Error::Coverage(_)) => d *= 2.0,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Coverage(format!(
                "window deeper than {d} still not converged for seed {seed}"
            )))
        })
        .collect()
}

/// Concentration target of a vanishing-noise sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepTarget {
    /// Stationary laws over a drift equilibrium; concentration is the mean
    /// distance of the sampled random equilibrium to the target point.
    Equilibrium(State3),
    /// Occupation measures on the cone of the given level; concentration
    /// is the mean distance of occupation samples to the cycle.
    Cycle(f64),
}

/// One row of a vanishing-noise sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub sigma2: f64,
    pub concentration: f64,
    pub standard_error: f64,
}

const SWEEP_EQ_SAMPLES: usize = 1500;
const SWEEP_CYCLE_T: f64 = 600.0;

/// Concentration of the noisy stationary objects on their zero-noise
/// limits, across a descending list of noise levels.
///
/// Equilibrium targets are sampled through the pullback fixed point on
/// independent paths; cycle targets through occupation measures on the
/// cone. The returned concentration statistic decreases toward 0 as the
/// noise vanishes.
pub fn vanishing_noise_sweep(
    alpha: f64,
    d: [f64; 3],
    sigma2_list: &[f64],
    target: SweepTarget,
    base_seed: u64,
) -> Result<Vec<SweepRow>> {
    if sigma2_list.is_empty() {
        return Err(Error::InvalidParams("sweep needs at least one noise level".into()));
    }
    for w in sigma2_list.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::InvalidParams(
                "noise levels must be strictly descending".into(),
            ));
        }
    }
    let mut rows = Vec::with_capacity(sigma2_list.len());
    for (k, &s2) in sigma2_list.iter().enumerate() {
        if !(s2 >= 0.0) || s2 >= 2.0 * alpha {
            return Err(Error::InvalidParams(format!(
                "noise level {s2} outside [0, 2 alpha)"
            )));
        }
        let p = ModelParams::new(alpha, s2.sqrt(), d)?;
        let seed = mix_seed(base_seed, k as u64);
        let row = match target {
            SweepTarget::Equilibrium(q) => {
                let b = crate::model::drift(&p, q)?;
                if norm(b) > 1e-8 * (1.0 + norm(q)) || norm(q) == 0.0 {
                    return Err(Error::InvalidParams(
                        "sweep target must be a nonzero drift equilibrium".into(),
                    ));
                }
                let vals: Vec<f64> = if s2 == 0.0 {
                    vec![0.0; 2]
                } else {
                    pullback_radius_samples(&p, seed, SWEEP_EQ_SAMPLES, 1e-6)?
                        .into_iter()
                        .map(|u| (u - 1.0).abs() * norm(q))
                        .collect()
                };
                mean_and_se(&vals, s2)
            }
            SweepTarget::Cycle(h) => {
                let det = ModelParams::deterministic(alpha, d)?;
                let poly = orbit_polyline(&det, h, 1024)?;
                let burn = default_burn_in(&p);
                let occ =
                    occupation_measure_on_cone(&p, seed, h, SWEEP_CYCLE_T + burn, burn)?;
                let pts = occ.points().expect("occupation samples carry points");
                let dists: Vec<f64> =
                    pts.iter().map(|&x| dist_to_polyline(x, &poly)).collect();
                batch_mean_and_se(&dists, s2)
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

fn mean_and_se(vals: &[f64], sigma2: f64) -> SweepRow {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    SweepRow { sigma2, concentration: mean, standard_error: (var / n).sqrt() }
}

/// Mean with a batch-means standard error, for serially correlated
/// occupation samples.
fn batch_mean_and_se(vals: &[f64], sigma2: f64) -> SweepRow {
    let n_batches = 20.min(vals.len().max(1));
    let size = (vals.len() / n_batches).max(1);
    let means: Vec<f64> = vals
        .chunks(size)
        .filter(|c| c.len() == size)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let row = mean_and_se(&means, sigma2);
    SweepRow {
        sigma2,
        concentration: vals.iter().sum::<f64>() / vals.len() as f64,
        standard_error: row.standard_error,
    }
}

/// One row of the density-shape probe.
#[derive(Debug, Clone, Copy)]
pub struct ShapeRow {
    pub sigma2: f64,
    /// Interior mode of the stationary radial density, when one exists.
    pub analytic_mode: Option<f64>,
    /// Histogram bin index holding the most mass.
    pub empirical_mode_bin: usize,
    pub bin_width: f64,
    /// Whether the histogram shows an interior peak distinguishable from
    /// the boundary value at three sigmas of counting noise.
    pub unimodal_empirical: bool,
    /// Analytic and empirical shape classes (and mode location, when
    /// unimodal) agree.
    pub agree: bool,
}

const PROBE_SAMPLES: usize = 30_000;
const PROBE_BIN: f64 = 0.05;
const PROBE_RANGE: f64 = 3.0;

/// Classifies the stationary radial density as unimodal-with-interior-mode
/// or monotone-decreasing, both analytically and from a histogram of
/// independent stationary samples, and reports whether the two agree.
pub fn p_bifurcation_probe(
    alpha: f64,
    sigma2_list: &[f64],
    base_seed: u64,
) -> Result<Vec<ShapeRow>> {
    let mut rows = Vec::with_capacity(sigma2_list.len());
    for (k, &s2) in sigma2_list.iter().enumerate() {
        if !(s2 > 0.0 && s2 < 2.0 * alpha) {
            return Err(Error::InvalidParams(format!(
                "density shape needs 0 < sigma^2 < 2 alpha, got {s2}"
            )));
        }
        let p = ModelParams::new(alpha, s2.sqrt(), [0.0, 0.0, 0.0])?;
        let analytic_mode = density_mode(&p)?;
        let relax = (50.0f64).max(12.0 / (2.0 * alpha - s2));
        let vals = stationary_radius_samples(
            &p,
            mix_seed(base_seed, k as u64),
            PROBE_SAMPLES,
            relax,
            2e-2,
        )?;
        let n_bins = (PROBE_RANGE / PROBE_BIN).round() as usize;
        let mut counts = vec![0u64; n_bins];
        for v in vals {
            let b = (v / PROBE_BIN) as usize;
            if b < n_bins {
                counts[b] += 1;
            }
        }
        let (empirical_mode_bin, &max_count) = counts
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .expect("bins exist");
        // Interior peak must beat the boundary bin beyond counting noise.
        let unimodal_empirical = empirical_mode_bin >= 1
            && (max_count as f64 - counts[0] as f64)
                >= 3.0 * ((max_count + 1) as f64).sqrt();
        let agree = match analytic_mode {
            Some(m) => {
                let center = (empirical_mode_bin as f64 + 0.5) * PROBE_BIN;
                unimodal_empirical && (m - center).abs() <= 1.5 * PROBE_BIN
            }
            None => !unimodal_empirical,
        };
        rows.push(ShapeRow {
            sigma2: s2,
            analytic_mode,
            empirical_mode_bin,
            bin_width: PROBE_BIN,
            unimodal_empirical,
            agree,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logistic::{density_cdf, density_quantile};
    use rand_core::{RngCore, SeedableRng};

    fn uniforms(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64))
            .collect()
    }

    #[test]
    fn weights_normalize_and_merge_is_associative() {
        let a = EmpiricalMeasure::from_weighted(&[(0.5, 2.0), (1.5, 6.0)]).unwrap();
        assert!((a.weight_sum() - 1.0).abs() < 1e-12);
        assert!((a.weights()[0] - 0.25).abs() < 1e-15);

        let b = EmpiricalMeasure::from_scalars(&[0.2, 0.9, 2.2]).unwrap();
        let c = EmpiricalMeasure::from_scalars(&[1.1]).unwrap();
        let left = a.merge(&b).unwrap().merge(&c).unwrap();
        let right = a.merge(&b.merge(&c).unwrap()).unwrap();
        assert_eq!(left.coords(), right.coords());
        for (x, y) in left.weights().iter().zip(right.weights()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((left.weight_sum() - 1.0).abs() < 1e-12);
        // Pooled merge of equal-weight clouds keeps per-sample weights equal.
        let pooled = b.merge(&c).unwrap();
        for w in pooled.weights() {
            assert!((w - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_and_negative_inputs_are_rejected() {
        assert!(EmpiricalMeasure::from_scalars(&[]).is_err());
        assert!(EmpiricalMeasure::from_weighted(&[(0.0, -1.0), (1.0, 2.0)]).is_err());
        let m = EmpiricalMeasure::from_scalars(&[1.0]).unwrap();
        assert!(ks_distance(&m, |_| 0.0).is_ok());
    }

    #[test]
    fn ks_against_inverse_transform_draws() {
        let p = ModelParams::new(1.0, 1.0, [0.0, 0.0, 0.0]).unwrap();
        // Quantile table once, then interpolate: the table error is far
        // below the statistical resolution of the test.
        let k = 4096usize;
        let table: Vec<f64> = (0..=k)
            .map(|i| {
                let q = (i as f64 + 0.5) / (k as f64 + 1.0);
                density_quantile(&p, q).unwrap()
            })
            .collect();
        let lookup = |u: f64| -> f64 {
            let pos = (u * (k as f64 + 1.0) - 0.5).clamp(0.0, k as f64);
            let i = (pos.floor() as usize).min(k - 1);
            let frac = pos - i as f64;
            table[i] + frac * (table[i + 1] - table[i])
        };
        let draws: Vec<f64> = uniforms(99, 1_000_000).into_iter().map(lookup).collect();
        let emp = EmpiricalMeasure::from_scalars(&draws).unwrap();
        let d = ks_distance(&emp, |x| density_cdf(&p, x).unwrap()).unwrap();
        assert!(d < 0.002, "KS {d}");
    }

    #[test]
    fn ks_atom_at_median_is_half() {
        let p = ModelParams::new(1.0, 1.0, [0.0, 0.0, 0.0]).unwrap();
        let med = density_quantile(&p, 0.5).unwrap();
        let emp = EmpiricalMeasure::from_scalars(&[med]).unwrap();
        let d = ks_distance(&emp, |x| density_cdf(&p, x).unwrap()).unwrap();
        assert!((d - 0.5).abs() < 1e-9, "KS {d}");
    }

    #[test]
    fn ks_identical_discrete_measures_vanishes() {
        let a = EmpiricalMeasure::from_weighted(&[(0.1, 1.0), (0.7, 2.0), (1.3, 1.0)]).unwrap();
        let b = a.clone();
        assert_eq!(ks_distance_two(&a, &b).unwrap(), 0.0);
        let c = EmpiricalMeasure::from_scalars(&[0.1, 0.7, 1.3]).unwrap();
        assert!(ks_distance_two(&a, &c).unwrap() > 0.0);
    }

    #[test]
    fn ray_density_matches_scalar_law() {
        let p = ModelParams::new(1.0, 1.0, [0.2, -0.1, 0.3]).unwrap();
        let e1 = [1.0, 0.0, 0.0];
        for r in [0.3, 0.8, 1.4] {
            let want = crate::logistic::stationary_density(&p, r).unwrap();
            let got = mu_q_density(&p, e1, [r, 0.0, 0.0]).unwrap();
            assert!((got - want).abs() < 1e-14);
        }
        // Off the ray the density vanishes.
        assert_eq!(mu_q_density(&p, e1, [0.5, 0.1, 0.0]).unwrap(), 0.0);
        assert_eq!(mu_q_density(&p, e1, [-0.5, 0.0, 0.0]).unwrap(), 0.0);
        // Origin anchor is rejected; strong noise propagates its error.
        assert!(mu_q_density(&p, [0.0; 3], e1).is_err());
        let strong = ModelParams::new(1.0, 1.6, [0.0; 3]).unwrap();
        assert!(mu_q_density(&strong, e1, [0.3, 0.2, 0.0]).is_err());
    }

    #[test]
    fn ray_density_integrates_to_one() {
        // sigma^2 = 0.5 keeps the integrand smooth at the origin, so
        // Simpson reaches quadrature accuracy.
        let p = ModelParams::new(1.0, 0.5f64.sqrt(), [0.0, 0.0, 0.0]).unwrap();
        let q = [0.6, 0.0, 0.8]; // a direction, not an equilibrium: density
                                 // only needs the ray geometry
        let nq = norm(q);
        let n = 4000usize;
        let hi = 6.0 * nq;
        let step = hi / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let s = i as f64 * step;
            let x = scale(q, s / nq);
            let f = mu_q_density(&p, q, x).unwrap();
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * f;
        }
        acc *= step / 3.0;
        assert!((acc - 1.0).abs() < 1e-8, "integral {acc}");
    }

    #[test]
    fn stationary_samples_match_density() {
        let p = ModelParams::new(1.0, 1.0, [0.0, 0.0, 0.0]).unwrap();
        let vals = stationary_radius_samples(&p, 7, 20_000, 50.0, 2e-2).unwrap();
        let emp = EmpiricalMeasure::from_scalars(&vals).unwrap();
        let d = ks_distance(&emp, |x| density_cdf(&p, x).unwrap()).unwrap();
        assert!(d < 0.02, "KS {d}");
    }

    #[test]
    fn pullback_samples_match_density() {
        let p = ModelParams::new(1.0, 0.5f64.sqrt(), [0.0, 0.0, 0.0]).unwrap();
        let vals = pullback_radius_samples(&p, 21, 4000, 1e-6).unwrap();
        let emp = EmpiricalMeasure::from_scalars(&vals).unwrap();
        let d = ks_distance(&emp, |x| density_cdf(&p, x).unwrap()).unwrap();
        assert!(d < 0.025, "KS {d}");
    }

    #[test]
    fn occupation_is_start_independent_and_radially_stationary() {
        let p = ModelParams::new(1.0, 0.5f64.sqrt(), [0.0, 0.0, 0.0]).unwrap();
        let det = ModelParams::deterministic(1.0, [0.0, 0.0, 0.0]).unwrap();
        let h = 4.0;
        let burn = default_burn_in(&p);
        let t = 1e4;
        let a = occupation_measure_on_cone(&p, 3, h, t, burn).unwrap();
        // Second start: a different cycle point at a different radius.
        let other = scale(orbit_polyline(&det, h, 64).unwrap()[20], 1.7);
        let b = occupation_measure_from(&p, 3, h, other, t, burn).unwrap();
        assert!((a.weight_sum() - 1.0).abs() < 1e-12);
        let d_two = ks_distance_two(&a, &b).unwrap();
        assert!(d_two < 0.05, "two-start KS {d_two}");
        // Radial marginal (log coordinate) against the stationary law.
        let d_rad = ks_distance(&a, |c| density_cdf(&p, c.exp()).unwrap()).unwrap();
        assert!(d_rad < 0.05, "radial KS {d_rad}");
        // No mass near the origin.
        assert_eq!(a.cdf_at((1e-3f64).ln()), 0.0);
        // Angles cover the cycle.
        let angles = a.angles().unwrap();
        let lo = angles.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = angles.iter().cloned().fold(0.0f64, f64::max);
        assert!(lo < 1.0 && hi > 5.0, "angle range [{lo}, {hi}]");
    }

    #[test]
    fn equilibrium_sweep_concentrates() {
        let rows = vanishing_noise_sweep(
            1.0,
            [0.5, -0.2, 0.3],
            &[1.0, 0.5, 0.1, 0.01, 1e-6],
            SweepTarget::Equilibrium([1.0, 0.0, 0.0]),
            11,
        )
        .unwrap();
        for w in rows.windows(2) {
            assert!(
                w[1].concentration < w[0].concentration + w[0].standard_error,
                "{} then {}",
                w[0].concentration,
                w[1].concentration
            );
        }
        assert!(rows.last().unwrap().concentration < 0.01);
        // Magnitudes follow the frozen reference values of the scalar law.
        assert!((rows[0].concentration - 0.54).abs() < 0.04);
        assert!((rows[1].concentration - 0.30).abs() < 0.03);
    }

    #[test]
    fn cycle_sweep_concentrates() {
        let rows = vanishing_noise_sweep(
            1.0,
            [0.0, 0.0, 0.0],
            &[0.5, 0.1, 0.01],
            SweepTarget::Cycle(4.0),
            5,
        )
        .unwrap();
        for w in rows.windows(2) {
            assert!(
                w[1].concentration < w[0].concentration + w[0].standard_error,
                "{} then {}",
                w[0].concentration,
                w[1].concentration
            );
        }
        assert!(rows.last().unwrap().concentration < 0.05);
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let t = SweepTarget::Equilibrium([1.0, 0.0, 0.0]);
        assert!(vanishing_noise_sweep(1.0, [0.0; 3], &[], t, 0).is_err());
        assert!(vanishing_noise_sweep(1.0, [0.0; 3], &[0.1, 0.5], t, 0).is_err());
        assert!(vanishing_noise_sweep(1.0, [0.0; 3], &[2.5, 0.1], t, 0).is_err());
        let bad = SweepTarget::Equilibrium([0.5, 0.5, 0.5]);
        assert!(vanishing_noise_sweep(1.0, [0.1, 0.2, 0.3], &[0.5], bad, 0).is_err());
    }

    #[test]
    fn shape_probe_classifies_both_regimes() {
        let rows = p_bifurcation_probe(1.0, &[0.5, 1.0, 1.5], 17).unwrap();
        // Low noise: interior mode near sqrt(1 - sigma^2 / alpha).
        let m = rows[0].analytic_mode.unwrap();
        assert!((m - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(rows[0].unimodal_empirical);
        assert!(rows[0].agree);
        let center = (rows[0].empirical_mode_bin as f64 + 0.5) * rows[0].bin_width;
        assert!((center - m).abs() <= 1.5 * rows[0].bin_width);
        // At and above the threshold the density decreases from 0.
        for row in &rows[1..] {
            assert!(row.analytic_mode.is_none());
            assert!(!row.unimodal_empirical, "sigma2 {}", row.sigma2);
            assert!(row.agree);
        }
        // Out-of-range noise is rejected.
        assert!(p_bifurcation_probe(1.0, &[2.0], 0).is_err());
    }
}

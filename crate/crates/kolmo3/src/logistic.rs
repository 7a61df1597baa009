//! The scalar radial law: explicit solution of the logistic equation with
//! linear multiplicative noise, its pull-back random equilibrium, the
//! stationary density and time averages.
//!
//! With `a = alpha - sigma^2/2` and `E(t) = a t + sigma W(t)`, the explicit
//! solution started at `g0 >= 0` is
//!
//! ```text
//! g(t, w, g0) = g0 exp(E(t)) / (1 + 2 alpha g0^2 J(t))^{1/2},
//! J(t) = int_0^t exp(2 E(s)) ds.
//! ```
//!
//! Everything here is evaluated through recursions that are *relative to the
//! current node*: with `w_i = exp(-2 (E(t_{i+1}) - E(t_i)))`, any trapezoidal
//! accumulation of `exp(2E)` anchored at the running endpoint obeys
//!
//! ```text
//! acc_{i+1} = (acc_i + dt/2) w_i + dt/2.
//! ```
//!
//! The absolute exponent `E(t)` (which grows linearly in `t` and overflows
//! `exp` long before `t = 10^4`) never enters; one `exp` of a small number
//! per grid cell is the entire transcendental cost.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::path::BrownianPath;
use crate::special::{ln_gamma, reg_lower_gamma};

/// Pull-back random equilibrium of the scalar equation, with the truncation
/// bookkeeping of its defining improper integral.
#[derive(Clone, Copy, Debug)]
pub struct RandomEquilibriumScalar {
    pub value: f64,
    /// Depth `S` of the window `[-S, 0]` actually integrated.
    pub truncation_depth: f64,
    /// Estimated relative error of `value` from cutting the integral at `-S`,
    /// using the frozen-noise envelope for the discarded tail.
    pub tail_bound: f64,
}

/// One step of the anchored trapezoid recursion.
#[derive(Clone, Copy)]
struct RadialStep {
    two_a_dt: f64,
    two_sigma: f64,
    half_dt: f64,
}

impl RadialStep {
    fn new(p: &ModelParams, dt: f64) -> Self {
        Self {
            two_a_dt: 2.0 * p.a_eff() * dt,
            two_sigma: 2.0 * p.sigma,
            half_dt: 0.5 * dt,
        }
    }

    /// Decay factor of one cell, `exp(-2 dE)` for the realized increment.
    #[inline]
    fn decay(&self, dw: f64) -> f64 {
        (-(self.two_a_dt + self.two_sigma * dw)).exp()
    }

    /// Advance an accumulator of `exp(-2E(t_i)) * int exp(2E)`.
    #[inline]
    fn advance(&self, acc: f64, w: f64) -> f64 {
        (acc + self.half_dt) * w + self.half_dt
    }
}

fn check_g0(g0: f64) -> Result<()> {
    if !(g0.is_finite() && g0 >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "initial value must be finite and nonnegative, got {g0}"
        )));
    }
    Ok(())
}

/// Closed-form solution at a single grid time `t >= 0`.
pub fn g_explicit(p: &ModelParams, path: &BrownianPath, g0: f64, t: f64) -> Result<f64> {
    check_g0(g0)?;
    if t < 0.0 {
        return Err(Error::InvalidParams(format!("t must be >= 0, got {t}")));
    }
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let end = path.index_of(t)?;
    let z = path.zero_index();
    let step = RadialStep::new(p, path.dt());
    // p_rel = exp(-2E(t_i)), j_rel = exp(-2E(t_i)) J(t_i).
    let mut p_rel = 1.0;
    let mut j_rel = 0.0;
    for i in z..end {
        let w = step.decay(path.increment(i));
        j_rel = step.advance(j_rel, w);
        p_rel *= w;
    }
    // g = g0 / sqrt(exp(-2E) + 2 alpha g0^2 j_rel); the first term
    // underflowing to zero is the correct large-time limit.
    Ok(g0 / (p_rel + 2.0 * p.alpha * g0 * g0 * j_rel).sqrt())
}

/// Time average `(1/T) int_0^T g(s)^2 ds` on the path grid.
pub fn time_average_g2(p: &ModelParams, path: &BrownianPath, g0: f64, t_end: f64) -> Result<f64> {
    check_g0(g0)?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidParams(format!("T must be positive, got {t_end}")));
    }
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let end = path.index_of(t_end)?;
    let z = path.zero_index();
    let step = RadialStep::new(p, path.dt());
    let c = 2.0 * p.alpha * g0 * g0;
    let mut p_rel = 1.0;
    let mut j_rel = 0.0;
    let g2 = |p_rel: f64, j_rel: f64| g0 * g0 / (p_rel + c * j_rel);
    let mut sum = 0.5 * g2(p_rel, j_rel);
    for i in z..end {
        let w = step.decay(path.increment(i));
        j_rel = step.advance(j_rel, w);
        p_rel *= w;
        sum += g2(p_rel, j_rel);
    }
    sum -= 0.5 * g2(p_rel, j_rel);
    Ok(sum * path.dt() / t_end)
}

/// Recommended backward window depth for [`u_g`] at tolerance `tol`.
pub fn recommended_depth(p: &ModelParams, tol: f64) -> f64 {
    let gap = 2.0 * p.alpha - p.sigma2();
    (10.0f64).max((1.0 / tol).ln() / gap)
}

/// Pull-back random equilibrium `u_g(w)` evaluated from the path's backward
/// window. Needs `sigma^2 < 2 alpha`; fails if the window is too short for
/// the requested relative tolerance.
pub fn u_g(p: &ModelParams, path: &BrownianPath, tol: f64) -> Result<RandomEquilibriumScalar> {
    if p.noise_dominates() {
        return Err(Error::NotApplicable(
            "no positive random equilibrium when sigma^2 >= 2 alpha".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    let z = path.zero_index();
    if z == 0 && path.t_min() == 0.0 {
        return Err(Error::Coverage("u_g needs a backward window [-S, 0]".into()));
    }
    let step = RadialStep::new(p, path.dt());
    let two_a = 2.0 * p.a_eff();
    // psi_rel = exp(-2E(t_i)) int_{-inf}^{t_i} exp(2E); the improper part
    // below t_min enters through the frozen-noise envelope 1/(2a), and
    // tail_rel tracks how much of the current value it still accounts for.
    let mut psi_rel = 1.0 / two_a;
    let mut tail_rel = psi_rel;
    for i in 0..z {
        let w = step.decay(path.increment(i));
        psi_rel = step.advance(psi_rel, w);
        tail_rel *= w;
    }
    let value = 1.0 / (2.0 * p.alpha * psi_rel).sqrt();
    // d(u)/u = -d(psi)/(2 psi).
    let tail_bound = 0.5 * tail_rel / psi_rel;
    if tail_bound >= tol {
        return Err(Error::Coverage(format!(
            "backward window too short: tail bound {tail_bound:e} >= tol {tol:e}; \
             extend t_min to about -{:.1}",
            recommended_depth(p, tol)
        )));
    }
    Ok(RandomEquilibriumScalar { value, truncation_depth: -path.t_min(), tail_bound })
}

/// Trajectory-grade view of one scalar solution: `g^2` and its running
/// integral `tau(t) = int_0^t g^2` on the forward grid nodes.
pub struct LogisticSolution {
    g0: f64,
    t_grid_start: usize,
    dt: f64,
    g2: Vec<f64>,
    tau: Vec<f64>,
}

impl LogisticSolution {
    /// Tabulate from local time 0 out to `t_end` (a grid time).
    pub fn new(p: &ModelParams, path: &BrownianPath, g0: f64, t_end: f64) -> Result<Self> {
        check_g0(g0)?;
        let end = path.index_of(t_end.max(0.0))?;
        let z = path.zero_index();
        if end < z {
            return Err(Error::InvalidParams("t_end must be >= 0".into()));
        }
        let n = end - z + 1;
        let step = RadialStep::new(p, path.dt());
        let c = 2.0 * p.alpha * g0 * g0;
        let mut g2 = Vec::with_capacity(n);
        let mut tau = Vec::with_capacity(n);
        let mut p_rel = 1.0;
        let mut j_rel = 0.0;
        let mut running_tau = 0.0;
        let val = |p_rel: f64, j_rel: f64| {
            if g0 == 0.0 { 0.0 } else { g0 * g0 / (p_rel + c * j_rel) }
        };
        let mut prev = val(p_rel, j_rel);
        g2.push(prev);
        tau.push(0.0);
        for i in z..end {
            let w = step.decay(path.increment(i));
            j_rel = step.advance(j_rel, w);
            p_rel *= w;
            let cur = val(p_rel, j_rel);
            running_tau += 0.5 * path.dt() * (prev + cur);
            g2.push(cur);
            tau.push(running_tau);
            prev = cur;
        }
        Ok(Self { g0, t_grid_start: z, dt: path.dt(), g2, tau })
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn len(&self) -> usize {
        self.g2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g2.is_empty()
    }

    /// `g` at forward node `k` (node index relative to local time 0).
    pub fn g_node(&self, k: usize) -> f64 {
        self.g2[k].sqrt()
    }

    pub fn g2_node(&self, k: usize) -> f64 {
        self.g2[k]
    }

    /// `tau(t_k) = int_0^{t_k} g^2`.
    pub fn tau_node(&self, k: usize) -> f64 {
        self.tau[k]
    }

    fn node_of(&self, t: f64) -> Result<usize> {
        let f = t / self.dt;
        let k = f.round();
        if (f - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.g2.len() {
            return Err(Error::Grid(format!("t = {t} not on the tabulated grid")));
        }
        Ok(k as usize)
    }

    pub fn g_at(&self, t: f64) -> Result<f64> {
        Ok(self.g_node(self.node_of(t)?))
    }

    pub fn tau_at(&self, t: f64) -> Result<f64> {
        Ok(self.tau_node(self.node_of(t)?))
    }

    /// Index of the first tabulated node on the underlying path.
    pub fn path_node_start(&self) -> usize {
        self.t_grid_start
    }
}

/// The squared random equilibrium along the whole path window:
/// `u2[i] = u_g(theta_{t_i} w)^2`, plus its cumulative integral. This is the
/// O(1)-per-node replacement for re-integrating the pull-back at each shift.
pub struct UgSeries {
    dt: f64,
    zero_index: usize,
    u2: Vec<f64>,
    /// Trapezoid cumulative of `u2` from the first node.
    cum: Vec<f64>,
}

impl UgSeries {
    pub fn new(p: &ModelParams, path: &BrownianPath) -> Result<Self> {
        if p.noise_dominates() {
            return Err(Error::NotApplicable(
                "no positive random equilibrium when sigma^2 >= 2 alpha".into(),
            ));
        }
        let n = path.node_count();
        let step = RadialStep::new(p, path.dt());
        let two_a = 2.0 * p.a_eff();
        let mut u2 = Vec::with_capacity(n);
        let mut cum = Vec::with_capacity(n);
        let mut psi_rel = 1.0 / two_a;
        u2.push(1.0 / (2.0 * p.alpha * psi_rel));
        cum.push(0.0);
        let mut running = 0.0;
        for i in 0..n - 1 {
            let w = step.decay(path.increment(i));
            psi_rel = step.advance(psi_rel, w);
            let cur = 1.0 / (2.0 * p.alpha * psi_rel);
            running += 0.5 * path.dt() * (u2[i] + cur);
            u2.push(cur);
            cum.push(running);
        }
        Ok(Self { dt: path.dt(), zero_index: path.zero_index(), u2, cum })
    }

    pub fn u2_node(&self, i: usize) -> f64 {
        self.u2[i]
    }

    pub fn node_count(&self) -> usize {
        self.u2.len()
    }

    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    /// `u_g(w)` itself, the value at local time 0.
    pub fn at_origin(&self) -> f64 {
        self.u2[self.zero_index].sqrt()
    }

    /// `int_0^t u_g(theta_s w)^2 ds` for any `t` in the window (either sign);
    /// linear interpolation of `u2` inside a cell.
    pub fn b_of(&self, t: f64) -> f64 {
        let pos = t / self.dt + self.zero_index as f64;
        let clamped = pos.clamp(0.0, (self.u2.len() - 1) as f64);
        let i = clamped.floor() as usize;
        let frac = clamped - i as f64;
        let base = self.cum[i] - self.cum[self.zero_index];
        if frac == 0.0 {
            return base;
        }
        let lo = self.u2[i];
        let hi = self.u2[i + 1];
        // Integral of the linear interpolant over the partial cell.
        base + self.dt * frac * (lo + 0.5 * frac * (hi - lo))
    }

    /// `A(t) = int_{-t}^0 u_g(theta_s w)^2 ds`, increasing in `t >= 0`.
    pub fn a_of(&self, t: f64) -> f64 {
        -self.b_of(-t)
    }

    /// Largest `t` for which `a_of` is exact (window coverage).
    pub fn a_range(&self) -> f64 {
        self.zero_index as f64 * self.dt
    }
}

/// Exponent `b = alpha / sigma^2` of the stationary law, with its domain
/// check `sigma^2 < 2 alpha` (i.e. `b > 1/2`).
fn density_exponent(p: &ModelParams) -> Result<f64> {
    if p.sigma == 0.0 {
        return Err(Error::NotApplicable(
            "stationary density needs sigma > 0 (the noise-free law is a point mass)".into(),
        ));
    }
    if p.noise_dominates() {
        return Err(Error::NotApplicable(
            "no stationary density when sigma^2 >= 2 alpha".into(),
        ));
    }
    Ok(p.alpha / p.sigma2())
}

/// Stationary density `p(s) = C s^{2b-2} exp(-b s^2)` of the radial law,
/// normalized on `(0, inf)`: `C = 2 b^{b-1/2} / Gamma(b-1/2)`.
pub fn stationary_density(p: &ModelParams, s: f64) -> Result<f64> {
    let b = density_exponent(p)?;
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::InvalidParams(format!("s must be >= 0, got {s}")));
    }
    if s == 0.0 {
        // Limits: zero above the shape transition, the constant C at b = 1,
        // a pole below it.
        return Ok(if b > 1.0 {
            0.0
        } else if b == 1.0 {
            norm_constant(b)
        } else {
            f64::INFINITY
        });
    }
    let ln_p = norm_constant_ln(b) + (2.0 * b - 2.0) * s.ln() - b * s * s;
    Ok(ln_p.exp())
}

fn norm_constant_ln(b: f64) -> f64 {
    std::f64::consts::LN_2 + (b - 0.5) * b.ln() - ln_gamma(b - 0.5)
}

fn norm_constant(b: f64) -> f64 {
    norm_constant_ln(b).exp()
}

/// Distribution function of [`stationary_density`]:
/// `P(b - 1/2, b s^2)` in terms of the regularized lower incomplete gamma.
pub fn density_cdf(p: &ModelParams, s: f64) -> Result<f64> {
    let b = density_exponent(p)?;
    if !(s.is_finite()) {
        return Err(Error::InvalidParams(format!("s must be finite, got {s}")));
    }
    if s <= 0.0 {
        return Ok(0.0);
    }
    Ok(reg_lower_gamma(b - 0.5, b * s * s))
}

/// Quantile of the stationary law by bisection on [`density_cdf`].
pub fn density_quantile(p: &ModelParams, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidParams(format!("quantile level must be in [0,1), got {q}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while density_cdf(p, hi)? < q {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoConvergence("quantile bracket grew past 1e6".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if density_cdf(p, mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Interior mode of the stationary density: `sqrt(1 - sigma^2/alpha)` below
/// the shape transition at `sigma^2 = alpha`, `None` in the monotone regime
/// `alpha <= sigma^2 < 2 alpha`.
pub fn density_mode(p: &ModelParams) -> Result<Option<f64>> {
    let b = density_exponent(p)?;
    if b > 1.0 {
        Ok(Some((1.0 - p.sigma2() / p.alpha).sqrt()))
    } else {
        Ok(None)
    }
}

/// Long-run value of both the time average of `g^2` and the mean of `u_g^2`:
/// `(alpha - sigma^2/2) / alpha`.
pub fn long_run_mean_g2(p: &ModelParams) -> f64 {
    p.a_eff() / p.alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{refine, sample_path, shift};

    fn params(alpha: f64, sigma2: f64) -> ModelParams {
        ModelParams::new(alpha, sigma2.sqrt(), [0.0; 3]).unwrap()
    }

    #[test]
    fn zero_start_stays_zero() {
        let p = params(1.0, 1.0);
        let path = sample_path(5, 0.0, 10.0, 1e-2).unwrap();
        assert_eq!(g_explicit(&p, &path, 0.0, 7.0).unwrap(), 0.0);
        assert_eq!(time_average_g2(&p, &path, 0.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_fixed_point_and_closed_form() {
        let p = params(1.0, 0.0);
        let path = sample_path(1, 0.0, 5.0, 1e-3).unwrap();
        // g0 = 1 is the equilibrium of the noise-free equation; quadrature
        // keeps it to O(dt^2).
        for &t in &[0.5, 1.0, 3.0, 5.0] {
            let g = g_explicit(&p, &path, 1.0, t).unwrap();
            assert!((g - 1.0).abs() < 1e-6, "t {t}: {g}");
        }
        // Closed form from g0 = 2: g(t) = 2 e^t / sqrt(4 e^{2t} - 3).
        for &t in &[0.0f64, 0.3, 1.0, 2.5] {
            let want = 2.0 * t.exp() / (4.0 * (2.0 * t).exp() - 3.0).sqrt();
            let got = g_explicit(&p, &path, 2.0, t).unwrap();
            assert!((got - want).abs() < 1e-6, "t {t}: {got} vs {want}");
        }
    }

    #[test]
    fn flow_property_is_exact_on_shared_grids() {
        let p = params(1.0, 0.8);
        let path = sample_path(17, -1.0, 6.0, 1e-2).unwrap();
        let (s, t) = (1.5, 2.75);
        let lhs = g_explicit(&p, &path, 0.7, s + t).unwrap();
        let mid = g_explicit(&p, &path, 0.7, s).unwrap();
        let shifted = shift(&path, s).unwrap();
        let rhs = g_explicit(&p, &shifted, mid, t).unwrap();
        // The discrete recursions compose exactly; only rounding remains.
        assert!((lhs - rhs).abs() < 1e-12 * lhs.max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn u_g_deterministic_limit_and_errors() {
        let p = params(1.0, 0.0);
        let path = sample_path(2, -15.0, 1.0, 1e-3).unwrap();
        let u = u_g(&p, &path, 1e-6).unwrap();
        assert!((u.value - 1.0).abs() < 1e-6, "{}", u.value);
        assert!(u.tail_bound < 1e-6);
        assert_eq!(u.truncation_depth, 15.0);

        // Too-strong noise is rejected.
        let loud = params(1.0, 2.5);
        assert!(matches!(u_g(&loud, &path, 1e-6), Err(Error::NotApplicable(_))));
        // Short window is rejected with a depth hint.
        let short = sample_path(2, -1.0, 0.5, 1e-3).unwrap();
        assert!(matches!(u_g(&p, &short, 1e-9), Err(Error::Coverage(_))));
    }

    #[test]
    fn u_g_is_the_random_fixed_point() {
        let p = params(1.0, 1.0);
        let path = sample_path(33, -25.0, 4.0, 1e-3).unwrap();
        let u0 = u_g(&p, &path, 1e-8).unwrap().value;
        let series = UgSeries::new(&p, &path).unwrap();
        assert!((series.at_origin() - u0).abs() < 1e-12);
        for &t in &[0.5, 1.0, 2.0, 4.0] {
            let lhs = g_explicit(&p, &path, u0, t).unwrap();
            let node = path.index_of(t).unwrap();
            let rhs = series.u2_node(node).sqrt();
            // Same cells, same tail envelope: the identity is exact in the
            // discretization.
            assert!((lhs - rhs).abs() < 1e-12, "t {t}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn ensemble_mean_of_u2_matches_long_run_value() {
        let p = params(1.0, 1.0);
        let n = 1500;
        let mut sum = 0.0;
        for k in 0..n {
            // At sigma = 1 the realized envelope decays like
            // exp(-S + 2 dW) with dW ~ N(0, S), so the window must beat the
            // fluctuation term for every member of the ensemble.
            let path = sample_path(crate::rng::mix_seed(901, k), -60.0, 0.0, 5e-3).unwrap();
            let u = u_g(&p, &path, 1e-3).unwrap().value;
            sum += u * u;
        }
        let mean = sum / n as f64;
        // SE at n = 1500 is about 0.018.
        assert!((mean - 0.5).abs() < 0.06, "mean {mean}");
    }

    #[test]
    fn time_average_tracks_the_law() {
        let p = params(1.0, 1.0);
        let path = sample_path(7, 0.0, 500.0, 1e-2).unwrap();
        let avg = time_average_g2(&p, &path, 1.0, 500.0).unwrap();
        assert!((avg - 0.5).abs() < 0.1, "avg {avg}");

        let det = params(1.0, 0.0);
        let avg1 = time_average_g2(&det, &path, 1.0, 500.0).unwrap();
        // Quadrature-limited at dt = 1e-2.
        assert!((avg1 - 1.0).abs() < 1e-4, "avg1 {avg1}");
    }

    #[test]
    fn ug_series_integral_is_consistent() {
        let p = params(1.0, 0.5);
        let path = sample_path(4, -30.0, 5.0, 1e-3).unwrap();
        let s = UgSeries::new(&p, &path).unwrap();
        assert_eq!(s.b_of(0.0), 0.0);
        // A is increasing and roughly linear with slope E u^2.
        let a1 = s.a_of(5.0);
        let a2 = s.a_of(10.0);
        let a3 = s.a_of(20.0);
        assert!(a1 > 0.0 && a2 > a1 && a3 > a2);
        let slope = (a3 - a1) / 15.0;
        assert!((slope - 0.75).abs() < 0.3, "slope {slope}");
        // Refining the path changes values only at quadrature order.
        let fine = refine(&path, 2).unwrap();
        let sf = UgSeries::new(&p, &fine).unwrap();
        assert!((s.at_origin() - sf.at_origin()).abs() < 1e-3);
    }

    #[test]
    fn density_shapes_and_normalization() {
        // b = 1: p(s) = 2 exp(-s^2) / sqrt(pi).
        let p1 = params(1.0, 1.0);
        let c = 2.0 / std::f64::consts::PI.sqrt();
        assert!((stationary_density(&p1, 0.0).unwrap() - c).abs() < 1e-12);
        for &s in &[0.2f64, 0.7, 1.3] {
            let want = c * (-s * s).exp();
            assert!((stationary_density(&p1, s).unwrap() - want).abs() < 1e-12);
        }
        assert_eq!(density_mode(&p1).unwrap(), None);

        // b = 2: interior mode at sqrt(1/2).
        let p2 = params(1.0, 0.5);
        let mode = density_mode(&p2).unwrap().unwrap();
        assert!((mode - 0.5f64.sqrt()).abs() < 1e-12);
        // Near-transition continuity.
        let p3 = params(1.0, 0.999999);
        let m3 = density_mode(&p3).unwrap().unwrap();
        assert!((m3 - 0.001).abs() < 1e-6);

        // CDF is the antiderivative: central difference matches the density.
        for &(a, s2) in &[(1.0, 0.5), (1.0, 1.0), (1.0, 1.5), (2.0, 1.0)] {
            let pr = params(a, s2);
            for &s in &[0.3, 0.8, 1.5] {
                let h = 1e-5;
                let d = (density_cdf(&pr, s + h).unwrap() - density_cdf(&pr, s - h).unwrap())
                    / (2.0 * h);
                let want = stationary_density(&pr, s).unwrap();
                assert!((d - want).abs() < 1e-6 * want.max(1.0), "a {a} s2 {s2} s {s}");
            }
        }

        // Simpson normalization at b = 2, where the integrand is analytic
        // through s = 0 (no fractional-power cusp to spoil the order).
        let pr = params(1.0, 0.5);
        let n = 4000;
        let h = 8.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let s = i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * stationary_density(&pr, s).unwrap();
        }
        acc *= h / 3.0;
        assert!((acc - 1.0).abs() < 1e-8, "integral {acc}");

        // sigma^2 >= 2 alpha has no stationary density.
        assert!(stationary_density(&params(1.0, 2.0), 1.0).is_err());
        assert!(density_mode(&params(1.0, 3.0)).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = params(1.0, 0.5);
        for &q in &[0.01, 0.3, 0.5, 0.9, 0.999] {
            let s = density_quantile(&p, q).unwrap();
            let back = density_cdf(&p, s).unwrap();
            assert!((back - q).abs() < 1e-10, "q {q}: {back}");
        }
    }
}

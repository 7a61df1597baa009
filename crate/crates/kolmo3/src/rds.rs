//! Pathwise dynamics: pullback limits, random equilibria, Lyapunov
//! exponents, and the random periodic solution on an invariant cone.
//!
//! Everything here is driven by one frozen Brownian path, so repeated
//! calls with the same path are bit-identical. The pullback construction
//! starts the solution at time `-t` and evaluates at time `0`; as `t`
//! grows the value forgets the start and converges to a random point (or
//! set) depending only on the noise realization.

use crate::error::{Error, Result};
use crate::flow::{
    dist_to_polyline, integrate_flow, orbit_polyline, period_of_orbit, section_point,
    FlowMap, OmegaLimitKind, StepControl,
};
use crate::logistic::{u_g, UgSeries};
use crate::model::{dist, drift, norm, scale, ModelParams, State3};
use crate::path::{sample_path, shift, BrownianPath};
use crate::sde::{decompose, integrate_sde, linearized_rk4_step, SchemeKind, SchemeSpec};

/// Solution at time `0` of the system started from `x0` at time `-t`,
/// evaluated along the given noise path.
///
/// The path must cover `[-t, 0]` and `t` must sit on its grid. The radial
/// factor is started at `1`; its influence drops out as `t` grows.
pub fn pullback_point(
    p: &ModelParams,
    path: &BrownianPath,
    x0: State3,
    t: f64,
) -> Result<State3> {
    if t < 0.0 {
        return Err(Error::InvalidParams("pullback time must be nonnegative".into()));
    }
    let shifted = shift(path, -t)?;
    decompose(p, &shifted, x0, 1.0, t)
}

/// What a pullback trajectory settles on.
#[derive(Debug, Clone, PartialEq)]
pub enum PullbackKind {
    /// Everything collapses to the origin (noise at or above the
    /// stabilization threshold).
    Origin,
    /// A single random point.
    Point(State3),
    /// A random cycle on the cone of level `h`, reported as sampled points.
    Cycle { h: f64, samples: Vec<State3> },
}

/// Result of running the pullback construction to a finite horizon.
#[derive(Debug, Clone)]
pub struct OmegaLimitSample {
    pub kind: PullbackKind,
    /// Whether the convergence criterion was met before the horizon.
    pub converged: bool,
    /// Final value of the convergence gauge: the norm for origin limits,
    /// the successive-difference norm for points, the worst distance to
    /// the predicted cycle for cycles.
    pub achieved_delta: f64,
}

/// Runs the pullback construction from `x0` with start times pushed back
/// toward `t_max` and classifies the limit object.
///
/// The qualitative type (origin, point, or cycle) follows from the
/// noise-free limit structure; convergence toward it is then verified
/// numerically. A run that fails to reach `tol` by the horizon is
/// returned with `converged == false` rather than as an error.
pub fn pullback_limit(
    p: &ModelParams,
    path: &BrownianPath,
    x0: State3,
    t_max: f64,
    tol: f64,
) -> Result<OmegaLimitSample> {
    if t_max <= 0.0 || tol <= 0.0 {
        return Err(Error::InvalidParams("pullback horizon and tol must be positive".into()));
    }
    if !path.covers(-t_max, 0.0) {
        return Err(Error::Coverage(format!(
            "pullback to horizon {t_max} needs the path on [{:.3}, 0]",
            -t_max
        )));
    }
    let dt = path.dt();
    let snap = |t: f64| (t / dt).round() * dt;
    if p.noise_dominates() {
        // The radius is dominated by a scalar factor that dies pathwise.
        let mut t = snap((t_max / 8.0).max(1.0));
        let mut v = pullback_point(p, path, x0, t)?;
        while norm(v) >= tol && t < t_max - 0.5 * dt {
            t = snap((t * 1.6).min(t_max));
            v = pullback_point(p, path, x0, t)?;
        }
        let n = norm(v);
        return Ok(OmegaLimitSample {
            kind: PullbackKind::Origin,
            converged: n < tol,
            achieved_delta: n,
        });
    }
    let det = ModelParams::deterministic(p.alpha, p.d)?;
    let class = crate::flow::omega_limit(&det, x0)?;
    match class.kind {
        OmegaLimitKind::Origin => Ok(OmegaLimitSample {
            kind: PullbackKind::Origin,
            converged: true,
            achieved_delta: 0.0,
        }),
        OmegaLimitKind::Equilibrium(_) => {
            let mut t = snap((t_max / 8.0).max(1.0));
            let mut prev = pullback_point(p, path, x0, t)?;
            let mut delta = f64::INFINITY;
            while t < t_max - 0.5 * dt {
                t = snap((t * 1.6).min(t_max));
                let cur = pullback_point(p, path, x0, t)?;
                delta = dist(cur, prev);
                prev = cur;
                if delta < tol {
                    break;
                }
            }
            Ok(OmegaLimitSample {
                kind: PullbackKind::Point(prev),
                converged: delta < tol,
                achieved_delta: delta,
            })
        }
        OmegaLimitKind::PeriodicOrbit { h } => {
            // The limit set is the noise-free cycle scaled by the random
            // radius. Sample the pullback at a spread of start times near
            // the horizon; each sample must sit on that set.
            let ug = u_g(p, path, tol.min(1e-6))?;
            let poly: Vec<State3> = orbit_polyline(&det, h, 1024)?
                .into_iter()
                .map(|v| scale(v, ug.value))
                .collect();
            let n_samp = 24usize;
            let spread = (0.35 * t_max).max(1.0);
            let mut samples = Vec::with_capacity(n_samp);
            let mut worst = 0.0f64;
            for k in 0..n_samp {
                let t = snap(t_max - spread * k as f64 / n_samp as f64);
                let v = pullback_point(p, path, x0, t)?;
                worst = worst.max(dist_to_polyline(v, &poly));
                samples.push(v);
            }
            Ok(OmegaLimitSample {
                kind: PullbackKind::Cycle { h, samples },
                converged: worst < tol,
                achieved_delta: worst,
            })
        }
    }
}

/// Random equilibrium sitting over the drift equilibrium `q`: the
/// stationary radius times `q`. The origin maps to itself.
///
/// Fails if `q` is not actually an equilibrium of the drift, or if the
/// noise is strong enough that no nontrivial stationary radius exists.
pub fn random_equilibrium(
    p: &ModelParams,
    path: &BrownianPath,
    q: State3,
    tol: f64,
) -> Result<State3> {
    let b = drift(p, q)?;
    if norm(b) > 1e-8 * (1.0 + norm(q)) {
        return Err(Error::InvalidParams(
            "random_equilibrium needs a drift equilibrium as anchor".into(),
        ));
    }
    if norm(q) == 0.0 {
        return Ok([0.0; 3]);
    }
    if p.sigma == 0.0 {
        return Ok(q);
    }
    let ug = u_g(p, path, tol)?;
    Ok(scale(q, ug.value))
}

/// Ergodic invariant measures with closed-form Lyapunov spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureId {
    /// Point mass at the origin.
    DeltaO,
    /// Stationary law of the random equilibrium on the first axis.
    E1,
    /// Second axis.
    E2,
    /// Third axis.
    E3,
}

/// Closed-form Lyapunov spectrum of the linearization over an ergodic
/// measure supported on an axis (or at the origin), ordered by coordinate.
///
/// Writing `a = alpha - sigma^2/2`, the origin gives `(a, a, a)` at any
/// noise level; the axis measures exist for `a > 0` and their spectra
/// scale linearly in `a`.
pub fn lyapunov_analytic(p: &ModelParams, id: MeasureId) -> Result<[f64; 3]> {
    let a = p.a_eff();
    if id == MeasureId::DeltaO {
        return Ok([a, a, a]);
    }
    if p.noise_dominates() {
        return Err(Error::NotApplicable("axis measures need sigma^2 < 2 alpha".into()));
    }
    let [m1, m2, m3] = p.ms();
    let r = a / p.alpha;
    Ok(match id {
        MeasureId::DeltaO => unreachable!(),
        MeasureId::E1 => [-2.0 * a, m1 * r, -m2 * r],
        MeasureId::E2 => [-m1 * r, -2.0 * a, m3 * r],
        MeasureId::E3 => [m2 * r, -m3 * r, -2.0 * a],
    })
}

/// Base trajectory for a numerical Lyapunov run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LyapunovBase {
    /// The constant solution at the origin.
    Origin,
    /// The random equilibrium on axis `i` (1, 2, or 3).
    Axis(usize),
    /// A trajectory started from a given point, integrated by Milstein.
    Generic(State3),
}

/// Perturbation direction for a numerical Lyapunov run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LyapunovDirection {
    /// Coordinate axis `j` (0-based).
    Coordinate(usize),
    /// Arbitrary start vector (generic bases only).
    Vector(State3),
}

/// One finite-horizon Lyapunov exponent estimate.
#[derive(Debug, Clone, Copy)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub horizon: f64,
    pub renormalization_count: u64,
    /// Across-seed standard error; zero for a single run.
    pub standard_error: f64,
}

const LYAP_DT: f64 = 1e-2;

/// Per-coordinate quadratic coefficients of the linearization along axis
/// `i`: the diagonal entries there are `alpha + c_j x_i^2`.
fn axis_diag_coeffs(p: &ModelParams, i: usize) -> [f64; 3] {
    let al = p.alpha;
    let [d1, d2, d3] = p.d;
    match i {
        1 => [-3.0 * al, d1, -(2.0 * al + d2)],
        2 => [-(2.0 * al + d1), -3.0 * al, d3],
        3 => [d2, -(2.0 * al + d3), -3.0 * al],
        _ => unreachable!(),
    }
}

fn coordinate_direction(direction: LyapunovDirection) -> Result<usize> {
    match direction {
        LyapunovDirection::Coordinate(j) if j < 3 => Ok(j),
        _ => Err(Error::InvalidParams(
            "diagonal bases take a coordinate direction (0, 1, or 2)".into(),
        )),
    }
}

/// Finite-horizon Lyapunov exponent from one noise realization.
///
/// On the origin and on the axes the linearization is diagonal, so each
/// coordinate direction carries an exact scalar time average and no
/// renormalization is needed; the noise contributes `-sigma^2/2` plus the
/// endpoint Brownian average. A generic base evolves the full linearized
/// cocycle along a Milstein trajectory with periodic renormalization and
/// estimates the growth rate of the chosen start vector.
pub fn lyapunov_numeric(
    p: &ModelParams,
    seed: u64,
    base: LyapunovBase,
    direction: LyapunovDirection,
    t_horizon: f64,
    renorm_step: f64,
) -> Result<LyapunovEstimate> {
    if !(t_horizon > 0.0) {
        return Err(Error::InvalidParams("lyapunov horizon must be positive".into()));
    }
    match base {
        LyapunovBase::Origin => {
            coordinate_direction(direction)?;
            let path = sample_path(seed, 0.0, t_horizon, LYAP_DT)?;
            let w_t = path.w_at(t_horizon)?;
            let value = p.alpha - 0.5 * p.sigma2() + p.sigma * w_t / t_horizon;
            Ok(LyapunovEstimate {
                value,
                horizon: t_horizon,
                renormalization_count: 0,
                standard_error: 0.0,
            })
        }
        LyapunovBase::Axis(i) => {
            if !(1..=3).contains(&i) {
                return Err(Error::InvalidParams("axis index must be 1, 2, or 3".into()));
            }
            let j = coordinate_direction(direction)?;
            if p.noise_dominates() {
                return Err(Error::NotApplicable("axis base needs sigma^2 < 2 alpha".into()));
            }
            // Backward depth so the stationary radius is equilibrated at 0.
            let depth = crate::logistic::recommended_depth(p, 1e-9) * 1.5 + 20.0;
            let path = sample_path(seed, -depth, t_horizon, LYAP_DT)?;
            let series = UgSeries::new(p, &path)?;
            let c = axis_diag_coeffs(p, i)[j];
            // (1/T) int (alpha + c u^2) dt needs only the cumulative
            // integral of u^2 already held by the series.
            let int_u2 = series.b_of(t_horizon);
            let w_t = path.w_at(t_horizon)?;
            let value =
                p.alpha + c * int_u2 / t_horizon - 0.5 * p.sigma2() + p.sigma * w_t / t_horizon;
            Ok(LyapunovEstimate {
                value,
                horizon: t_horizon,
                renormalization_count: 0,
                standard_error: 0.0,
            })
        }
        LyapunovBase::Generic(x0) => {
            let mut v = match direction {
                LyapunovDirection::Coordinate(j) if j < 3 => {
                    let mut e = [0.0; 3];
                    e[j] = 1.0;
                    e
                }
                LyapunovDirection::Vector(v) if norm(v) > 0.0 => v,
                _ => return Err(Error::InvalidParams("bad direction vector".into())),
            };
            if !(renorm_step > 0.0) {
                return Err(Error::InvalidParams("renorm step must be positive".into()));
            }
            let path = sample_path(seed, 0.0, t_horizon, LYAP_DT)?;
            let spec = SchemeSpec { kind: SchemeKind::Milstein, dt: LYAP_DT };
            let rec = integrate_sde(p, &path, x0, t_horizon, &spec)?;
            v = scale(v, 1.0 / norm(v));
            let mut log_sum = 0.0f64;
            let mut renorms = 0u64;
            let stride = (renorm_step / LYAP_DT).round().max(1.0) as usize;
            for (k, pair) in rec.states.windows(2).enumerate() {
                let mid = [
                    0.5 * (pair[0][0] + pair[1][0]),
                    0.5 * (pair[0][1] + pair[1][1]),
                    0.5 * (pair[0][2] + pair[1][2]),
                ];
                v = linearized_rk4_step(p, pair[0], mid, pair[1], v, LYAP_DT);
                if (k + 1) % stride == 0 {
                    let n = norm(v);
                    if !(n.is_finite() && n > 0.0) {
                        return Err(Error::Diagnostic(
                            "linearized vector degenerated; shorten the renorm step".into(),
                        ));
                    }
                    log_sum += n.ln();
                    v = scale(v, 1.0 / n);
                    renorms += 1;
                }
            }
            log_sum += norm(v).ln();
            let w_t = path.w_at(t_horizon)?;
            let value = log_sum / t_horizon - 0.5 * p.sigma2() + p.sigma * w_t / t_horizon;
            Ok(LyapunovEstimate {
                value,
                horizon: t_horizon,
                renormalization_count: renorms,
                standard_error: 0.0,
            })
        }
    }
}

/// Mean and standard error of `lyapunov_numeric` across independent seeds.
pub fn lyapunov_ensemble(
    p: &ModelParams,
    base: LyapunovBase,
    direction: LyapunovDirection,
    t_horizon: f64,
    renorm_step: f64,
    seeds: &[u64],
) -> Result<LyapunovEstimate> {
    if seeds.len() < 2 {
        return Err(Error::InvalidParams("ensemble needs at least 2 seeds".into()));
    }
    let mut vals = Vec::with_capacity(seeds.len());
    let mut renorms = 0u64;
    for &s in seeds {
        let e = lyapunov_numeric(p, s, base, direction, t_horizon, renorm_step)?;
        renorms = renorms.max(e.renormalization_count);
        vals.push(e.value);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(LyapunovEstimate {
        value: mean,
        horizon: t_horizon,
        renormalization_count: renorms,
        standard_error: (var / n).sqrt(),
    })
}

/// Random periodic solution on the cone of level `h`, anchored at the
/// section point of the underlying noise-free cycle.
#[derive(Debug, Clone)]
pub struct CrpsSample {
    /// Cone level.
    pub h: f64,
    /// Anchor point on the cycle.
    pub y0: State3,
    /// Period of the noise-free cycle.
    pub n_h: f64,
    /// Random period at time zero: how long the rescaled clock needs to
    /// advance by one cycle period.
    pub period_t: f64,
    /// Solution samples `(t, value)` over two random periods.
    pub psi_at: Vec<(f64, State3)>,
    /// Worst defect of the periodicity identity over the sampled times.
    pub identity_residual_max: f64,
    /// Worst defect of the flow-solution identity over sampled time pairs,
    /// checked against an independent integration of the decomposition.
    pub solution_residual_max: f64,
}

/// Clock algebra of the random periodic solution, built on the cumulative
/// integral of the squared stationary radius.
struct Clock<'a> {
    series: &'a UgSeries,
}

impl Clock<'_> {
    /// Solves `target = B(t0) - B(t0 - T)` for `T >= 0`: the random
    /// period functional evaluated on the path shifted to time `t0`.
    fn solve_period(&self, t0: f64, target: f64, guess: f64) -> Result<f64> {
        let cap = t0 + self.series.a_range();
        let f = |t: f64| self.series.b_of(t0) - self.series.b_of(t0 - t) - target;
        let mut lo = 0.0f64;
        let mut hi = guess.max(1e-3);
        while f(hi) < 0.0 {
            lo = hi;
            hi *= 1.5;
            if hi > cap {
                return Err(Error::Coverage(
                    "path window too shallow to bracket the random period".into(),
                ));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-9 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Builds the random periodic solution on the cone of level `h` along one
/// noise path and verifies its defining identities.
///
/// The returned sample carries the solution over two random periods, the
/// random period at time zero, and the worst residuals of (i) periodicity
/// under the random period and (ii) the flow-solution property checked
/// against an independent run of the decomposition. `tol` bounds the
/// truncation tail accepted for the stationary radius.
pub fn crps(p: &ModelParams, path: &BrownianPath, h: f64, tol: f64) -> Result<CrpsSample> {
    let det = ModelParams::deterministic(p.alpha, p.d)?;
    let n_h = period_of_orbit(&det, h)?;
    let y0 = section_point(&det, h)?;
    if p.sigma > 0.0 {
        // Surfaces depth problems early, with the depth hint attached.
        u_g(p, path, tol.max(1e-12))?;
    }
    let series = UgSeries::new(p, path)?;
    let clock = Clock { series: &series };
    let u0 = series.at_origin();

    // Random period at 0; the long-run clock rate sets the bracket scale.
    let rate = if p.sigma == 0.0 { 1.0 } else { p.a_eff() / p.alpha };
    let period_t = clock.solve_period(0.0, n_h, n_h / rate)?;

    // Times for the reported samples and the periodicity check. All are
    // chosen on the path grid; the clock itself accepts any real time.
    let span = 2.0 * period_t;
    let id_span = (0.42 * series.a_range()).min(span);
    let mut jobs: Vec<f64> = Vec::new(); // clock values, one per slot
    let n_grid = 21usize;
    for k in 0..n_grid {
        let t = span * k as f64 / (n_grid - 1) as f64;
        jobs.push(series.a_of(t));
    }
    let n_id = 10usize;
    let mut id_pairs: Vec<(usize, usize)> = Vec::new(); // slots at t and t + T*
    for k in 0..n_id {
        let t = id_span * (k as f64 + 0.3) / n_id as f64;
        let t_star = clock.solve_period(-t, n_h, n_h / rate)?;
        let s0 = jobs.len();
        jobs.push(series.a_of(t));
        jobs.push(series.a_of(t + t_star));
        id_pairs.push((s0, s0 + 1));
    }
    // Flow-solution spot checks: advance by t from the solution at -t0.
    // The forward extent of the path bounds how far we can advance.
    let fwd = path.t_max();
    if fwd < 10.0 * path.dt() {
        return Err(Error::Coverage(
            "flow-solution check needs a forward window on the path".into(),
        ));
    }
    let snap = |t: f64| (t / path.dt()).round() * path.dt();
    let mut sol_slots: Vec<(usize, f64, f64)> = Vec::new(); // (slot, t, t0)
    for (ft, ft0) in [(0.3, 0.15), (0.6, 0.45), (0.9, 0.75)] {
        let t = snap(fwd * ft);
        let t0 = ft0 * period_t;
        let slot = jobs.len();
        jobs.push(series.b_of(t) + series.a_of(t0));
        sol_slots.push((slot, t, t0));
    }

    // One monotone pass of the noise-free flow over all clock values.
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| jobs[a].total_cmp(&jobs[b]));
    let flow_dt = f64::min(1e-3, n_h / 4096.0);
    let mut fm = FlowMap::with_step(&det, y0, flow_dt);
    let mut states = vec![[0.0f64; 3]; jobs.len()];
    for &slot in &order {
        states[slot] = fm.advance_to(jobs[slot].max(0.0))?;
    }

    let psi_at: Vec<(f64, State3)> = (0..n_grid)
        .map(|k| {
            let t = span * k as f64 / (n_grid - 1) as f64;
            (t, scale(states[k], u0))
        })
        .collect();

    let mut identity_residual_max = 0.0f64;
    for &(s_a, s_b) in &id_pairs {
        identity_residual_max = identity_residual_max.max(dist(states[s_a], states[s_b]) * u0);
    }

    let mut solution_residual_max = 0.0f64;
    for &(slot, t, t0) in &sol_slots {
        let mut anchor = FlowMap::with_step(&det, y0, flow_dt);
        let x_start = scale(anchor.advance_to(series.a_of(t0))?, u0);
        let lhs = decompose(p, path, x_start, u0, t)?;
        let node = series.zero_index() as i64 + (t / path.dt()).round() as i64;
        let u_t = series.u2_node(node as usize).sqrt();
        let rhs = scale(states[slot], u_t);
        solution_residual_max = solution_residual_max.max(dist(lhs, rhs));
    }

    if !(identity_residual_max.is_finite() && solution_residual_max.is_finite()) {
        return Err(Error::Diagnostic("periodic-solution residual overflowed".into()));
    }
    Ok(CrpsSample {
        h,
        y0,
        n_h,
        period_t,
        psi_at,
        identity_residual_max,
        solution_residual_max,
    })
}

/// Worst absolute drift of the cone level along trajectories started on
/// the level set `h`, from three starts at different radii.
///
/// With zero noise the trajectory is run by the fixed-step deterministic
/// scheme; otherwise by Milstein on a fresh path for the seed. The path
/// is sampled on a base grid no coarser than `1e-3` when `dt` is a whole
/// multiple of it, so runs at different `dt` share one realization.
pub fn cone_invariance_check(
    p: &ModelParams,
    seed: u64,
    h: f64,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParams("cone check needs positive dt and t_end".into()));
    }
    let det = ModelParams::deterministic(p.alpha, p.d)?;
    let y0 = section_point(&det, h)?;
    let mut worst = 0.0f64;
    for lambda in [0.5, 1.0, 2.0] {
        let x0 = scale(y0, lambda);
        let levels: Vec<f64> = if p.sigma == 0.0 {
            let ctrl = StepControl {
                dt,
                tol: f64::INFINITY,
                dt_min: dt,
                record_stride: Some(10),
            };
            let rec = integrate_flow(&det, x0, t_end, &ctrl)?;
            rec.diagnostics.iter().map(|d| d.h).collect()
        } else {
            let mut base_dt = dt.min(1e-3);
            let ratio = dt / base_dt;
            if (ratio - ratio.round()).abs() > 1e-9 {
                base_dt = dt;
            }
            let path = sample_path(seed, 0.0, t_end, base_dt)?;
            let spec = SchemeSpec { kind: SchemeKind::Milstein, dt };
            let rec = integrate_sde(p, &path, x0, t_end, &spec)?;
            rec.diagnostics.iter().map(|d| d.h).collect()
        };
        for l in levels {
            if !l.is_finite() {
                return Err(Error::Diagnostic(
                    "trajectory left the interior during the cone check".into(),
                ));
            }
            worst = worst.max((l - h).abs());
        }
    }
    Ok(worst)
}

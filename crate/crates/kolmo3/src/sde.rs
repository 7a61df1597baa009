//! Direct integration of the noisy system, the decomposition evaluator that
//! splits a solution into a scalar radial factor and a time-changed
//! deterministic flow, and the conformance gap between the two.

use crate::error::{Error, Result};
use crate::flow::{Diag, FlowMap, TrajectoryRecord};
use crate::logistic::LogisticSolution;
use crate::model::{self, norm, norm2, scale, ModelParams, State3};
use crate::path::{refine, sample_path, BrownianPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    EulerMaruyama,
    Milstein,
}

/// Scheme choice plus its step; the step must be an integer multiple of the
/// path grid so every increment is read from the realized path.
#[derive(Clone, Copy, Debug)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub dt: f64,
}

const BLOW_UP_GUARD: f64 = 1e6;

fn stride_of(path: &BrownianPath, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(format!("scheme dt must be positive, got {dt}")));
    }
    let ratio = dt / path.dt();
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-6 {
        return Err(Error::Grid(format!(
            "scheme dt {dt} is not an integer multiple of the path grid {}",
            path.dt()
        )));
    }
    Ok(k as usize)
}

/// One explicit scheme step. The drift is applied in the factored
/// `x_i * rate_i` form and the noise multiplies the state, so exact zeros
/// in any component are preserved bit-for-bit.
#[inline]
fn scheme_step(p: &ModelParams, kind: SchemeKind, x: State3, dt: f64, dw: f64) -> State3 {
    let r = model::rates(p, x);
    let mut out = x;
    let milstein = 0.5 * p.sigma2() * (dw * dw - dt);
    for i in 0..3 {
        let mut inc = r[i] * dt + p.sigma * dw;
        if kind == SchemeKind::Milstein {
            inc += milstein;
        }
        out[i] = x[i] + x[i] * inc;
    }
    out
}

/// March the noisy system along the realized path.
pub fn integrate_sde(
    p: &ModelParams,
    path: &BrownianPath,
    x0: State3,
    t_end: f64,
    scheme: &SchemeSpec,
) -> Result<TrajectoryRecord> {
    if !x0.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidParams("x0 must be finite".into()));
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParams(format!("t_end must be >= 0, got {t_end}")));
    }
    let stride = stride_of(path, scheme.dt)?;
    let end = path.index_of(t_end)?;
    let z = path.zero_index();
    if (end - z) % stride != 0 {
        return Err(Error::Grid(format!(
            "t_end {t_end} is not a whole number of scheme steps from 0"
        )));
    }
    let n_rows = (end - z) / stride + 1;
    let mut times = Vec::with_capacity(n_rows);
    let mut states = Vec::with_capacity(n_rows);
    let mut diagnostics = Vec::with_capacity(n_rows);
    let mut wiener = Vec::with_capacity(n_rows);
    let mut boundary_proximity = false;

    let mut x = x0;
    let record = |t: f64, x: State3, w: f64, times: &mut Vec<f64>, states: &mut Vec<State3>, diagnostics: &mut Vec<Diag>, wiener: &mut Vec<f64>| {
        let h = crate::flow::first_integral(p, x).unwrap_or(f64::NAN);
        times.push(t);
        states.push(x);
        diagnostics.push(Diag { h, l: norm2(x) - 1.0 });
        wiener.push(w);
    };
    record(0.0, x, path.w_at(0.0)?, &mut times, &mut states, &mut diagnostics, &mut wiener);

    let mut node = z;
    while node < end {
        let mut dw = 0.0;
        for j in 0..stride {
            dw += path.increment(node + j);
        }
        x = scheme_step(p, scheme.kind, x, scheme.dt, dw);
        node += stride;
        let t = (node - z) as f64 * path.dt();
        if !x.iter().all(|c| c.is_finite()) || norm(x) > BLOW_UP_GUARD {
            return Err(Error::BlowUp { t, guard: BLOW_UP_GUARD });
        }
        if x.iter().any(|&c| c > 0.0 && c < 1e-14) {
            boundary_proximity = true;
        }
        record(t, x, path.value(node), &mut times, &mut states, &mut diagnostics, &mut wiener);
    }

    Ok(TrajectoryRecord {
        times,
        states,
        diagnostics,
        wiener: Some(wiener),
        boundary_proximity,
    })
}

/// Evaluate the solution at time `t` through its exact factorization: the
/// scalar radial solution started at `g0` times the deterministic flow run
/// to the random internal time `int_0^t g^2`.
pub fn decompose(
    p: &ModelParams,
    path: &BrownianPath,
    x0: State3,
    g0: f64,
    t: f64,
) -> Result<State3> {
    if !(g0 > 0.0 && g0.is_finite()) {
        return Err(Error::InvalidParams(format!("g0 must be positive, got {g0}")));
    }
    let sol = LogisticSolution::new(p, path, g0, t)?;
    let k = path.index_of(t)? - path.zero_index();
    let mut fm = FlowMap::new(p, scale(x0, 1.0 / g0));
    let psi = fm.advance_to(sol.tau_node(k))?;
    Ok(scale(psi, sol.g_node(k)))
}

/// Same factorization evaluated at every path node up to `t_end`, as a
/// trajectory record sharing the layout of [`integrate_sde`].
pub fn decompose_record(
    p: &ModelParams,
    path: &BrownianPath,
    x0: State3,
    g0: f64,
    t_end: f64,
) -> Result<TrajectoryRecord> {
    if !(g0 > 0.0 && g0.is_finite()) {
        return Err(Error::InvalidParams(format!("g0 must be positive, got {g0}")));
    }
    let sol = LogisticSolution::new(p, path, g0, t_end)?;
    let z = path.zero_index();
    let mut fm = FlowMap::new(p, scale(x0, 1.0 / g0));
    let n = sol.len();
    let mut times = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    let mut wiener = Vec::with_capacity(n);
    for k in 0..n {
        let psi = fm.advance_to(sol.tau_node(k))?;
        let x = scale(psi, sol.g_node(k));
        let h = crate::flow::first_integral(p, x).unwrap_or(f64::NAN);
        times.push(k as f64 * path.dt());
        states.push(x);
        diagnostics.push(Diag { h, l: norm2(x) - 1.0 });
        wiener.push(path.value(z + k));
    }
    Ok(TrajectoryRecord {
        times,
        states,
        diagnostics,
        wiener: Some(wiener),
        boundary_proximity: false,
    })
}

/// Grid the conformance study runs on before refining.
const GAP_BASE_DT: f64 = 1e-2;

/// Distance at time `t` between the direct scheme and the factorized
/// evaluation on one shared path built from `seed`. The path is sampled on
/// a fixed base grid and bridge-refined down to `dt`, so every `dt` in a
/// halving study sees the same underlying noise.
pub fn decomposition_gap(
    p: &ModelParams,
    seed: u64,
    x0: State3,
    t: f64,
    dt: f64,
) -> Result<f64> {
    decomposition_gap_with(p, seed, x0, t, dt, SchemeKind::Milstein)
}

pub fn decomposition_gap_with(
    p: &ModelParams,
    seed: u64,
    x0: State3,
    t: f64,
    dt: f64,
    kind: SchemeKind,
) -> Result<f64> {
    let path = if dt >= GAP_BASE_DT - 1e-12 {
        sample_path(seed, 0.0, t, GAP_BASE_DT)?
    } else {
        let factor = (GAP_BASE_DT / dt).round();
        if !(factor >= 1.0 && (GAP_BASE_DT / dt - factor).abs() < 1e-9)
            || (factor as u32) & (factor as u32 - 1) != 0
        {
            return Err(Error::Grid(format!(
                "dt {dt} must reach the base grid {GAP_BASE_DT} by halving"
            )));
        }
        let coarse = sample_path(seed, 0.0, t, GAP_BASE_DT)?;
        refine(&coarse, factor as u32)?
    };
    let scheme = SchemeSpec { kind, dt };
    let direct = integrate_sde(p, &path, x0, t, &scheme)?;
    let exact = decompose(p, &path, x0, 1.0, t)?;
    Ok(model::dist(direct.last_state(), exact))
}

/// One RK4 step of the linearization `du = F(x(t)) u dt` with the base
/// state supplied at the two endpoints and the midpoint of the step.
#[inline]
pub(crate) fn linearized_rk4_step(
    p: &ModelParams,
    x_lo: State3,
    x_mid: State3,
    x_hi: State3,
    u: State3,
    h: f64,
) -> State3 {
    let mul = |x: State3, v: State3| -> State3 {
        let f = model::jacobian_raw(p, x);
        [
            f[0][0] * v[0] + f[0][1] * v[1] + f[0][2] * v[2],
            f[1][0] * v[0] + f[1][1] * v[1] + f[1][2] * v[2],
            f[2][0] * v[0] + f[2][1] * v[1] + f[2][2] * v[2],
        ]
    };
    let k1 = mul(x_lo, u);
    let k2 = mul(x_mid, add_scaled(u, k1, 0.5 * h));
    let k3 = mul(x_mid, add_scaled(u, k2, 0.5 * h));
    let k4 = mul(x_hi, add_scaled(u, k3, h));
    let mut out = u;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[inline]
fn add_scaled(x: State3, k: State3, c: f64) -> State3 {
    [x[0] + c * k[0], x[1] + c * k[1], x[2] + c * k[2]]
}

fn midpoint(a: State3, b: State3) -> State3 {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

/// Integrate the linearization along a recorded base trajectory, then map
/// the auxiliary variable back through the exponential noise factor:
/// `v(t) = u(t) exp(-sigma^2 t / 2 + sigma W(t))`.
pub fn integrate_linearized(
    p: &ModelParams,
    path: &BrownianPath,
    base: &TrajectoryRecord,
    v0: State3,
    t_end: f64,
) -> Result<State3> {
    if base.len() < 2 {
        return Err(Error::InvalidParams("base trajectory too short".into()));
    }
    let h = base.times[1] - base.times[0];
    let n_steps = (t_end / h).round() as usize;
    if ((t_end / h) - n_steps as f64).abs() > 1e-6 || n_steps + 1 > base.len() {
        return Err(Error::Grid(format!(
            "t_end {t_end} not covered by the base trajectory at spacing {h}"
        )));
    }
    // The base must ride the same noise: spot-check its recorded values.
    if let Some(w) = &base.wiener {
        let w0 = path.w_at(base.times[0])?;
        if (w[0] - w0).abs() > 1e-9 {
            return Err(Error::InvalidParams(
                "base trajectory was produced on a different path".into(),
            ));
        }
    }
    let mut u = v0;
    for k in 0..n_steps {
        let (a, b) = (base.states[k], base.states[k + 1]);
        u = linearized_rk4_step(p, a, midpoint(a, b), b, u, h);
        if !u.iter().all(|c| c.is_finite()) {
            return Err(Error::BlowUp { t: (k + 1) as f64 * h, guard: f64::INFINITY });
        }
    }
    let w_t = path.w_at(t_end)?;
    let factor = (-0.5 * p.sigma2() * t_end + p.sigma * w_t).exp();
    Ok(scale(u, factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate_flow, StepControl};
    use crate::logistic::{u_g, UgSeries};
    use crate::model::dist;
    use crate::rng::mix_seed;

    fn params(alpha: f64, sigma2: f64, d: [f64; 3]) -> ModelParams {
        ModelParams::new(alpha, sigma2.sqrt(), d).unwrap()
    }

    #[test]
    fn origin_and_axis_are_exactly_invariant() {
        let p = params(1.0, 1.0, [0.3, -0.2, 0.5]);
        let path = sample_path(11, 0.0, 5.0, 1e-3).unwrap();
        let scheme = SchemeSpec { kind: SchemeKind::Milstein, dt: 1e-3 };

        let rec = integrate_sde(&p, &path, [0.0; 3], 5.0, &scheme).unwrap();
        assert!(rec.states.iter().all(|s| *s == [0.0, 0.0, 0.0]));

        let rec = integrate_sde(&p, &path, [0.7, 0.0, 0.0], 5.0, &scheme).unwrap();
        for s in &rec.states {
            assert_eq!(s[1], 0.0);
            assert_eq!(s[2], 0.0);
            assert!(s[0] > 0.0);
        }
    }

    #[test]
    fn zero_noise_reduces_to_the_deterministic_flow() {
        let p = params(1.0, 0.0, [0.2, 0.1, -0.3]);
        let path = sample_path(3, 0.0, 2.0, 1e-3).unwrap();
        let x0 = [0.4, 0.5, 0.6];
        let rec_flow = integrate_flow(
            &p,
            x0,
            2.0,
            &StepControl { dt: 1e-4, tol: 1e-10, dt_min: 1e-7, record_stride: Some(1 << 20) },
        )
        .unwrap();
        for kind in [SchemeKind::EulerMaruyama, SchemeKind::Milstein] {
            let rec = integrate_sde(&p, &path, x0, 2.0, &SchemeSpec { kind, dt: 1e-3 }).unwrap();
            let err = dist(rec.last_state(), rec_flow.last_state());
            assert!(err < 5e-3, "{kind:?}: {err}");
        }
    }

    #[test]
    fn scheme_grid_must_align() {
        let p = params(1.0, 1.0, [0.0; 3]);
        let path = sample_path(1, 0.0, 1.0, 1e-2).unwrap();
        // Finer than the path grid is rejected.
        let r = integrate_sde(
            &p,
            &path,
            [1.0; 3],
            1.0,
            &SchemeSpec { kind: SchemeKind::EulerMaruyama, dt: 5e-3 },
        );
        assert!(matches!(r, Err(Error::Grid(_))));
        // Coarser by an integer factor works.
        let r = integrate_sde(
            &p,
            &path,
            [1.0; 3],
            1.0,
            &SchemeSpec { kind: SchemeKind::EulerMaruyama, dt: 5e-2 },
        );
        assert!(r.is_ok());
    }

    #[test]
    fn decompose_identity_and_deterministic_limit() {
        let p = params(1.0, 0.7, [0.1, 0.2, 0.3]);
        let path = sample_path(9, 0.0, 3.0, 1e-3).unwrap();
        let x0 = [0.5, 0.6, 0.7];
        let got = decompose(&p, &path, x0, 2.0, 0.0).unwrap();
        assert!(dist(got, x0) < 1e-14);

        let pd = params(1.0, 0.0, [0.1, 0.2, 0.3]);
        let psi = integrate_flow(
            &pd,
            x0,
            3.0,
            &StepControl { dt: 1e-4, tol: 1e-10, dt_min: 1e-7, record_stride: Some(1 << 20) },
        )
        .unwrap();
        let via = decompose(&pd, &path, x0, 1.0, 3.0).unwrap();
        assert!(dist(via, psi.last_state()) < 1e-6);
    }

    #[test]
    fn decompose_recovers_the_random_equilibrium() {
        let p = params(1.0, 1.0, [0.4, -0.1, 0.2]);
        let path = sample_path(21, -40.0, 5.0, 1e-3).unwrap();
        let u0 = u_g(&p, &path, 1e-6).unwrap().value;
        let series = UgSeries::new(&p, &path).unwrap();
        for &t in &[1.0, 2.5, 5.0] {
            let got = decompose(&p, &path, [u0, 0.0, 0.0], u0, t).unwrap();
            let want = series.u2_node(path.index_of(t).unwrap()).sqrt();
            assert!(dist(got, [want, 0.0, 0.0]) < 1e-10, "t {t}: {got:?} vs {want}");
        }
    }

    #[test]
    fn decompose_record_matches_pointwise_eval() {
        let p = params(1.0, 1.0, [0.0; 3]);
        let path = sample_path(14, 0.0, 2.0, 1e-2).unwrap();
        let x0 = [0.8, 0.9, 1.1];
        let rec = decompose_record(&p, &path, x0, 1.0, 2.0).unwrap();
        for &t in &[0.5, 1.0, 2.0] {
            let k = path.index_of(t).unwrap();
            let single = decompose(&p, &path, x0, 1.0, t).unwrap();
            assert!(dist(rec.states[k], single) < 1e-12);
        }
        // The factorized evaluation conserves the cone level exactly
        // (scale invariance of H), up to the flow map's own tolerance.
        assert!(rec.h_drift() < 1e-8, "{}", rec.h_drift());
    }

    #[test]
    fn gap_vanishes_at_the_origin_and_shrinks_with_dt() {
        let p = params(1.0, 0.5, [0.0; 3]);
        assert_eq!(decomposition_gap(&p, 5, [0.0; 3], 1.0, 1e-2).unwrap(), 0.0);

        // The Euler scheme misses the quadratic-variation term, which for
        // this linear noise converges at strong order exactly 1/2, so the
        // mean gap ratio under halving sits near sqrt(2).
        let x0 = [1.0, 1.0, 1.0];
        let n = 100;
        let mut mean_coarse = 0.0;
        let mut mean_fine = 0.0;
        for s in 0..n {
            let seed = mix_seed(777, s);
            mean_coarse +=
                decomposition_gap_with(&p, seed, x0, 1.0, 1e-2, SchemeKind::EulerMaruyama)
                    .unwrap();
            mean_fine +=
                decomposition_gap_with(&p, seed, x0, 1.0, 5e-3, SchemeKind::EulerMaruyama)
                    .unwrap();
        }
        let ratio = mean_coarse / mean_fine;
        assert!((1.3..=1.9).contains(&ratio), "ratio {ratio}");

        // Milstein is tighter than Euler on the same noise.
        let mut mean_m = 0.0;
        for s in 0..n {
            let seed = mix_seed(777, s);
            mean_m += decomposition_gap(&p, seed, x0, 1.0, 5e-3).unwrap();
        }
        assert!(mean_m < mean_fine, "milstein {mean_m} vs euler {mean_fine}");
    }

    #[test]
    fn linearized_at_the_origin_matches_closed_form() {
        let p = params(1.0, 0.8, [0.3, 0.1, -0.2]);
        let path = sample_path(31, 0.0, 2.0, 1e-3).unwrap();
        let scheme = SchemeSpec { kind: SchemeKind::Milstein, dt: 1e-3 };
        let base = integrate_sde(&p, &path, [0.0; 3], 2.0, &scheme).unwrap();
        let v0 = [0.3, -0.4, 0.5];
        let v = integrate_linearized(&p, &path, &base, v0, 2.0).unwrap();
        // At the origin F = alpha I, so v = v0 exp((alpha - sigma^2/2) t + sigma W).
        let w = path.w_at(2.0).unwrap();
        let factor = ((p.alpha - 0.5 * p.sigma2()) * 2.0 + p.sigma * w).exp();
        assert!(dist(v, scale(v0, factor)) < 1e-6 * factor, "{v:?}");
    }

    #[test]
    fn linearized_growth_rate_matches_leading_eigenvalue() {
        // Noise off, base at the first axis point: fastest direction grows
        // like the largest eigenvalue there.
        let p = params(1.0, 0.0, [0.5, -0.2, 0.3]);
        let path = sample_path(2, 0.0, 10.0, 1e-3).unwrap();
        let scheme = SchemeSpec { kind: SchemeKind::EulerMaruyama, dt: 1e-3 };
        let base = integrate_sde(&p, &path, [1.0, 0.0, 0.0], 10.0, &scheme).unwrap();
        let v5 = integrate_linearized(&p, &path, &base, [1e-4, 1e-4, 1e-4], 5.0).unwrap();
        let v10 = integrate_linearized(&p, &path, &base, [1e-4, 1e-4, 1e-4], 10.0).unwrap();
        let rate = (norm(v10) / norm(v5)).ln() / 5.0;
        assert!((rate - 1.5).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn linearization_is_the_derivative_of_the_scheme() {
        let p = params(1.0, 0.8, [0.2, -0.1, 0.3]);
        let path = sample_path(8, 0.0, 1.0, 1e-4).unwrap();
        let scheme = SchemeSpec { kind: SchemeKind::Milstein, dt: 1e-4 };
        let x0 = [0.6, 0.7, 0.5];
        let v = [0.4, -0.2, 0.3];
        let base = integrate_sde(&p, &path, x0, 1.0, &scheme).unwrap();
        let dv = integrate_linearized(&p, &path, &base, v, 1.0).unwrap();
        let err_at = |h: f64| -> f64 {
            let bumped =
                integrate_sde(&p, &path, add_scaled(x0, v, h), 1.0, &scheme).unwrap();
            let diff = [
                bumped.last_state()[0] - base.last_state()[0],
                bumped.last_state()[1] - base.last_state()[1],
                bumped.last_state()[2] - base.last_state()[2],
            ];
            dist(diff, scale(dv, h))
        };
        // h large enough that the quadratic remainder dominates the
        // linearized integrator's own floor.
        let e1 = err_at(4e-3);
        let e2 = err_at(2e-3);
        let order = (e1 / e2).log2();
        assert!((1.6..=2.4).contains(&order), "order {order} (e1 {e1}, e2 {e2})");
    }

    #[test]
    fn octant_exits_are_rare_at_moderate_steps() {
        let p = params(1.0, 1.0, [0.0; 3]);
        let scheme = SchemeSpec { kind: SchemeKind::EulerMaruyama, dt: 1e-2 };
        let mut exits = 0;
        let n = 200;
        for s in 0..n {
            let path = sample_path(mix_seed(404, s), 0.0, 10.0, 1e-2).unwrap();
            let rec = integrate_sde(&p, &path, [1.0, 1.0, 1.0], 10.0, &scheme).unwrap();
            if rec.states.iter().any(|x| x.iter().any(|&c| c < 0.0)) {
                exits += 1;
            }
        }
        assert!(exits * 100 < n, "{exits} exits out of {n}");
    }
}

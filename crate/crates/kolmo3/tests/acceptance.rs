//! Acceptance gate: twelve headline checks, one test each, at their stated
//! tolerances. Each test prints the measured numbers next to the bound it
//! must meet, so a failure log carries the evidence.

use kolmo3::flow::{
    equilibria, h_star, integrate_flow, section_point, Cx, EqLabel, StepControl,
};
use kolmo3::logistic::{density_cdf, time_average_g2, u_g};
use kolmo3::measure::{
    ks_distance, ks_distance_two, occupation_measure_from, occupation_measure_on_cone,
    p_bifurcation_probe, pullback_radius_samples, vanishing_noise_sweep, SweepTarget,
};
use kolmo3::model::{jacobian, norm, scale, ModelParams};
use kolmo3::path::sample_path;
use kolmo3::rds::{
    cone_invariance_check, crps, lyapunov_ensemble, lyapunov_numeric, pullback_point,
    LyapunovBase, LyapunovDirection,
};
use kolmo3::sde::decomposition_gap;

#[test]
fn criterion_01_exponent_at_origin_crosses_zero() {
    let t = 1e4;
    for (s2, want) in [(1.0, 0.5), (2.0, 0.0), (3.0, -0.5)] {
        let p = ModelParams::new(1.0, f64::sqrt(s2), [0.0, 0.0, 0.0]).unwrap();
        let mut mean = 0.0;
        for seed in 1..=20u64 {
            mean += lyapunov_numeric(
                &p,
                seed,
                LyapunovBase::Origin,
                LyapunovDirection::Coordinate(0),
                t,
                1.0,
            )
            .unwrap()
            .value;
        }
        mean /= 20.0;
        println!("criterion 01: sigma2 = {s2}: exponent {mean:.5} vs {want} (tol 0.05)");
        assert!((mean - want).abs() < 0.05, "sigma2 = {s2}: {mean} vs {want}");
    }
}

#[test]
fn criterion_02_exponents_over_the_first_axis_law() {
    let p = ModelParams::new(1.0, 1.0, [0.5, -0.2, 0.3]).unwrap();
    let want = [-1.0, 0.75, -0.4];
    let seeds: Vec<u64> = (0..8).map(|k| 40 + 3 * k).collect();
    for j in 0..3 {
        let est = lyapunov_ensemble(
            &p,
            LyapunovBase::Axis(1),
            LyapunovDirection::Coordinate(j),
            1500.0,
            1.0,
            &seeds,
        )
        .unwrap();
        println!(
            "criterion 02: direction {}: {:.4} vs {} (tol 0.1)",
            j + 1,
            est.value,
            want[j]
        );
        assert!(
            (est.value - want[j]).abs() < 0.1,
            "direction {}: {} vs {}",
            j + 1,
            est.value,
            want[j]
        );
    }
}

#[test]
fn criterion_03_time_average_and_ensemble_mean_of_squared_radius() {
    let p = ModelParams::new(1.0, 1.0, [0.0, 0.0, 0.0]).unwrap();

    let path = sample_path(8, 0.0, 1e4, 1e-2).unwrap();
    let avg = time_average_g2(&p, &path, 1.0, 1e4).unwrap();
    println!("criterion 03: single-path average {avg:.5} vs 0.5 (tol 0.02)");
    assert!((avg - 0.5).abs() < 0.02, "time average {avg}");

    let vals = pullback_radius_samples(&p, 900, 10_000, 1e-3).unwrap();
    let mean2 = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
    println!("criterion 03: ensemble mean square {mean2:.5} vs 0.5 (tol 0.01)");
    assert!((mean2 - 0.5).abs() < 0.01, "ensemble mean {mean2}");
}

#[test]
fn criterion_04_radius_histogram_matches_closed_form_law() {
    use kolmo3::measure::EmpiricalMeasure;
    use kolmo3::measure::stationary_radius_samples;
    for (k, s2) in [0.5f64, 1.0, 1.5].into_iter().enumerate() {
        let p = ModelParams::new(1.0, s2.sqrt(), [0.0, 0.0, 0.0]).unwrap();
        let vals =
            stationary_radius_samples(&p, 1000 + k as u64, 100_000, 50.0, 2e-2).unwrap();
        let emp = EmpiricalMeasure::from_scalars(&vals).unwrap();
        let ks = ks_distance(&emp, |s| density_cdf(&p, s).unwrap()).unwrap();
        println!("criterion 04: sigma2 = {s2}: distance {ks:.5} (bound 0.02)");
        assert!(ks < 0.02, "sigma2 = {s2}: {ks}");
    }
}

#[test]
fn criterion_05_scheme_converges_to_the_decomposition() {
    let p = ModelParams::new(1.0, 0.5f64.sqrt(), [0.0, 0.0, 0.0]).unwrap();
    let x0 = [1.0, 1.0, 1.0];
    let dts = [1e-2, 5e-3, 2.5e-3];
    let mut gaps = Vec::new();
    for &dt in &dts {
        let mut total = 0.0;
        for seed in 1..=16u64 {
            total += decomposition_gap(&p, seed, x0, 1.0, dt).unwrap();
        }
        gaps.push(total / 16.0);
    }
    println!("criterion 05: gaps {gaps:?}");
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps not decreasing: {gaps:?}");
    for w in gaps.windows(2) {
        let order = (w[0] / w[1]).log2();
        println!("criterion 05: observed order {order:.3} (bound 0.5)");
        assert!(order >= 0.5, "order {order}");
    }
    println!("criterion 05: gap at dt = 2.5e-3 is {:.3e} (bound 1e-2)", gaps[2]);
    assert!(gaps[2] < 1e-2, "final gap {}", gaps[2]);
}

#[test]
fn criterion_06_invariant_conservation_and_cone_deviation() {
    let det = ModelParams::deterministic(1.0, [1.0, 1.0, 1.0]).unwrap();
    let x0 = scale(section_point(&det, 4.0).unwrap(), 1.3);
    let rec = integrate_flow(&det, x0, 100.0, &StepControl::default()).unwrap();
    println!(
        "criterion 06: deterministic invariant drift {:.3e} over [0, 100] (bound 1e-6)",
        rec.h_drift()
    );
    assert!(rec.h_drift() < 1e-6, "drift {}", rec.h_drift());

    let p = ModelParams::new(1.0, 0.5f64.sqrt(), [1.0, 1.0, 1.0]).unwrap();
    let mut devs = Vec::new();
    for dt in [4e-3, 2e-3, 1e-3] {
        devs.push(cone_invariance_check(&p, 7, 4.0, 10.0, dt).unwrap());
    }
    println!("criterion 06: cone deviations {devs:?} for dt = 4e-3, 2e-3, 1e-3");
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "not decreasing: {devs:?}");
    println!("criterion 06: deviation at dt = 1e-3 is {:.3e} (bound 5e-2)", devs[2]);
    assert!(devs[2] < 5e-2, "deviation {}", devs[2]);
}

#[test]
fn criterion_07_pullback_collapses_or_selects_the_random_point() {
    let strong = ModelParams::new(1.0, 3.0f64.sqrt(), [0.0, 0.0, 0.0]).unwrap();
    let path = sample_path(13, -50.0, 0.0, 2.5e-3).unwrap();
    for x0 in [[1.0, 0.0, 0.0], [1.0, 1.0, 1.0]] {
        let v = pullback_point(&strong, &path, x0, 50.0).unwrap();
        println!(
            "criterion 07: |pullback| from {x0:?} at t = 50 is {:.3e} (bound 1e-4)",
            norm(v)
        );
        assert!(norm(v) < 1e-4, "norm {}", norm(v));
    }

    let weak = ModelParams::new(1.0, 1.0, [0.0, 0.0, 0.0]).unwrap();
    let v = pullback_point(&weak, &path, [1.0, 0.0, 0.0], 50.0).unwrap();
    let u = u_g(&weak, &path, 1e-8).unwrap().value;
    println!(
        "criterion 07: pullback limit {:.8} vs fixed point {:.8} (tol 1e-4)",
        v[0], u
    );
    assert!((v[0] - u).abs() < 1e-4, "{} vs {}", v[0], u);
    assert_eq!(v[1], 0.0);
    assert_eq!(v[2], 0.0);
}

fn sorted_eigs(mut v: Vec<Cx>) -> Vec<Cx> {
    v.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    v
}

fn assert_matches_numeric(p: &ModelParams, point: [f64; 3], closed: [Cx; 3]) {
    let j = jacobian(p, point).unwrap();
    let m = nalgebra::Matrix3::new(
        j[0][0], j[0][1], j[0][2], j[1][0], j[1][1], j[1][2], j[2][0], j[2][1], j[2][2],
    );
    let numeric: Vec<Cx> =
        m.complex_eigenvalues().iter().map(|c| Cx::new(c.re, c.im)).collect();
    let a = sorted_eigs(closed.to_vec());
    let b = sorted_eigs(numeric);
    for (x, y) in a.iter().zip(&b) {
        assert!(
            (x.re - y.re).abs() < 1e-8 && (x.im - y.im).abs() < 1e-8,
            "closed {:?} vs numeric {:?} at {point:?}",
            a,
            b
        );
    }
}

#[test]
fn criterion_08_census_counts_and_eigenvalue_closed_forms() {
    // One representative parameter set per regime; counts are
    // (isolated, curves, whole-sphere flag).
    let cases: [([f64; 3], usize, usize, bool, &str); 5] = [
        ([0.5, -0.2, 0.3], 5, 0, false, "all signs positive"),
        ([-2.0, 1.0, -3.0], 4, 0, false, "mixed signs, none zero"),
        ([-1.0, 0.5, 0.5], 2, 1, false, "one zero coefficient"),
        ([-1.0, -1.0, 1.0], 1, 2, false, "two zero coefficients"),
        ([-1.0, -1.0, -1.0], 1, 0, true, "all coefficients zero"),
    ];
    for (d, n_iso, n_curves, sphere, what) in cases {
        let p = ModelParams::deterministic(1.0, d).unwrap();
        let eqs = equilibria(&p);
        println!(
            "criterion 08: {what}: {} isolated, {} curves, sphere {}",
            eqs.isolated.len(),
            eqs.curves.len(),
            eqs.sphere
        );
        assert_eq!(eqs.isolated.len(), n_iso, "{what}");
        assert_eq!(eqs.curves.len(), n_curves, "{what}");
        assert_eq!(eqs.sphere, sphere, "{what}");
    }

    // Closed forms at the five isolated equilibria of the generic
    // all-positive case, against a general-purpose eigensolver.
    let p = ModelParams::deterministic(1.0, [0.5, -0.2, 0.3]).unwrap();
    let [m1, m2, m3] = p.ms();
    let eqs = equilibria(&p);
    let expect = |label: EqLabel| -> [Cx; 3] {
        let al = p.alpha;
        match label {
            EqLabel::O => [Cx::real(al); 3],
            EqLabel::E1 => [Cx::real(-2.0 * al), Cx::real(m1), Cx::real(-m2)],
            EqLabel::E2 => [Cx::real(-m1), Cx::real(-2.0 * al), Cx::real(m3)],
            EqLabel::E3 => [Cx::real(m2), Cx::real(-m3), Cx::real(-2.0 * al)],
            EqLabel::Qstar => {
                let lam = 2.0 * (m1 * m2 * m3 / p.m_sum()).sqrt();
                [Cx::new(0.0, lam), Cx::new(0.0, -lam), Cx::real(-2.0 * al)]
            }
        }
    };
    for eq in &eqs.isolated {
        let want = sorted_eigs(expect(eq.label).to_vec());
        let got = sorted_eigs(eq.eigenvalues.to_vec());
        for (x, y) in want.iter().zip(&got) {
            assert!(
                (x.re - y.re).abs() < 1e-12 && (x.im - y.im).abs() < 1e-12,
                "{:?}: table {want:?} vs reported {got:?}",
                eq.label
            );
        }
        assert_matches_numeric(&p, eq.point, eq.eigenvalues);
    }
    println!("criterion 08: eigenvalues match the closed forms to 1e-8 at all 5 points");
}

#[test]
fn criterion_09_random_periodic_solution_identities() {
    let p = ModelParams::new(1.0, 0.5f64.sqrt(), [1.0, 1.0, 1.0]).unwrap();
    let det = ModelParams::deterministic(1.0, [1.0, 1.0, 1.0]).unwrap();
    let h = h_star(&det).unwrap() + 1.0;
    let path = sample_path(5, -60.0, 10.0, 1e-3).unwrap();
    let s = crps(&p, &path, h, 1e-3).unwrap();
    println!(
        "criterion 09: periodicity defect {:.3e}, solution defect {:.3e} (bound 1e-3)",
        s.identity_residual_max, s.solution_residual_max
    );
    assert!(s.identity_residual_max < 1e-3);
    assert!(s.solution_residual_max < 1e-3);

    let zero = sample_path(2, -30.0, 5.0, 2.5e-4).unwrap();
    let s0 = crps(&det, &zero, h, 1e-9).unwrap();
    println!(
        "criterion 09: noise-free random period {:.9} vs cycle period {:.9} (tol 1e-6)",
        s0.period_t, s0.n_h
    );
    assert!((s0.period_t - s0.n_h).abs() < 1e-6, "{} vs {}", s0.period_t, s0.n_h);
}

#[test]
fn criterion_10_density_shape_switches_at_the_noise_threshold() {
    let rows = p_bifurcation_probe(1.0, &[0.5, 1.0, 1.5], 7).unwrap();

    let r = &rows[0];
    let mode = r.analytic_mode.expect("interior mode below the threshold");
    let center = (r.empirical_mode_bin as f64 + 0.5) * r.bin_width;
    println!(
        "criterion 10: sigma2 = 0.5: mode {mode:.4}, histogram peak at {center:.4} (tol 1 bin)"
    );
    assert!((mode - (1.0f64 - 0.5).sqrt()).abs() < 1e-12);
    assert!(r.unimodal_empirical, "histogram should show an interior peak");
    assert!(
        (center - mode).abs() <= r.bin_width + 1e-12,
        "peak {center} vs mode {mode}"
    );

    for r in &rows[1..] {
        println!(
            "criterion 10: sigma2 = {}: monotone analytic {}, monotone empirical {}",
            r.sigma2,
            r.analytic_mode.is_none(),
            !r.unimodal_empirical
        );
        assert!(r.analytic_mode.is_none(), "sigma2 = {}", r.sigma2);
        assert!(!r.unimodal_empirical, "sigma2 = {}", r.sigma2);
    }
}

#[test]
fn criterion_11_vanishing_noise_concentrates_on_the_limit_sets() {
    let list = [1.0, 0.5, 0.1, 0.01, 1e-4];
    let rows = vanishing_noise_sweep(
        1.0,
        [0.0, 0.0, 0.0],
        &list,
        SweepTarget::Equilibrium([1.0, 0.0, 0.0]),
        8,
    )
    .unwrap();
    let conc: Vec<f64> = rows.iter().map(|r| r.concentration).collect();
    println!("criterion 11: axis-point concentrations {conc:?}");
    for w in conc.windows(2) {
        assert!(w[1] < w[0], "not decreasing: {conc:?}");
    }
    println!(
        "criterion 11: concentration at sigma2 = 1e-4 is {:.5} (bound 0.01)",
        conc[4]
    );
    assert!(conc[4] < 0.01, "{}", conc[4]);

    let cyc = vanishing_noise_sweep(
        1.0,
        [0.0, 0.0, 0.0],
        &[0.5, 0.1, 0.01],
        SweepTarget::Cycle(4.0),
        8,
    )
    .unwrap();
    let conc: Vec<f64> = cyc.iter().map(|r| r.concentration).collect();
    println!("criterion 11: cycle concentrations {conc:?}");
    for w in conc.windows(2) {
        assert!(w[1] < w[0], "cycle stat not decreasing: {conc:?}");
    }
}

#[test]
fn criterion_12_two_starts_share_the_radial_occupation_law() {
    let p = ModelParams::new(1.0, 0.5f64.sqrt(), [1.0, 1.0, 1.0]).unwrap();
    let det = ModelParams::deterministic(1.0, [1.0, 1.0, 1.0]).unwrap();
    let h = 4.0;
    let a = occupation_measure_on_cone(&p, 77, h, 1e4, 20.0).unwrap();
    let start = scale(kolmo3::flow::orbit_polyline(&det, h, 64).unwrap()[20], 1.7);
    let b = occupation_measure_from(&p, 78, h, start, 1e4, 20.0).unwrap();
    let ks = ks_distance_two(&a, &b).unwrap();
    println!("criterion 12: radial-marginal distance {ks:.4} (bound 0.05)");
    assert!(ks < 0.05, "distance {ks}");
}

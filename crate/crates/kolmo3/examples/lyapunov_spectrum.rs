//! Growth rates of the linearized flow: closed forms against simulation,
//! at the origin and over the stationary law on the first axis. The origin
//! exponent decreases linearly in the squared noise and crosses zero where
//! it reaches twice the linear rate.

use kolmo3::model::ModelParams;
use kolmo3::rds::{
    lyapunov_analytic, lyapunov_ensemble, LyapunovBase, LyapunovDirection, MeasureId,
};

fn main() {
    let seeds: Vec<u64> = (1..=6).collect();

    println!("exponent at the origin across noise levels (alpha = 1):");
    for s2 in [0.5f64, 1.0, 2.0, 3.0] {
        let p = ModelParams::new(1.0, s2.sqrt(), [0.0, 0.0, 0.0]).unwrap();
        let a = lyapunov_analytic(&p, MeasureId::DeltaO).unwrap();
        let e = lyapunov_ensemble(
            &p,
            LyapunovBase::Origin,
            LyapunovDirection::Coordinate(0),
            2000.0,
            1.0,
            &seeds,
        )
        .unwrap();
        println!(
            "  sigma2 = {s2}: closed form {:6.2}, simulated {:7.4} +- {:.4}",
            a[0], e.value, e.standard_error
        );
    }

    println!("\nspectrum over the first-axis law (sigma2 = 1, d = (0.5, -0.2, 0.3)):");
    let p = ModelParams::new(1.0, 1.0, [0.5, -0.2, 0.3]).unwrap();
    let a = lyapunov_analytic(&p, MeasureId::E1).unwrap();
    for j in 0..3 {
        let e = lyapunov_ensemble(
            &p,
            LyapunovBase::Axis(1),
            LyapunovDirection::Coordinate(j),
            1000.0,
            1.0,
            &seeds,
        )
        .unwrap();
        println!(
            "  direction {}: closed form {:6.2}, simulated {:7.4} +- {:.4}",
            j + 1,
            a[j],
            e.value,
            e.standard_error
        );
    }
}

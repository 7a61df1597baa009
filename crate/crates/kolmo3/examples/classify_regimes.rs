//! Walks one representative parameter set per regime and prints the
//! equilibrium census: the sign pattern of the three derived coefficients
//! decides how many isolated equilibria, circles, or spheres appear.

use kolmo3::flow::{equilibria, h_star};
use kolmo3::model::{classify_regime, ModelParams};

fn main() {
    let reps: [([f64; 3], &str); 6] = [
        ([0.5, -0.2, 0.3], "all three coefficients positive"),
        ([-2.0, 1.0, -3.0], "mixed signs, none zero"),
        ([-1.0, 0.5, 0.5], "one zero, the rest share a sign"),
        ([1.0, -1.0, -3.0], "one zero, the rest of opposite sign"),
        ([-1.0, -1.0, 1.0], "two zeros"),
        ([-1.0, -1.0, -1.0], "all three zero"),
    ];

    for (d, what) in reps {
        let p = ModelParams::deterministic(1.0, d).unwrap();
        let regime = classify_regime(&p);
        let eqs = equilibria(&p);
        println!("d = {d:?} ({what})");
        println!(
            "  case {:?}, coefficients m = {:?}",
            regime.canonical_case,
            p.ms()
        );
        for eq in &eqs.isolated {
            let ev: Vec<String> = eq
                .eigenvalues
                .iter()
                .map(|c| {
                    if c.im == 0.0 {
                        format!("{:.4}", c.re)
                    } else {
                        format!("{:.4}{:+.4}i", c.re, c.im)
                    }
                })
                .collect();
            println!("  {:?} at {:?}: eigenvalues [{}]", eq.label, eq.point, ev.join(", "));
        }
        for c in &eqs.curves {
            println!(
                "  equilibrium circle in {:?}, transversally stable arc {:?}",
                c.plane, c.stable_arc
            );
        }
        if eqs.sphere {
            println!("  the whole unit sphere consists of equilibria");
        }
        if let Ok(h) = h_star(&p) {
            println!("  critical cone level {h:.6}: interior levels above it carry cycles");
        }
        println!();
    }
}

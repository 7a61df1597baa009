//! Integrates the noise-free system from a few starts and shows what the
//! conserved quantity predicts: every interior orbit stays on its cone and
//! closes into a periodic cycle once the level sits above the critical one.

use kolmo3::flow::{
    cone_level, h_star, integrate_flow, omega_limit, period_of_orbit, section_point,
    OmegaLimitKind, StepControl,
};
use kolmo3::model::{norm, scale, ModelParams};

fn main() {
    let p = ModelParams::deterministic(1.0, [1.0, 1.0, 1.0]).unwrap();
    let hs = h_star(&p).unwrap();
    println!("critical cone level h* = {hs:.6}\n");

    for h in [hs + 0.5, hs + 1.0, hs + 4.0] {
        let y0 = section_point(&p, h).unwrap();
        let x0 = scale(y0, 1.4); // off the sphere, same cone
        let lvl = cone_level(&p, x0).unwrap();
        let rec = integrate_flow(&p, x0, 60.0, &StepControl::default()).unwrap();
        let period = period_of_orbit(&p, h).unwrap();
        println!(
            "h = {h:.3}: start |x| = {:.3}, end |x| = {:.6}, level drift {:.2e}, period {period:.5}",
            norm(x0),
            norm(rec.last_state()),
            (cone_level(&p, rec.last_state()).unwrap().value - lvl.value).abs()
        );
    }

    println!();
    // Starts at or below the critical level are funneled to the diagonal ray.
    for x0 in [[0.4, 0.4, 0.4], [0.9, 0.2, 0.1], [0.2, 0.2, 0.9]] {
        let class = omega_limit(&p, x0).unwrap();
        let kind = match class.kind {
            OmegaLimitKind::Origin => "the origin".to_string(),
            OmegaLimitKind::Equilibrium(q) => format!("equilibrium {q:?}"),
            OmegaLimitKind::PeriodicOrbit { h } => format!("a cycle on level {h:.4}"),
        };
        println!("from {x0:?}: converges to {kind} ({})", class.basin_witness);
    }
}

//! Parameters, states, the cubic vector field and its regime classifier.
//!
//! The drift of the three-component system is, componentwise,
//!
//! ```text
//! b1 = x1 (alpha - alpha x1^2 - (2 alpha + d1) x2^2 + d2 x3^2)
//! b2 = x2 (alpha + d1 x1^2 - alpha x2^2 - (2 alpha + d3) x3^2)
//! b3 = x3 (alpha - (2 alpha + d2) x1^2 + d3 x2^2 - alpha x3^2)
//! ```
//!
//! Two structural facts drive the whole crate. First, the radial direction
//! obeys `d/dt |x|^2 = 2 alpha |x|^2 (1 - |x|^2)` for every `d`, so the unit
//! sphere attracts. Second, every qualitative statement about the dynamics
//! depends on the coefficients only through the signs of `m_i = alpha + d_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute window around zero for sign classification of `m_i`.
///
/// The degenerate regimes live on measure-zero parameter sets that a caller
/// selects deliberately (for instance `d1 = -alpha` exactly), so the window
/// only has to absorb rounding in `alpha + d_i`.
pub const TAU_ZERO: f64 = 1e-12;

/// State of the three components. A plain array; the crate treats states as
/// values and never hides them behind accessors.
pub type State3 = [f64; 3];

pub fn dot(a: State3, b: State3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm2(x: State3) -> f64 {
    dot(x, x)
}

pub fn norm(x: State3) -> f64 {
    norm2(x).sqrt()
}

pub fn dist(a: State3, b: State3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm(d)
}

pub fn scale(x: State3, s: f64) -> State3 {
    [x[0] * s, x[1] * s, x[2] * s]
}

/// Model coefficients: growth rate, noise strength and the interaction
/// offsets `d = (d1, d2, d3)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub sigma: f64,
    pub d: [f64; 3],
}

impl ModelParams {
    /// Validated constructor. Requires `alpha > 0`, `sigma >= 0`, all finite.
    pub fn new(alpha: f64, sigma: f64, d: [f64; 3]) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "alpha must be finite and positive, got {alpha}"
            )));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "sigma must be finite and nonnegative, got {sigma}"
            )));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("d must be finite, got {d:?}")));
        }
        Ok(Self { alpha, sigma, d })
    }

    /// Noise-free system with the same interaction structure.
    pub fn deterministic(alpha: f64, d: [f64; 3]) -> Result<Self> {
        Self::new(alpha, 0.0, d)
    }

    /// Derived coefficients `m_i = alpha + d_i`, recomputed on demand.
    pub fn ms(&self) -> [f64; 3] {
        [self.alpha + self.d[0], self.alpha + self.d[1], self.alpha + self.d[2]]
    }

    /// `m1 + m2 + m3 = 3 alpha + d1 + d2 + d3`.
    pub fn m_sum(&self) -> f64 {
        let m = self.ms();
        m[0] + m[1] + m[2]
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Effective radial growth rate `alpha - sigma^2 / 2`.
    pub fn a_eff(&self) -> f64 {
        self.alpha - 0.5 * self.sigma2()
    }

    /// True when the radial noise is too strong for any nonzero stationary
    /// behavior, i.e. `sigma^2 >= 2 alpha`.
    pub fn noise_dominates(&self) -> bool {
        self.sigma2() >= 2.0 * self.alpha
    }
}

fn check_finite(x: State3) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("non-finite state {x:?}")));
    }
    Ok(())
}

/// Per-capita growth rates: `drift(x)_i = x_i * rates(x)_i`.
///
/// Exposed separately because the factored form is what makes the coordinate
/// planes exactly invariant under every integrator in the crate: a zero
/// component contributes an exact zero, never a rounded one.
pub fn rates(p: &ModelParams, x: State3) -> [f64; 3] {
    let a = p.alpha;
    let [d1, d2, d3] = p.d;
    let s1 = x[0] * x[0];
    let s2 = x[1] * x[1];
    let s3 = x[2] * x[2];
    [
        a - a * s1 - (2.0 * a + d1) * s2 + d2 * s3,
        a + d1 * s1 - a * s2 - (2.0 * a + d3) * s3,
        a - (2.0 * a + d2) * s1 + d3 * s2 - a * s3,
    ]
}

pub(crate) fn drift_raw(p: &ModelParams, x: State3) -> State3 {
    let r = rates(p, x);
    [x[0] * r[0], x[1] * r[1], x[2] * r[2]]
}

/// Right-hand side of the noise-free system.
pub fn drift(p: &ModelParams, x: State3) -> Result<State3> {
    check_finite(x)?;
    Ok(drift_raw(p, x))
}

pub(crate) fn jacobian_raw(p: &ModelParams, x: State3) -> [[f64; 3]; 3] {
    let a = p.alpha;
    let [d1, d2, d3] = p.d;
    let [x1, x2, x3] = x;
    let (s1, s2, s3) = (x1 * x1, x2 * x2, x3 * x3);
    [
        [
            a - 3.0 * a * s1 - (2.0 * a + d1) * s2 + d2 * s3,
            -2.0 * (2.0 * a + d1) * x1 * x2,
            2.0 * d2 * x3 * x1,
        ],
        [
            2.0 * d1 * x1 * x2,
            a + d1 * s1 - 3.0 * a * s2 - (2.0 * a + d3) * s3,
            -2.0 * (2.0 * a + d3) * x2 * x3,
        ],
        [
            -2.0 * (2.0 * a + d2) * x1 * x3,
            2.0 * d3 * x2 * x3,
            a - (2.0 * a + d2) * s1 + d3 * s2 - 3.0 * a * s3,
        ],
    ]
}

/// Jacobian of [`drift`] at `x`.
pub fn jacobian(p: &ModelParams, x: State3) -> Result<[[f64; 3]; 3]> {
    check_finite(x)?;
    Ok(jacobian_raw(p, x))
}

/// `L(x) = |x|^2 - 1`, the squared distance from the invariant sphere.
///
/// Along the flow `dL/dt = -2 alpha |x|^2 L`, which both proves dissipation
/// and serves as an integrator diagnostic.
pub fn sphere_residual(x: State3) -> f64 {
    norm2(x) - 1.0
}

/// Sign of one derived coefficient, with the [`TAU_ZERO`] window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v.abs() <= TAU_ZERO {
            Sign::Zero
        } else if v > 0.0 {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    fn flip(self) -> Sign {
        match self {
            Sign::Neg => Sign::Pos,
            Sign::Zero => Sign::Zero,
            Sign::Pos => Sign::Neg,
        }
    }
}

/// Canonical sign-pattern cases for `(m1, m2, m3)` after permutation and,
/// when needed, time reversal:
///
/// * `I`   = `(+,+,+)`  all equal sign, isolated interior equilibrium, cones
///   of periodic orbits;
/// * `II`  = `(-,+,-)`  mixed signs, no zero, a single attracting vertex;
/// * `IIIa`= `(0,+,+)`  one zero, remaining signs equal, an attracting arc;
/// * `IIIb`= `(+,0,-)`  one zero, remaining signs opposite;
/// * `IV`  = `(0,0,-)`  two zeros;
/// * `V`   = `(0,0,0)`  every ray consists of equilibria after radial flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanonicalCase {
    I,
    II,
    IIIa,
    IIIb,
    IV,
    V,
}

impl CanonicalCase {
    /// The representative pattern, before permutation and time flip.
    pub fn pattern(self) -> [Sign; 3] {
        use Sign::*;
        match self {
            CanonicalCase::I => [Pos, Pos, Pos],
            CanonicalCase::II => [Neg, Pos, Neg],
            CanonicalCase::IIIa => [Zero, Pos, Pos],
            CanonicalCase::IIIb => [Pos, Zero, Neg],
            CanonicalCase::IV => [Zero, Zero, Neg],
            CanonicalCase::V => [Zero, Zero, Zero],
        }
    }
}

/// Result of classifying the signs of `(m1, m2, m3)`.
///
/// The witness satisfies, for every slot `k`,
/// `canonical_case.pattern()[k] == maybe_flip(sign_pattern[permutation[k]])`
/// where `maybe_flip` negates signs iff `time_flip` is set. Downstream code
/// works on the raw coefficients; the witness is how a caller maps results
/// onto the canonical statement of each case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftRegime {
    pub sign_pattern: [Sign; 3],
    pub canonical_case: CanonicalCase,
    /// `permutation[k]` is the raw index (0-based) feeding canonical slot `k`.
    pub permutation: [usize; 3],
    pub time_flip: bool,
}

/// Classify the parameter regime. Total: every parameter set maps to exactly
/// one canonical case.
pub fn classify_regime(p: &ModelParams) -> DriftRegime {
    let m = p.ms();
    let sign_pattern = [Sign::of(m[0]), Sign::of(m[1]), Sign::of(m[2])];

    let zeros: Vec<usize> = (0..3).filter(|&i| sign_pattern[i] == Sign::Zero).collect();
    let pos: Vec<usize> = (0..3).filter(|&i| sign_pattern[i] == Sign::Pos).collect();
    let neg: Vec<usize> = (0..3).filter(|&i| sign_pattern[i] == Sign::Neg).collect();

    let (canonical_case, permutation, time_flip) = match (zeros.len(), pos.len(), neg.len()) {
        (3, _, _) => (CanonicalCase::V, [0, 1, 2], false),
        (2, 1, 0) => (CanonicalCase::IV, [zeros[0], zeros[1], pos[0]], true),
        (2, 0, 1) => (CanonicalCase::IV, [zeros[0], zeros[1], neg[0]], false),
        (1, 2, 0) => (CanonicalCase::IIIa, [zeros[0], pos[0], pos[1]], false),
        (1, 0, 2) => (CanonicalCase::IIIa, [zeros[0], neg[0], neg[1]], true),
        (1, 1, 1) => (CanonicalCase::IIIb, [pos[0], zeros[0], neg[0]], false),
        (0, 3, 0) => (CanonicalCase::I, [0, 1, 2], false),
        (0, 0, 3) => (CanonicalCase::I, [0, 1, 2], true),
        (0, 1, 2) => (CanonicalCase::II, [neg[0], pos[0], neg[1]], false),
        (0, 2, 1) => (CanonicalCase::II, [pos[0], neg[0], pos[1]], true),
        _ => unreachable!("sign counts always sum to 3"),
    };

    DriftRegime { sign_pattern, canonical_case, permutation, time_flip }
}

impl DriftRegime {
    /// Check the witness against its own contract.
    pub fn witness_consistent(&self) -> bool {
        let target = self.canonical_case.pattern();
        (0..3).all(|k| {
            let raw = self.sign_pattern[self.permutation[k]];
            let mapped = if self.time_flip { raw.flip() } else { raw };
            mapped == target[k]
        }) && {
            let mut seen = [false; 3];
            self.permutation.iter().for_each(|&i| seen[i] = true);
            seen.iter().all(|&b| b)
        }
    }
}

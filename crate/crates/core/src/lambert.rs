//! Lower branch `W_{-1}` of the Lambert W function and the oversampling bound
//! for randomized adaptive sampling that is expressed through it.

use crate::error::{Error, Result};

/// Branch point `-1/e`.
pub const BRANCH_POINT: f64 = -1.0 / std::f64::consts::E;

const TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;

/// `W_{-1}(y)` for `y ∈ [-1/e, 0)`: the solution `w ≤ -1` of `w e^w = y`.
///
/// Safeguarded Newton on `g(w) = w + ln(-w) - ln(-y)`, kept inside a bracket
/// obtained from `-1 - √(2u) - u < W_{-1}(-e^{-u-1}) < -1 - √(2u) - 2u/3`.
pub fn lambert_w_m1(y: f64) -> Result<f64> {
    if !(y.is_finite() && y < 0.0 && y >= BRANCH_POINT) {
        return Err(Error::Domain(format!("W_-1 is defined on [-1/e, 0), got {y}")));
    }
    let target = (-y).ln();
    let u = -target - 1.0;
    if u <= 0.0 {
        return Ok(-1.0);
    }
    let root = (2.0 * u).sqrt();
    let mut lo = -1.0 - root - u - 1e-9 * (1.0 + u);
    let mut hi = -1.0 - root - 2.0 * u / 3.0;
    let g = |w: f64| w + (-w).ln() - target;
    // g is increasing on (-inf, -1): g(lo) <= 0 <= g(hi).
    let mut w = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let gw = g(w);
        if gw == 0.0 {
            return Ok(w);
        }
        if gw < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let slope = 1.0 + 1.0 / w;
        let newton = w - gw / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - w).abs() <= TOL * w.abs() || (hi - lo) <= TOL * w.abs() {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

/// `(1 + √37) / 3`, the floor on the oversampling factor.
pub fn oversampling_floor() -> f64 {
    (1.0 + 37f64.sqrt()) / 3.0
}

/// Argument `-3(1+ε)δ / (700 d_eff)` of the Lambert term.
pub fn lambert_argument(epsilon: f64, delta: f64, d_eff: f64) -> f64 {
    -3.0 * (1.0 + epsilon) * delta / (700.0 * d_eff)
}

/// Smallest oversampling factor `c` for which randomized adaptive sampling
/// succeeds with probability at least `1 - δ`:
/// `max{-(28/3) W_{-1}(-3(1+ε)δ/(700 d_eff)), (1+√37)/3}`, with `d_eff` taken
/// at regularization `εnγ/(1+ε)`.
///
/// When the argument lies below `-1/e` the failure-probability constraint
/// `e^x ≥ a x` holds for every `x` (because `a < e`) and only the floor remains.
pub fn oversampling_lower_bound(epsilon: f64, delta: f64, d_eff: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(d_eff > 0.0 && d_eff.is_finite()) {
        return Err(Error::Domain(format!("d_eff must be positive, got {d_eff}")));
    }
    let y = lambert_argument(epsilon, delta, d_eff);
    let floor = oversampling_floor();
    if y < BRANCH_POINT {
        return Ok(floor);
    }
    let lambert_term = -(28.0 / 3.0) * lambert_w_m1(y)?;
    Ok(lambert_term.max(floor))
}

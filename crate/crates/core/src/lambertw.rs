//! Principal branch of the Lambert W function.
//!
//! `W₀(z)` solves `w·eʷ = z` with `w ≥ -1`, defined for `z ≥ -1/e`. The RT
//! power policy evaluates it once per slot, so it has to be accurate over a
//! wide dynamic range: arguments grow with the ratio of the NRT drift weight
//! to the power debt.
//!
//! Evaluation strategy:
//! - within `5e-5` (in `e·z + 1`) of the branch point: branch-point series,
//!   accurate to machine precision without iteration;
//! - `z > 700`: Newton on `w + ln w = ln z`, which never forms `eʷ`;
//! - everywhere else: Halley's method from a piecewise initial guess.

use std::f64::consts::E;

use thiserror::Error;

/// Arguments this far below `-1/e` are still accepted and mapped to `-1`.
pub const DOMAIN_EPS: f64 = 1e-12;

const MAX_ITERATIONS: usize = 50;

/// `1/e` split into a head and a tail so that `z + 1/e` keeps its low bits
/// near the branch point.
const INV_E_HI: f64 = 0.367_879_441_171_442_33;
const INV_E_LO: f64 = -1.242_875_367_278_836_3e-17;

/// Above this, switch to the log-space fixed point.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// Below this value of `e·z + 1`, the branch-point series is exact to f64.
const SERIES_THRESHOLD: f64 = 5e-5;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LambertError {
    #[error("argument {0} is below the branch point -1/e")]
    Domain(f64),
    #[error("argument {0} is not a finite number")]
    NotFinite(f64),
    #[error("no convergence for argument {z} after {iterations} iterations")]
    NoConvergence { z: f64, iterations: usize },
}

/// Argument to `W₀`, validated against the branch point.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LambertArg(f64);

impl LambertArg {
    pub fn new(z: f64) -> Result<Self, LambertError> {
        if z.is_nan() || z == f64::INFINITY {
            return Err(LambertError::NotFinite(z));
        }
        if z < -INV_E_HI - DOMAIN_EPS {
            return Err(LambertError::Domain(z));
        }
        Ok(Self(z))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `e·z + 1`, i.e. `e·(z + 1/e)` computed with the split constant.
    fn branch_distance(self) -> f64 {
        E * ((self.0 + INV_E_HI) + INV_E_LO)
    }
}

/// Principal branch `W₀(z)`.
///
/// Returns `w ≥ -1` with `|w·eʷ - z| ≤ 1e-12·max(1, |z|)`.
pub fn lambert_w0(z: f64) -> Result<f64, LambertError> {
    let arg = LambertArg::new(z)?;
    Ok(eval(arg)?.max(-1.0))
}

fn eval(arg: LambertArg) -> Result<f64, LambertError> {
    let z = arg.get();
    if z == 0.0 {
        return Ok(0.0);
    }
    let d = arg.branch_distance();
    if d <= 0.0 {
        return Ok(-1.0);
    }
    if d < SERIES_THRESHOLD {
        return Ok(branch_series((2.0 * d).sqrt()));
    }
    if z > LOG_SPACE_THRESHOLD {
        return log_space(z);
    }
    halley(z, initial_guess(z, d))
}

/// Series of `W₀` around `z = -1/e` in `p = sqrt(2(e·z + 1))`.
fn branch_series(p: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17280.0,
        -221.0 / 8505.0,
        680_863.0 / 43_545_600.0,
        -1963.0 / 204_120.0,
    ];
    COEFFS.iter().rev().fold(0.0, |acc, c| acc * p + c)
}

fn initial_guess(z: f64, d: f64) -> f64 {
    if z < -0.25 {
        let p = (2.0 * d).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z <= 3.0 {
        // Winitzki's global approximation.
        let l = z.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

fn halley(z: f64, mut w: f64) -> Result<f64, LambertError> {
    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let f = w * ew - z;
        // Near the branch point the derivative vanishes and the step stalls
        // on rounding noise; the residual is already at machine precision.
        if f.abs() <= 2.0 * f64::EPSILON * z.abs() {
            return Ok(w);
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if !w.is_finite() {
            break;
        }
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(f64::MIN_POSITIVE) {
            return Ok(w);
        }
    }
    Err(LambertError::NoConvergence {
        z,
        iterations: MAX_ITERATIONS,
    })
}

/// Newton iteration on `g(w) = w + ln w - ln z` for large `z`.
fn log_space(z: f64) -> Result<f64, LambertError> {
    let lz = z.ln();
    let mut w = {
        let l2 = lz.ln();
        lz - l2 + l2 / lz
    };
    for _ in 0..MAX_ITERATIONS {
        let g = w + w.ln() - lz;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            return Ok(w);
        }
    }
    Err(LambertError::NoConvergence {
        z,
        iterations: MAX_ITERATIONS,
    })
}

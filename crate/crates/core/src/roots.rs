//! Closed-form root kernels for the feedback laws.

use crate::error::{Error, Result};

/// Discriminant `4p^3 + 27q^2` of the depressed cubic `v^3 + p v + q`.
///
/// Positive means one real root, zero a repeated root, negative three
/// distinct real roots.
pub fn discriminant_of(p: f64, q: f64) -> f64 {
    4.0 * p * p * p + 27.0 * q * q
}

fn discriminant_tol(p: f64, q: f64) -> f64 {
    1e-12 * (p * p).max(q * q).max(1.0)
}

/// Unique real root of `v^3 + p v + q = 0`.
///
/// Uses Cardano's formula with the larger-magnitude cube root computed
/// directly and the smaller one recovered from the product `-p/3`, which
/// avoids cancellation. At the repeated-root boundary the value is the
/// continuous limit from the one-root side (the simple root `3q/p`).
pub fn cardano_unique_real_root(p: f64, q: f64) -> Result<f64> {
    let disc = discriminant_of(p, q);
    if disc < -discriminant_tol(p, q) {
        return Err(Error::NonUniqueRealRoot { discriminant: disc });
    }
    if p == 0.0 {
        return Ok(-q.cbrt());
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let d = (0.25 * q * q + p * p * p / 27.0).max(0.0);
    let sign = if q < 0.0 { -1.0 } else { 1.0 };
    let t = (-0.5 * q - sign * d.sqrt()).cbrt();
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(t - p / (3.0 * t))
}

/// The two roots of `v^2 - beta v - c = 0` with `c >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadRoots {
    /// `(beta + sqrt(beta^2 + 4c)) / 2`
    pub plus: f64,
    /// `(beta - sqrt(beta^2 + 4c)) / 2`
    pub minus: f64,
}

/// Roots of `v^2 - beta v - c`, each computed without subtractive cancellation.
pub fn stable_quadratic_roots(beta: f64, c: f64) -> Result<QuadRoots> {
    if c < 0.0 {
        return Err(Error::NegativeTheta(c));
    }
    let s = beta.hypot(2.0 * c.sqrt());
    if beta >= 0.0 {
        let plus = 0.5 * (beta + s);
        let minus = if plus == 0.0 { 0.0 } else { -c / plus };
        Ok(QuadRoots { plus, minus })
    } else {
        let minus = 0.5 * (beta - s);
        let plus = -c / minus;
        Ok(QuadRoots { plus, minus })
    }
}

//! Meaningful cost functionals certified by the feedback laws.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::laws::{alpha_eval, ClfReadout, ControllerSpec, Structure, CUBIC_DOMINATION};

/// Non-negative extended real: a finite value or `+inf`.
///
/// The infinite case is produced only by the `x / 0` guard, never by overflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::PosInfinity => None,
        }
    }

    /// Value as `f64`, mapping the sentinel to `f64::INFINITY` for output.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl std::ops::Add for ExtReal {
    type Output = ExtReal;

    fn add(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInfinity,
        }
    }
}

/// `num / den` for `num, den >= 0` with `0/0 = 0` and `x/0 = +inf`.
pub fn guarded_ratio(num: f64, den: f64) -> ExtReal {
    if num == 0.0 {
        ExtReal::ZERO
    } else if den == 0.0 {
        ExtReal::PosInfinity
    } else {
        ExtReal::Finite(num / den)
    }
}

/// Inverse control weight `R^{-1}` for the cubic structure.
pub fn inv_weight_c(r: &ClfReadout, c: &ControllerSpec) -> Result<f64> {
    let m = c.m;
    let bm = r.beta / (m * m);
    Ok(m * m * (r.phi.abs() + CUBIC_DOMINATION * bm.abs().powf(1.5) + alpha_eval(&c.alpha, r.lyapunov)?))
}

/// Inverse control weight `R^{-1} = m theta` for the quadratic structure.
pub fn inv_weight_q(r: &ClfReadout, c: &ControllerSpec) -> Result<f64> {
    Ok(c.m * (r.phi.abs() + alpha_eval(&c.alpha, r.lyapunov)?))
}

pub fn inv_weight(r: &ClfReadout, c: &ControllerSpec) -> Result<f64> {
    match c.structure() {
        Structure::Cubic => inv_weight_c(r, c),
        Structure::Quadratic => inv_weight_q(r, c),
    }
}

/// State penalty `L = m(m-2) R^{-1} - 2m(phi - R^{-1})`, same form for both structures.
pub fn state_penalty(r: &ClfReadout, c: &ControllerSpec) -> Result<f64> {
    let m = c.m;
    let w = inv_weight(r, c)?;
    Ok(m * (m - 2.0) * w - 2.0 * m * (r.phi - w))
}

pub fn state_penalty_c(r: &ClfReadout, c: &ControllerSpec) -> Result<f64> {
    let m = c.m;
    let w = inv_weight_c(r, c)?;
    Ok(m * (m - 2.0) * w - 2.0 * m * (r.phi - w))
}

pub fn state_penalty_q(r: &ClfReadout, c: &ControllerSpec) -> Result<f64> {
    let m = c.m;
    let w = inv_weight_q(r, c)?;
    Ok(m * (m - 2.0) * w - 2.0 * m * (r.phi - w))
}

/// Control-dependent factor: `(beta + v^2) v` (cubic) or `(beta - v) v` (quadratic).
fn effort_factor(s: Structure, beta: f64, v: f64) -> f64 {
    match s {
        Structure::Cubic => (beta + v * v) * v,
        Structure::Quadratic => (beta - v) * v,
    }
}

/// Running cost `L + R * effort_factor^2`.
pub fn running_cost(r: &ClfReadout, v: f64, c: &ControllerSpec) -> Result<ExtReal> {
    let l = state_penalty(r, c)?;
    let f = effort_factor(c.structure(), r.beta, v);
    Ok(ExtReal::Finite(l) + guarded_ratio(f * f, inv_weight(r, c)?))
}

/// Optimality residual: `R (g(v) - g(kappa))^2` with `g` the control-dependent part
/// of the CLF derivative and `kappa` the optimal law of the structure.
pub fn residual(r: &ClfReadout, v: f64, kappa: f64, c: &ControllerSpec) -> Result<ExtReal> {
    let num = match c.structure() {
        Structure::Cubic => {
            let d = r.beta * v + v * v * v - r.beta * kappa - kappa * kappa * kappa;
            d * d
        }
        Structure::Quadratic => {
            let d = (v - kappa) * (r.beta - kappa - v);
            d * d
        }
    };
    Ok(guarded_ratio(num, inv_weight(r, c)?))
}

/// Optimal law of the controller's structure (the unperturbed reference).
pub fn optimal_reference(r: &ClfReadout, c: &ControllerSpec) -> Result<f64> {
    use crate::laws::{kappa_c_star, kappa_q_star, BaseLaw, FeedbackLaw};
    match c.law {
        FeedbackLaw::Perturbed { base: BaseLaw::Cardano, .. } => kappa_c_star(r, &c.alpha, c.m),
        FeedbackLaw::Perturbed { base: BaseLaw::QuadPlus, .. } => kappa_q_star(r, &c.alpha, c.m),
        _ => c.control(r),
    }
}

/// Per-sample cost decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub state_penalty: f64,
    pub inv_weight: f64,
    pub integrand: ExtReal,
    pub residual: ExtReal,
}

pub fn cost_sample(r: &ClfReadout, v: f64, c: &ControllerSpec) -> Result<CostSample> {
    let kappa = optimal_reference(r, c)?;
    Ok(CostSample {
        state_penalty: state_penalty(r, c)?,
        inv_weight: inv_weight(r, c)?,
        integrand: running_cost(r, v, c)?,
        residual: residual(r, v, kappa, c)?,
    })
}

/// Time integrals of the running cost and the residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub accumulated: ExtReal,
    pub residual_integral: ExtReal,
    /// `2 m V(0)`
    pub theoretical_min: f64,
    pub initial_value: f64,
    /// CLF value at the end of the horizon.
    pub tail_value: f64,
    pub horizon: f64,
    pub m: f64,
}

impl CostLedger {
    /// `J / (2m (V(0) - V(T)))`, the cost relative to the certified value on `[0, T]`.
    pub fn optimality_ratio(&self) -> Option<f64> {
        let denom = 2.0 * self.m * (self.initial_value - self.tail_value);
        self.accumulated.finite().filter(|_| denom > 0.0).map(|j| j / denom)
    }
}

/// Trapezoidal accumulator over time samples.
#[derive(Debug, Clone)]
pub struct LedgerBuilder {
    m: f64,
    last: Option<(f64, ExtReal, ExtReal)>,
    cost: ExtReal,
    resid: ExtReal,
    initial_value: Option<f64>,
    tail_value: f64,
    t0: f64,
}

impl LedgerBuilder {
    pub fn new(m: f64) -> Self {
        Self { m, last: None, cost: ExtReal::ZERO, resid: ExtReal::ZERO, initial_value: None, tail_value: 0.0, t0: 0.0 }
    }

    pub fn push(&mut self, t: f64, lyapunov: f64, sample: &CostSample) {
        if self.initial_value.is_none() {
            self.initial_value = Some(lyapunov);
            self.t0 = t;
        }
        if let Some((t_prev, c_prev, r_prev)) = self.last {
            let dt = t - t_prev;
            self.cost = self.cost + trapezoid(c_prev, sample.integrand, dt);
            self.resid = self.resid + trapezoid(r_prev, sample.residual, dt);
        }
        self.last = Some((t, sample.integrand, sample.residual));
        self.tail_value = lyapunov;
    }

    pub fn finish(&self) -> Option<CostLedger> {
        let (t_end, ..) = self.last?;
        let v0 = self.initial_value?;
        Some(CostLedger {
            accumulated: self.cost,
            residual_integral: self.resid,
            theoretical_min: 2.0 * self.m * v0,
            initial_value: v0,
            tail_value: self.tail_value,
            horizon: t_end - self.t0,
            m: self.m,
        })
    }
}

fn trapezoid(a: ExtReal, b: ExtReal, dt: f64) -> ExtReal {
    match (a, b) {
        (ExtReal::Finite(x), ExtReal::Finite(y)) => ExtReal::Finite(0.5 * dt * (x + y)),
        _ if dt > 0.0 => ExtReal::PosInfinity,
        _ => ExtReal::ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{kappa_c_star, kappa_q_star, Alpha, FeedbackLaw};
    use proptest::prelude::*;

    fn spec(law: FeedbackLaw, m: f64) -> ControllerSpec {
        ControllerSpec::new(law, m, Alpha::Linear { c: 1.0 }).unwrap()
    }

    #[test]
    fn origin_guards() {
        let r = ClfReadout::default();
        let c = spec(FeedbackLaw::Cardano, 2.0);
        assert_eq!(running_cost(&r, 0.0, &c).unwrap(), ExtReal::ZERO);
        assert_eq!(running_cost(&r, 1.0, &c).unwrap(), ExtReal::PosInfinity);
        assert_eq!(residual(&r, 0.0, 0.0, &c).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn quadratic_example() {
        let c = spec(FeedbackLaw::QuadPlus, 2.0);
        let r = ClfReadout::new(1.0, 0.0, 0.0);
        assert_eq!(inv_weight_q(&r, &c).unwrap(), 2.0);
        assert_eq!(state_penalty_q(&r, &c).unwrap(), 8.0);
        assert_eq!(running_cost(&r, 2.0, &c).unwrap(), ExtReal::Finite(16.0));
        assert_eq!(residual(&r, 2.0, 2.0, &c).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn ledger_trapezoid_and_infinity() {
        let s = |x| CostSample { state_penalty: 0.0, inv_weight: 1.0, integrand: x, residual: ExtReal::ZERO };
        let mut b = LedgerBuilder::new(2.0);
        b.push(0.0, 1.0, &s(ExtReal::Finite(1.0)));
        b.push(1.0, 0.5, &s(ExtReal::Finite(3.0)));
        let l = b.finish().unwrap();
        assert_eq!(l.accumulated, ExtReal::Finite(2.0));
        assert_eq!(l.theoretical_min, 4.0);
        assert_eq!(l.optimality_ratio(), Some(1.0));
        b.push(2.0, 0.2, &s(ExtReal::PosInfinity));
        assert_eq!(b.finish().unwrap().accumulated, ExtReal::PosInfinity);
        assert!(LedgerBuilder::new(2.0).finish().is_none());
    }

    fn readout() -> impl Strategy<Value = ClfReadout> {
        (1e-6f64..1e2, -1e2f64..1e2, -1e2f64..1e2).prop_map(|(v, p, b)| ClfReadout::new(v, p, b))
    }

    proptest! {
        #[test]
        fn penalties_positive(r in readout(), m in 2.0f64..6.0) {
            for law in [FeedbackLaw::Cardano, FeedbackLaw::QuadPlus] {
                let c = spec(law, m);
                prop_assert!(inv_weight(&r, &c).unwrap() > 0.0);
                prop_assert!(state_penalty(&r, &c).unwrap() > 0.0);
            }
        }

        #[test]
        fn optimal_cost_is_2m_times_decay(r in readout(), m in 2.0f64..6.0) {
            let c = spec(FeedbackLaw::Cardano, m);
            let v = kappa_c_star(&r, &c.alpha, m).unwrap();
            let cost = running_cost(&r, v, &c).unwrap().finite().unwrap();
            let vdot = r.phi + r.beta * v + v * v * v;
            prop_assert!((cost + 2.0 * m * vdot).abs() <= 1e-8 * cost.abs().max(1.0));
            let c = spec(FeedbackLaw::QuadPlus, m);
            let v = kappa_q_star(&r, &c.alpha, m).unwrap();
            let cost = running_cost(&r, v, &c).unwrap().finite().unwrap();
            let vdot = r.phi + r.beta * v - v * v;
            prop_assert!((cost + 2.0 * m * vdot).abs() <= 1e-8 * cost.abs().max(1.0));
        }
    }
}

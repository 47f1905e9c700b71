//! Feedback laws built on the CLF readout `(V, phi, beta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{cardano_unique_real_root, stable_quadratic_roots};

/// `2*sqrt(3)/9`, the constant in the cubic domination term.
pub const CUBIC_DOMINATION: f64 = 0.384_900_179_459_750_5;

/// CLF value and the coefficients of its derivative along the plant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClfReadout {
    pub lyapunov: f64,
    pub phi: f64,
    pub beta: f64,
}

impl ClfReadout {
    pub fn new(lyapunov: f64, phi: f64, beta: f64) -> Self {
        Self { lyapunov, phi, beta }
    }
}

/// Shape of the CLF derivative in the boundary input `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// `phi + beta v + v^3`
    Cubic,
    /// `phi + beta v - v^2`
    Quadratic,
}

/// Class-K decay term `alpha(V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alpha {
    Linear { c: f64 },
    Power { c: f64, p: f64 },
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha::Linear { c: 1.0 }
    }
}

impl Alpha {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Alpha::Linear { c } => c > 0.0 && c.is_finite(),
            Alpha::Power { c, p } => c > 0.0 && p > 0.0 && c.is_finite() && p.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("alpha {self:?}")))
        }
    }

    /// Linear rate constant, if the decay term is linear.
    pub fn linear_rate(&self) -> Option<f64> {
        match *self {
            Alpha::Linear { c } => Some(c),
            Alpha::Power { .. } => None,
        }
    }

    pub fn eval(&self, lyapunov: f64) -> Result<f64> {
        alpha_eval(self, lyapunov)
    }
}

pub fn alpha_eval(alpha: &Alpha, lyapunov: f64) -> Result<f64> {
    if lyapunov < 0.0 {
        return Err(Error::NegativeLyapunovValue(lyapunov));
    }
    Ok(match *alpha {
        Alpha::Linear { c } => c * lyapunov,
        Alpha::Power { c, p } => c * lyapunov.powf(p),
    })
}

/// Constant term of the cubic closed-loop equation.
pub fn q_of(readout: &ClfReadout, alpha: &Alpha) -> Result<f64> {
    let a = alpha_eval(alpha, readout.lyapunov)?;
    Ok(readout.phi.abs() + CUBIC_DOMINATION * readout.beta.abs().powf(1.5) + a)
}

/// `theta = |phi| + alpha(V)`.
pub fn theta_of(readout: &ClfReadout, alpha: &Alpha) -> Result<f64> {
    Ok(readout.phi.abs() + alpha_eval(alpha, readout.lyapunov)?)
}

fn check_gain(m: f64) -> Result<()> {
    if m >= 2.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGain(m))
    }
}

/// Base Cardano law: the real root of `v^3 + beta v + q`.
pub fn kappa_c(readout: &ClfReadout, alpha: &Alpha) -> Result<f64> {
    cardano_unique_real_root(readout.beta, q_of(readout, alpha)?)
}

/// Cardano law rescaled by the gain `m`.
pub fn kappa_c_star(readout: &ClfReadout, alpha: &Alpha, m: f64) -> Result<f64> {
    check_gain(m)?;
    let scaled = ClfReadout { beta: readout.beta / (m * m), ..*readout };
    Ok(m * kappa_c(&scaled, alpha)?)
}

fn quad_roots(readout: &ClfReadout, alpha: &Alpha, m: f64) -> Result<crate::roots::QuadRoots> {
    check_gain(m)?;
    stable_quadratic_roots(readout.beta, m * m * theta_of(readout, alpha)?)
}

/// Plus-branch root of `v^2 - beta v - m^2 theta`.
pub fn kappa_q_star(readout: &ClfReadout, alpha: &Alpha, m: f64) -> Result<f64> {
    Ok(quad_roots(readout, alpha, m)?.plus)
}

/// The other root, `beta - kappa_q_star`.
pub fn kappa_q_complement(readout: &ClfReadout, alpha: &Alpha, m: f64) -> Result<f64> {
    Ok(quad_roots(readout, alpha, m)?.minus)
}

/// Minimum-magnitude root. At `beta = 0` the negative root is taken.
pub fn kappa_s_star(readout: &ClfReadout, alpha: &Alpha, m: f64) -> Result<f64> {
    let r = quad_roots(readout, alpha, m)?;
    Ok(if readout.beta > 0.0 { r.minus } else if readout.beta < 0.0 { r.plus } else { r.minus })
}

/// Laws that can be perturbed by a constant offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLaw {
    Cardano,
    QuadPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackLaw {
    Cardano,
    QuadPlus,
    QuadMinus,
    Switching,
    Perturbed { base: BaseLaw, delta: f64 },
}

impl FeedbackLaw {
    pub fn structure(&self) -> Structure {
        match self {
            FeedbackLaw::Cardano | FeedbackLaw::Perturbed { base: BaseLaw::Cardano, .. } => Structure::Cubic,
            _ => Structure::Quadratic,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeedbackLaw::Cardano => "cardano",
            FeedbackLaw::QuadPlus => "quad_plus",
            FeedbackLaw::QuadMinus => "quad_minus",
            FeedbackLaw::Switching => "switching",
            FeedbackLaw::Perturbed { .. } => "perturbed",
        }
    }

    /// True for the laws whose optimality residual vanishes identically.
    pub fn is_optimal(&self) -> bool {
        !matches!(self, FeedbackLaw::Perturbed { .. })
    }
}

/// A feedback law together with its gain and decay term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub law: FeedbackLaw,
    pub m: f64,
    pub alpha: Alpha,
}

impl ControllerSpec {
    pub fn new(law: FeedbackLaw, m: f64, alpha: Alpha) -> Result<Self> {
        check_gain(m)?;
        alpha.validate()?;
        if let FeedbackLaw::Perturbed { delta, .. } = law {
            if !delta.is_finite() {
                return Err(Error::InvalidParameter(format!("delta {delta}")));
            }
        }
        Ok(Self { law, m, alpha })
    }

    pub fn structure(&self) -> Structure {
        self.law.structure()
    }

    /// Boundary input commanded for the given readout.
    pub fn control(&self, readout: &ClfReadout) -> Result<f64> {
        let (a, m) = (&self.alpha, self.m);
        match self.law {
            FeedbackLaw::Cardano => kappa_c_star(readout, a, m),
            FeedbackLaw::QuadPlus => kappa_q_star(readout, a, m),
            FeedbackLaw::QuadMinus => kappa_q_complement(readout, a, m),
            FeedbackLaw::Switching => kappa_s_star(readout, a, m),
            FeedbackLaw::Perturbed { base, delta } => kappa_perturbed(readout, a, m, base, delta),
        }
    }

    /// Which quadratic root the law picks: `Some(true)` for the plus branch.
    pub fn branch(&self, readout: &ClfReadout) -> Option<bool> {
        match self.law {
            FeedbackLaw::Switching => Some(readout.beta < 0.0),
            _ => None,
        }
    }
}

pub fn kappa_perturbed(readout: &ClfReadout, alpha: &Alpha, m: f64, base: BaseLaw, delta: f64) -> Result<f64> {
    let k = match base {
        BaseLaw::Cardano => kappa_c_star(readout, alpha, m)?,
        BaseLaw::QuadPlus => kappa_q_star(readout, alpha, m)?,
    };
    Ok(k + delta)
}

/// CLF derivative for the given structure and input.
pub fn clf_derivative(structure: Structure, readout: &ClfReadout, v: f64) -> f64 {
    match structure {
        Structure::Cubic => readout.phi + readout.beta * v + v * v * v,
        Structure::Quadratic => readout.phi + readout.beta * v - v * v,
    }
}

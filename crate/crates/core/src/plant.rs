//! Finite-difference plants on `[0, 1]` with Dirichlet actuation at `x = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{ClfReadout, Structure};

/// Uniform grid with `n` nodes on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::GridTooSmall(n));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / (self.n - 1) as f64
    }
}

/// Nodal values; `values[0]` is the actuated boundary and `values[n-1] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl StateField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        values[grid.len() - 1] = 0.0;
        Self { grid, values }
    }

    pub fn boundary(&self) -> f64 {
        self.values[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &u| a.max(u.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    /// `u_t = eps u_xx - (u^2)_x + R(u)`
    QuadraticConvection,
    /// `u_t = eps u_xx + u_x + R(u)`
    CounterConvection,
    /// `u_t = eps u_xx - u_x + R(u)`
    LinearConvection,
}

impl PlantKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlantKind::QuadraticConvection => "quadratic_convection",
            PlantKind::CounterConvection => "counter_convection",
            PlantKind::LinearConvection => "linear_convection",
        }
    }

    pub fn structure(&self) -> Structure {
        match self {
            PlantKind::QuadraticConvection => Structure::Cubic,
            _ => Structure::Quadratic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reaction {
    #[default]
    Zero,
    Linear { lambda: f64 },
}

impl Reaction {
    pub fn lambda(&self) -> f64 {
        match *self {
            Reaction::Zero => 0.0,
            Reaction::Linear { lambda } => lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub kind: PlantKind,
    pub eps: f64,
    #[serde(default)]
    pub reaction: Reaction,
}

impl PlantSpec {
    pub fn new(kind: PlantKind, eps: f64, reaction: Reaction) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if !reaction.lambda().is_finite() {
            return Err(Error::InvalidParameter("reaction lambda".into()));
        }
        Ok(Self { kind, eps, reaction })
    }

    /// Decay rate of the spatial weight in the CLF, if any.
    pub fn weight_rate(&self) -> Option<f64> {
        match self.kind {
            PlantKind::LinearConvection => Some(2.0 / self.eps),
            _ => None,
        }
    }

    /// Map the quadrature parts `(Q, G, S)` to the CLF readout, where
    /// `Q = int w u^2`, `G = int w u_x^2`, `S = u_x(0)` and `w` is the plant weight.
    pub fn readout_from_parts(&self, q: f64, g: f64, s: f64) -> ClfReadout {
        let (eps, lam) = (self.eps, self.reaction.lambda());
        match self.kind {
            PlantKind::QuadraticConvection => {
                ClfReadout::new(0.75 * q, 1.5 * (lam * q - eps * g), -1.5 * eps * s)
            }
            PlantKind::CounterConvection => ClfReadout::new(q, 2.0 * (lam * q - eps * g), -2.0 * eps * s),
            PlantKind::LinearConvection => {
                ClfReadout::new(q, (2.0 / eps) * q + 2.0 * lam * q - 2.0 * eps * g, -2.0 * eps * s)
            }
        }
    }
}

/// Exponential spatial weight `w(x) = exp(-rate x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpWeight {
    pub rate: f64,
}

impl ExpWeight {
    pub fn at(&self, x: f64) -> f64 {
        (-self.rate * x).exp()
    }
}

/// Second-order one-sided slope at `x = 0`.
pub fn left_slope(field: &StateField) -> f64 {
    let u = &field.values;
    (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * field.grid.dx())
}

/// Trapezoidal `int w u^2 dx`.
pub fn quad_l2(field: &StateField, weight: Option<ExpWeight>) -> f64 {
    let (g, u) = (field.grid, &field.values);
    let n = g.len();
    let w = |i: usize| weight.map_or(1.0, |w| w.at(g.x(i)));
    let inner: f64 = (1..n - 1).map(|i| w(i) * u[i] * u[i]).sum();
    g.dx() * (inner + 0.5 * (w(0) * u[0] * u[0] + w(n - 1) * u[n - 1] * u[n - 1]))
}

/// Midpoint-rule `int w u_x^2 dx` on forward differences.
pub fn grad_sq_integral(field: &StateField, weight: Option<ExpWeight>) -> f64 {
    let (g, u) = (field.grid, &field.values);
    let h = g.dx();
    let sum: f64 = (0..g.len() - 1)
        .map(|i| {
            let d = u[i + 1] - u[i];
            weight.map_or(1.0, |w| w.at((i as f64 + 0.5) * h)) * d * d
        })
        .sum();
    sum / h
}

pub fn clf_readout(field: &StateField, plant: &PlantSpec) -> ClfReadout {
    let w = plant.weight_rate().map(|rate| ExpWeight { rate });
    plant.readout_from_parts(quad_l2(field, w), grad_sq_integral(field, w), left_slope(field))
}

/// Semi-discrete right-hand side at interior nodes; boundary entries are zero.
pub fn rhs_into(u: &[f64], plant: &PlantSpec, dx: f64, out: &mut [f64]) {
    let n = u.len();
    let (eps, lam) = (plant.eps, plant.reaction.lambda());
    let (diff, adv) = (eps / (dx * dx), 0.5 / dx);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        let (l, c, r) = (u[i - 1], u[i], u[i + 1]);
        let conv = match plant.kind {
            PlantKind::QuadraticConvection => -adv * (r * r - l * l),
            PlantKind::CounterConvection => adv * (r - l),
            PlantKind::LinearConvection => -adv * (r - l),
        };
        out[i] = diff * (r - 2.0 * c + l) + conv + lam * c;
    }
}

/// Right-hand side with the boundary slot set to `v`.
pub fn rhs(field: &StateField, v: f64, plant: &PlantSpec) -> Vec<f64> {
    let mut u = field.values.clone();
    u[0] = v;
    let mut out = vec![0.0; u.len()];
    rhs_into(&u, plant, field.grid.dx(), &mut out);
    out
}

/// Explicit step limit from diffusion and advection CFL bounds.
pub fn stable_dt(plant: &PlantSpec, grid: &Grid, umax: f64) -> f64 {
    let h = grid.dx();
    let speed = match plant.kind {
        PlantKind::QuadraticConvection => 2.0 * umax,
        _ => 1.0,
    };
    0.4 * (h * h / (2.0 * plant.eps)).min(h / speed.max(1e-12))
}

/// Initial profile before the boundary value is made consistent with the law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    /// `a sin(pi x)`
    Sine { amplitude: f64 },
    /// `4a x (1 - x)`
    Bump { amplitude: f64 },
    /// Samples on a uniform grid over `[0, 1]`, linearly interpolated.
    Samples { values: Vec<f64> },
}

impl InitialCondition {
    pub fn field(&self, grid: Grid) -> Result<StateField> {
        match self {
            InitialCondition::Zero => Ok(StateField::zeros(grid)),
            InitialCondition::Sine { amplitude } => {
                let a = *amplitude;
                Ok(StateField::from_fn(grid, |x| a * (std::f64::consts::PI * x).sin()))
            }
            InitialCondition::Bump { amplitude } => {
                let a = *amplitude;
                Ok(StateField::from_fn(grid, |x| 4.0 * a * x * (1.0 - x)))
            }
            InitialCondition::Samples { values } => {
                if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("initial samples".into()));
                }
                if values[values.len() - 1].abs() > 1e-12 {
                    return Err(Error::InvalidParameter("initial samples must vanish at x = 1".into()));
                }
                let k = (values.len() - 1) as f64;
                Ok(StateField::from_fn(grid, |x| {
                    let s = x * k;
                    let i = (s.floor() as usize).min(values.len() - 2);
                    let f = s - i as f64;
                    values[i] * (1.0 - f) + values[i + 1] * f
                }))
            }
        }
    }
}

//! Self-consistent boundary value: `v = kappa(readout(u with u[0] = v))`.

use crate::error::{Error, Result};
use crate::laws::{ClfReadout, ControllerSpec};
use crate::plant::PlantSpec;

/// Quadrature weights cached per grid.
#[derive(Debug, Clone)]
pub(crate) struct Weights {
    pub node: Vec<f64>,
    pub mid: Vec<f64>,
}

impl Weights {
    pub fn new(plant: &PlantSpec, n: usize) -> Self {
        let h = 1.0 / (n - 1) as f64;
        let w = |x: f64| plant.weight_rate().map_or(1.0, |r| (-r * x).exp());
        Self {
            node: (0..n).map(|i| w(i as f64 / (n - 1) as f64)).collect(),
            mid: (0..n - 1).map(|i| w((i as f64 + 0.5) * h)).collect(),
        }
    }
}

/// Readout as an affine/quadratic function of the boundary slot, with the
/// interior contributions summed once.
pub(crate) struct BoundaryLoop<'a> {
    plant: &'a PlantSpec,
    h: f64,
    q_rest: f64,
    g_rest: f64,
    w0: f64,
    w_half: f64,
    u1: f64,
    u2: f64,
}

impl<'a> BoundaryLoop<'a> {
    pub fn new(plant: &'a PlantSpec, weights: &Weights, u: &[f64]) -> Self {
        let n = u.len();
        let h = 1.0 / (n - 1) as f64;
        let wn = &weights.node;
        let wm = &weights.mid;
        let inner: f64 = (1..n - 1).map(|i| wn[i] * u[i] * u[i]).sum();
        let q_rest = h * (inner + 0.5 * wn[n - 1] * u[n - 1] * u[n - 1]);
        let g_rest: f64 = (1..n - 1)
            .map(|i| {
                let d = u[i + 1] - u[i];
                wm[i] * d * d
            })
            .sum::<f64>()
            / h;
        Self { plant, h, q_rest, g_rest, w0: wn[0], w_half: wm[0], u1: u[1], u2: u[2] }
    }

    pub fn readout(&self, v: f64) -> ClfReadout {
        let h = self.h;
        let q = self.q_rest + 0.5 * h * self.w0 * v * v;
        let d = self.u1 - v;
        let g = self.g_rest + self.w_half * d * d / h;
        let s = (-3.0 * v + 4.0 * self.u1 - self.u2) / (2.0 * h);
        self.plant.readout_from_parts(q, g, s)
    }

    pub fn solve(&self, ctrl: &ControllerSpec, guess: f64, t: f64) -> Result<f64> {
        let g = |v: f64| -> Result<f64> { Ok(ctrl.control(&self.readout(v))? - v) };
        solve_fixed_point(g, guess, guess.abs().max(1.0)).map_err(|e| match e {
            Error::IncompatibleInitialState => Error::ControlImpasse { t, v: guess },
            e => e,
        })
    }
}

/// Finds a root of `g` near `guess` by expanding a symmetric bracket up to
/// `reach`, then refining with the Illinois method. A sign change that is not
/// a zero (a jump in `g`) is rejected.
pub(crate) fn solve_fixed_point(g: impl Fn(f64) -> Result<f64>, guess: f64, reach: f64) -> Result<f64> {
    let g0 = g(guess)?;
    if g0 == 0.0 {
        return Ok(guess);
    }
    let mut d = 1e-10 * guess.abs().max(1.0);
    loop {
        d = d.min(reach);
        for side in [1.0, -1.0] {
            let x = guess + side * d;
            let gx = g(x)?;
            if gx == 0.0 {
                return Ok(x);
            }
            if (gx > 0.0) != (g0 > 0.0) {
                return refine(&g, guess, g0, x, gx);
            }
        }
        if d >= reach {
            return Err(Error::IncompatibleInitialState);
        }
        d *= 4.0;
    }
}

pub(crate) fn refine(g: &impl Fn(f64) -> Result<f64>, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Result<f64> {
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = g(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if (b - a).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
    }
    let (x, fx) = if fa.abs() < fb.abs() { (a, g(a)?) } else { (b, g(b)?) };
    if fx.abs() <= 1e-8 * x.abs().max(1.0) {
        Ok(x)
    } else {
        Err(Error::IncompatibleInitialState)
    }
}

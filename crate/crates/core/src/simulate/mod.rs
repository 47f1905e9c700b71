//! Closed-loop integration, cost ledgers and decay certificates.
//!
//! The boundary value is not a state: at every Runge-Kutta stage it is solved
//! from `v = kappa(readout(u))` with the slot itself included in the readout.
//! Initial profiles are first lifted by `c cos(pi x / 2)` so that the initial
//! state satisfies the same relation.

mod boundary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{cost_sample, CostLedger, ExtReal, LedgerBuilder};
use crate::error::{Error, Result};
use crate::laws::{clf_derivative, kappa_q_complement, kappa_q_star, Alpha, ClfReadout, ControllerSpec, FeedbackLaw};
use crate::plant::{rhs_into, stable_dt, Grid, InitialCondition, PlantSpec, StateField};

use boundary::{refine, BoundaryLoop, Weights};

const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Horizon {
    /// Integrate to this final time.
    Fixed(f64),
    /// Integrate until `V(t) <= tol * V(0)`.
    RelTol(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum DtPolicy {
    Fixed(f64),
    /// Recomputed every step from the current field.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantSpec,
    pub grid: Grid,
    pub controller: ControllerSpec,
    pub ic: InitialCondition,
    pub horizon: Horizon,
    pub dt: DtPolicy,
    pub log_stride: usize,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        plant: PlantSpec,
        n: usize,
        controller: ControllerSpec,
        ic: InitialCondition,
    ) -> Result<Self> {
        let s = Self {
            name: name.into(),
            plant,
            grid: Grid::new(n)?,
            controller,
            ic,
            horizon: Horizon::RelTol(1e-8),
            dt: DtPolicy::Auto,
            log_stride: 1,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_horizon(mut self, h: Horizon) -> Self {
        self.horizon = h;
        self
    }

    pub fn with_dt(mut self, dt: DtPolicy) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_log_stride(mut self, k: usize) -> Self {
        self.log_stride = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.controller.structure() != self.plant.kind.structure() {
            return Err(Error::IncompatibleLawPlant {
                law: self.controller.law.name().into(),
                plant: self.plant.kind.name().into(),
            });
        }
        let bad = |what: &str| Err(Error::InvalidParameter(what.into()));
        match self.horizon {
            Horizon::Fixed(t) if !(t > 0.0 && t.is_finite()) => return bad("horizon"),
            Horizon::RelTol(r) if !(r > 0.0 && r < 1.0) => return bad("horizon rel_tol"),
            _ => {}
        }
        if let DtPolicy::Fixed(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("dt");
            }
        }
        if self.log_stride == 0 {
            return bad("log_stride");
        }
        Ok(())
    }
}

/// One logged time sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub v: f64,
    pub lyapunov: f64,
    pub phi: f64,
    pub beta: f64,
    /// Finite-difference estimate of `dV/dt` from the logged values.
    pub dvdt_est: f64,
    pub integrand: ExtReal,
    pub residual: ExtReal,
    /// The switching law changed branch since the previous logged sample.
    pub switch_flag: bool,
}

impl Sample {
    pub fn readout(&self) -> ClfReadout {
        ClfReadout::new(self.lyapunov, self.phi, self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample>,
    pub ledger: Option<CostLedger>,
    /// Coefficient of the compatibility lift added to the initial profile.
    pub lift: f64,
    /// `int v^2 dt`, accumulated at every step.
    pub effort: f64,
    pub max_abs_v: f64,
    pub switch_count: usize,
    pub steps: usize,
    pub final_field: Vec<f64>,
}

impl TrajectoryLog {
    /// Formula value `phi + beta v (+/-) v^...` of the CLF derivative at each sample.
    pub fn clf_rates(&self, ctrl: &ControllerSpec) -> Vec<f64> {
        self.samples.iter().map(|s| clf_derivative(ctrl.structure(), &s.readout(), s.v)).collect()
    }
}

/// A failed run with everything logged up to the last good step.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct RunFailure {
    #[source]
    pub error: Error,
    pub partial: Option<Box<TrajectoryLog>>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

/// `cos(pi x / 2)`: unit at `x = 0`, flat there, zero at `x = 1`.
fn lift_shape(x: f64) -> f64 {
    if x >= 1.0 {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * x).cos()
    }
}

/// Initial field `p + c psi` whose boundary value satisfies the feedback law.
/// The smallest `|c|` among the roots found on a uniform scan is used.
pub fn compatible_initial_field(scn: &Scenario) -> Result<(StateField, f64)> {
    let base = scn.ic.field(scn.grid)?;
    let psi: Vec<f64> = (0..scn.grid.len()).map(|i| lift_shape(scn.grid.x(i))).collect();
    let weights = Weights::new(&scn.plant, scn.grid.len());
    let field_at = |c: f64| -> Vec<f64> { base.values.iter().zip(&psi).map(|(p, s)| p + c * s).collect() };
    let g = |c: f64| -> Result<f64> {
        let u = field_at(c);
        let r = BoundaryLoop::new(&scn.plant, &weights, &u).readout(u[0]);
        Ok(scn.controller.control(&r)? - u[0])
    };
    let tol = |c: f64| 1e-8 * (base.values[0] + c).abs().max(1.0);
    let g0 = g(0.0)?;
    if g0.abs() <= tol(0.0) {
        return Ok((base, 0.0));
    }
    let reach = 50.0 * base.max_abs().max(1.0);
    let k = 4000;
    let mut best: Option<f64> = None;
    let mut prev = (-reach, g(-reach)?);
    for j in 1..=k {
        let c = -reach + 2.0 * reach * j as f64 / k as f64;
        let gc = g(c)?;
        if best.is_some_and(|b: f64| b.abs() < prev.0.abs().min(c.abs())) {
            break;
        }
        if (gc > 0.0) != (prev.1 > 0.0) || gc == 0.0 {
            if let Ok(root) = refine(&g, prev.0, prev.1, c, gc) {
                if g(root)?.abs() <= tol(root) && best.is_none_or(|b| root.abs() < b.abs()) {
                    best = Some(root);
                }
            }
        }
        prev = (c, gc);
    }
    let c = best.ok_or(Error::IncompatibleInitialState)?;
    Ok((StateField { grid: scn.grid, values: field_at(c) }, c))
}

struct Stepper<'a> {
    scn: &'a Scenario,
    weights: Weights,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(scn: &'a Scenario) -> Self {
        let n = scn.grid.len();
        Self {
            scn,
            weights: Weights::new(&scn.plant, n),
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        }
    }

    fn boundary(&self, u: &[f64], guess: f64, t: f64) -> Result<(f64, ClfReadout)> {
        let bl = BoundaryLoop::new(&self.scn.plant, &self.weights, u);
        let v = bl.solve(&self.scn.controller, guess, t)?;
        Ok((v, bl.readout(v)))
    }

    /// One RK4 step. `u` must already carry a consistent boundary value.
    fn step(&mut self, u: &mut [f64], t: f64, dt: f64) -> Result<()> {
        let plant = &self.scn.plant;
        let h = self.scn.grid.dx();
        let n = u.len();
        rhs_into(u, plant, h, &mut self.k[0]);
        let coef = [0.5, 0.5, 1.0];
        for s in 0..3 {
            for i in 1..n - 1 {
                self.stage[i] = u[i] + coef[s] * dt * self.k[s][i];
            }
            self.stage[n - 1] = 0.0;
            let (v, _) = self.boundary(&self.stage, u[0], t + coef[s] * dt)?;
            self.stage[0] = v;
            rhs_into(&self.stage, plant, h, &mut self.k[s + 1]);
        }
        for i in 1..n - 1 {
            u[i] += dt / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        u[n - 1] = 0.0;
        let (v, _) = self.boundary(u, u[0], t + dt)?;
        u[0] = v;
        if u.iter().any(|x| !x.is_finite() || x.abs() > 1e12) {
            return Err(Error::UnstableStep { t: t + dt });
        }
        Ok(())
    }
}

struct Recorder {
    samples: Vec<Sample>,
    ledger: LedgerBuilder,
    effort: f64,
    max_abs_v: f64,
    last: Option<(f64, f64)>,
    branch: Option<bool>,
    switch_count: usize,
    pending_switch: bool,
}

impl Recorder {
    fn record(&mut self, scn: &Scenario, t: f64, v: f64, r: &ClfReadout, log: bool) -> Result<()> {
        let ctrl = &scn.controller;
        let cs = cost_sample(r, v, ctrl)?;
        self.ledger.push(t, r.lyapunov, &cs);
        if let Some((tp, vp)) = self.last {
            self.effort += 0.5 * (t - tp) * (vp * vp + v * v);
        }
        self.last = Some((t, v));
        self.max_abs_v = self.max_abs_v.max(v.abs());
        if let Some(b) = ctrl.branch(r) {
            if self.branch.is_some_and(|p| p != b) {
                self.switch_count += 1;
                self.pending_switch = true;
            }
            self.branch = Some(b);
        }
        if log {
            self.samples.push(Sample {
                t,
                v,
                lyapunov: r.lyapunov,
                phi: r.phi,
                beta: r.beta,
                dvdt_est: f64::NAN,
                integrand: cs.integrand,
                residual: cs.residual,
                switch_flag: std::mem::take(&mut self.pending_switch),
            });
        }
        Ok(())
    }

    fn finish(mut self, lift: f64, steps: usize, field: &[f64]) -> TrajectoryLog {
        fill_dvdt(&mut self.samples);
        TrajectoryLog {
            samples: self.samples,
            ledger: self.ledger.finish(),
            lift,
            effort: self.effort,
            max_abs_v: self.max_abs_v,
            switch_count: self.switch_count,
            steps,
            final_field: field.to_vec(),
        }
    }
}

/// Integrate the closed loop.
pub fn run(scn: &Scenario) -> std::result::Result<TrajectoryLog, RunFailure> {
    scn.validate()?;
    let (field, lift) = compatible_initial_field(scn)?;
    let mut u = field.values;
    let mut stepper = Stepper::new(scn);
    let mut rec = Recorder {
        samples: Vec::new(),
        ledger: LedgerBuilder::new(scn.controller.m),
        effort: 0.0,
        max_abs_v: 0.0,
        last: None,
        branch: None,
        switch_count: 0,
        pending_switch: false,
    };
    let r0 = BoundaryLoop::new(&scn.plant, &stepper.weights, &u).readout(u[0]);
    rec.record(scn, 0.0, u[0], &r0, true)?;
    let v0 = r0.lyapunov;
    let (mut t, mut steps) = (0.0f64, 0usize);
    let fail = |error: Error, rec: Recorder, steps: usize, u: &[f64]| RunFailure {
        error,
        partial: Some(Box::new(rec.finish(lift, steps, u))),
    };
    loop {
        let done = match scn.horizon {
            Horizon::Fixed(end) => t >= end,
            Horizon::RelTol(tol) => rec.ledger_tail() <= tol * v0,
        };
        if done {
            break;
        }
        if steps >= MAX_STEPS {
            return Err(fail(Error::HorizonExceeded { steps, t }, rec, steps, &u));
        }
        let mut dt = match scn.dt {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Auto => stable_dt(&scn.plant, &scn.grid, u.iter().fold(0.0, |a, x| a.max(x.abs()))),
        };
        if let Horizon::Fixed(end) = scn.horizon {
            if end - t < dt * (1.0 + 1e-3) {
                dt = end - t;
            }
        }
        let mut next = u.clone();
        if let Err(e) = stepper.step(&mut next, t, dt) {
            return Err(fail(e, rec, steps, &u));
        }
        u = next;
        steps += 1;
        t = match scn.horizon {
            Horizon::Fixed(end) if end - t <= dt => end,
            _ => t + dt,
        };
        let r = BoundaryLoop::new(&scn.plant, &stepper.weights, &u).readout(u[0]);
        let log = steps % scn.log_stride == 0;
        if let Err(e) = rec.record(scn, t, u[0], &r, log) {
            return Err(fail(e, rec, steps, &u));
        }
        let finished = match scn.horizon {
            Horizon::Fixed(end) => t >= end,
            Horizon::RelTol(tol) => r.lyapunov <= tol * v0,
        };
        if finished && !log {
            rec.record_last_again(t, u[0], &r, scn)?;
        }
    }
    Ok(rec.finish(lift, steps, &u))
}

impl Recorder {
    fn ledger_tail(&self) -> f64 {
        self.ledger.finish().map_or(f64::INFINITY, |l| l.tail_value)
    }

    /// Append the final state to the log without re-accumulating it.
    fn record_last_again(&mut self, t: f64, v: f64, r: &ClfReadout, scn: &Scenario) -> Result<()> {
        let cs = cost_sample(r, v, &scn.controller)?;
        self.samples.push(Sample {
            t,
            v,
            lyapunov: r.lyapunov,
            phi: r.phi,
            beta: r.beta,
            dvdt_est: f64::NAN,
            integrand: cs.integrand,
            residual: cs.residual,
            switch_flag: std::mem::take(&mut self.pending_switch),
        });
        Ok(())
    }
}

/// Second-order finite differences on a non-uniform time grid.
fn fill_dvdt(samples: &mut [Sample]) {
    let n = samples.len();
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.lyapunov).collect();
    let d: Vec<f64> = match n {
        0 => vec![],
        1 => vec![0.0],
        2 => {
            let s = (y[1] - y[0]) / (t[1] - t[0]);
            vec![s, s]
        }
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
                    -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * y[0] + (h1 + h2) / (h1 * h2) * y[1]
                        - h1 / (h2 * (h1 + h2)) * y[2]
                } else if i == n - 1 {
                    let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
                    (2.0 * h2 + h1) / (h2 * (h1 + h2)) * y[n - 1] - (h1 + h2) / (h1 * h2) * y[n - 2]
                        + h2 / (h1 * (h1 + h2)) * y[n - 3]
                } else {
                    let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
                    -h2 / (h1 * (h1 + h2)) * y[i - 1] + (h2 - h1) / (h1 * h2) * y[i] + h1 / (h2 * (h1 + h2)) * y[i + 1]
                }
            })
            .collect(),
    };
    for (s, d) in samples.iter_mut().zip(d) {
        s.dvdt_est = d;
    }
}

/// Result of checking `dV/dt <= -k alpha(V)` along a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub rate_multiplier: f64,
    /// Smallest `-dV/dt / (k alpha(V))` over the samples with `V > 0`.
    pub worst_ratio: f64,
    /// Largest `V(t) / (V(0) exp(-k c t))`; linear `alpha` only.
    pub worst_envelope: Option<f64>,
    pub holds: bool,
    pub envelope_holds: Option<bool>,
}

/// Relative slack allowed on both the rate and the envelope.
pub const DECAY_SLACK: f64 = 0.05;

pub fn certify_decay(log: &TrajectoryLog, alpha: &Alpha, rate_multiplier: f64) -> Result<DecayCertificate> {
    let first = log.samples.first().ok_or(Error::EmptyLog)?;
    let v0 = first.lyapunov;
    let floor = 1e-12 * rate_multiplier * alpha.eval(v0)?;
    let mut worst_ratio = f64::INFINITY;
    for s in &log.samples {
        let bound = rate_multiplier * alpha.eval(s.lyapunov)?;
        if bound > floor {
            worst_ratio = worst_ratio.min(-s.dvdt_est / bound);
        }
    }
    let worst_envelope = alpha.linear_rate().map(|c| {
        log.samples
            .iter()
            .filter(|s| s.lyapunov > 0.0)
            .map(|s| s.lyapunov / (v0 * (-rate_multiplier * c * (s.t - first.t)).exp()))
            .fold(0.0, f64::max)
    });
    Ok(DecayCertificate {
        rate_multiplier,
        worst_ratio,
        worst_envelope,
        holds: worst_ratio >= 1.0 - DECAY_SLACK,
        envelope_holds: worst_envelope.map(|e| e <= 1.0 + DECAY_SLACK),
    })
}

/// `m^3` for cubic laws, `m^2` for quadratic laws.
pub fn rate_multiplier(ctrl: &ControllerSpec) -> f64 {
    match ctrl.structure() {
        crate::laws::Structure::Cubic => ctrl.m.powi(3),
        crate::laws::Structure::Quadratic => ctrl.m.powi(2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortReport {
    pub effort_a: f64,
    pub effort_b: f64,
    pub max_abs_a: f64,
    pub max_abs_b: f64,
    /// For a switching run: `|v| = min(|kappa_q|, |beta - kappa_q|)` at every sample.
    pub pointwise_minimal: Option<bool>,
}

/// Checks that a switching run applied the smaller root at every logged sample.
pub fn pointwise_minimal(log: &TrajectoryLog, ctrl: &ControllerSpec) -> Result<bool> {
    for s in &log.samples {
        let r = s.readout();
        let p = kappa_q_star(&r, &ctrl.alpha, ctrl.m)?;
        let c = kappa_q_complement(&r, &ctrl.alpha, ctrl.m)?;
        let target = p.abs().min(c.abs());
        if (s.v.abs() - target).abs() > 1e-12 * target.max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn effort_from_logs(
    a: &TrajectoryLog,
    ctrl_a: &ControllerSpec,
    b: &TrajectoryLog,
    ctrl_b: &ControllerSpec,
) -> Result<EffortReport> {
    let mut pm = None;
    for (log, ctrl) in [(a, ctrl_a), (b, ctrl_b)] {
        if ctrl.law == FeedbackLaw::Switching {
            pm = Some(pm.unwrap_or(true) && pointwise_minimal(log, ctrl)?);
        }
    }
    Ok(EffortReport {
        effort_a: a.effort,
        effort_b: b.effort,
        max_abs_a: a.max_abs_v,
        max_abs_b: b.max_abs_v,
        pointwise_minimal: pm,
    })
}

/// Run two scenarios on the same plant and initial profile and compare control effort.
pub fn compare_effort(a: &Scenario, b: &Scenario) -> std::result::Result<EffortReport, RunFailure> {
    if a.plant != b.plant {
        return Err(Error::MismatchedScenarios("plant").into());
    }
    if a.grid != b.grid {
        return Err(Error::MismatchedScenarios("grid").into());
    }
    if a.ic != b.ic {
        return Err(Error::MismatchedScenarios("initial condition").into());
    }
    let la = run(a)?;
    let lb = run(b)?;
    Ok(effort_from_logs(&la, &a.controller, &lb, &b.controller)?)
}

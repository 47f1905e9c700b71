//! Inverse-optimal boundary feedback for non-affine scalar PDEs.
//!
//! The CLF derivative along each plant takes the form `phi + beta v + v^3`
//! or `phi + beta v - v^2` in the boundary input `v`. The laws in [`laws`]
//! solve the closed-loop equation in closed form, [`cost`] evaluates the
//! cost functionals they minimize, and [`simulate`] integrates the closed loop.

pub mod cost;
pub mod error;
pub mod laws;
pub mod plant;
pub mod roots;
pub mod simulate;

pub use cost::{CostLedger, CostSample, ExtReal};
pub use error::{Error, Result};
pub use laws::{Alpha, BaseLaw, ClfReadout, ControllerSpec, FeedbackLaw, Structure};
pub use plant::{Grid, InitialCondition, PlantKind, PlantSpec, Reaction, StateField};
pub use simulate::{DecayCertificate, DtPolicy, EffortReport, Horizon, Sample, Scenario, TrajectoryLog};

//! JSON manifests describing batches of closed-loop runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use invopt_core::laws::{Alpha, BaseLaw, ControllerSpec, FeedbackLaw};
use invopt_core::plant::{InitialCondition, PlantKind, PlantSpec, Reaction};
use invopt_core::simulate::{DtPolicy, Horizon, Scenario};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verify {
    #[serde(default)]
    pub decay: bool,
    #[serde(default)]
    pub cost: bool,
    #[serde(default)]
    pub effort: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionDto {
    kind: String,
    #[serde(default)]
    lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IcDto {
    kind: String,
    #[serde(default)]
    amplitude: Option<f64>,
    #[serde(default)]
    values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlphaDto {
    kind: String,
    #[serde(default)]
    c: Option<f64>,
    #[serde(default)]
    p: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeDto {
    mode: String,
    #[serde(default)]
    value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDto {
    #[serde(default)]
    name: Option<String>,
    plant: String,
    eps: f64,
    #[serde(default)]
    reaction: Option<ReactionDto>,
    #[serde(default)]
    n: Option<usize>,
    ic: IcDto,
    law: String,
    #[serde(default)]
    base: Option<String>,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    m: Option<f64>,
    #[serde(default)]
    alpha: Option<AlphaDto>,
    #[serde(default)]
    dt: Option<ModeDto>,
    #[serde(default)]
    horizon: Option<ModeDto>,
    #[serde(default)]
    verify: Option<Verify>,
    #[serde(default)]
    log_stride: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchDto {
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default)]
    seed: Option<u64>,
    scenarios: Vec<ScenarioDto>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ManifestDto {
    Batch(BatchDto),
    Single(Box<ScenarioDto>),
}

/// A scenario and the checks requested for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub scenario: Scenario,
    pub verify: Verify,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub entries: Vec<Entry>,
    pub out_dir: Option<PathBuf>,
    /// Carried through to summaries; the integrator itself is deterministic.
    pub seed: u64,
}

fn parse_err(msg: impl Into<String>) -> CliError {
    CliError::Parse(msg.into())
}

fn plant_kind(s: &str) -> Result<PlantKind, CliError> {
    Ok(match s {
        "quadratic_convection" => PlantKind::QuadraticConvection,
        "counter_convection" => PlantKind::CounterConvection,
        "linear_convection" => PlantKind::LinearConvection,
        _ => return Err(parse_err(format!("unknown plant '{s}'"))),
    })
}

fn base_law(s: &str) -> Result<BaseLaw, CliError> {
    match s {
        "cardano" => Ok(BaseLaw::Cardano),
        "quad_plus" => Ok(BaseLaw::QuadPlus),
        _ => Err(parse_err(format!("perturbed base must be cardano or quad_plus, got '{s}'"))),
    }
}

/// Default base for a perturbed law follows the plant structure.
fn default_base(kind: PlantKind) -> BaseLaw {
    match kind {
        PlantKind::QuadraticConvection => BaseLaw::Cardano,
        _ => BaseLaw::QuadPlus,
    }
}

fn feedback_law(d: &ScenarioDto, kind: PlantKind) -> Result<FeedbackLaw, CliError> {
    let law = match d.law.as_str() {
        "cardano" => FeedbackLaw::Cardano,
        "quad_plus" => FeedbackLaw::QuadPlus,
        "quad_minus" => FeedbackLaw::QuadMinus,
        "switching" => FeedbackLaw::Switching,
        "perturbed" => {
            let base = d.base.as_deref().map(base_law).transpose()?.unwrap_or(default_base(kind));
            let delta = d.delta.ok_or_else(|| parse_err("perturbed law needs 'delta'"))?;
            return Ok(FeedbackLaw::Perturbed { base, delta });
        }
        s => return Err(parse_err(format!("unknown law '{s}'"))),
    };
    if d.delta.is_some() || d.base.is_some() {
        return Err(parse_err("'delta' and 'base' apply only to the perturbed law"));
    }
    Ok(law)
}

fn alpha(d: &Option<AlphaDto>) -> Result<Alpha, CliError> {
    let Some(a) = d else { return Ok(Alpha::default()) };
    let c = a.c.unwrap_or(1.0);
    match a.kind.as_str() {
        "linear" => Ok(Alpha::Linear { c }),
        "power" => Ok(Alpha::Power { c, p: a.p.ok_or_else(|| parse_err("power alpha needs 'p'"))? }),
        s => Err(parse_err(format!("unknown alpha kind '{s}'"))),
    }
}

fn reaction(d: &Option<ReactionDto>) -> Result<Reaction, CliError> {
    let Some(r) = d else { return Ok(Reaction::Zero) };
    match r.kind.as_str() {
        "zero" => Ok(Reaction::Zero),
        "linear" => Ok(Reaction::Linear { lambda: r.lambda.ok_or_else(|| parse_err("linear reaction needs 'lambda'"))? }),
        s => Err(parse_err(format!("unknown reaction kind '{s}'"))),
    }
}

fn initial(d: &IcDto) -> Result<InitialCondition, CliError> {
    let amp = d.amplitude.unwrap_or(1.0);
    match d.kind.as_str() {
        "zero" => Ok(InitialCondition::Zero),
        "sine" => Ok(InitialCondition::Sine { amplitude: amp }),
        "bump" => Ok(InitialCondition::Bump { amplitude: amp }),
        "samples" => Ok(InitialCondition::Samples {
            values: d.values.clone().ok_or_else(|| parse_err("sample initial condition needs 'values'"))?,
        }),
        s => Err(parse_err(format!("unknown ic kind '{s}'"))),
    }
}

fn horizon(d: &Option<ModeDto>) -> Result<Horizon, CliError> {
    let Some(h) = d else { return Ok(Horizon::RelTol(1e-8)) };
    match h.mode.as_str() {
        "fixed" => Ok(Horizon::Fixed(h.value.ok_or_else(|| parse_err("fixed horizon needs 'value'"))?)),
        "rel_tol" => Ok(Horizon::RelTol(h.value.unwrap_or(1e-8))),
        s => Err(parse_err(format!("unknown horizon mode '{s}'"))),
    }
}

fn dt_policy(d: &Option<ModeDto>) -> Result<DtPolicy, CliError> {
    let Some(h) = d else { return Ok(DtPolicy::Auto) };
    match h.mode.as_str() {
        "auto" => Ok(DtPolicy::Auto),
        "fixed" => Ok(DtPolicy::Fixed(h.value.ok_or_else(|| parse_err("fixed dt needs 'value'"))?)),
        s => Err(parse_err(format!("unknown dt mode '{s}'"))),
    }
}

fn entry(d: &ScenarioDto, index: usize) -> Result<Entry, CliError> {
    let kind = plant_kind(&d.plant)?;
    let plant = PlantSpec::new(kind, d.eps, reaction(&d.reaction)?)?;
    let controller = ControllerSpec::new(feedback_law(d, kind)?, d.m.unwrap_or(2.0), alpha(&d.alpha)?)?;
    let name = d.name.clone().unwrap_or_else(|| format!("scenario_{index}"));
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(parse_err(format!("invalid scenario name '{name}'")));
    }
    let scenario = Scenario::new(name, plant, d.n.unwrap_or(201), controller, initial(&d.ic)?)?
        .with_horizon(horizon(&d.horizon)?)
        .with_dt(dt_policy(&d.dt)?)
        .with_log_stride(d.log_stride.unwrap_or(1));
    scenario.validate()?;
    Ok(Entry { scenario, verify: d.verify.clone().unwrap_or_default() })
}

/// Parse a manifest: either a single scenario object or
/// `{"out_dir": ..., "seed": ..., "scenarios": [...]}`.
pub fn parse_manifest(text: &str) -> Result<RunManifest, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let dto = if value.get("scenarios").is_some() {
        ManifestDto::Batch(serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?)
    } else {
        ManifestDto::Single(Box::new(serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?))
    };
    let (dtos, out_dir, seed) = match dto {
        ManifestDto::Batch(b) => (b.scenarios, b.out_dir, b.seed.unwrap_or(0)),
        ManifestDto::Single(s) => (vec![*s], None, 0),
    };
    if dtos.is_empty() {
        return Err(parse_err("manifest has no scenarios"));
    }
    let entries = dtos.iter().enumerate().map(|(i, d)| entry(d, i)).collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<&str> = entries.iter().map(|e| e.scenario.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(parse_err(format!("duplicate scenario name '{}'", w[0])));
    }
    Ok(RunManifest { entries, out_dir, seed })
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}

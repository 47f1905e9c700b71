//! `run`, `sweep` and `validate`.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use invopt_core::laws::{BaseLaw, ControllerSpec, FeedbackLaw};
use invopt_core::simulate::{self, certify_decay, pointwise_minimal, rate_multiplier, TrajectoryLog};
use invopt_core::Error;

use crate::manifest::{Entry, RunManifest};
use crate::output::{table_header, trajectory_csv, write_atomic, Checks, Summary};
use crate::CliError;

/// Largest tolerated `|(J - int residual) / (2m (V(0) - V(T))) - 1|`.
pub const COST_TOL: f64 = 0.05;
/// Largest tolerated `int residual / J` for the optimal laws.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub jobs: usize,
    pub strict: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { out: PathBuf::from("out"), jobs: 1, strict: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    M,
    Eps,
    N,
    Delta,
}

impl FromStr for SweepParam {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "m" => Ok(SweepParam::M),
            "eps" => Ok(SweepParam::Eps),
            "n" => Ok(SweepParam::N),
            "delta" => Ok(SweepParam::Delta),
            _ => Err(CliError::Parse(format!("unknown sweep parameter '{s}'"))),
        }
    }
}

impl SweepParam {
    fn label(self) -> &'static str {
        match self {
            SweepParam::M => "m",
            SweepParam::Eps => "eps",
            SweepParam::N => "n",
            SweepParam::Delta => "delta",
        }
    }

    fn apply(self, entry: &Entry, value: f64) -> Result<Entry, CliError> {
        let mut e = entry.clone();
        let s = &mut e.scenario;
        match self {
            SweepParam::M => s.controller = ControllerSpec::new(s.controller.law, value, s.controller.alpha)?,
            SweepParam::Eps => s.plant = invopt_core::PlantSpec::new(s.plant.kind, value, s.plant.reaction)?,
            SweepParam::N => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(CliError::Parse(format!("grid size must be an integer, got {value}")));
                }
                s.grid = invopt_core::Grid::new(value as usize)?;
            }
            SweepParam::Delta => {
                let base = match s.controller.law {
                    FeedbackLaw::Cardano => BaseLaw::Cardano,
                    FeedbackLaw::QuadPlus => BaseLaw::QuadPlus,
                    FeedbackLaw::Perturbed { base, .. } => base,
                    other => {
                        return Err(CliError::Parse(format!("law {} cannot be perturbed", other.name())));
                    }
                };
                let law = FeedbackLaw::Perturbed { base, delta: value };
                s.controller = ControllerSpec::new(law, s.controller.m, s.controller.alpha)?;
            }
        }
        s.name = format!("{}_{}={}", s.name, self.label(), value);
        s.validate()?;
        Ok(e)
    }
}

/// Run one scenario and evaluate the requested checks.
pub fn evaluate(entry: &Entry, seed: u64, strict: bool) -> (Summary, Option<TrajectoryLog>) {
    let scn = &entry.scenario;
    let ctrl = &scn.controller;
    let mut summary = Summary {
        schema: 1,
        name: scn.name.clone(),
        plant: scn.plant.kind.name().into(),
        law: ctrl.law.name().into(),
        m: ctrl.m,
        eps: scn.plant.eps,
        n: scn.grid.len(),
        seed,
        status: "ok".into(),
        error: None,
        lift: None,
        steps: 0,
        t_end: None,
        v0: None,
        v_end: None,
        cost: None,
        theoretical_min: None,
        uncollected_tail: None,
        residual_integral: None,
        optimality_ratio: None,
        decay: None,
        effort_l2: None,
        max_abs_v: None,
        switch_count: 0,
        checks: Checks::default(),
        passed: false,
    };
    let (log, err) = match simulate::run(scn) {
        Ok(log) => (Some(log), None),
        Err(f) => (f.partial.map(|b| *b), Some(f.error)),
    };
    if let Some(log) = &log {
        fill_from_log(&mut summary, log, ctrl);
    }
    let ok = err.is_none();
    if let Some(e) = err {
        summary.status = "error".into();
        summary.error = Some(e.to_string());
    }
    let v = &entry.verify;
    let decay_ok = summary.decay.is_some_and(|d| d.holds && (!strict || d.envelope_holds != Some(false)));
    let cost_ok = cost_check(&summary, ctrl);
    let c = &mut summary.checks;
    if v.decay {
        c.decay = Some(ok && decay_ok);
    }
    if v.cost {
        c.cost = Some(ok && cost_ok);
    }
    if v.effort {
        c.effort = Some(
            ok && match (ctrl.law, &log) {
                (FeedbackLaw::Switching, Some(l)) => pointwise_minimal(l, ctrl).unwrap_or(false),
                _ => true,
            },
        );
    }
    summary.passed = ok && summary.checks.all_pass();
    (summary, log)
}

fn fill_from_log(s: &mut Summary, log: &TrajectoryLog, ctrl: &ControllerSpec) {
    s.lift = Some(log.lift);
    s.steps = log.steps;
    s.effort_l2 = Some(log.effort);
    s.max_abs_v = Some(log.max_abs_v);
    s.switch_count = log.switch_count;
    s.t_end = log.samples.last().map(|x| x.t);
    if let Some(l) = &log.ledger {
        s.v0 = Some(l.initial_value);
        s.v_end = Some(l.tail_value);
        s.cost = Some(l.accumulated);
        s.theoretical_min = Some(l.theoretical_min);
        s.uncollected_tail = Some(2.0 * l.m * l.tail_value);
        s.residual_integral = Some(l.residual_integral);
        s.optimality_ratio = l.optimality_ratio();
    }
    s.decay = certify_decay(log, &ctrl.alpha, rate_multiplier(ctrl)).ok();
}

fn cost_check(s: &Summary, ctrl: &ControllerSpec) -> bool {
    let (Some(j), Some(r), Some(v0), Some(vt)) = (
        s.cost.and_then(|c| c.finite()),
        s.residual_integral.and_then(|c| c.finite()),
        s.v0,
        s.v_end,
    ) else {
        return false;
    };
    let denom = 2.0 * ctrl.m * (v0 - vt);
    if denom <= 0.0 {
        return j == 0.0;
    }
    let identity = ((j - r) / denom - 1.0).abs() <= COST_TOL;
    identity && (!ctrl.law.is_optimal() || r <= RESIDUAL_TOL * j)
}

/// Map `f` over `items` on at most `jobs` threads, keeping input order.
fn pool<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|sc| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("pool lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("pool lock").into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn execute(entries: &[Entry], seed: u64, opts: &RunOptions) -> Result<Vec<Summary>, CliError> {
    let out = &opts.out;
    let results = pool(entries, opts.jobs, |e| -> Result<Summary, CliError> {
        let (summary, log) = evaluate(e, seed, opts.strict);
        if let Some(log) = &log {
            write_atomic(&out.join(format!("{}.csv", summary.name)), &trajectory_csv(log))?;
        }
        write_atomic(&out.join(format!("{}.json", summary.name)), &summary.to_json())?;
        Ok(summary)
    });
    let mut summaries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    summaries.sort_by(|a, b| a.name.cmp(&b.name));
    let mut all = serde_json::to_string_pretty(&summaries).expect("summaries serialize");
    all.push('\n');
    write_atomic(&out.join("summary.json"), &all)?;
    Ok(summaries)
}

/// Print the summary table.
pub fn print_table(summaries: &[Summary]) {
    println!("{}", table_header());
    for s in summaries {
        println!("{}", s.table_row());
        if let Some(e) = &s.error {
            println!("  {}: {e}", s.name);
        }
    }
}

pub fn cmd_run(manifest: &RunManifest, opts: &RunOptions) -> Result<Vec<Summary>, CliError> {
    execute(&manifest.entries, manifest.seed, opts)
}

pub fn cmd_sweep(
    manifest: &RunManifest,
    param: SweepParam,
    values: &[f64],
    opts: &RunOptions,
) -> Result<Vec<Summary>, CliError> {
    if values.is_empty() {
        return Err(CliError::Parse("sweep needs at least one value".into()));
    }
    let mut entries = Vec::new();
    for e in &manifest.entries {
        for &v in values {
            entries.push(param.apply(e, v)?);
        }
    }
    let summaries = execute(&entries, manifest.seed, opts)?;
    let mut csv = String::from("name,param,value,V0,VT,J,theoretical_min,residual_integral,ratio,passed\n");
    for (e, s) in entries.iter().zip(sorted_by_name(&entries, &summaries)) {
        let value = match param {
            SweepParam::M => e.scenario.controller.m,
            SweepParam::Eps => e.scenario.plant.eps,
            SweepParam::N => e.scenario.grid.len() as f64,
            SweepParam::Delta => match e.scenario.controller.law {
                FeedbackLaw::Perturbed { delta, .. } => delta,
                _ => 0.0,
            },
        };
        let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.name,
            param.label(),
            value,
            f(s.v0),
            f(s.v_end),
            f(s.cost.map(|c| c.to_f64())),
            f(s.theoretical_min),
            f(s.residual_integral.map(|c| c.to_f64())),
            f(s.optimality_ratio),
            s.passed
        ));
    }
    write_atomic(&opts.out.join(format!("sweep_{}.csv", param.label())), &csv)?;
    Ok(summaries)
}

fn sorted_by_name<'a>(entries: &[Entry], summaries: &'a [Summary]) -> Vec<&'a Summary> {
    entries
        .iter()
        .map(|e| summaries.iter().find(|s| s.name == e.scenario.name).expect("summary per entry"))
        .collect()
}

/// Check every scenario without integrating: parameters, law/plant pairing and
/// the existence of a consistent initial boundary value.
pub fn cmd_validate(manifest: &RunManifest) -> Vec<(String, Result<f64, Error>)> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let r = e.scenario.validate().and_then(|_| simulate::compatible_initial_field(&e.scenario).map(|(_, c)| c));
            (e.scenario.name.clone(), r)
        })
        .collect()
}

/// Output directory: `--out` wins, then the manifest's `out_dir`, then `out`.
pub fn resolve_out(cli: Option<&Path>, manifest: &RunManifest) -> PathBuf {
    cli.map(Path::to_path_buf).or_else(|| manifest.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

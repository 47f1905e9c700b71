//! CSV logs, JSON summaries and atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use invopt_core::cost::ExtReal;
use invopt_core::simulate::{DecayCertificate, TrajectoryLog};

use crate::CliError;

pub const CSV_HEADER: &str = "t,v,V,phi,beta,dVdt_est,integrand,residual,switch_flag";

fn ext(x: ExtReal) -> String {
    match x {
        ExtReal::Finite(v) => format!("{v:e}"),
        ExtReal::PosInfinity => "inf".into(),
    }
}

pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let mut out = String::with_capacity(64 * (log.samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &log.samples {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{},{},{}",
            s.t,
            s.v,
            s.lyapunov,
            s.phi,
            s.beta,
            s.dvdt_est,
            ext(s.integrand),
            ext(s.residual),
            u8::from(s.switch_flag)
        );
    }
    out
}

/// Outcome of the checks requested in the manifest; `None` means not requested.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Checks {
    pub decay: Option<bool>,
    pub cost: Option<bool>,
    pub effort: Option<bool>,
}

impl Checks {
    pub fn all_pass(&self) -> bool {
        [self.decay, self.cost, self.effort].iter().all(|c| c.unwrap_or(true))
    }
}

/// Per-scenario JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema: u32,
    pub name: String,
    pub plant: String,
    pub law: String,
    pub m: f64,
    pub eps: f64,
    pub n: usize,
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub lift: Option<f64>,
    pub steps: usize,
    pub t_end: Option<f64>,
    pub v0: Option<f64>,
    pub v_end: Option<f64>,
    pub cost: Option<ExtReal>,
    pub theoretical_min: Option<f64>,
    /// `2m V(T)`, the part of `2m V(0)` not collected before the horizon.
    pub uncollected_tail: Option<f64>,
    pub residual_integral: Option<ExtReal>,
    pub optimality_ratio: Option<f64>,
    pub decay: Option<DecayCertificate>,
    pub effort_l2: Option<f64>,
    pub max_abs_v: Option<f64>,
    pub switch_count: usize,
    pub checks: Checks,
    pub passed: bool,
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    fn cell(x: Option<f64>) -> String {
        x.map_or("-".into(), |v| format!("{v:.6e}"))
    }

    pub fn table_row(&self) -> String {
        let verdict = match (&self.decay, &self.error) {
            (_, Some(_)) => "error".to_string(),
            (Some(d), _) => if d.holds { "holds" } else { "fails" }.to_string(),
            (None, _) => "-".to_string(),
        };
        format!(
            "{:<28} {:>13} {:>13} {:>13} {:>13} {:>13} {:>8} {:>13}",
            self.name,
            Self::cell(self.v0),
            Self::cell(self.v_end),
            Self::cell(self.cost.map(|c| c.to_f64())),
            Self::cell(self.theoretical_min),
            Self::cell(self.residual_integral.map(|c| c.to_f64())),
            verdict,
            Self::cell(self.effort_l2),
        )
    }
}

pub fn table_header() -> String {
    format!(
        "{:<28} {:>13} {:>13} {:>13} {:>13} {:>13} {:>8} {:>13}",
        "name", "V(0)", "V(T)", "J", "2mV(0)", "residual", "decay", "int v^2 dt"
    )
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use invopt_cli::commands::{print_table, resolve_out};
use invopt_cli::{cmd_run, cmd_sweep, cmd_validate, read_manifest, CliError, RunOptions, SweepParam};

#[derive(Parser)]
#[command(name = "invopt", version, about = "Inverse-optimal boundary feedback runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    manifest: PathBuf,
    /// Output directory (default: manifest `out_dir`, else `out`)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Treat decay-envelope warnings as failures
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    Run(Common),
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    Validate {
        manifest: PathBuf,
    },
}

impl Common {
    fn options(&self, m: &invopt_cli::RunManifest) -> RunOptions {
        RunOptions { out: resolve_out(self.out.as_deref(), m), jobs: self.jobs.max(1), strict: self.strict }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool, CliError> {
    match Cli::parse().command {
        Command::Run(c) => {
            let m = read_manifest(&c.manifest)?;
            let s = cmd_run(&m, &c.options(&m))?;
            print_table(&s);
            Ok(s.iter().all(|x| x.passed))
        }
        Command::Sweep { common, param, values } => {
            let m = read_manifest(&common.manifest)?;
            let s = cmd_sweep(&m, param, &values, &common.options(&m))?;
            print_table(&s);
            Ok(s.iter().all(|x| x.passed))
        }
        Command::Validate { manifest } => {
            let m = read_manifest(&manifest)?;
            let mut ok = true;
            for (name, r) in cmd_validate(&m) {
                match r {
                    Ok(c) => println!("ok    {name} (lift {c:e})"),
                    Err(e) => {
                        ok = false;
                        println!("error {name}: {e}");
                    }
                }
            }
            Ok(ok)
        }
    }
}

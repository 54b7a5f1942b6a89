//! Experiment runner for the `selfcontract` binary.
//!
//! Exit codes: `0` success, `1` a checked property failed (check commands and
//! `suite`), `2` usage, validation or I/O error.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod suite;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::Outcome;
use config::{CommandKind, ExperimentConfig, Plan, Task, SEED_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "selfcontract",
    version,
    about = "Self-contracted curve experiments"
)]
pub struct Cli {
    /// JSON file with settings for any flag; flags win on conflict.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed of the random corpora (overrides the config file and SELFCONTRACT_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for CSV/JSON artifacts.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Write an SVG figure to this path.
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Cmd>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Check a polyline CSV for self-contractedness.
    CheckSc(CheckScArgs),
    /// Check the main length bound and its annulus decomposition.
    Bound(BoundArgs),
    /// Classify segments and check the per-annulus estimates.
    Annulus(AnnulusArgs),
    /// Integrate a gradient orbit.
    Flow(FlowArgs),
    /// Run proximal iterates of a convex field.
    Prox(ProxArgs),
    /// The spiral counterexample orbit.
    Spiral(SpiralArgs),
    /// Build the spiral foliation and its orthogonal trajectory.
    Foliation(FoliationArgs),
    /// Run the full acceptance battery.
    Suite(SuiteArgs),
}

#[derive(Debug, Args, Default)]
pub struct CheckScArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Also run the cubic brute-force check.
    #[arg(long)]
    pub bruteforce: bool,
}

#[derive(Debug, Args, Default)]
pub struct BoundArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// `x,y`; defaults to the last point of the curve.
    #[arg(long)]
    pub center: Option<String>,
    /// Allowed distance between the last point and the center.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct AnnulusArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub outer_radius: Option<f64>,
    #[arg(long)]
    pub center: Option<String>,
    #[arg(long)]
    pub eta_density: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct FlowArgs {
    /// Field spec, e.g. `quadratic:1,0,0,4`, `spiral`, `norm`.
    #[arg(long)]
    pub field: Option<String>,
    /// `x,y` or `polar:r,theta`.
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long = "tmax")]
    pub t_max: Option<f64>,
    /// rk4, adaptive or rosenbrock.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// time, arclength or angular.
    #[arg(long)]
    pub parametrization: Option<String>,
    /// Center of the angular parametrization and of the winding count.
    #[arg(long)]
    pub center: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct ProxArgs {
    #[arg(long)]
    pub field: Option<String>,
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SpiralArgs {
    #[arg(long = "tmax")]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct FoliationArgs {
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub level_fraction: Option<f64>,
    /// `a,b,rotation` of the ellipse between the 0.9 and 0.6 balls.
    #[arg(long)]
    pub ellipse: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct SuiteArgs {
    /// Worker threads (default: available cores, at most 8).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Cli {
    /// Settings given on the command line.
    pub fn flags(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            svg: self.svg.clone(),
            ..Default::default()
        };
        let Some(cmd) = &self.command else {
            return c;
        };
        match cmd {
            Cmd::CheckSc(a) => {
                c.command = Some(CommandKind::CheckSc);
                c.input = a.input.clone();
                c.tolerance = a.tolerance;
                c.bruteforce = a.bruteforce.then_some(true);
            }
            Cmd::Bound(a) => {
                c.command = Some(CommandKind::Bound);
                c.input = a.input.clone();
                c.lambda = a.lambda;
                c.center = a.center.clone();
                c.tolerance = a.tolerance;
            }
            Cmd::Annulus(a) => {
                c.command = Some(CommandKind::Annulus);
                c.input = a.input.clone();
                c.alpha = a.alpha;
                c.lambda = a.lambda;
                c.outer_radius = a.outer_radius;
                c.center = a.center.clone();
                c.eta_density = a.eta_density;
            }
            Cmd::Flow(a) => {
                c.command = Some(CommandKind::Flow);
                c.field = a.field.clone();
                c.x0 = a.x0.clone();
                c.t_max = a.t_max;
                c.method = a.method.clone();
                c.step = a.step;
                c.tolerance = a.tolerance;
                c.parametrization = a.parametrization.clone();
                c.center = a.center.clone();
            }
            Cmd::Prox(a) => {
                c.command = Some(CommandKind::Prox);
                c.field = a.field.clone();
                c.x0 = a.x0.clone();
                c.step = a.step;
                c.iterations = a.iterations;
            }
            Cmd::Spiral(a) => {
                c.command = Some(CommandKind::Spiral);
                c.t_max = a.t_max;
                c.x0 = a.x0.clone();
                c.tolerance = a.tolerance;
            }
            Cmd::Foliation(a) => {
                c.command = Some(CommandKind::Foliation);
                c.periods = a.periods;
                c.grid = a.grid;
                c.level_fraction = a.level_fraction;
                c.ellipse = a.ellipse.clone();
            }
            Cmd::Suite(a) => {
                c.command = Some(CommandKind::Suite);
                c.threads = a.threads;
            }
        }
        c
    }

    /// Config file, then the seed environment variable, then flags.
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        Ok(file.with_env_seed(env_seed)?.overlay(self.flags()))
    }
}

/// Dispatches a validated plan.
pub fn run(plan: &Plan) -> Result<Outcome> {
    let out = &plan.output;
    match &plan.task {
        Task::CheckSc(p) => commands::check_sc(p, out),
        Task::Bound(p) => commands::bound(p, out),
        Task::Annulus(p) => commands::annulus(p, out),
        Task::Flow(p) => commands::flow(p, out),
        Task::Prox(p) => commands::prox(p, out),
        Task::Spiral(p) => commands::spiral(p, out),
        Task::Foliation(p) => commands::foliation(p, out, 0),
        Task::Suite(p) => {
            let report = suite::run_suite(p.seed, p.threads)?;
            let violation = !report.all_passed;
            let report = serde_json::to_value(&report)?;
            if let Some(dir) = &out.out_dir {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
                let mut s = serde_json::to_string_pretty(&report)?;
                s.push('\n');
                let path = dir.join("suite_report.json");
                std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(Outcome { report, violation })
        }
    }
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(stderr, "{}", e.render().ansi());
            return code;
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let outcome = cli
        .resolve(env_seed.as_deref())
        .and_then(|cfg| cfg.plan())
        .and_then(|plan| run(&plan));
    match outcome {
        Ok(o) => {
            let text = serde_json::to_string_pretty(&o.report).unwrap_or_else(|_| "null".into());
            let _ = writeln!(stdout, "{text}");
            if o.violation {
                EXIT_VIOLATION
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_USAGE
        }
    }
}

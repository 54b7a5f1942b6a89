//! Experiment configuration: a JSON file and command-line flags merged into
//! one [`ExperimentConfig`], then validated into a typed [`Plan`].

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use selfcontract_core::fields::parse_field;
use selfcontract_core::flow::{spiral_flow_config, Method, Parametrization};
use selfcontract_core::foliation::{EllipseSpec, DEFAULT_GRID, DEFAULT_LEVEL_FRACTION};
use selfcontract_core::{FlowConfig, ScalarField, Vec2};

pub const SEED_ENV: &str = "SELFCONTRACT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    CheckSc,
    Bound,
    Annulus,
    Flow,
    Prox,
    Spiral,
    Foliation,
    Suite,
}

/// Every setting of every command. Unset fields fall back to per-command
/// defaults during [`ExperimentConfig::plan`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<CommandKind>,
    pub input: Option<PathBuf>,
    pub tolerance: Option<f64>,
    pub bruteforce: Option<bool>,
    pub field: Option<String>,
    pub x0: Option<String>,
    pub t_max: Option<f64>,
    pub method: Option<String>,
    pub step: Option<f64>,
    pub parametrization: Option<String>,
    pub center: Option<String>,
    pub iterations: Option<usize>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub outer_radius: Option<f64>,
    pub eta_density: Option<usize>,
    pub periods: Option<usize>,
    pub grid: Option<usize>,
    pub level_fraction: Option<f64>,
    pub ellipse: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

macro_rules! overlay_fields {
    ($top:ident, $base:ident; $($f:ident),* $(,)?) => {
        ExperimentConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl ExperimentConfig {
    /// Fields set in `top` win.
    pub fn overlay(self, top: ExperimentConfig) -> ExperimentConfig {
        let base = self;
        overlay_fields!(top, base;
            command, input, tolerance, bruteforce, field, x0, t_max, method, step,
            parametrization, center, iterations, alpha, lambda, outer_radius,
            eta_density, periods, grid, level_fraction, ellipse, seed, threads,
            out_dir, svg,
        )
    }

    /// Parses a JSON object key by key so a bad value is reported with the
    /// name of its field.
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let v: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let Value::Object(map) = v else {
            bail!("config must be a JSON object");
        };
        let mut cfg = ExperimentConfig::default();
        for (k, v) in map {
            let mut one = Map::new();
            one.insert(k.clone(), v);
            let part: ExperimentConfig = serde_json::from_value(Value::Object(one))
                .map_err(|e| anyhow!("config field `{k}`: {e}"))?;
            cfg = cfg.overlay(part);
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Applies the seed environment override on top of a file config.
    pub fn with_env_seed(mut self, env_value: Option<&str>) -> Result<ExperimentConfig> {
        if let Some(s) = env_value {
            let seed = s
                .trim()
                .parse()
                .map_err(|e| anyhow!("invalid `seed` from {SEED_ENV}={s:?}: {e}"))?;
            self.seed = Some(seed);
        }
        Ok(self)
    }

    pub fn plan(&self) -> Result<Plan> {
        let command = self.command.ok_or_else(|| {
            anyhow!("missing `command`: give a subcommand or set it in the config")
        })?;
        let output = Output {
            out_dir: self.out_dir.clone(),
            svg: self.svg.clone(),
        };
        let task = match command {
            CommandKind::CheckSc => Task::CheckSc(CheckScPlan {
                input: self.require_input()?,
                tolerance: self.tolerance.map(|t| nonneg("tolerance", t)).transpose()?,
                bruteforce: self.bruteforce.unwrap_or(false),
            }),
            CommandKind::Bound => Task::Bound(BoundPlan {
                input: self.require_input()?,
                lambda: open_unit("lambda", self.lambda.unwrap_or(0.5))?,
                center: self
                    .center
                    .as_deref()
                    .map(|c| parse_point("center", c))
                    .transpose()?,
                tolerance: self.tolerance.map(|t| nonneg("tolerance", t)).transpose()?,
            }),
            CommandKind::Annulus => {
                let alpha = self.alpha.unwrap_or(PI / 8.0);
                if !(alpha > 0.0 && alpha < PI / 2.0) {
                    bail!("invalid `alpha`: {alpha} is not in (0, pi/2)");
                }
                let lambda = open_unit("lambda", self.lambda.unwrap_or(0.6))?;
                if lambda <= alpha.sin() {
                    bail!(
                        "invalid `lambda`: {lambda} must exceed sin(alpha) = {}",
                        alpha.sin()
                    );
                }
                Task::Annulus(AnnulusPlan {
                    input: self.require_input()?,
                    alpha,
                    lambda,
                    outer_radius: self
                        .outer_radius
                        .map(|r| positive("outer_radius", r))
                        .transpose()?,
                    center: self
                        .center
                        .as_deref()
                        .map(|c| parse_point("center", c))
                        .transpose()?,
                    eta_density: at_least("eta_density", self.eta_density.unwrap_or(48), 2)?,
                })
            }
            CommandKind::Flow => {
                let spec = self
                    .field
                    .clone()
                    .ok_or_else(|| anyhow!("missing `field`"))?;
                let field = parse_field(&spec).map_err(|e| anyhow!("invalid `field`: {e}"))?;
                let x0 = parse_point(
                    "x0",
                    self.x0.as_deref().ok_or_else(|| anyhow!("missing `x0`"))?,
                )?;
                let center = match &self.center {
                    Some(c) => parse_point("center", c)?,
                    None => Vec2::ZERO,
                };
                let config = self.flow_config(field.as_ref(), center)?;
                Task::Flow(FlowPlan {
                    spec,
                    field,
                    x0,
                    center,
                    config,
                    seed: self.seed,
                })
            }
            CommandKind::Prox => {
                let spec = self
                    .field
                    .clone()
                    .ok_or_else(|| anyhow!("missing `field`"))?;
                let field = parse_field(&spec).map_err(|e| anyhow!("invalid `field`: {e}"))?;
                let x0 = parse_point(
                    "x0",
                    self.x0.as_deref().ok_or_else(|| anyhow!("missing `x0`"))?,
                )?;
                Task::Prox(ProxPlan {
                    spec,
                    field,
                    x0,
                    step: positive("step", self.step.unwrap_or(0.1))?,
                    iterations: at_least("iterations", self.iterations.unwrap_or(200), 1)?,
                })
            }
            CommandKind::Spiral => {
                let t_max = positive("t_max", self.t_max.unwrap_or(1000.0))?;
                let mut config = spiral_flow_config(t_max);
                if let Some(t) = self.tolerance {
                    config.tolerance = positive("tolerance", t)?;
                }
                let x0 = match &self.x0 {
                    Some(s) => parse_point("x0", s)?,
                    None => Vec2::new(2.0 / (3.0 * PI), 0.0),
                };
                Task::Spiral(SpiralPlan { x0, config })
            }
            CommandKind::Foliation => {
                let ellipse = match &self.ellipse {
                    Some(s) => parse_ellipse(s)?,
                    None => EllipseSpec::default(),
                };
                let lf = self.level_fraction.unwrap_or(DEFAULT_LEVEL_FRACTION);
                if !(lf > 0.0 && lf <= 1.0) {
                    bail!("invalid `level_fraction`: {lf} is not in (0, 1]");
                }
                Task::Foliation(FoliationPlan {
                    ellipse,
                    periods: at_least("periods", self.periods.unwrap_or(5), 1)?,
                    grid: at_least("grid", self.grid.unwrap_or(DEFAULT_GRID), 16)?,
                    level_fraction: lf,
                })
            }
            CommandKind::Suite => Task::Suite(SuitePlan {
                seed: self.seed.unwrap_or(0),
                threads: match self.threads {
                    Some(t) => at_least("threads", t, 1)?,
                    None => std::thread::available_parallelism().map_or(1, |n| n.get().min(8)),
                },
            }),
        };
        Ok(Plan { task, output })
    }

    fn require_input(&self) -> Result<PathBuf> {
        self.input
            .clone()
            .ok_or_else(|| anyhow!("missing `input`: path to a t,x,y polyline CSV"))
    }

    fn flow_config(&self, field: &dyn ScalarField, center: Vec2) -> Result<FlowConfig> {
        let spiral = field.is_spiral_like();
        let mut cfg = if spiral {
            spiral_flow_config(100.0)
        } else {
            FlowConfig::default()
        };
        if let Some(t) = self.t_max {
            cfg.t_max = positive("t_max", t)?;
        }
        if let Some(m) = &self.method {
            cfg.method = match m.as_str() {
                "rk4" => Method::Rk4,
                "adaptive" => Method::Adaptive,
                "rosenbrock" => Method::Rosenbrock,
                _ => bail!("invalid `method`: {m:?} (expected rk4, adaptive or rosenbrock)"),
            };
        }
        if let Some(h) = self.step {
            cfg.step = positive("step", h)?;
        }
        if let Some(t) = self.tolerance {
            cfg.tolerance = positive("tolerance", t)?;
        }
        if let Some(p) = &self.parametrization {
            cfg.parametrization = match p.as_str() {
                "time" => Parametrization::Time,
                "arclength" => Parametrization::ArcLength,
                "angular" => Parametrization::Angular { center },
                _ => {
                    bail!("invalid `parametrization`: {p:?} (expected time, arclength or angular)")
                }
            };
        } else if spiral {
            cfg.parametrization = Parametrization::Angular { center };
            cfg.limit = Some(center);
        }
        cfg.validate()
            .map_err(|e| anyhow!("invalid flow settings: {e}"))?;
        Ok(cfg)
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        bail!("invalid `{name}`: {v} must be positive and finite")
    }
}

fn nonneg(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        bail!("invalid `{name}`: {v} must be nonnegative and finite")
    }
}

fn open_unit(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        bail!("invalid `{name}`: {v} is not in (0, 1)")
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        bail!("invalid `{name}`: {v} must be at least {min}")
    }
}

fn parse_numbers(name: &str, s: &str, n: usize) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| anyhow!("invalid `{name}`: {s:?}: {e}"))?;
    if parts.len() != n || parts.iter().any(|v| !v.is_finite()) {
        bail!("invalid `{name}`: {s:?} needs {n} finite comma-separated numbers");
    }
    Ok(parts)
}

/// `x,y` or `polar:r,theta`.
pub fn parse_point(name: &str, s: &str) -> Result<Vec2> {
    match s.strip_prefix("polar:") {
        Some(rest) => {
            let v = parse_numbers(name, rest, 2)?;
            Ok(Vec2::from_polar(v[0], v[1]))
        }
        None => {
            let v = parse_numbers(name, s, 2)?;
            Ok(Vec2::new(v[0], v[1]))
        }
    }
}

/// `a,b,rotation`.
fn parse_ellipse(s: &str) -> Result<EllipseSpec> {
    let v = parse_numbers("ellipse", s, 3)?;
    Ok(EllipseSpec {
        a: v[0],
        b: v[1],
        rotation: v[2],
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub out_dir: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct CheckScPlan {
    pub input: PathBuf,
    pub tolerance: Option<f64>,
    pub bruteforce: bool,
}

#[derive(Debug, Clone)]
pub struct BoundPlan {
    pub input: PathBuf,
    pub lambda: f64,
    pub center: Option<Vec2>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AnnulusPlan {
    pub input: PathBuf,
    pub alpha: f64,
    pub lambda: f64,
    pub outer_radius: Option<f64>,
    pub center: Option<Vec2>,
    pub eta_density: usize,
}

pub struct FlowPlan {
    pub spec: String,
    pub field: Box<dyn ScalarField>,
    pub x0: Vec2,
    pub center: Vec2,
    pub config: FlowConfig,
    pub seed: Option<u64>,
}

pub struct ProxPlan {
    pub spec: String,
    pub field: Box<dyn ScalarField>,
    pub x0: Vec2,
    pub step: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SpiralPlan {
    pub x0: Vec2,
    pub config: FlowConfig,
}

#[derive(Debug, Clone)]
pub struct FoliationPlan {
    pub ellipse: EllipseSpec,
    pub periods: usize,
    pub grid: usize,
    pub level_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SuitePlan {
    pub seed: u64,
    pub threads: usize,
}

/// A validated command.
pub enum Task {
    CheckSc(CheckScPlan),
    Bound(BoundPlan),
    Annulus(AnnulusPlan),
    Flow(FlowPlan),
    Prox(ProxPlan),
    Spiral(SpiralPlan),
    Foliation(FoliationPlan),
    Suite(SuitePlan),
}

pub struct Plan {
    pub task: Task,
    pub output: Output,
}

//! JSON experiment configuration.
//!
//! A config file fully describes one closed-loop experiment: the model (a
//! continuous-time linear model to discretize, an already-discrete one, or
//! the built-in nonlinear reactor), weights, bounds (`null` means
//! unbounded), horizon, solver settings and the reference scenario. Unknown
//! keys are rejected so typos fail loudly instead of silently falling back
//! to defaults.

use std::fs;
use std::path::Path;

use cdal_core::{MpcProblem, ProblemError, SolverSettings};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::cstr::{self, CstrModel};
use crate::discretize::{zoh_discretize, DiscretizeError};
use crate::harness::{ControllerModel, Plant, Scenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error at {0}")]
    Parse(#[from] serde_path_to_error::Error<serde_json::Error>),
    #[error("{0}")]
    Shape(String),
    #[error("discretization failed: {0}")]
    Discretize(#[from] DiscretizeError),
    #[error("resulting problem is invalid: {0}")]
    Invalid(#[from] ProblemError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub weights: WeightsSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    pub horizon: usize,
    #[serde(default)]
    pub solver: SolverSection,
    pub scenario: ScenarioSection,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    /// Continuous-time x' = Ax + Bu, discretized by zero-order hold.
    Continuous {
        A: Vec<Vec<f64>>,
        B: Vec<Vec<f64>>,
        C: Vec<Vec<f64>>,
        ts: f64,
    },
    /// Already-discrete x+ = Ax + Bu + e.
    Discrete {
        A: Vec<Vec<f64>>,
        B: Vec<Vec<f64>>,
        C: Vec<Vec<f64>>,
        ts: f64,
        #[serde(default)]
        e: Option<Vec<f64>>,
    },
    /// Built-in nonlinear reactor, controlled by successive linearization.
    /// The measured output is the concentration.
    Cstr {
        #[serde(default = "default_cstr_ts")]
        ts: f64,
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
}

fn default_cstr_ts() -> f64 {
    cstr::TS
}

fn default_substeps() -> usize {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub W_y: Vec<Vec<f64>>,
    pub W_u: Vec<Vec<f64>>,
    pub W_du: Vec<Vec<f64>>,
}

/// Every bound is optional; a missing vector or a `null` entry means
/// unbounded on that side.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub x_min: Option<Vec<Option<f64>>>,
    pub x_max: Option<Vec<Option<f64>>>,
    pub u_min: Option<Vec<Option<f64>>>,
    pub u_max: Option<Vec<Option<f64>>>,
    pub du_min: Option<Vec<Option<f64>>>,
    pub du_max: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub rho: Option<f64>,
    pub eps_out: Option<f64>,
    pub eps_in: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub accel: Option<bool>,
    pub reverse: Option<bool>,
    pub precond: Option<bool>,
}

impl SolverSection {
    pub fn settings(&self) -> SolverSettings {
        let d = SolverSettings::default();
        SolverSettings {
            rho: self.rho.unwrap_or(d.rho),
            eps_out: self.eps_out.unwrap_or(d.eps_out),
            eps_in: self.eps_in.unwrap_or(d.eps_in),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            max_inner: self.max_inner.unwrap_or(d.max_inner),
            use_acceleration: self.accel.unwrap_or(d.use_acceleration),
            use_reverse: self.reverse.unwrap_or(d.use_reverse),
            use_precond: self.precond.unwrap_or(d.use_precond),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    /// Initial plant state. Defaults to the origin (reactor: its nominal
    /// operating point).
    pub x0: Option<Vec<f64>>,
    /// Input applied before the run starts. Defaults to zero (reactor: the
    /// coolant temperature holding the initial state steady).
    pub u_prev: Option<Vec<f64>>,
    /// Input reference. Defaults to `u_prev`; must be given explicitly when
    /// `W_u` is nonzero so the tracked input is never ambiguous.
    pub u_ref: Option<Vec<f64>>,
    pub segments: Vec<Segment>,
}

/// A stretch of the reference trajectory: `steps` samples at `r`, or a
/// linear ramp from `r` towards `r_end` (reaching it exactly when the next
/// segment starts).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub steps: usize,
    pub r: Vec<f64>,
    #[serde(default)]
    pub r_end: Option<Vec<f64>>,
}

/// Everything needed to run an experiment.
#[derive(Debug)]
pub struct Experiment {
    pub scenario: Scenario,
    pub plant: Plant,
    pub ctrl: ControllerModel,
    pub settings: SolverSettings,
}

pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_str(&text)
}

pub fn from_str(text: &str) -> Result<Experiment, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: ConfigFile = serde_path_to_error::deserialize(&mut de)?;
    build(&cfg)
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    if rows.is_empty() {
        return Err(ConfigError::Shape(format!("{name} has no rows")));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(ConfigError::Shape(format!("{name} has empty rows")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ConfigError::Shape(format!("{name} rows differ in length")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn bound(
    name: &str,
    section: &Option<Vec<Option<f64>>>,
    dim: usize,
    sign: f64,
) -> Result<DVector<f64>, ConfigError> {
    match section {
        None => Ok(DVector::from_element(dim, sign * f64::INFINITY)),
        Some(entries) => {
            if entries.len() != dim {
                return Err(ConfigError::Shape(format!(
                    "{name} has {} entries, expected {dim}",
                    entries.len()
                )));
            }
            Ok(DVector::from_iterator(
                dim,
                entries.iter().map(|v| v.unwrap_or(sign * f64::INFINITY)),
            ))
        }
    }
}

fn vector(
    name: &str,
    section: &Option<Vec<f64>>,
    dim: usize,
    default: DVector<f64>,
) -> Result<DVector<f64>, ConfigError> {
    match section {
        None => Ok(default),
        Some(entries) => {
            if entries.len() != dim {
                return Err(ConfigError::Shape(format!(
                    "{name} has {} entries, expected {dim}",
                    entries.len()
                )));
            }
            Ok(DVector::from_row_slice(entries))
        }
    }
}

fn build_refs(segments: &[Segment], ny: usize) -> Result<Vec<DVector<f64>>, ConfigError> {
    if segments.is_empty() || segments.iter().all(|s| s.steps == 0) {
        return Err(ConfigError::Shape(
            "scenario.segments must contain at least one step".into(),
        ));
    }
    let mut refs = Vec::new();
    let mut last = None;
    for (i, seg) in segments.iter().enumerate() {
        let name = format!("scenario.segments[{i}]");
        if seg.r.len() != ny {
            return Err(ConfigError::Shape(format!(
                "{name}.r has {} entries, expected {ny}",
                seg.r.len()
            )));
        }
        let start = DVector::from_row_slice(&seg.r);
        let end = match &seg.r_end {
            None => start.clone(),
            Some(r_end) => {
                if r_end.len() != ny {
                    return Err(ConfigError::Shape(format!(
                        "{name}.r_end has {} entries, expected {ny}",
                        r_end.len()
                    )));
                }
                DVector::from_row_slice(r_end)
            }
        };
        for k in 0..seg.steps {
            let alpha = k as f64 / seg.steps as f64;
            refs.push(&start + (&end - &start) * alpha);
        }
        last = Some(end);
    }
    refs.push(last.expect("at least one segment"));
    Ok(refs)
}

fn build(cfg: &ConfigFile) -> Result<Experiment, ConfigError> {
    let W_y = matrix("weights.W_y", &cfg.weights.W_y)?;
    let W_u = matrix("weights.W_u", &cfg.weights.W_u)?;
    let W_du = matrix("weights.W_du", &cfg.weights.W_du)?;

    let (A, B, C, e, ts, plant, ctrl, x0_default, u_prev_default) = match &cfg.model {
        ModelSection::Continuous { A, B, C, ts } => {
            let Ac = matrix("model.A", A)?;
            let Bc = matrix("model.B", B)?;
            let Cm = matrix("model.C", C)?;
            let (Ad, Bd) = zoh_discretize(&Ac, &Bc, *ts)?;
            let e = DVector::zeros(Ad.nrows());
            let plant = Plant::Discrete {
                A: Ad.clone(),
                B: Bd.clone(),
                e: e.clone(),
            };
            let nx = Ad.nrows();
            let nu = Bd.ncols();
            (
                Ad,
                Bd,
                Cm,
                e,
                *ts,
                plant,
                ControllerModel::Fixed,
                DVector::zeros(nx),
                DVector::zeros(nu),
            )
        }
        ModelSection::Discrete { A, B, C, ts, e } => {
            let Ad = matrix("model.A", A)?;
            let Bd = matrix("model.B", B)?;
            let Cm = matrix("model.C", C)?;
            let nx = Ad.nrows();
            let nu = Bd.ncols();
            let ed = vector("model.e", e, nx, DVector::zeros(nx))?;
            let plant = Plant::Discrete {
                A: Ad.clone(),
                B: Bd.clone(),
                e: ed.clone(),
            };
            (
                Ad,
                Bd,
                Cm,
                ed,
                *ts,
                plant,
                ControllerModel::Fixed,
                DVector::zeros(nx),
                DVector::zeros(nu),
            )
        }
        ModelSection::Cstr { ts, substeps } => {
            let model = CstrModel::default();
            let x0 = cstr::initial_state();
            let u0 = model.steady_coolant(&x0, model.inlet_temperature(0.0));
            let (Ac, Bc, ec) = model.linearize(&x0, u0, model.inlet_temperature(0.0));
            let (Ad, Bd, ed) = crate::discretize::euler_discretize(&Ac, &Bc, &ec, *ts);
            let Cm = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
            let plant = Plant::Cstr {
                model: model.clone(),
                substeps: *substeps,
            };
            let ctrl = ControllerModel::SuccessiveLinearization { model };
            (
                Ad,
                Bd,
                Cm,
                ed,
                *ts,
                plant,
                ctrl,
                x0,
                DVector::from_element(1, u0),
            )
        }
    };

    let nx = A.nrows();
    let nu = B.ncols();
    let ny = C.nrows();

    let x0 = vector("scenario.x0", &cfg.scenario.x0, nx, x0_default)?;
    let u_prev = vector("scenario.u_prev", &cfg.scenario.u_prev, nu, u_prev_default)?;
    let u_ref = vector("scenario.u_ref", &cfg.scenario.u_ref, nu, u_prev.clone())?;
    if cfg.scenario.u_ref.is_none() && W_u.amax() > 0.0 {
        return Err(ConfigError::Shape(
            "scenario.u_ref is required when W_u is nonzero".into(),
        ));
    }

    let refs = build_refs(&cfg.scenario.segments, ny)?;

    let template = MpcProblem {
        A,
        B,
        C,
        W_y,
        W_u,
        W_du,
        horizon: cfg.horizon,
        x_min: bound("bounds.x_min", &cfg.bounds.x_min, nx, -1.0)?,
        x_max: bound("bounds.x_max", &cfg.bounds.x_max, nx, 1.0)?,
        u_min: bound("bounds.u_min", &cfg.bounds.u_min, nu, -1.0)?,
        u_max: bound("bounds.u_max", &cfg.bounds.u_max, nu, 1.0)?,
        du_min: bound("bounds.du_min", &cfg.bounds.du_min, nu, -1.0)?,
        du_max: bound("bounds.du_max", &cfg.bounds.du_max, nu, 1.0)?,
        r: refs[0].clone(),
        u_ref,
        x0,
        u_prev,
        e,
    };
    template.validate()?;

    Ok(Experiment {
        scenario: Scenario { template, ts, refs },
        plant,
        ctrl,
        settings: cfg.solver.settings(),
    })
}

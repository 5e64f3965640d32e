//! Closed-loop simulation: measure the plant, refresh the controller model
//! when the plant is nonlinear, solve the MPC problem warm-started from the
//! previous step, apply the first input and propagate the plant.

#![allow(non_snake_case)]

use std::time::Instant;

use cdal_core::{
    clamp, closed_loop_cost, compute_scaling, solve_with_scaling, CostSample, DiagonalScaling,
    MpcProblem, PrimalDualIterate, ProblemError, SolveError, SolverSettings,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cstr::CstrModel;
use crate::discretize::euler_discretize;

/// A closed-loop experiment: the controller problem template (initial state,
/// previous input and reference are rewritten every step) and the reference
/// trajectory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub template: MpcProblem,
    /// Sampling time in the plant's physical time unit.
    pub ts: f64,
    /// Per-step output references: one entry per executed step plus a final
    /// entry the last measurement is scored against.
    pub refs: Vec<DVector<f64>>,
}

impl Scenario {
    pub fn n_steps(&self) -> usize {
        self.refs.len().saturating_sub(1)
    }
}

/// The simulated plant. The discrete variant propagates the controller's own
/// model class (no plant-model mismatch); the reactor variant integrates the
/// nonlinear dynamics with fixed-step RK4, so the controller's Euler model is
/// deliberately wrong in a realistic way.
#[derive(Debug, Clone)]
pub enum Plant {
    Discrete {
        A: DMatrix<f64>,
        B: DMatrix<f64>,
        e: DVector<f64>,
    },
    Cstr {
        model: CstrModel,
        substeps: usize,
    },
}

impl Plant {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64, ts: f64) -> DVector<f64> {
        match self {
            Plant::Discrete { A, B, e } => A * x + B * u + e,
            Plant::Cstr { model, substeps } => {
                let next = model.rk4_step(x, u[0], t, ts, *substeps);
                if next.iter().any(|v| *v <= 0.0) {
                    log::warn!("reactor state left the physical region at t = {t}");
                }
                next
            }
        }
    }
}

/// How the controller obtains its prediction model each step.
#[derive(Debug, Clone)]
pub enum ControllerModel {
    /// Use the template's matrices unchanged (linear time-invariant loop).
    Fixed,
    /// Re-linearize the reactor at the current state and previous input,
    /// then Euler-discretize (successive linearization).
    SuccessiveLinearization { model: CstrModel },
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub settings: SolverSettings,
    /// Shift the previous solution one step as the next initial guess; off
    /// means cold start every step.
    pub warm_start: bool,
}

impl SimOptions {
    pub fn new(settings: SolverSettings) -> Self {
        SimOptions {
            settings,
            warm_start: true,
        }
    }
}

/// One executed control step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Time at the start of the step.
    pub t: f64,
    /// Plant state the controller measured.
    pub x: DVector<f64>,
    /// Output after applying `u`, scored against `r_next`.
    pub y_next: DVector<f64>,
    pub r_next: DVector<f64>,
    /// Applied input and its increment from the previous step.
    pub u: DVector<f64>,
    pub du: DVector<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Wall time of the solve call alone.
    pub solve_secs: f64,
    /// Wall time of model construction (linearization, discretization,
    /// augmentation) for this step.
    pub build_secs: f64,
}

/// Complete record of a closed-loop run.
#[derive(Debug, Clone)]
pub struct ClosedLoopLog {
    pub records: Vec<StepRecord>,
    /// Average realized stage cost over the run.
    pub cost: f64,
    /// Largest box violation of the applied inputs (zero by construction).
    pub max_input_violation: f64,
    /// Largest box violation of the applied input increments.
    pub max_du_violation: f64,
    /// Largest violation of the controller's state bounds by the actual
    /// plant trajectory.
    pub max_state_violation: f64,
}

/// Aggregate iteration and timing statistics over a run.
#[derive(Debug, Clone, Copy)]
pub struct IterStats {
    pub inner_avg: f64,
    pub inner_max: usize,
    pub outer_avg: f64,
    pub outer_max: usize,
    pub solve_avg_ms: f64,
    pub solve_max_ms: f64,
    pub build_avg_ms: f64,
    pub build_max_ms: f64,
}

impl ClosedLoopLog {
    pub fn iter_stats(&self) -> IterStats {
        let n = self.records.len().max(1) as f64;
        let mut s = IterStats {
            inner_avg: 0.0,
            inner_max: 0,
            outer_avg: 0.0,
            outer_max: 0,
            solve_avg_ms: 0.0,
            solve_max_ms: 0.0,
            build_avg_ms: 0.0,
            build_max_ms: 0.0,
        };
        for r in &self.records {
            s.inner_avg += r.inner_iters as f64 / n;
            s.inner_max = s.inner_max.max(r.inner_iters);
            s.outer_avg += r.outer_iters as f64 / n;
            s.outer_max = s.outer_max.max(r.outer_iters);
            let solve_ms = r.solve_secs * 1e3;
            let build_ms = r.build_secs * 1e3;
            s.solve_avg_ms += solve_ms / n;
            s.solve_max_ms = s.solve_max_ms.max(solve_ms);
            s.build_avg_ms += build_ms / n;
            s.build_max_ms = s.build_max_ms.max(build_ms);
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario must contain at least one step")]
    EmptyScenario,
    #[error("controller problem is invalid: {0}")]
    Problem(#[from] ProblemError),
    #[error("solver failed at step {step}: {source}")]
    Solver { step: usize, source: SolveError },
    #[error("plant state became non-finite at step {step}")]
    StateBlowUp { step: usize },
}

fn box_violation(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..v.len() {
        worst = worst.max(lo[i] - v[i]).max(v[i] - hi[i]);
    }
    worst.max(0.0)
}

/// Runs the closed loop for `scenario.n_steps()` steps.
pub fn simulate(
    scenario: &Scenario,
    plant: &Plant,
    ctrl: &ControllerModel,
    opts: &SimOptions,
) -> Result<ClosedLoopLog, SimError> {
    let n_steps = scenario.n_steps();
    if n_steps == 0 {
        return Err(SimError::EmptyScenario);
    }
    let mut problem = scenario.template.clone();
    problem.validate()?;

    let mut x = problem.x0.clone();
    let mut u_prev = problem.u_prev.clone();
    let mut iterate: Option<PrimalDualIterate> = None;
    let mut cached: Option<DiagonalScaling> = None;
    let mut records = Vec::with_capacity(n_steps);
    let mut samples = Vec::with_capacity(n_steps);
    let mut max_input_violation: f64 = 0.0;
    let mut max_du_violation: f64 = 0.0;
    let mut max_state_violation: f64 = 0.0;

    for k in 0..n_steps {
        let t = k as f64 * scenario.ts;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SimError::StateBlowUp { step: k });
        }

        let build_start = Instant::now();
        if let ControllerModel::SuccessiveLinearization { model } = ctrl {
            let ti = model.inlet_temperature(t);
            let (Ac, Bc, ec) = model.linearize(&x, u_prev[0], ti);
            let (Ad, Bd, ed) = euler_discretize(&Ac, &Bc, &ec, scenario.ts);
            if !Ad.iter().all(|v| v.is_finite()) || !ed.iter().all(|v| v.is_finite()) {
                return Err(SimError::StateBlowUp { step: k });
            }
            problem.A = Ad;
            problem.B = Bd;
            problem.e = ed;
        }
        problem.r = scenario.refs[k].clone();
        problem.x0 = x.clone();
        problem.u_prev = u_prev.clone();
        let m = problem.augment()?;
        let build_secs = build_start.elapsed().as_secs_f64();

        let mut it = match iterate.take() {
            Some(mut prev) if opts.warm_start => {
                prev.shift_warm_start(&m, &m.xh0);
                prev
            }
            _ => PrimalDualIterate::cold_start(&m),
        };

        // A time-invariant controller model has a time-invariant scaling.
        if matches!(ctrl, ControllerModel::Fixed) && opts.settings.use_precond && cached.is_none()
        {
            cached = Some(compute_scaling(&m)?);
        }

        let solve_start = Instant::now();
        let report = solve_with_scaling(&m, &mut it, &opts.settings, cached.as_ref())
            .map_err(|e| SimError::Solver { step: k, source: e })?;
        let solve_secs = solve_start.elapsed().as_secs_f64();

        // First increment, applied through an exact input box so hard input
        // limits hold regardless of the equality-residual tolerance.
        let mut u = &u_prev + &it.U[0];
        for i in 0..u.len() {
            u[i] = clamp(u[i], problem.u_min[i], problem.u_max[i]);
        }
        let du = &u - &u_prev;

        let x_next = plant.step(&x, &u, t, scenario.ts);
        let y_next = &problem.C * &x_next;
        let r_next = scenario.refs[k + 1].clone();

        max_input_violation =
            max_input_violation.max(box_violation(&u, &problem.u_min, &problem.u_max));
        max_du_violation =
            max_du_violation.max(box_violation(&du, &problem.du_min, &problem.du_max));
        max_state_violation =
            max_state_violation.max(box_violation(&x_next, &problem.x_min, &problem.x_max));

        samples.push(CostSample {
            y: y_next.clone(),
            r: r_next.clone(),
            u: u.clone(),
            u_ref: problem.u_ref.clone(),
            du: du.clone(),
        });
        records.push(StepRecord {
            t,
            x: x.clone(),
            y_next,
            r_next,
            u: u.clone(),
            du,
            outer_iters: report.outer_iters,
            inner_iters: report.inner_iters_total,
            solve_secs,
            build_secs,
        });

        iterate = Some(it);
        u_prev = u;
        x = x_next;
    }

    // Score the run without the first stage: its output is fixed by the
    // initial condition before the controller has acted, so it measures the
    // handoff rather than tracking quality.
    let scored = if samples.len() > 1 { &samples[1..] } else { &samples[..] };
    let cost = closed_loop_cost(&problem.W_y, &problem.W_u, &problem.W_du, scored)?;
    Ok(ClosedLoopLog {
        records,
        cost,
        max_input_violation,
        max_du_violation,
        max_state_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afti16;

    fn lti_plant(p: &MpcProblem) -> Plant {
        Plant::Discrete {
            A: p.A.clone(),
            B: p.B.clone(),
            e: p.e.clone(),
        }
    }

    #[test]
    fn equilibrium_with_zero_reference_stays_at_rest() {
        let mut scenario = afti16::scenario(8, 0, 0.0);
        for r in &mut scenario.refs {
            r.fill(0.0);
        }
        let plant = lti_plant(&scenario.template);
        let opts = SimOptions::new(SolverSettings {
            rho: 1.0,
            ..SolverSettings::default()
        });
        let log = simulate(&scenario, &plant, &ControllerModel::Fixed, &opts).unwrap();
        assert_eq!(log.records.len(), 8);
        assert_eq!(log.cost, 0.0);
        for rec in &log.records {
            assert_eq!(rec.u.amax(), 0.0);
            assert_eq!(rec.x.amax(), 0.0);
        }
    }

    #[test]
    fn increments_chain_exactly_through_the_run() {
        let scenario = afti16::scenario(12, 6, 10.0);
        let plant = lti_plant(&scenario.template);
        let opts = SimOptions::new(SolverSettings {
            rho: 1.0,
            ..SolverSettings::default()
        });
        let log = simulate(&scenario, &plant, &ControllerModel::Fixed, &opts).unwrap();
        assert_eq!(log.records.len(), 12);
        let mut u_prev = scenario.template.u_prev.clone();
        for rec in &log.records {
            assert_eq!(rec.du, &rec.u - &u_prev);
            u_prev = rec.u.clone();
        }
        assert_eq!(log.max_input_violation, 0.0);
    }

    #[test]
    fn empty_scenario_is_rejected() {
        let mut scenario = afti16::scenario(5, 2, 10.0);
        scenario.refs.truncate(1);
        let plant = lti_plant(&scenario.template);
        let opts = SimOptions::new(SolverSettings::default());
        assert!(matches!(
            simulate(&scenario, &plant, &ControllerModel::Fixed, &opts),
            Err(SimError::EmptyScenario)
        ));
    }
}

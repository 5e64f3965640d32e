//! Feature-ablation grid: reruns one closed-loop scenario under all eight
//! combinations of preconditioning, outer-loop acceleration and reverse inner
//! sweeps, so the contribution of each ingredient can be read off directly.

use cdal_core::SolverSettings;

use crate::harness::{simulate, ControllerModel, Plant, Scenario, SimError, SimOptions};

/// One cell of the grid. Names follow the convention: `0` is the plain
/// solver, `R` adds reverse sweeps, `A` adds acceleration, `P-` prefixes add
/// the preconditioner, and `full` enables everything.
#[derive(Debug, Clone, Copy)]
pub struct SchemeSpec {
    pub name: &'static str,
    pub use_precond: bool,
    pub use_acceleration: bool,
    pub use_reverse: bool,
}

pub const SCHEMES: [SchemeSpec; 8] = [
    SchemeSpec {
        name: "0",
        use_precond: false,
        use_acceleration: false,
        use_reverse: false,
    },
    SchemeSpec {
        name: "R",
        use_precond: false,
        use_acceleration: false,
        use_reverse: true,
    },
    SchemeSpec {
        name: "A",
        use_precond: false,
        use_acceleration: true,
        use_reverse: false,
    },
    SchemeSpec {
        name: "AR",
        use_precond: false,
        use_acceleration: true,
        use_reverse: true,
    },
    SchemeSpec {
        name: "P-0",
        use_precond: true,
        use_acceleration: false,
        use_reverse: false,
    },
    SchemeSpec {
        name: "P-R",
        use_precond: true,
        use_acceleration: false,
        use_reverse: true,
    },
    SchemeSpec {
        name: "P-A",
        use_precond: true,
        use_acceleration: true,
        use_reverse: false,
    },
    SchemeSpec {
        name: "full",
        use_precond: true,
        use_acceleration: true,
        use_reverse: true,
    },
];

/// Iteration statistics of one scheme over the whole closed-loop run.
/// Inner counts are coordinate-descent passes per MPC solve.
#[derive(Debug, Clone, Copy)]
pub struct SchemeResult {
    pub name: &'static str,
    pub outer_avg: f64,
    pub outer_max: usize,
    pub inner_avg: f64,
    pub inner_max: usize,
    pub solve_avg_ms: f64,
    pub solve_max_ms: f64,
    pub cost: f64,
}

pub fn scheme_settings(base: &SolverSettings, spec: &SchemeSpec) -> SolverSettings {
    SolverSettings {
        use_precond: spec.use_precond,
        use_acceleration: spec.use_acceleration,
        use_reverse: spec.use_reverse,
        ..base.clone()
    }
}

/// Runs all eight schemes on the same scenario. Cells are independent, so
/// they run on parallel threads; results come back in the fixed `SCHEMES`
/// order regardless.
pub fn run_ablation(
    scenario: &Scenario,
    plant: &Plant,
    ctrl: &ControllerModel,
    base: &SolverSettings,
) -> Result<Vec<SchemeResult>, SimError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = SCHEMES
            .iter()
            .map(|spec| {
                scope.spawn(move || -> Result<SchemeResult, SimError> {
                    let opts = SimOptions {
                        settings: scheme_settings(base, spec),
                        warm_start: true,
                    };
                    let log = simulate(scenario, plant, ctrl, &opts)?;
                    let st = log.iter_stats();
                    Ok(SchemeResult {
                        name: spec.name,
                        outer_avg: st.outer_avg,
                        outer_max: st.outer_max,
                        inner_avg: st.inner_avg,
                        inner_max: st.inner_max,
                        solve_avg_ms: st.solve_avg_ms,
                        solve_max_ms: st.solve_max_ms,
                        cost: log.cost,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation worker panicked"))
            .collect()
    })
}

/// Looks up a result by scheme name. Panics on unknown names; the table is
/// fixed at compile time so that is a programming error.
pub fn by_name<'a>(results: &'a [SchemeResult], name: &str) -> &'a SchemeResult {
    results
        .iter()
        .find(|r| r.name == name)
        .unwrap_or_else(|| panic!("unknown ablation scheme {name}"))
}

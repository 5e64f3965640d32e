//! End-to-end acceptance suite. Every test prints exactly one verdict line,
//! `criterion N (<name>): PASS|FAIL - <measurements>`, before asserting, so a
//! full run doubles as a scoreboard:
//!
//! ```text
//! cargo test -p cdal-sim --test acceptance -- --nocapture
//! ```

#![allow(non_snake_case)]

use std::time::Instant;

use cdal_core::{
    ccd_input_block, ccd_state_block, ccd_terminal_state, cd_full_pass, nesterov_alpha, solve,
    AugmentedModel, CdWorkspace, PrimalDualIterate, SolverSettings, SweepOrder,
};
use cdal_oracle::testgen::{random_mpc_problem, InstanceDims};
use cdal_oracle::{build_qp, eval_f_rho, solve_qp_reference, stack_duals};
use cdal_sim::ablation::run_ablation;
use cdal_sim::harness::{simulate, ClosedLoopLog, ControllerModel, Plant, SimOptions};
use cdal_sim::{afti16, cstr};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n} ({name}): {tag} - {detail}");
    assert!(pass, "criterion {n} ({name}): {tag} - {detail}");
}

fn reference_settings() -> SolverSettings {
    SolverSettings {
        rho: 0.1,
        eps_out: 1e-8,
        eps_in: 1e-10,
        ..SolverSettings::default()
    }
}

#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let settings = reference_settings();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut outside = 0usize;
    let mut worst_du: f64 = 0.0;
    let mut worst_obj: f64 = 0.0;
    for _ in 0..200 {
        let p = random_mpc_problem(&mut rng, InstanceDims::default());
        let m = p.augment().unwrap();
        let mut it = PrimalDualIterate::cold_start(&m);
        let report = solve(&m, &mut it, &settings).unwrap();

        let qp = build_qp(&m);
        let z_ref = solve_qp_reference(&qp, settings.rho).unwrap();
        let (U_ref, _) = qp.split(&z_ref);
        let du = (0..m.horizon)
            .map(|t| (&it.U[t] - &U_ref[t]).amax())
            .fold(0.0, f64::max);
        let obj_ref = qp.objective(&z_ref);
        let obj = (report.objective - obj_ref).abs() / (1.0 + obj_ref.abs());
        if du > 1e-3 || obj > 1e-4 {
            outside += 1;
        }
        worst_du = worst_du.max(du);
        worst_obj = worst_obj.max(obj);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "oracle equivalence",
        outside == 0 && secs < 60.0,
        &format!(
            "200 instances: {outside} outside tolerance, worst |dU| {worst_du:.2e} (<= 1e-3), \
             worst obj rel {worst_obj:.2e} (<= 1e-4), {secs:.1} s (< 60)"
        ),
    );
}

#[test]
fn criterion_2_monotone_inner_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut passes = 0usize;
    let mut worst_increase = f64::NEG_INFINITY;
    for k in 0..50 {
        let p = random_mpc_problem(&mut rng, InstanceDims::default());
        let m = p.augment().unwrap();
        let qp = build_qp(&m);
        let rho = rng.random_range(0.05..2.0);
        let hat: Vec<DVector<f64>> = (0..m.horizon)
            .map(|_| DVector::from_fn(m.state_dim(), |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let hat_stacked = stack_duals(&hat);
        let order = if k % 2 == 0 {
            SweepOrder::Reverse
        } else {
            SweepOrder::Forward
        };

        let ws = CdWorkspace::new(&m, rho).unwrap();
        let mut it = PrimalDualIterate::cold_start(&m);
        for t in 0..m.horizon {
            it.Lambda[t] = &hat[t] + m.residual(t, &it.X, &it.U);
        }
        let mut f_prev = eval_f_rho(&qp, &qp.assemble(&it.U, &it.X[1..]), &hat_stacked, rho);
        for _ in 0..300 {
            let res = cd_full_pass(&ws, &mut it, order);
            let f = eval_f_rho(&qp, &qp.assemble(&it.U, &it.X[1..]), &hat_stacked, rho);
            worst_increase = worst_increase.max(f - f_prev);
            passes += 1;
            f_prev = f;
            if res.sigma <= 1e-24 {
                break;
            }
        }
    }
    verdict(
        2,
        "monotone inner descent",
        worst_increase <= 1e-10,
        &format!(
            "50 instances, {passes} full passes, worst objective increase {worst_increase:.2e} \
             (<= 1e-10)"
        ),
    );
}

fn coupling_gap(m: &AugmentedModel, hat: &[DVector<f64>], it: &PrimalDualIterate) -> f64 {
    (0..m.horizon)
        .map(|t| {
            let expect = &hat[t] + m.residual(t, &it.X, &it.U);
            (&it.Lambda[t] - expect).amax()
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_3_coupling_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut blocks = 0usize;
    for _ in 0..10 {
        let p = random_mpc_problem(&mut rng, InstanceDims::default());
        let m = p.augment().unwrap();
        let rho = rng.random_range(0.05..2.0);
        let ws = CdWorkspace::new(&m, rho).unwrap();
        let mut it = PrimalDualIterate::cold_start(&m);
        for t in 0..m.horizon {
            it.U[t] = DVector::from_fn(m.input_dim(), |_, _| rng.random_range(-1.0..1.0));
            it.X[t + 1] = DVector::from_fn(m.state_dim(), |_, _| rng.random_range(-1.0..1.0));
        }
        let hat: Vec<DVector<f64>> = (0..m.horizon)
            .map(|_| DVector::from_fn(m.state_dim(), |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        for t in 0..m.horizon {
            it.Lambda[t] = &hat[t] + m.residual(t, &it.X, &it.U);
        }

        // Two full passes in the exact block order the reverse sweep uses,
        // re-checking every multiplier after each block: the second pass
        // starts from an already-swept iterate where many moves are zero.
        let T = m.horizon;
        let order = SweepOrder::Reverse;
        for _ in 0..2 {
            let mut sigma = 0.0;
            ccd_terminal_state(&ws, &mut it, &mut sigma, order);
            worst = worst.max(coupling_gap(&m, &hat, &it));
            blocks += 1;
            ccd_input_block(&ws, &mut it, T - 1, &mut sigma, order);
            worst = worst.max(coupling_gap(&m, &hat, &it));
            blocks += 1;
            for t in (0..T - 1).rev() {
                ccd_state_block(&ws, &mut it, t, &mut sigma, order);
                worst = worst.max(coupling_gap(&m, &hat, &it));
                blocks += 1;
                ccd_input_block(&ws, &mut it, t, &mut sigma, order);
                worst = worst.max(coupling_gap(&m, &hat, &it));
                blocks += 1;
            }
        }
    }
    verdict(
        3,
        "coupling invariant",
        worst <= 1e-10,
        &format!(
            "{blocks} block updates over 20 passes, worst |Lambda - (hat + residual)| \
             {worst:.2e} (<= 1e-10)"
        ),
    );
}

fn afti_plant(scenario: &cdal_sim::harness::Scenario) -> Plant {
    Plant::Discrete {
        A: scenario.template.A.clone(),
        B: scenario.template.B.clone(),
        e: scenario.template.e.clone(),
    }
}

fn max_abs_y1(log: &ClosedLoopLog) -> f64 {
    log.records
        .iter()
        .map(|r| r.y_next[0].abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_4_afti16_benchmark() {
    let start = Instant::now();
    let scenario = afti16::default_scenario();
    let plant = afti_plant(&scenario);
    let run = |rho: f64| {
        let opts = SimOptions::new(SolverSettings {
            rho,
            ..SolverSettings::default()
        });
        simulate(&scenario, &plant, &ControllerModel::Fixed, &opts).unwrap()
    };
    let hi = run(1.0);
    let lo = run(0.01);
    let secs = start.elapsed().as_secs_f64();

    let cost_hi_ok = (hi.cost - 42.5).abs() <= 0.01 * 42.5;
    let cost_lo_ok = (lo.cost - 42.618).abs() <= 0.01 * 42.618;
    let inputs_ok = hi.max_input_violation == 0.0 && lo.max_input_violation == 0.0;
    let y1 = max_abs_y1(&hi).max(max_abs_y1(&lo));
    verdict(
        4,
        "AFTI-16 benchmark",
        cost_hi_ok && cost_lo_ok && inputs_ok && y1 <= 0.5 + 1e-2 && secs < 30.0,
        &format!(
            "cost {:.4} at rho 1 (42.5 +/- 1%), {:.4} at rho 0.01 (42.618 +/- 1%), input \
             violation {:.1e}/{:.1e} (0 required), max |y1| {y1:.4} (<= 0.51), {secs:.1} s (< 30)",
            hi.cost, lo.cost, hi.max_input_violation, lo.max_input_violation
        ),
    );
}

#[test]
fn criterion_5_ablation_orderings() {
    let start = Instant::now();
    let scenario = afti16::default_scenario();
    let plant = afti_plant(&scenario);
    let base = SolverSettings {
        rho: 1.0,
        ..SolverSettings::default()
    };
    let results = run_ablation(&scenario, &plant, &ControllerModel::Fixed, &base).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let outer = |n: &str| cdal_sim::ablation::by_name(&results, n).outer_avg;
    let inner = |n: &str| cdal_sim::ablation::by_name(&results, n).inner_avg;

    // (a) Preconditioning cuts average outer iterations by at least 2x, with
    // and without acceleration (reverse sweeps on throughout).
    let pre_plain = outer("R") / outer("P-R");
    let pre_accel = outer("AR") / outer("full");
    let a_ok = pre_plain >= 2.0 && pre_accel >= 2.0;

    // (b) Acceleration cuts average outer iterations by at least 3x, with and
    // without preconditioning.
    let acc_plain = outer("R") / outer("AR");
    let acc_prec = outer("P-R") / outer("full");
    let b_ok = acc_plain >= 3.0 && acc_prec >= 3.0;

    // (c) Reverse sweeps reduce the average summed inner count, all else fixed.
    let rev_pairs = [("0", "R"), ("A", "AR"), ("P-0", "P-R"), ("P-A", "full")];
    let c_ok = rev_pairs.iter().all(|(fwd, rev)| inner(rev) < inner(fwd));

    // (d) All eight schemes track equally well: costs within 1%.
    let cost_lo = results.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
    let cost_hi = results.iter().map(|r| r.cost).fold(0.0, f64::max);
    let spread = (cost_hi - cost_lo) / cost_lo;
    let d_ok = spread <= 0.01;

    verdict(
        5,
        "ablation orderings",
        a_ok && b_ok && c_ok && d_ok && secs < 180.0,
        &format!(
            "precond outer ratios {pre_plain:.2}x/{pre_accel:.2}x (>= 2), accel outer ratios \
             {acc_plain:.2}x/{acc_prec:.2}x (>= 3), reverse lowers inner count in {}/4 pairs, \
             cost spread {:.2}% (<= 1%), {secs:.1} s (< 180)",
            rev_pairs
                .iter()
                .filter(|(fwd, rev)| inner(rev) < inner(fwd))
                .count(),
            spread * 100.0
        ),
    );
}

#[test]
fn criterion_6_cstr_benchmark() {
    let start = Instant::now();
    let model = cstr::CstrModel::default();
    let scenario = cstr::default_scenario(&model);
    let plant = Plant::Cstr {
        model,
        substeps: 10,
    };
    let opts = SimOptions::new(SolverSettings::default());
    let ctrl = ControllerModel::SuccessiveLinearization { model };
    let log = simulate(&scenario, &plant, &ctrl, &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();

    // The inlet temperature disturbance has a 40pi-minute period, 251 samples
    // at this rate; settling is judged on the mean concentration over the
    // final full period so the sinusoidal residual averages out.
    let tail = &log.records[log.records.len() - 251..];
    let settled = tail.iter().map(|r| r.y_next[0]).sum::<f64>() / tail.len() as f64;

    let cost_ok = (log.cost - 0.02202).abs() <= 0.1 * 0.02202;
    let settle_ok = (settled - 2.0).abs() <= 0.02 * 2.0;
    verdict(
        6,
        "CSTR benchmark",
        cost_ok && log.max_du_violation == 0.0 && settle_ok && secs < 30.0,
        &format!(
            "cost {:.5} (0.02202 +/- 10%), coolant rate violation {:.1e} (0 required), settled \
             C_A {settled:.4} (2.0 +/- 2%), {secs:.1} s (< 30)",
            log.cost, log.max_du_violation
        ),
    );
}

#[test]
fn criterion_7_preconditioner_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = random_mpc_problem(&mut rng, InstanceDims::default());
        let m = p.augment().unwrap();
        let run = |use_precond: bool| {
            let settings = SolverSettings {
                use_precond,
                ..reference_settings()
            };
            let mut it = PrimalDualIterate::cold_start(&m);
            solve(&m, &mut it, &settings).unwrap();
            it
        };
        let on = run(true);
        let off = run(false);
        let gap = (0..m.horizon)
            .map(|t| (&on.U[t] - &off.U[t]).amax())
            .fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    let secs = start.elapsed().as_secs_f64();
    // Both runs stop at the same outer tolerance on the squared residual, so
    // each sits within ~sqrt(eps_out) of the shared minimizer; 10x that
    // length is the agreement bound.
    let tol = 10.0 * 1e-8f64.sqrt();
    verdict(
        7,
        "preconditioner equivalence",
        worst <= tol,
        &format!("50 instances, worst scaled-vs-plain |dU| {worst:.2e} (<= {tol:.0e}), {secs:.1} s"),
    );
}

#[test]
fn criterion_8_nesterov_sequence() {
    let mut a_lib = 1.0f64;
    let mut a_direct = 1.0f64;
    let mut worst: f64 = 0.0;
    let mut growth_ok = true;
    for k in 1..=100 {
        growth_ok &= a_direct >= (k as f64 + 1.0) / 2.0;
        worst = worst.max((a_lib - a_direct).abs());
        a_lib = nesterov_alpha(a_lib);
        a_direct = 0.5 * (1.0 + (1.0 + 4.0 * a_direct * a_direct).sqrt());
    }
    worst = worst.max((a_lib - a_direct).abs());
    verdict(
        8,
        "Nesterov sequence",
        worst <= 1e-12 && growth_ok,
        &format!(
            "max |alpha - direct recursion| {worst:.1e} over 100 steps (<= 1e-12), alpha_k >= \
             (k+1)/2 for k <= 100: {growth_ok}"
        ),
    );
}

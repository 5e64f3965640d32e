//! Exhaustive active-set enumeration for very small box QPs.
//!
//! Every combination of (at lower bound / at upper bound / free) per
//! coordinate is tried: the free coordinates are solved through the
//! equality-constrained KKT system and the candidate is kept when it is
//! primal feasible and its bound multipliers carry the right signs. On a
//! convex problem any such point is globally optimal, which makes this a
//! slow but independent check on the iterative reference solver. Intended
//! for `n_z <= 6` (3^6 = 729 patterns).

use nalgebra::{DMatrix, DVector};

use crate::ExplicitQp;

const FEAS_TOL: f64 = 1e-9;
const SIGN_TOL: f64 = 1e-7;

#[derive(Clone, Copy, PartialEq)]
enum Activity {
    Lower,
    Upper,
    Free,
}

/// Finds the global minimizer by trying every bound-activity pattern.
/// Returns `None` when no pattern produces a KKT-consistent point (an
/// infeasible or degenerate instance).
pub fn solve_qp_brute(qp: &ExplicitQp) -> Option<DVector<f64>> {
    let n = qp.n_z();
    assert!(n <= 8, "pattern enumeration is exponential; keep n_z small");
    let nc = qp.n_c();

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut pattern = vec![Activity::Free; n];

    let total = 3usize.pow(n as u32);
    'patterns: for code in 0..total {
        let mut c = code;
        for slot in pattern.iter_mut() {
            *slot = match c % 3 {
                0 => Activity::Free,
                1 => Activity::Lower,
                _ => Activity::Upper,
            };
            c /= 3;
        }
        // Patterns pinning a coordinate to an infinite bound are meaningless.
        for i in 0..n {
            match pattern[i] {
                Activity::Lower if qp.lo[i] == f64::NEG_INFINITY => continue 'patterns,
                Activity::Upper if qp.hi[i] == f64::INFINITY => continue 'patterns,
                _ => {}
            }
        }

        let free: Vec<usize> = (0..n)
            .filter(|&i| pattern[i] == Activity::Free)
            .collect();
        let nf = free.len();

        let mut z = DVector::zeros(n);
        for i in 0..n {
            z[i] = match pattern[i] {
                Activity::Lower => qp.lo[i],
                Activity::Upper => qp.hi[i],
                Activity::Free => 0.0,
            };
        }

        // Solve for the free block and the equality multipliers:
        //   [ H_ff  G_f' ] [ z_f ]   [ -h_f - H_fp z_p ]
        //   [ G_f    0   ] [ nu  ] = [  g - G_p z_p    ]
        let mut K = DMatrix::zeros(nf + nc, nf + nc);
        let mut rhs = DVector::zeros(nf + nc);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                K[(a, b)] = qp.H[(i, j)];
            }
            for r in 0..nc {
                K[(a, nf + r)] = qp.G[(r, i)];
                K[(nf + r, a)] = qp.G[(r, i)];
            }
            let mut v = -qp.h[i];
            for j in 0..n {
                if pattern[j] != Activity::Free {
                    v -= qp.H[(i, j)] * z[j];
                }
            }
            rhs[a] = v;
        }
        for r in 0..nc {
            let mut v = qp.g[r];
            for j in 0..n {
                if pattern[j] != Activity::Free {
                    v -= qp.G[(r, j)] * z[j];
                }
            }
            rhs[nf + r] = v;
        }

        let nu: DVector<f64>;
        if nf + nc > 0 {
            let lu = K.full_piv_lu();
            match lu.solve(&rhs) {
                Some(sol) => {
                    for (a, &i) in free.iter().enumerate() {
                        z[i] = sol[a];
                    }
                    nu = sol.rows(nf, nc).clone_owned();
                }
                None => continue 'patterns,
            }
        } else {
            nu = DVector::zeros(0);
        }

        // Primal feasibility: box on free coordinates, equalities overall.
        for &i in &free {
            if z[i] < qp.lo[i] - FEAS_TOL || z[i] > qp.hi[i] + FEAS_TOL {
                continue 'patterns;
            }
        }
        if nc > 0 && qp.residual(&z).amax() > FEAS_TOL {
            continue 'patterns;
        }

        // Bound multiplier signs: gradient of the Lagrangian at pinned
        // coordinates must push into the box.
        let lagr_grad = &qp.H * &z + &qp.h + qp.G.transpose() * &nu;
        for i in 0..n {
            match pattern[i] {
                Activity::Lower if lagr_grad[i] < -SIGN_TOL => continue 'patterns,
                Activity::Upper if lagr_grad[i] > SIGN_TOL => continue 'patterns,
                _ => {}
            }
        }

        let obj = qp.objective(&z);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, z));
        }
    }

    best.map(|(_, z)| z)
}

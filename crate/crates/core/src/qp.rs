//! Dense strictly convex QP with box constraints:
//!
//! ```text
//!     minimize    ½ uᵀHu + fᵀu
//!     subject to  lb ≤ u ≤ ub
//! ```
//!
//! Primal active-set method. The working set holds variables pinned at a
//! bound; free variables are obtained from an exact Cholesky solve. Working-set
//! changes use the smallest-index rule so the solver is bitwise deterministic.
//! If the working set changes more than `10·d` times the solve switches to
//! projected gradient with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// `‖u − clip(u − (Hu + f), lb, ub)‖_∞`.
pub fn kkt_residual(h: &DMatrix<f64>, f: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let g = h * u + f;
    (0..u.len())
        .map(|i| (u[i] - (u[i] - g[i]).clamp(lb[i], ub[i])).abs())
        .fold(0.0, f64::max)
}

pub fn objective(h: &DMatrix<f64>, f: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * u.dot(&(h * u)) + f.dot(u)
}

pub fn solve_box(h: &DMatrix<f64>, f: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>, tol: f64) -> Result<QpSolution> {
    solve_box_from(h, f, lb, ub, tol, None)
}

/// [`solve_box`] started from `initial` (clipped into the box) instead of the
/// projection of the origin.
pub fn solve_box_from(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    tol: f64,
    initial: Option<&DVector<f64>>,
) -> Result<QpSolution> {
    let d = f.len();
    linalg::check_square(h, d, "solve_box H")?;
    linalg::check_len(lb, d, "solve_box lb")?;
    linalg::check_len(ub, d, "solve_box ub")?;
    if let Some(u0) = initial {
        linalg::check_len(u0, d, "solve_box initial")?;
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("QP tolerance must be positive, got {tol}")));
    }
    if h.iter().chain(f.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("QP data"));
    }
    if (0..d).any(|i| !(lb[i] <= ub[i])) {
        return Err(Error::InvalidConfig("QP box has lb > ub".into()));
    }
    linalg::check_symmetric(h, "QP Hessian")?;
    let min_eig = linalg::min_eigenvalue(h);
    if !(min_eig > 1e-12 * h.norm()) {
        return Err(Error::NotPositiveDefinite { what: "QP Hessian", min_eig });
    }

    let max_iter = 10 * d * d + 100;
    let mut u = DVector::from_fn(d, |i, _| initial.map_or(0.0, |u0| u0[i]).clamp(lb[i], ub[i]));
    let mut state = vec![Bound::Free; d];
    // Variables starting exactly on a bound enter the working set.
    for i in 0..d {
        if lb[i] == ub[i] || (initial.is_some() && u[i] == lb[i]) {
            state[i] = Bound::Lower;
        } else if initial.is_some() && u[i] == ub[i] {
            state[i] = Bound::Upper;
        }
    }

    let mut iterations = 0;
    let mut changes = 0;
    let mut converged = false;
    while iterations < max_iter && changes <= 10 * d {
        iterations += 1;
        let free: Vec<usize> = (0..d).filter(|&i| state[i] == Bound::Free).collect();
        let target = free_subproblem(h, f, &u, &free)?;

        // Largest feasible step towards the subproblem minimizer.
        let mut step = 1.0;
        let mut blocking: Option<(usize, Bound)> = None;
        for (k, &i) in free.iter().enumerate() {
            let delta = target[k] - u[i];
            let (ratio, bound) = if delta < 0.0 {
                ((lb[i] - u[i]) / delta, Bound::Lower)
            } else if delta > 0.0 {
                ((ub[i] - u[i]) / delta, Bound::Upper)
            } else {
                continue;
            };
            if ratio < step {
                step = ratio.max(0.0);
                blocking = Some((i, bound));
            }
        }

        if let Some((i, bound)) = blocking {
            for (k, &j) in free.iter().enumerate() {
                u[j] += step * (target[k] - u[j]);
            }
            u[i] = if bound == Bound::Lower { lb[i] } else { ub[i] };
            state[i] = bound;
            changes += 1;
            continue;
        }

        for (k, &j) in free.iter().enumerate() {
            u[j] = target[k].clamp(lb[j], ub[j]);
        }

        // Release the first pinned variable whose multiplier has the wrong sign.
        let g = h * &u + f;
        let release = (0..d).find(|&i| {
            lb[i] < ub[i]
                && match state[i] {
                    Bound::Lower => g[i] < 0.0,
                    Bound::Upper => g[i] > 0.0,
                    Bound::Free => false,
                }
        });
        match release {
            Some(i) => {
                state[i] = Bound::Free;
                changes += 1;
            }
            None => {
                converged = true;
                break;
            }
        }
    }

    let mut residual = kkt_residual(h, f, lb, ub, &u);
    if !converged || residual > tol {
        let (refined, extra) = projected_gradient(h, f, lb, ub, tol, u, max_iter)?;
        u = refined;
        iterations += extra;
        residual = kkt_residual(h, f, lb, ub, &u);
    }
    if !(residual <= tol) {
        return Err(Error::NotConverged { iterations, residual });
    }

    let active_lower = (0..d).filter(|&i| u[i] == lb[i]).collect();
    let active_upper = (0..d).filter(|&i| u[i] == ub[i] && lb[i] < ub[i]).collect();
    Ok(QpSolution { u_star: u, kkt_residual: residual, iterations, active_lower, active_upper })
}

/// Minimizer over the free coordinates with the pinned ones held fixed.
fn free_subproblem(h: &DMatrix<f64>, f: &DVector<f64>, u: &DVector<f64>, free: &[usize]) -> Result<DVector<f64>> {
    let k = free.len();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let d = u.len();
    let mut h_ff = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            h_ff[(a, b)] = h[(i, j)];
        }
        let mut r = -f[i];
        for j in 0..d {
            if !free.contains(&j) {
                r -= h[(i, j)] * u[j];
            }
        }
        rhs[a] = r;
    }
    let chol = h_ff.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "QP reduced Hessian",
        min_eig: f64::NAN,
    })?;
    Ok(chol.solve(&rhs))
}

fn projected_gradient(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    tol: f64,
    mut u: DVector<f64>,
    max_iter: usize,
) -> Result<(DVector<f64>, usize)> {
    let clip = |v: DVector<f64>| DVector::from_fn(v.len(), |i, _| v[i].clamp(lb[i], ub[i]));
    let mut step = 1.0 / linalg::max_eigenvalue(h);
    for it in 0..max_iter * 100 {
        if kkt_residual(h, f, lb, ub, &u) <= tol {
            return Ok((u, it));
        }
        let g = h * &u + f;
        let obj = objective(h, f, &u);
        let mut t = step * 4.0;
        loop {
            let cand = clip(&u - &g * t);
            let decrease = g.dot(&(&cand - &u));
            if objective(h, f, &cand) <= obj + 1e-4 * decrease || t < 1e-20 {
                u = cand;
                step = t;
                break;
            }
            t *= 0.5;
        }
    }
    let residual = kkt_residual(h, f, lb, ub, &u);
    Err(Error::NotConverged { iterations: max_iter * 100, residual })
}

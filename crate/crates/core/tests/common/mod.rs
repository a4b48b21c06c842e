//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use dualmpc_core::{MpcConfig, ParamBelief, Plant};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn paper_plant() -> Plant {
    Plant::double_integrator(0.1, 5e-4).unwrap()
}

pub fn paper_prior(plant: &Plant) -> ParamBelief {
    let a0 = plant.a_star() + DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.25]);
    let b0 = plant.b_star() + DMatrix::from_row_slice(2, 1, &[0.1, 0.25]);
    ParamBelief::from_model(&a0, &b0, 1.0).unwrap()
}

pub fn paper_cfg() -> MpcConfig {
    MpcConfig::paper_default()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// `BBᵀ/p + δI` with `δ ∈ [0.01, 1]`.
pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let b = random_matrix(rng, p, p);
    let delta = rng.random_range(0.01..1.0);
    let s = &b * b.transpose() / p as f64 + DMatrix::identity(p, p) * delta;
    (&s + s.transpose()) * 0.5
}

/// Explicit Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// `zzᵀ ⊗ I_n`.
pub fn excitation(z: &DVector<f64>, n: usize) -> DMatrix<f64> {
    kron(&(z * z.transpose()), &DMatrix::identity(n, n))
}

type Dd = Vec<Vec<TwoFloat>>;

fn to_dd(m: &DMatrix<f64>) -> Dd {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| TwoFloat::from(m[(i, j)])).collect()).collect()
}

/// Gauss-Jordan inverse in double-double arithmetic; also returns the
/// determinant.
fn dd_inverse(mut a: Dd) -> (Dd, TwoFloat) {
    let p = a.len();
    let mut inv: Dd = (0..p)
        .map(|i| (0..p).map(|j| TwoFloat::from(if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    let mut det = TwoFloat::from(1.0);
    for col in 0..p {
        let pivot = (col..p).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap()).unwrap();
        if pivot != col {
            a.swap(pivot, col);
            inv.swap(pivot, col);
            det = -det;
        }
        let d = a[col][col];
        det *= d;
        for j in 0..p {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..p {
            if i == col {
                continue;
            }
            let factor = a[i][col];
            for j in 0..p {
                let (ac, ic) = (a[col][j], inv[col][j]);
                a[i][j] -= factor * ac;
                inv[i][j] -= factor * ic;
            }
        }
    }
    (inv, det)
}

/// Information-form covariance `(Σ⁻¹ + (zzᵀ⊗I)/σ²)⁻¹`, evaluated with
/// explicit inverses in double-double precision.
pub fn information_form_update(sigma: &DMatrix<f64>, z: &DVector<f64>, n: usize, sigma_w2: f64) -> DMatrix<f64> {
    let p = sigma.nrows();
    let (sigma_inv, _) = dd_inverse(to_dd(sigma));
    let e = excitation(z, n);
    let info: Dd = (0..p)
        .map(|i| (0..p).map(|j| sigma_inv[i][j] + TwoFloat::from(e[(i, j)]) / TwoFloat::from(sigma_w2)).collect())
        .collect();
    let (post, _) = dd_inverse(info);
    DMatrix::from_fn(p, p, |i, j| post[i][j].hi())
}

/// `log det(Σ_prior) − log det(Σ_post)` with `Σ_post` from the information
/// form, all in double-double.
pub fn information_gain_oracle(sigma: &DMatrix<f64>, z: &DVector<f64>, n: usize, sigma_w2: f64) -> f64 {
    let p = sigma.nrows();
    let (sigma_inv, det_prior) = dd_inverse(to_dd(sigma));
    let e = excitation(z, n);
    let info: Dd = (0..p)
        .map(|i| (0..p).map(|j| sigma_inv[i][j] + TwoFloat::from(e[(i, j)]) / TwoFloat::from(sigma_w2)).collect())
        .collect();
    let (_, det_info) = dd_inverse(info);
    // log det Σ⁺⁻¹ − log det Σ⁻¹ = log(det(info)·det(Σ))
    (det_info * det_prior).hi().ln()
}

pub fn log_det_lu(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant().ln()
}

pub fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Exhaustive active-set oracle: every assignment of {lower, free, upper} to
/// the `d` coordinates is solved exactly; the best feasible candidate wins.
pub fn qp_enumeration_oracle(h: &DMatrix<f64>, f: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> DVector<f64> {
    let d = f.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..3usize.pow(d as u32) {
        let mut pattern = vec![0u8; d];
        let mut c = code;
        for p in pattern.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let mut u = DVector::zeros(d);
        let free: Vec<usize> = (0..d).filter(|&i| pattern[i] == 1).collect();
        for i in 0..d {
            match pattern[i] {
                0 => u[i] = lb[i],
                2 => u[i] = ub[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let h_ff = DMatrix::from_fn(k, k, |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(k, |a, _| {
                let i = free[a];
                -f[i] - (0..d).filter(|j| !free.contains(j)).map(|j| h[(i, j)] * u[j]).sum::<f64>()
            });
            let sol = h_ff.lu().solve(&rhs).unwrap();
            for (a, &i) in free.iter().enumerate() {
                u[i] = sol[a];
            }
        }
        if (0..d).all(|i| u[i] >= lb[i] - 1e-12 && u[i] <= ub[i] + 1e-12) {
            let val = 0.5 * u.dot(&(h * &u)) + f.dot(&u);
            if best.as_ref().is_none_or(|(b, _)| val < *b) {
                best = Some((val, u));
            }
        }
    }
    best.unwrap().1
}

/// `Σ_{k<N} z_kᵀ L z_k + x_Nᵀ P x_N` by explicit rollout.
pub fn rollout_objective(
    x0: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    stage: &DMatrix<f64>,
    terminal: &DMatrix<f64>,
    u: &DVector<f64>,
) -> f64 {
    let (n, m) = (a.nrows(), b.ncols());
    let horizon = u.len() / m;
    let mut x = x0.clone();
    let mut total = 0.0;
    for k in 0..horizon {
        let uk = u.rows(k * m, m).into_owned();
        let mut z = DVector::zeros(n + m);
        z.rows_mut(0, n).copy_from(&x);
        z.rows_mut(n, m).copy_from(&uk);
        total += z.dot(&(stage * &z));
        x = a * &x + b * &uk;
    }
    total + x.dot(&(terminal * &x))
}

/// Step-by-step prediction of `[x₁; …; x_N]`.
pub fn rollout_states(x0: &DVector<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    let (n, m) = (a.nrows(), b.ncols());
    let horizon = u.len() / m;
    let mut out = DVector::zeros(horizon * n);
    let mut x = x0.clone();
    for k in 0..horizon {
        x = a * &x + b * u.rows(k * m, m);
        out.rows_mut(k * n, n).copy_from(&x);
    }
    out
}

pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("[{}] criterion {id:>2}: {name} ({detail})", if pass { "PASS" } else { "FAIL" });
}

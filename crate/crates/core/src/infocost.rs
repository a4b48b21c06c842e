//! Information-gain quantities and the covariance-shaped stage cost.
//!
//! The exact one-step gain is `log det(I + Σ(zzᵀ⊗I_n)/σ²)`; its first-order
//! (trace) approximation is a quadratic form `zᵀW(Σ)z`, which is what lets the
//! dual controller remain a QP.

use nalgebra::{DMatrix, DVector};

use crate::belief::regressor;
use crate::error::{Error, Result};
use crate::linalg::{self, check_square};

/// Relative threshold of the positive-definiteness test on `L`.
pub const PD_REL_TOL: f64 = 1e-12;
/// Minimum eigenvalue the fallback search keeps `L` above.
pub const FALLBACK_MIN_EIG: f64 = 1e-8;
pub const FALLBACK_BISECTIONS: usize = 40;
pub const FALLBACK_SHRINK: f64 = 0.9;

fn check_sigma(sigma: &DMatrix<f64>, n: usize, z_len: usize, sigma_w2: f64) -> Result<()> {
    check_square(sigma, n * z_len, "information gain Sigma")?;
    if !(sigma_w2 > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma_w2 must be positive, got {sigma_w2}")));
    }
    Ok(())
}

/// `log det(I + Σ(zzᵀ⊗I_n)/σ²)`, evaluated through the equivalent `n × n`
/// determinant `det(I_n + ΦΣΦᵀ/σ²)`.
pub fn exact_info_gain(z: &DVector<f64>, sigma: &DMatrix<f64>, sigma_w2: f64, n: usize) -> Result<f64> {
    check_sigma(sigma, n, z.len(), sigma_w2)?;
    let phi = regressor(z, n)?.into_inner();
    let inner = DMatrix::identity(n, n) + &phi * sigma * phi.transpose() / sigma_w2;
    let chol = linalg::symmetrize(&inner)
        .cholesky()
        .ok_or(Error::NonFinite("information gain determinant"))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return Err(Error::NonFinite("information gain determinant"));
    }
    Ok(logdet.max(0.0))
}

/// `tr(Σ(zzᵀ⊗I_n))/σ²`.
pub fn approx_info_gain(z: &DVector<f64>, sigma: &DMatrix<f64>, sigma_w2: f64, n: usize) -> Result<f64> {
    check_sigma(sigma, n, z.len(), sigma_w2)?;
    let phi = regressor(z, n)?.into_inner();
    Ok((&phi * sigma * phi.transpose()).trace() / sigma_w2)
}

/// `W(Σ)` with `[W]_ij = tr(Σ_ij)/σ²` over the `n × n` blocks of `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoWeight(DMatrix<f64>);

impl InfoWeight {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn quad_form(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.0 * z))
    }
}

pub fn weight_matrix(sigma: &DMatrix<f64>, sigma_w2: f64, n: usize, m: usize) -> Result<InfoWeight> {
    let k = n + m;
    check_sigma(sigma, n, k, sigma_w2)?;
    let w = DMatrix::from_fn(k, k, |i, j| sigma.view((i * n, j * n), (n, n)).trace() / sigma_w2);
    Ok(InfoWeight(linalg::symmetrize(&w)))
}

/// `L = blkdiag(Q, R) − αW`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCost {
    l: DMatrix<f64>,
    min_eig: f64,
}

impl StageCost {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    /// The regulation-only cost `blkdiag(Q, R)`.
    pub fn regulation(q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        check_weights(q, r)?;
        Self::checked(linalg::block_diag(q, r))
    }

    fn checked(l: DMatrix<f64>) -> Result<Self> {
        let min_eig = linalg::min_eigenvalue(&l);
        if !(min_eig > PD_REL_TOL * l.norm()) {
            return Err(Error::NotPositiveDefinite { what: "stage cost L", min_eig });
        }
        Ok(Self { l, min_eig })
    }
}

fn check_weights(q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    check_square(q, q.nrows(), "stage cost Q")?;
    check_square(r, r.nrows(), "stage cost R")?;
    linalg::check_symmetric(q, "Q")?;
    linalg::check_symmetric(r, "R")?;
    Ok(())
}

pub fn stage_cost_matrix(q: &DMatrix<f64>, r: &DMatrix<f64>, alpha: f64, w: &InfoWeight) -> Result<StageCost> {
    check_weights(q, r)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha must be nonnegative, got {alpha}")));
    }
    let base = linalg::block_diag(q, r);
    check_square(w.as_matrix(), base.nrows(), "stage cost W")?;
    if alpha == 0.0 {
        return StageCost::checked(base);
    }
    StageCost::checked(base - w.as_matrix() * alpha)
}

/// Dual stage cost with the exploration weight actually applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DualStageCost {
    pub cost: StageCost,
    pub alpha_eff: f64,
    pub fallback: bool,
}

/// Like [`stage_cost_matrix`], but when `blkdiag(Q,R) − αW` is not positive
/// definite the weight is reduced to `0.9·α_max`, where `α_max` is the largest
/// weight (found by bisection) keeping `λ_min(L) ≥ 1e-8`.
pub fn dual_stage_cost(q: &DMatrix<f64>, r: &DMatrix<f64>, alpha: f64, w: &InfoWeight) -> Result<DualStageCost> {
    match stage_cost_matrix(q, r, alpha, w) {
        Ok(cost) => Ok(DualStageCost { cost, alpha_eff: alpha, fallback: false }),
        Err(Error::NotPositiveDefinite { .. }) => {
            let alpha_max = max_feasible_alpha(q, r, alpha, w);
            let alpha_eff = FALLBACK_SHRINK * alpha_max;
            let cost = stage_cost_matrix(q, r, alpha_eff, w)?;
            Ok(DualStageCost { cost, alpha_eff, fallback: true })
        }
        Err(e) => Err(e),
    }
}

/// Largest `a ∈ [0, alpha]` with `λ_min(blkdiag(Q,R) − aW) ≥ 1e-8`.
pub fn max_feasible_alpha(q: &DMatrix<f64>, r: &DMatrix<f64>, alpha: f64, w: &InfoWeight) -> f64 {
    let base = linalg::block_diag(q, r);
    let feasible = |a: f64| linalg::min_eigenvalue(&(&base - w.as_matrix() * a)) >= FALLBACK_MIN_EIG;
    let (mut lo, mut hi) = (0.0, alpha);
    for _ in 0..FALLBACK_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn paper_q() -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0]))
    }

    #[test]
    fn gains_vanish_without_excitation() {
        let sigma = DMatrix::identity(6, 6);
        let z = DVector::zeros(3);
        assert_eq!(exact_info_gain(&z, &sigma, 1.0, 2).unwrap(), 0.0);
        assert_eq!(approx_info_gain(&z, &sigma, 1.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn scalar_state_gains() {
        let sigma = DMatrix::identity(2, 2);
        let z = DVector::from_vec(vec![1.0, 0.0]);
        assert_abs_diff_eq!(exact_info_gain(&z, &sigma, 1.0, 1).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(approx_info_gain(&z, &sigma, 1.0, 1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_matrix_examples() {
        let w = weight_matrix(&DMatrix::zeros(6, 6), 1.0, 2, 1).unwrap();
        assert_eq!(w.as_matrix(), &DMatrix::zeros(3, 3));
        let w = weight_matrix(&DMatrix::identity(6, 6), 1.0, 2, 1).unwrap();
        assert_eq!(w.as_matrix(), &(DMatrix::identity(3, 3) * 2.0));
        let w = weight_matrix(&DMatrix::identity(6, 6), 5e-4, 2, 1).unwrap();
        assert_abs_diff_eq!((w.as_matrix() - DMatrix::identity(3, 3) * 4000.0).amax(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn weight_matrix_dimension_mismatch() {
        assert!(weight_matrix(&DMatrix::identity(5, 5), 1.0, 2, 1).is_err());
    }

    #[test]
    fn zero_alpha_recovers_regulation_cost() {
        let w = weight_matrix(&DMatrix::identity(6, 6), 1.0, 2, 1).unwrap();
        let l = stage_cost_matrix(&paper_q(), &DMatrix::identity(1, 1), 0.0, &w).unwrap();
        assert_eq!(l.as_matrix(), &DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0, 1.0])));
    }

    #[test]
    fn indefinite_stage_cost_is_rejected() {
        let w = weight_matrix(&DMatrix::identity(6, 6), 1.0, 2, 1).unwrap();
        let err = stage_cost_matrix(&paper_q(), &DMatrix::identity(1, 1), 1.0, &w).unwrap_err();
        match err {
            Error::NotPositiveDefinite { min_eig, .. } => assert_abs_diff_eq!(min_eig, -1.0, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn small_alpha_is_positive_definite() {
        let w = weight_matrix(&DMatrix::identity(6, 6), 1.0, 2, 1).unwrap();
        let l = stage_cost_matrix(&paper_q(), &DMatrix::identity(1, 1), 0.1, &w).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![9.8, 0.8, 0.8]));
        assert_abs_diff_eq!((l.as_matrix() - expected).amax(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.min_eigenvalue(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn fallback_shrinks_alpha_for_prior_covariance() {
        // W(Σ₀) = 4000·I, so α_max = (1 − 1e-8)/4000.
        let w = weight_matrix(&DMatrix::identity(6, 6), 5e-4, 2, 1).unwrap();
        let d = dual_stage_cost(&paper_q(), &DMatrix::identity(1, 1), 1.0, &w).unwrap();
        assert!(d.fallback);
        let alpha_max = (1.0 - FALLBACK_MIN_EIG) / 4000.0;
        // bisection over [0, 1] resolves α_max to 2⁻⁴⁰
        assert!((d.alpha_eff - 0.9 * alpha_max).abs() <= 0.9 * 2f64.powi(-40));
        assert!(d.cost.min_eigenvalue() > 0.09);
    }

    #[test]
    fn no_fallback_when_already_definite() {
        let w = weight_matrix(&DMatrix::identity(6, 6), 1.0, 2, 1).unwrap();
        let d = dual_stage_cost(&paper_q(), &DMatrix::identity(1, 1), 0.1, &w).unwrap();
        assert!(!d.fallback);
        assert_eq!(d.alpha_eff, 0.1);
    }

    #[test]
    fn negative_alpha_is_a_config_error() {
        let w = weight_matrix(&DMatrix::identity(6, 6), 1.0, 2, 1).unwrap();
        assert!(matches!(
            stage_cost_matrix(&paper_q(), &DMatrix::identity(1, 1), -1.0, &w),
            Err(Error::InvalidConfig(_))
        ));
    }
}

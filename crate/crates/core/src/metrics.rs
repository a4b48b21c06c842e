//! Separation and validation metrics computed from shadow policy solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief;
use crate::error::{Error, Result};
use crate::linalg::check_len;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Separation gap `‖u_dual − u_ce‖₂`.
    pub s: f64,
    /// Covariance sensitivity (normalized finite difference).
    pub g: f64,
    pub e_par: f64,
    pub m_orc: f64,
    pub trace_sigma: f64,
    pub j_reg_cum: f64,
}

fn distance(a: &DVector<f64>, b: &DVector<f64>, context: &'static str) -> Result<f64> {
    check_len(b, a.len(), context)?;
    Ok((a - b).norm())
}

pub fn separation_gap(u_dual: &DVector<f64>, u_ce: &DVector<f64>) -> Result<f64> {
    distance(u_dual, u_ce, "separation_gap")
}

pub fn oracle_mismatch(u_applied: &DVector<f64>, u_oracle: &DVector<f64>) -> Result<f64> {
    distance(u_applied, u_oracle, "oracle_mismatch")
}

/// `‖mat(θ̂) − Θ*‖_F`.
pub fn parameter_error(theta_hat: &DVector<f64>, theta_star: &DMatrix<f64>) -> Result<f64> {
    let star = belief::vec(theta_star);
    check_len(theta_hat, star.len(), "parameter_error")?;
    Ok((theta_hat - star).norm())
}

/// `‖π(x, θ̂, (1+ε)Σ) − π(x, θ̂, Σ)‖₂ / (ε‖Σ‖_F)`, with `dual_policy` mapping a
/// covariance to the dual input at fixed `(x, θ̂)`. Defined as 0 when `Σ = 0`.
pub fn covariance_sensitivity<F>(sigma: &DMatrix<f64>, epsilon: f64, mut dual_policy: F) -> Result<f64>
where
    F: FnMut(&DMatrix<f64>) -> Result<DVector<f64>>,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    let norm = sigma.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let base = dual_policy(sigma)?;
    let perturbed = dual_policy(&(sigma * (1.0 + epsilon)))?;
    Ok(distance(&perturbed, &base, "covariance_sensitivity")? / (epsilon * norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn separation_gap_examples() {
        assert_eq!(separation_gap(&v(&[0.3]), &v(&[0.3])).unwrap(), 0.0);
        assert_abs_diff_eq!(separation_gap(&v(&[1.0, 1.0]), &v(&[0.0, 0.0])).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert!(separation_gap(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn oracle_mismatch_examples() {
        assert_eq!(oracle_mismatch(&v(&[-0.7]), &v(&[-0.7])).unwrap(), 0.0);
        assert_eq!(oracle_mismatch(&v(&[2.0]), &v(&[-1.0])).unwrap(), 3.0);
    }

    #[test]
    fn parameter_error_of_biased_prior() {
        let star = DMatrix::from_row_slice(2, 3, &[1.0, 0.1, 0.005, 0.0, 1.0, 0.1]);
        let bias = DMatrix::from_row_slice(2, 3, &[0.5, 0.5, 0.1, 0.0, 0.25, 0.25]);
        assert_eq!(parameter_error(&belief::vec(&star), &star).unwrap(), 0.0);
        let e = parameter_error(&belief::vec(&(&star + &bias)), &star).unwrap();
        assert_abs_diff_eq!(e, 0.635f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(e, 0.79687, epsilon = 1e-5);
        let e2 = parameter_error(&belief::vec(&(&star + &bias * 2.0)), &star).unwrap();
        assert_abs_diff_eq!(e2, 2.0 * e, epsilon = 1e-12);
    }

    #[test]
    fn sensitivity_is_zero_for_zero_covariance() {
        let g = covariance_sensitivity(&DMatrix::zeros(6, 6), 0.05, |_| panic!("no solve needed")).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn sensitivity_of_linear_policy() {
        // π(Σ) = tr(Σ)·[1]: G = ε·tr(Σ)/(ε‖Σ‖_F)
        let sigma = DMatrix::identity(4, 4);
        let g = covariance_sensitivity(&sigma, 0.05, |s| Ok(v(&[s.trace()]))).unwrap();
        assert_abs_diff_eq!(g, 4.0 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sensitivity_rejects_bad_epsilon() {
        assert!(covariance_sensitivity(&DMatrix::identity(2, 2), 0.0, |_| Ok(v(&[0.0]))).is_err());
    }
}

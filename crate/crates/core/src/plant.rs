//! Ground-truth stochastic linear plant `x⁺ = A*x + B*u + w`.
//!
//! Noise is always passed in by the caller so that the Monte Carlo harness
//! can feed identical realizations to every policy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_square, check_symmetric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    a_star: DMatrix<f64>,
    b_star: DMatrix<f64>,
    sigma_w2: f64,
}

impl Plant {
    pub fn new(a_star: DMatrix<f64>, b_star: DMatrix<f64>, sigma_w2: f64) -> Result<Self> {
        let n = a_star.nrows();
        check_square(&a_star, n, "Plant::new A*")?;
        if b_star.nrows() != n {
            return Err(Error::dim("Plant::new B* rows", n, b_star.nrows()));
        }
        if !(sigma_w2 > 0.0 && sigma_w2.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma_w2 must be positive, got {sigma_w2}")));
        }
        Ok(Self { a_star, b_star, sigma_w2 })
    }

    /// Double integrator `A = [1 Ts; 0 1]`, `B = [Ts²/2; Ts]`.
    pub fn double_integrator(ts: f64, sigma_w2: f64) -> Result<Self> {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * ts * ts, ts]);
        Self::new(a, b, sigma_w2)
    }

    pub fn a_star(&self) -> &DMatrix<f64> {
        &self.a_star
    }

    pub fn b_star(&self) -> &DMatrix<f64> {
        &self.b_star
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    pub fn n(&self) -> usize {
        self.a_star.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_star.ncols()
    }

    /// `Θ* = [A* B*]`.
    pub fn theta_star(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut theta = DMatrix::zeros(n, n + m);
        theta.view_mut((0, 0), (n, n)).copy_from(&self.a_star);
        theta.view_mut((0, n), (n, m)).copy_from(&self.b_star);
        theta
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(x, self.n(), "Plant::step x")?;
        check_len(u, self.m(), "Plant::step u")?;
        check_len(w, self.n(), "Plant::step w")?;
        Ok(&self.a_star * x + &self.b_star * u + w)
    }
}

/// Stacked state-input pair `z = [x; u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointVector(DVector<f64>);

impl JointVector {
    pub fn new(x: &DVector<f64>, u: &DVector<f64>) -> Self {
        let mut z = DVector::zeros(x.len() + u.len());
        z.rows_mut(0, x.len()).copy_from(x);
        z.rows_mut(x.len(), u.len()).copy_from(u);
        Self(z)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// `xᵀQx + uᵀRu`.
pub fn regulation_cost(x: &DVector<f64>, u: &DVector<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    check_square(q, x.len(), "regulation_cost Q")?;
    check_square(r, u.len(), "regulation_cost R")?;
    check_symmetric(q, "Q")?;
    check_symmetric(r, "R")?;
    Ok(x.dot(&(q * x)) + u.dot(&(r * u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn paper_plant() -> Plant {
        Plant::double_integrator(0.1, 5e-4).unwrap()
    }

    #[test]
    fn identity_dynamics_ignore_zero_input_matrix() {
        let p = Plant::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), 1.0).unwrap();
        let x = p
            .step(&DVector::from_vec(vec![1.0, 2.0]), &DVector::from_vec(vec![5.0]), &DVector::zeros(2))
            .unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn double_integrator_step() {
        let x = paper_plant()
            .step(&DVector::from_vec(vec![0.4, 0.1]), &DVector::from_vec(vec![1.0]), &DVector::zeros(2))
            .unwrap();
        assert_abs_diff_eq!(x[0], 0.415, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn pure_noise_step() {
        let w = DVector::from_vec(vec![0.01, -0.02]);
        let x = paper_plant().step(&DVector::zeros(2), &DVector::zeros(1), &w).unwrap();
        assert_eq!(x, w);
    }

    #[test]
    fn step_rejects_bad_dimensions() {
        let err = paper_plant().step(&DVector::zeros(3), &DVector::zeros(1), &DVector::zeros(2));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn construction_checks() {
        assert!(Plant::new(DMatrix::identity(2, 2), DMatrix::zeros(3, 1), 1.0).is_err());
        assert!(Plant::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), 0.0).is_err());
        assert!(Plant::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1), 1.0).is_err());
    }

    #[test]
    fn regulation_cost_examples() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0]));
        let r = DMatrix::identity(1, 1);
        let origin = regulation_cost(&DVector::zeros(2), &DVector::zeros(1), &q, &r).unwrap();
        assert_eq!(origin, 0.0);
        let c = regulation_cost(&DVector::from_vec(vec![0.4, 0.1]), &DVector::zeros(1), &q, &r).unwrap();
        assert_abs_diff_eq!(c, 1.61, epsilon = 1e-12);
        let c = regulation_cost(
            &DVector::from_vec(vec![1.0, 1.0]),
            &DVector::from_vec(vec![2.0]),
            &DMatrix::identity(2, 2),
            &r,
        )
        .unwrap();
        assert_abs_diff_eq!(c, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn regulation_cost_rejects_asymmetric_weights() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = regulation_cost(&DVector::zeros(2), &DVector::zeros(1), &q, &DMatrix::identity(1, 1));
        assert_eq!(err, Err(Error::NotSymmetric("Q")));
    }

    #[test]
    fn theta_star_stacks_a_and_b() {
        let t = paper_plant().theta_star();
        assert_eq!(t.shape(), (2, 3));
        assert_eq!(t[(0, 1)], 0.1);
        assert_abs_diff_eq!(t[(0, 2)], 0.005, epsilon = 1e-15);
        assert_eq!(t[(1, 2)], 0.1);
    }
}

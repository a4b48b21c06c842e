//! Gaussian posterior over the vectorized dynamics `θ = vec([A B])` and its
//! covariance-form recursive update.
//!
//! Vectorization is column-wise everywhere: `θ[j·n + i] = Θ[i, j]`. This is
//! also nalgebra's storage order, so `vec` and `mat` are plain reshapes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, check_len, check_square};

const PSD_TOL: f64 = 1e-10;
const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BeliefJson", into = "BeliefJson")]
pub struct ParamBelief {
    theta_hat: DVector<f64>,
    sigma: DMatrix<f64>,
    n: usize,
    m: usize,
}

/// On-disk layout: θ̂ flat, Σ as nested rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BeliefJson {
    theta_hat: Vec<f64>,
    #[serde(rename = "Sigma")]
    sigma: Vec<Vec<f64>>,
    n: usize,
    m: usize,
}

impl TryFrom<BeliefJson> for ParamBelief {
    type Error = Error;

    fn try_from(j: BeliefJson) -> Result<Self> {
        let sigma = linalg::from_rows(&j.sigma)?;
        ParamBelief::new(DVector::from_vec(j.theta_hat), sigma, j.n, j.m)
    }
}

impl From<ParamBelief> for BeliefJson {
    fn from(b: ParamBelief) -> Self {
        BeliefJson {
            theta_hat: b.theta_hat.as_slice().to_vec(),
            sigma: linalg::to_rows(&b.sigma),
            n: b.n,
            m: b.m,
        }
    }
}

impl ParamBelief {
    pub fn new(theta_hat: DVector<f64>, sigma: DMatrix<f64>, n: usize, m: usize) -> Result<Self> {
        let p = n * (n + m);
        if n == 0 {
            return Err(Error::dim("ParamBelief n", ">= 1", 0));
        }
        check_len(&theta_hat, p, "ParamBelief theta_hat")?;
        check_square(&sigma, p, "ParamBelief Sigma")?;
        if theta_hat.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ParamBelief"));
        }
        linalg::check_symmetric(&sigma, "Sigma")?;
        let sigma = linalg::symmetrize(&sigma);
        let min_eig = linalg::min_eigenvalue(&sigma);
        if min_eig < -PSD_TOL * sigma.amax().max(1.0) {
            return Err(Error::NotPsd { min_eig });
        }
        Ok(Self { theta_hat, sigma, n, m })
    }

    /// Prior with mean `vec([A B])` and covariance `scale · I`.
    pub fn from_model(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma_scale: f64) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let theta = vec(&stack_model(a, b)?);
        let p = theta.len();
        Self::new(theta, DMatrix::identity(p, p) * sigma_scale, n, m)
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.sigma.trace()
    }

    /// `(Â, B̂)` from the posterior mean.
    pub fn model(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        mat(&self.theta_hat, self.n, self.m).expect("belief dimensions are validated at construction")
    }

    /// Same mean, covariance replaced (used for the sensitivity perturbation).
    pub fn with_sigma(&self, sigma: DMatrix<f64>) -> Result<Self> {
        Self::new(self.theta_hat.clone(), sigma, self.n, self.m)
    }

    /// One covariance-form update after observing the transition `z → x_next`.
    pub fn update(&self, z: &DVector<f64>, x_next: &DVector<f64>, sigma_w2: f64) -> Result<Self> {
        check_len(z, self.n + self.m, "ParamBelief::update z")?;
        check_len(x_next, self.n, "ParamBelief::update x_next")?;
        let phi = regressor(z, self.n)?;
        self.update_with_regressor(phi.as_matrix(), x_next, sigma_w2)
    }

    /// Update with an explicit `n × p` regression matrix.
    pub fn update_with_regressor(&self, phi: &DMatrix<f64>, x_next: &DVector<f64>, sigma_w2: f64) -> Result<Self> {
        let p = self.theta_hat.len();
        if phi.shape() != (self.n, p) {
            return Err(Error::dim(
                "ParamBelief::update Phi",
                format!("{}x{}", self.n, p),
                format!("{}x{}", phi.nrows(), phi.ncols()),
            ));
        }
        if !(sigma_w2 > 0.0 && sigma_w2.is_finite()) {
            return Err(Error::InvalidConfig(format!("filter sigma_w2 must be positive, got {sigma_w2}")));
        }

        let phi_sigma = phi * &self.sigma;
        let innovation_cov = linalg::symmetrize(
            &(DMatrix::identity(self.n, self.n) * sigma_w2 + &phi_sigma * phi.transpose()),
        );
        let eig = innovation_cov.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_INNOVATION_CONDITION) {
            return Err(Error::DegenerateInnovation { condition });
        }
        let chol = innovation_cov
            .cholesky()
            .ok_or(Error::DegenerateInnovation { condition })?;

        // Kᵀ = N⁻¹ Φ Σ (Σ symmetric)
        let gain_t = chol.solve(&phi_sigma);
        let innovation = x_next - phi * &self.theta_hat;
        let theta_hat = &self.theta_hat + gain_t.transpose() * innovation;
        let sigma = linalg::symmetrize(&(&self.sigma - gain_t.transpose() * &phi_sigma));

        if theta_hat.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("belief update"));
        }
        Ok(Self { theta_hat, sigma, n: self.n, m: self.m })
    }
}

/// Regression matrix `Φ = zᵀ ⊗ I_n`, so that `Φ·vec(Θ) = Θ·z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMatrix(DMatrix<f64>);

impl RegressionMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn regressor(z: &DVector<f64>, n: usize) -> Result<RegressionMatrix> {
    if z.is_empty() || n == 0 {
        return Err(Error::dim("regressor", "nonempty z and n >= 1", format!("len {} n {}", z.len(), n)));
    }
    let mut phi = DMatrix::zeros(n, n * z.len());
    for (j, &zj) in z.iter().enumerate() {
        for i in 0..n {
            phi[(i, j * n + i)] = zj;
        }
    }
    Ok(RegressionMatrix(phi))
}

/// Column-wise vectorization.
pub fn vec(theta: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(theta.as_slice())
}

/// Inverse of [`vec`], split into `(A, B)`.
pub fn mat(theta_hat: &DVector<f64>, n: usize, m: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_len(theta_hat, n * (n + m), "mat")?;
    let theta = DMatrix::from_column_slice(n, n + m, theta_hat.as_slice());
    let a = theta.columns(0, n).into_owned();
    let b = theta.columns(n, m).into_owned();
    Ok((a, b))
}

pub fn stack_model(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    check_square(a, n, "stack_model A")?;
    if b.nrows() != n {
        return Err(Error::dim("stack_model B rows", n, b.nrows()));
    }
    let m = b.ncols();
    let mut theta = DMatrix::zeros(n, n + m);
    theta.columns_mut(0, n).copy_from(a);
    theta.columns_mut(n, m).copy_from(b);
    Ok(theta)
}

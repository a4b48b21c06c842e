//! Condensed finite-horizon MPC: certainty-equivalent, information-weighted
//! dual, and oracle variants.
//!
//! Predicted states are eliminated, leaving the stacked input sequence
//! `U = [u₀; …; u_{N−1}]` as the only decision variable. The objective
//! `Σ_k z_kᵀ L z_k + x_Nᵀ P x_N` maps to `½UᵀHU + fᵀU` with the constant term
//! dropped.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief::ParamBelief;
use crate::error::{Error, Result};
use crate::infocost::{self, DualStageCost, StageCost};
use crate::linalg;
use crate::plant::Plant;
use crate::qp::{self, QpSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Ce,
    Dual,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Ce, PolicyKind::Dual, PolicyKind::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Ce => "ce",
            PolicyKind::Dual => "dual",
            PolicyKind::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Ok(PolicyKind::Ce),
            "dual" => Ok(PolicyKind::Dual),
            "oracle" | "orc" => Ok(PolicyKind::Oracle),
            other => Err(Error::InvalidConfig(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    /// Noise variance assumed by the filter and the information weight.
    pub filter_sigma_w2: f64,
    pub qp_tol: f64,
    pub warm_start: bool,
}

impl MpcConfig {
    /// Weights and limits of the double-integrator experiment.
    pub fn paper_default() -> Self {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0]));
        Self {
            horizon: 3,
            p: q.clone(),
            q,
            r: DMatrix::identity(1, 1),
            u_min: DVector::from_element(1, -10.0),
            u_max: DVector::from_element(1, 10.0),
            alpha: 1.0,
            epsilon: 0.05,
            filter_sigma_w2: 5e-4,
            qp_tol: qp::DEFAULT_TOL,
            warm_start: false,
        }
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        linalg::check_square(&self.q, n, "MpcConfig Q")?;
        linalg::check_square(&self.r, m, "MpcConfig R")?;
        linalg::check_square(&self.p, n, "MpcConfig P")?;
        for (mat, name) in [(&self.q, "Q"), (&self.r, "R"), (&self.p, "P")] {
            linalg::check_symmetric(mat, name)?;
            let min_eig = linalg::min_eigenvalue(mat);
            if !(min_eig > 0.0) {
                return Err(Error::NotPositiveDefinite { what: name, min_eig });
            }
        }
        linalg::check_len(&self.u_min, m, "MpcConfig u_min")?;
        linalg::check_len(&self.u_max, m, "MpcConfig u_max")?;
        if (0..m).any(|i| !(self.u_min[i] < self.u_max[i])) {
            return Err(Error::InvalidConfig("u_min must be strictly below u_max".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.filter_sigma_w2 > 0.0 && self.filter_sigma_w2.is_finite()) {
            return Err(Error::InvalidConfig("filter_sigma_w2 must be positive".into()));
        }
        if !(self.qp_tol > 0.0) {
            return Err(Error::InvalidConfig("qp_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Stacked prediction `[x₁; …; x_N] = F·x₀ + G·U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    n: usize,
    m: usize,
    horizon: usize,
}

impl PredictionMatrices {
    /// Rows of `F` for predicted state `k` (1-based, `k ≤ N`).
    pub fn f_block(&self, k: usize) -> DMatrix<f64> {
        self.f.rows((k - 1) * self.n, self.n).into_owned()
    }

    pub fn g_block(&self, k: usize) -> DMatrix<f64> {
        self.g.rows((k - 1) * self.n, self.n).into_owned()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn predict(&self, x0: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(u.len(), self.horizon * self.m);
        &self.f * x0 + &self.g * u
    }
}

pub fn build_prediction(a_hat: &DMatrix<f64>, b_hat: &DMatrix<f64>, horizon: usize) -> Result<PredictionMatrices> {
    let n = a_hat.nrows();
    linalg::check_square(a_hat, n, "build_prediction A")?;
    if b_hat.nrows() != n {
        return Err(Error::dim("build_prediction B rows", n, b_hat.nrows()));
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let m = b_hat.ncols();
    let mut f = DMatrix::zeros(horizon * n, n);
    let mut g = DMatrix::zeros(horizon * n, horizon * m);
    // block(G, k, j) = A^{k−1−j} B for j < k (1-based k)
    let mut a_pow_b = b_hat.clone();
    for lag in 0..horizon {
        for j in 0..horizon - lag {
            let k = j + lag;
            g.view_mut((k * n, j * m), (n, m)).copy_from(&a_pow_b);
        }
        a_pow_b = a_hat * &a_pow_b;
    }
    let mut power = a_hat.clone();
    for k in 0..horizon {
        f.view_mut((k * n, 0), (n, n)).copy_from(&power);
        power = a_hat * &power;
    }
    Ok(PredictionMatrices { f, g, n, m, horizon })
}

/// `min ½UᵀHU + fᵀU` subject to `lb ≤ U ≤ ub`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl BoxQp {
    pub fn solve(&self, tol: f64, initial: Option<&DVector<f64>>) -> Result<QpSolution> {
        qp::solve_box_from(&self.h, &self.f, &self.lb, &self.ub, tol, initial)
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        qp::objective(&self.h, &self.f, u)
    }
}

/// Condenses `Σ_{k<N} z_kᵀ L z_k + x_Nᵀ P x_N` with `z_k = [x_k; u_k]`.
pub fn condense(
    x: &DVector<f64>,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    stage: &DMatrix<f64>,
    cfg: &MpcConfig,
) -> Result<BoxQp> {
    let (n, m, horizon) = (cfg.n(), cfg.m(), cfg.horizon);
    linalg::check_len(x, n, "condense x")?;
    linalg::check_square(stage, n + m, "condense stage cost")?;
    if b_hat.shape() != (n, m) {
        return Err(Error::dim("condense B", format!("{n}x{m}"), format!("{}x{}", b_hat.nrows(), b_hat.ncols())));
    }
    let pred = build_prediction(a_hat, b_hat, horizon)?;
    let d = horizon * m;

    let l_xx = stage.view((0, 0), (n, n));
    let l_xu = stage.view((0, n), (n, m));
    let l_ux = stage.view((n, 0), (m, n));
    let l_uu = stage.view((n, n), (m, m));

    let mut h = DMatrix::zeros(d, d);
    let mut f = DVector::zeros(d);
    for k in 0..horizon {
        // x_k = Fx_k·x + Gx_k·U ; u_k = E_k·U
        let (fx, gx) = if k == 0 {
            (DMatrix::identity(n, n), DMatrix::zeros(n, d))
        } else {
            (pred.f_block(k), pred.g_block(k))
        };
        let x_free = &fx * x;
        let cols = k * m;

        // state-state
        h += gx.transpose() * l_xx * &gx;
        f += gx.transpose() * (l_xx * &x_free);
        // state-input cross terms
        let cross = gx.transpose() * l_xu;
        for i in 0..d {
            for j in 0..m {
                h[(i, cols + j)] += cross[(i, j)];
                h[(cols + j, i)] += cross[(i, j)];
            }
        }
        let ux = l_ux * &x_free;
        // input-input
        for i in 0..m {
            f[cols + i] += ux[i];
            for j in 0..m {
                h[(cols + i, cols + j)] += l_uu[(i, j)];
            }
        }
    }
    let (fx_n, gx_n) = (pred.f_block(horizon), pred.g_block(horizon));
    h += gx_n.transpose() * &cfg.p * &gx_n;
    f += gx_n.transpose() * (&cfg.p * (&fx_n * x));

    let lb = DVector::from_fn(d, |i, _| cfg.u_min[i % m]);
    let ub = DVector::from_fn(d, |i, _| cfg.u_max[i % m]);
    Ok(BoxQp { h: linalg::symmetrize(&h), f, lb, ub })
}

pub fn build_qp_ce(x: &DVector<f64>, a_hat: &DMatrix<f64>, b_hat: &DMatrix<f64>, cfg: &MpcConfig) -> Result<BoxQp> {
    let stage = StageCost::regulation(&cfg.q, &cfg.r)?;
    condense(x, a_hat, b_hat, stage.as_matrix(), cfg)
}

/// Dual QP together with the stage cost that was actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct DualQp {
    pub qp: BoxQp,
    pub stage: DualStageCost,
}

pub fn build_qp_dual(
    x: &DVector<f64>,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    cfg: &MpcConfig,
) -> Result<DualQp> {
    let w = infocost::weight_matrix(sigma, cfg.filter_sigma_w2, cfg.n(), cfg.m())?;
    let stage = infocost::dual_stage_cost(&cfg.q, &cfg.r, cfg.alpha, &w)?;
    let qp = condense(x, a_hat, b_hat, stage.cost.as_matrix(), cfg)?;
    Ok(DualQp { qp, stage })
}

/// Dual QP with a caller-fixed exploration weight (no fallback search).
pub fn build_qp_dual_fixed_alpha(
    x: &DVector<f64>,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    alpha: f64,
    cfg: &MpcConfig,
) -> Result<BoxQp> {
    let w = infocost::weight_matrix(sigma, cfg.filter_sigma_w2, cfg.n(), cfg.m())?;
    let stage = infocost::stage_cost_matrix(&cfg.q, &cfg.r, alpha, &w)?;
    condense(x, a_hat, b_hat, stage.as_matrix(), cfg)
}

/// Leading `m` entries of the QP minimizer.
pub fn first_input(qp: &BoxQp, m: usize, tol: f64) -> Result<DVector<f64>> {
    let sol = qp.solve(tol, None)?;
    Ok(sol.u_star.rows(0, m).into_owned())
}

/// Receding-horizon input for one policy at the given belief state.
pub fn policy(
    kind: PolicyKind,
    x: &DVector<f64>,
    belief: &ParamBelief,
    plant: &Plant,
    cfg: &MpcConfig,
) -> Result<DVector<f64>> {
    if belief.n() != plant.n() || belief.m() != plant.m() {
        return Err(Error::dim(
            "policy belief",
            format!("n={} m={}", plant.n(), plant.m()),
            format!("n={} m={}", belief.n(), belief.m()),
        ));
    }
    let qp = match kind {
        PolicyKind::Ce => {
            let (a, b) = belief.model();
            build_qp_ce(x, &a, &b, cfg)?
        }
        PolicyKind::Dual => {
            let (a, b) = belief.model();
            build_qp_dual(x, &a, &b, belief.sigma(), cfg)?.qp
        }
        PolicyKind::Oracle => build_qp_ce(x, plant.a_star(), plant.b_star(), cfg)?,
    };
    first_input(&qp, cfg.m(), cfg.qp_tol)
}

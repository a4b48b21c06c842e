//! JSON run configuration. Every field has a default, and the defaults are the
//! double-integrator experiment, so an empty `{}` is a complete config.

use std::path::{Path, PathBuf};

use dualmpc_core::{MpcConfig, NoiseMode, ParamBelief, Plant, PolicyKind};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSection,
    pub prior: PriorSection,
    pub mpc: MpcSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

/// Matrices are written row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub a_star: Vec<Vec<f64>>,
    pub b_star: Vec<Vec<f64>>,
    pub sigma_w2: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        let p = Plant::double_integrator(0.1, 5e-4).expect("valid plant");
        Self { a_star: rows(p.a_star()), b_star: rows(p.b_star()), sigma_w2: p.sigma_w2() }
    }
}

/// The prior mean is either `[A* + a_bias, B* + b_bias]` or, when given,
/// the explicit column-stacked `theta_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub a_bias: Vec<Vec<f64>>,
    pub b_bias: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Vec<f64>>,
    pub sigma0_scale: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            a_bias: vec![vec![0.5, 0.5], vec![0.0, 0.25]],
            b_bias: vec![vec![0.1], vec![0.25]],
            theta_hat: None,
            sigma0_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: usize,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    /// Noise variance assumed by the filter; defaults to the plant's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_sigma_w2: Option<f64>,
    pub qp_tol: f64,
    pub warm_start: bool,
}

impl Default for MpcSection {
    fn default() -> Self {
        let d = MpcConfig::paper_default();
        Self {
            horizon: d.horizon,
            q: rows(&d.q),
            r: rows(&d.r),
            p: rows(&d.p),
            u_min: d.u_min.iter().copied().collect(),
            u_max: d.u_max.iter().copied().collect(),
            alpha: d.alpha,
            epsilon: d.epsilon,
            filter_sigma_w2: None,
            qp_tol: d.qp_tol,
            warm_start: d.warm_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_steps: usize,
    pub n_episodes: usize,
    pub base_seed: u64,
    pub x0: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub noise: NoiseMode,
    /// Run the frozen-model comparison after `mc`.
    pub post_learning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_n_episodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_x0: Option<Vec<f64>>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_steps: 100,
            n_episodes: 20,
            base_seed: 2026,
            x0: vec![0.4, 0.1],
            policies: PolicyKind::ALL.to_vec(),
            noise: NoiseMode::Gaussian,
            post_learning: true,
            post_n_steps: None,
            post_n_episodes: None,
            post_x0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json, Format::Svg] }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Validated objects ready to hand to the simulator.
#[derive(Debug, Clone)]
pub struct Setup {
    pub plant: Plant,
    pub prior: ParamBelief,
    pub mpc: MpcConfig,
    pub x0: DVector<f64>,
    pub post_x0: DVector<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(field: &str, data: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, CliError> {
    if data.len() != nrows || data.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("{field}: expected a {nrows}x{ncols} matrix")));
    }
    let m = DMatrix::from_fn(nrows, ncols, |i, j| data[i][j]);
    finite(field, m.iter())?;
    Ok(m)
}

fn vector(field: &str, data: &[f64], len: usize) -> Result<DVector<f64>, CliError> {
    if data.len() != len {
        return Err(CliError::Config(format!("{field}: expected {len} entries, got {}", data.len())));
    }
    finite(field, data.iter())?;
    Ok(DVector::from_column_slice(data))
}

fn finite<'a>(field: &str, mut vals: impl Iterator<Item = &'a f64>) -> Result<(), CliError> {
    if vals.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field}: entries must be finite")))
    }
}

fn field_err(field: &str) -> impl Fn(dualmpc_core::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{field}: {e}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn post_n_steps(&self) -> usize {
        self.experiment.post_n_steps.unwrap_or(self.experiment.n_steps)
    }

    pub fn post_n_episodes(&self) -> usize {
        self.experiment.post_n_episodes.unwrap_or(self.experiment.n_episodes)
    }

    /// Checks every field against the simulator's preconditions.
    pub fn validate(&self) -> Result<Setup, CliError> {
        let n = self.plant.a_star.len();
        if n == 0 {
            return Err(CliError::Config("plant.a_star: must be nonempty".into()));
        }
        let m = self.plant.b_star.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(CliError::Config("plant.b_star: must have at least one column".into()));
        }
        let a_star = matrix("plant.a_star", &self.plant.a_star, n, n)?;
        let b_star = matrix("plant.b_star", &self.plant.b_star, n, m)?;
        let plant = Plant::new(a_star, b_star, self.plant.sigma_w2).map_err(field_err("plant.sigma_w2"))?;

        let p = &self.prior;
        if !(p.sigma0_scale > 0.0 && p.sigma0_scale.is_finite()) {
            return Err(CliError::Config("prior.sigma0_scale: must be positive".into()));
        }
        let prior = match &p.theta_hat {
            Some(theta) => {
                let d = n * (n + m);
                let theta = vector("prior.theta_hat", theta, d)?;
                let sigma = DMatrix::identity(d, d) * p.sigma0_scale;
                ParamBelief::new(theta, sigma, n, m).map_err(field_err("prior.theta_hat"))?
            }
            None => {
                let a0 = plant.a_star() + matrix("prior.a_bias", &p.a_bias, n, n)?;
                let b0 = plant.b_star() + matrix("prior.b_bias", &p.b_bias, n, m)?;
                ParamBelief::from_model(&a0, &b0, p.sigma0_scale).map_err(field_err("prior"))?
            }
        };

        let s = &self.mpc;
        let mpc = MpcConfig {
            horizon: s.horizon,
            q: matrix("mpc.q", &s.q, n, n)?,
            r: matrix("mpc.r", &s.r, m, m)?,
            p: matrix("mpc.p", &s.p, n, n)?,
            u_min: vector("mpc.u_min", &s.u_min, m)?,
            u_max: vector("mpc.u_max", &s.u_max, m)?,
            alpha: s.alpha,
            epsilon: s.epsilon,
            filter_sigma_w2: s.filter_sigma_w2.unwrap_or(self.plant.sigma_w2),
            qp_tol: s.qp_tol,
            warm_start: s.warm_start,
        };
        mpc.validate().map_err(field_err("mpc"))?;

        let e = &self.experiment;
        if e.n_steps == 0 {
            return Err(CliError::Config("experiment.n_steps: must be at least 1".into()));
        }
        if e.n_episodes == 0 {
            return Err(CliError::Config("experiment.n_episodes: must be at least 1".into()));
        }
        if e.policies.is_empty() {
            return Err(CliError::Config("experiment.policies: must list at least one policy".into()));
        }
        if self.post_n_steps() == 0 || self.post_n_episodes() == 0 {
            return Err(CliError::Config("experiment.post_n_steps/post_n_episodes: must be at least 1".into()));
        }
        let x0 = vector("experiment.x0", &e.x0, n)?;
        let post_x0 = match &e.post_x0 {
            Some(v) => vector("experiment.post_x0", v, n)?,
            None => x0.clone(),
        };
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats: must list at least one format".into()));
        }
        Ok(Setup { plant, prior, mpc, x0, post_x0 })
    }
}

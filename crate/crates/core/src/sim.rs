//! Closed-loop episodes with shadow solves, Monte Carlo batches under common
//! random numbers, and the frozen-model post-learning protocol.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::ParamBelief;
use crate::error::{Error, Result};
use crate::metrics::{self, StepMetrics};
use crate::mpc::{self, BoxQp, MpcConfig, PolicyKind};
use crate::noise::{NoiseMode, NoiseStream};
use crate::plant::{self, JointVector, Plant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub n_steps: usize,
    pub x0: DVector<f64>,
    pub seed: u64,
    pub applied_policy: PolicyKind,
    pub learning_enabled: bool,
    #[serde(default)]
    pub noise: NoiseMode,
}

impl EpisodeConfig {
    pub fn paper_default(applied_policy: PolicyKind, seed: u64) -> Self {
        Self {
            n_steps: 100,
            x0: DVector::from_vec(vec![0.4, 0.1]),
            seed,
            applied_policy,
            learning_enabled: true,
            noise: NoiseMode::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub x: DVector<f64>,
    pub u_applied: DVector<f64>,
    pub u_ce: DVector<f64>,
    pub u_dual: DVector<f64>,
    pub u_oracle: DVector<f64>,
    /// Process noise injected after this step.
    pub w: DVector<f64>,
    pub metrics: StepMetrics,
    pub alpha_eff: f64,
    pub alpha_fallback: bool,
    /// Number of input bounds active at the dual shadow optimum.
    pub dual_active_bounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub config: EpisodeConfig,
    pub steps: Vec<StepRecord>,
    pub final_belief: ParamBelief,
}

impl EpisodeLog {
    pub fn last(&self) -> &StepRecord {
        self.steps.last().expect("episodes have at least one step")
    }
}

fn shifted_guess(prev: &Option<DVector<f64>>, m: usize) -> Option<DVector<f64>> {
    prev.as_ref().map(|u| {
        let d = u.len();
        DVector::from_fn(d, |i, _| if i + m < d { u[i + m] } else { u[d - m + i % m] })
    })
}

/// Record, next state, next belief and the three warm-start candidates.
type StepOutcome = (StepRecord, DVector<f64>, ParamBelief, [Option<DVector<f64>>; 3]);

struct Shadow {
    u_full: DVector<f64>,
    u0: DVector<f64>,
    active: usize,
}

fn solve_shadow(qp: &BoxQp, cfg: &MpcConfig, warm: Option<&DVector<f64>>) -> Result<Shadow> {
    let sol = qp.solve(cfg.qp_tol, warm)?;
    let u0 = sol.u_star.rows(0, cfg.m()).into_owned();
    let active = sol.active_lower.len() + sol.active_upper.len();
    Ok(Shadow { u_full: sol.u_star, u0, active })
}

/// Dual input at covariance `sigma` with the exploration weight held at
/// `alpha_eff`; if that weight is infeasible for `sigma` the fallback is
/// re-applied.
fn dual_input_at(
    x: &DVector<f64>,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    alpha_eff: f64,
    cfg: &MpcConfig,
) -> Result<DVector<f64>> {
    let qp = match mpc::build_qp_dual_fixed_alpha(x, a_hat, b_hat, sigma, alpha_eff, cfg) {
        Ok(qp) => qp,
        Err(Error::NotPositiveDefinite { .. }) => mpc::build_qp_dual(x, a_hat, b_hat, sigma, cfg)?.qp,
        Err(e) => return Err(e),
    };
    mpc::first_input(&qp, cfg.m(), cfg.qp_tol)
}

/// One closed-loop episode. Every step solves the CE, dual, perturbed-dual and
/// oracle problems at the current belief regardless of which input is applied.
pub fn run_episode(plant: &Plant, prior: &ParamBelief, cfg: &MpcConfig, ep: &EpisodeConfig) -> Result<EpisodeLog> {
    cfg.validate()?;
    if ep.n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
    }
    if cfg.n() != plant.n() || cfg.m() != plant.m() || prior.n() != plant.n() || prior.m() != plant.m() {
        return Err(Error::dim(
            "run_episode",
            format!("n={} m={}", plant.n(), plant.m()),
            format!("cfg n={} m={}, prior n={} m={}", cfg.n(), cfg.m(), prior.n(), prior.m()),
        ));
    }
    crate::linalg::check_len(&ep.x0, plant.n(), "run_episode x0")?;

    let noise = NoiseStream::new(ep.seed, ep.noise);
    let theta_star = plant.theta_star();
    let mut belief = prior.clone();
    let mut x = ep.x0.clone();
    let mut j_reg = 0.0;
    let mut steps = Vec::with_capacity(ep.n_steps);
    let (mut warm_ce, mut warm_dual, mut warm_orc) = (None, None, None);

    for t in 0..ep.n_steps {
        let mut step = || -> Result<StepOutcome> {
            let (a_hat, b_hat) = belief.model();
            let m = cfg.m();
            let guess = |prev: &Option<DVector<f64>>| if cfg.warm_start { shifted_guess(prev, m) } else { None };

            let ce_qp = mpc::build_qp_ce(&x, &a_hat, &b_hat, cfg)?;
            let ce = solve_shadow(&ce_qp, cfg, guess(&warm_ce).as_ref())?;

            let dual_qp = mpc::build_qp_dual(&x, &a_hat, &b_hat, belief.sigma(), cfg)?;
            let dual = solve_shadow(&dual_qp.qp, cfg, guess(&warm_dual).as_ref())?;
            let alpha_eff = dual_qp.stage.alpha_eff;

            let s = metrics::separation_gap(&dual.u0, &ce.u0)?;
            let g = metrics::covariance_sensitivity(belief.sigma(), cfg.epsilon, |sigma| {
                dual_input_at(&x, &a_hat, &b_hat, sigma, alpha_eff, cfg)
            })?;

            let orc_qp = mpc::build_qp_ce(&x, plant.a_star(), plant.b_star(), cfg)?;
            let orc = solve_shadow(&orc_qp, cfg, guess(&warm_orc).as_ref())?;

            let u = match ep.applied_policy {
                PolicyKind::Ce => ce.u0.clone(),
                PolicyKind::Dual => dual.u0.clone(),
                PolicyKind::Oracle => orc.u0.clone(),
            };
            j_reg += plant::regulation_cost(&x, &u, &cfg.q, &cfg.r)?;
            let w = noise.sample(t as u64, plant.n(), plant.sigma_w2());
            let x_next = plant.step(&x, &u, &w)?;

            let metrics = StepMetrics {
                s,
                g,
                e_par: metrics::parameter_error(belief.theta_hat(), &theta_star)?,
                m_orc: metrics::oracle_mismatch(&u, &orc.u0)?,
                trace_sigma: belief.trace(),
                j_reg_cum: j_reg,
            };

            let next_belief = if ep.learning_enabled {
                belief.update(JointVector::new(&x, &u).as_vector(), &x_next, cfg.filter_sigma_w2)?
            } else {
                belief.clone()
            };

            let record = StepRecord {
                t,
                x: x.clone(),
                u_applied: u,
                u_ce: ce.u0,
                u_dual: dual.u0,
                u_oracle: orc.u0,
                w,
                metrics,
                alpha_eff,
                alpha_fallback: dual_qp.stage.fallback,
                dual_active_bounds: dual.active,
            };
            Ok((record, x_next, next_belief, [Some(ce.u_full), Some(dual.u_full), Some(orc.u_full)]))
        };
        let (record, x_next, next_belief, [ce_u, dual_u, orc_u]) =
            step().map_err(|e| Error::Episode { step: t, source: Box::new(e) })?;
        steps.push(record);
        x = x_next;
        belief = next_belief;
        warm_ce = ce_u;
        warm_dual = dual_u;
        warm_orc = orc_u;
    }

    Ok(EpisodeLog { config: ep.clone(), steps, final_belief: belief })
}

/// Logs of one policy across the Monte Carlo episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRuns {
    pub policy: PolicyKind,
    pub episodes: Vec<EpisodeLog>,
}

/// Runs `n_episodes` episodes per listed policy. Episode `e` uses noise seed
/// `template.seed + e` for every policy.
pub fn run_monte_carlo(
    plant: &Plant,
    prior: &ParamBelief,
    cfg: &MpcConfig,
    template: &EpisodeConfig,
    n_episodes: usize,
    policies: &[PolicyKind],
) -> Result<Vec<PolicyRuns>> {
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("n_episodes must be at least 1".into()));
    }
    let priors = vec![prior.clone(); n_episodes];
    policies
        .iter()
        .map(|&policy| {
            let ep = EpisodeConfig { applied_policy: policy, ..template.clone() };
            let episodes = run_batch(plant, &priors, cfg, &ep)?;
            Ok(PolicyRuns { policy, episodes })
        })
        .collect()
}

/// Episode `e` starts from `priors[e]` with seed `template.seed + e`.
fn run_batch(plant: &Plant, priors: &[ParamBelief], cfg: &MpcConfig, template: &EpisodeConfig) -> Result<Vec<EpisodeLog>> {
    priors
        .par_iter()
        .enumerate()
        .map(|(e, prior)| {
            let ep = EpisodeConfig { seed: template.seed.wrapping_add(e as u64), ..template.clone() };
            run_episode(plant, prior, cfg, &ep)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostLearningRuns {
    pub ce_learned: Vec<EpisodeLog>,
    pub dual_learned: Vec<EpisodeLog>,
}

/// Frozen-model comparison: both arms run certainty-equivalent MPC (α = 0)
/// without learning, each with its own model estimate, under common random
/// numbers.
pub fn run_post_learning(
    plant: &Plant,
    belief_ce: &ParamBelief,
    belief_dual: &ParamBelief,
    cfg: &MpcConfig,
    template: &EpisodeConfig,
    n_episodes: usize,
) -> Result<PostLearningRuns> {
    run_post_learning_paired(
        plant,
        &vec![belief_ce.clone(); n_episodes],
        &vec![belief_dual.clone(); n_episodes],
        cfg,
        template,
    )
}

/// As [`run_post_learning`], with post-learning episode `e` using the beliefs
/// learned in episode `e` of each arm.
pub fn run_post_learning_paired(
    plant: &Plant,
    beliefs_ce: &[ParamBelief],
    beliefs_dual: &[ParamBelief],
    cfg: &MpcConfig,
    template: &EpisodeConfig,
) -> Result<PostLearningRuns> {
    if beliefs_ce.is_empty() || beliefs_ce.len() != beliefs_dual.len() {
        return Err(Error::InvalidConfig(format!(
            "post-learning needs matching nonempty belief sets, got {} and {}",
            beliefs_ce.len(),
            beliefs_dual.len()
        )));
    }
    let frozen = cfg.with_alpha(0.0);
    let ep = EpisodeConfig { applied_policy: PolicyKind::Ce, learning_enabled: false, ..template.clone() };
    Ok(PostLearningRuns {
        ce_learned: run_batch(plant, beliefs_ce, &frozen, &ep)?,
        dual_learned: run_batch(plant, beliefs_dual, &frozen, &ep)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Series {
    JRegCum,
    TraceSigma,
    S,
    G,
    EPar,
    MOrc,
}

impl Series {
    pub const ALL: [Series; 6] = [Series::JRegCum, Series::TraceSigma, Series::S, Series::G, Series::EPar, Series::MOrc];

    pub fn name(self) -> &'static str {
        match self {
            Series::JRegCum => "J_reg_cum",
            Series::TraceSigma => "trace_Sigma",
            Series::S => "S",
            Series::G => "G",
            Series::EPar => "E_par",
            Series::MOrc => "M_orc",
        }
    }

    pub fn of(self, m: &StepMetrics) -> f64 {
        match self {
            Series::JRegCum => m.j_reg_cum,
            Series::TraceSigma => m.trace_sigma,
            Series::S => m.s,
            Series::G => m.g,
            Series::EPar => m.e_par,
            Series::MOrc => m.m_orc,
        }
    }
}

/// Per-step mean and sample standard deviation across episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub series: Series,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    // identical samples: report them exactly rather than a rounded mean
    if values.windows(2).all(|w| w[0] == w[1]) {
        return (values.first().copied().unwrap_or(f64::NAN), 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(episodes: &[EpisodeLog]) -> Vec<SeriesStats> {
    let len = episodes.iter().map(|e| e.steps.len()).min().unwrap_or(0);
    Series::ALL
        .iter()
        .map(|&series| {
            let (mean, std) = (0..len)
                .map(|t| {
                    let vals: Vec<f64> = episodes.iter().map(|e| series.of(&e.steps[t].metrics)).collect();
                    mean_std(&vals)
                })
                .unzip();
            SeriesStats { series, mean, std }
        })
        .collect()
}

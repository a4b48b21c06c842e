//! Experiment front end for `dualmpc-core`: configuration, batch
//! orchestration, CSV/JSON logs and SVG charts.

pub mod config;
pub mod logs;
pub mod svg;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dualmpc_core::sim::{self, Series, SeriesStats};
use dualmpc_core::{EpisodeConfig, EpisodeLog, ParamBelief, PolicyKind};
use serde::Serialize;

pub use config::{Format, RunConfig, Setup};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] dualmpc_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub episodes: Option<usize>,
    pub steps: Option<usize>,
    pub policy: Option<PolicyKind>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        let e = &mut self.experiment;
        if let Some(seed) = o.seed {
            e.base_seed = seed;
        }
        if let Some(n) = o.episodes {
            e.n_episodes = n;
        }
        if let Some(n) = o.steps {
            e.n_steps = n;
        }
        if let Some(p) = o.policy {
            e.policies = vec![p];
        }
        if let Some(a) = o.alpha {
            self.mpc.alpha = a;
        }
        if let Some(dir) = &o.out {
            self.output.directory = dir.clone();
        }
    }
}

fn template(cfg: &RunConfig, setup: &Setup) -> EpisodeConfig {
    EpisodeConfig {
        n_steps: cfg.experiment.n_steps,
        x0: setup.x0.clone(),
        seed: cfg.experiment.base_seed,
        applied_policy: PolicyKind::Ce,
        learning_enabled: true,
        noise: cfg.experiment.noise,
    }
}

fn post_template(cfg: &RunConfig, setup: &Setup) -> EpisodeConfig {
    EpisodeConfig { n_steps: cfg.post_n_steps(), x0: setup.post_x0.clone(), ..template(cfg, setup) }
}

/// Collects output paths and keeps all writes in one place.
struct Sink<'a> {
    cfg: &'a RunConfig,
    written: Vec<PathBuf>,
}

impl<'a> Sink<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.output.directory)?;
        Ok(Self { cfg, written: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output.directory.join(name)
    }

    fn episode_csv(&mut self, log: &EpisodeLog) -> Result<(), CliError> {
        if !self.cfg.output.wants(Format::Csv) {
            return Ok(());
        }
        let path = self.path(&format!("episode_{}_{}.csv", log.config.applied_policy, log.config.seed));
        logs::write_episode_csv(BufWriter::new(File::create(&path)?), log)?;
        self.written.push(path);
        Ok(())
    }

    fn aggregate_csv(&mut self, name: &str, groups: &[logs::Group<'_>]) -> Result<(), CliError> {
        if !self.cfg.output.wants(Format::Csv) {
            return Ok(());
        }
        let path = self.path(name);
        logs::write_aggregate_csv(BufWriter::new(File::create(&path)?), groups)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if !self.cfg.output.wants(Format::Json) {
            return Ok(());
        }
        let path = self.path(name);
        logs::write_json(&path, value)?;
        self.written.push(path);
        Ok(())
    }

    fn chart(&mut self, name: &str, chart: &svg::Chart) -> Result<(), CliError> {
        if !self.cfg.output.wants(Format::Svg) {
            return Ok(());
        }
        let path = self.path(name);
        std::fs::write(&path, chart.render())?;
        self.written.push(path);
        Ok(())
    }
}

#[derive(Serialize)]
struct EpisodeSidecar<'a> {
    config: &'a RunConfig,
    policy: PolicyKind,
    seed: u64,
    final_belief: &'a ParamBelief,
}

/// One episode per configured policy at the base seed.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let setup = cfg.validate()?;
    let logs = cfg
        .experiment
        .policies
        .iter()
        .map(|&p| {
            let ep = EpisodeConfig { applied_policy: p, ..template(cfg, &setup) };
            sim::run_episode(&setup.plant, &setup.prior, &setup.mpc, &ep)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut sink = Sink::new(cfg)?;
    for log in &logs {
        sink.episode_csv(log)?;
        let (policy, seed) = (log.config.applied_policy, log.config.seed);
        let sidecar = EpisodeSidecar { config: cfg, policy, seed, final_belief: &log.final_belief };
        sink.json(&format!("episode_{policy}_{seed}.json"), &sidecar)?;
    }
    Ok(sink.written)
}

fn series_title(s: Series) -> (&'static str, &'static str) {
    match s {
        Series::JRegCum => ("Cumulative regulation cost", "J_reg_cum"),
        Series::TraceSigma => ("Parameter covariance trace", "tr(Sigma)"),
        Series::S => ("Separation gap", "S"),
        Series::G => ("Covariance sensitivity", "G"),
        Series::EPar => ("Parameter error", "E_par"),
        Series::MOrc => ("Oracle mismatch", "M_orc"),
    }
}

fn mean_chart(which: Series, groups: &[(String, Vec<SeriesStats>)]) -> svg::Chart {
    let (title, y_label) = series_title(which);
    svg::Chart {
        title: format!("{title} (mean)"),
        x_label: "time step t".into(),
        y_label: y_label.into(),
        lines: groups
            .iter()
            .map(|(label, stats)| svg::Line { label: label.clone(), ys: logs::series(stats, which).mean.clone() })
            .collect(),
    }
}

#[derive(Serialize)]
struct FinalCost {
    label: String,
    mean: f64,
    std: f64,
}

fn final_costs(groups: &[(String, Vec<SeriesStats>)]) -> Vec<FinalCost> {
    groups
        .iter()
        .map(|(label, stats)| {
            let j = logs::series(stats, Series::JRegCum);
            FinalCost {
                label: label.clone(),
                mean: j.mean.last().copied().unwrap_or(f64::NAN),
                std: j.std.last().copied().unwrap_or(f64::NAN),
            }
        })
        .collect()
}

fn post_learning_outputs(sink: &mut Sink<'_>, runs: &sim::PostLearningRuns) -> Result<Vec<FinalCost>, CliError> {
    let groups = vec![
        ("ce_learned".to_string(), sim::aggregate(&runs.ce_learned)),
        ("dual_learned".to_string(), sim::aggregate(&runs.dual_learned)),
    ];
    let g: Vec<_> = groups.iter().map(|(label, stats)| logs::Group { label, stats }).collect();
    sink.aggregate_csv("post_learning_aggregate.csv", &g)?;
    let mut chart = mean_chart(Series::JRegCum, &groups);
    chart.title = "Post-learning cumulative regulation cost (mean, alpha = 0)".into();
    sink.chart("post_learning_cost.svg", &chart)?;
    Ok(final_costs(&groups))
}

#[derive(Serialize)]
struct McSummary<'a> {
    config: &'a RunConfig,
    final_cost: Vec<FinalCost>,
    #[serde(skip_serializing_if = "Option::is_none")]
    post_learning_final_cost: Option<Vec<FinalCost>>,
}

/// Monte Carlo batch over the configured policies, optionally followed by
/// the paired post-learning comparison of the CE and dual final beliefs.
pub fn cmd_mc(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let setup = cfg.validate()?;
    let e = &cfg.experiment;
    let runs = sim::run_monte_carlo(
        &setup.plant,
        &setup.prior,
        &setup.mpc,
        &template(cfg, &setup),
        e.n_episodes,
        &e.policies,
    )?;

    let beliefs = |p: PolicyKind| {
        runs.iter().find(|r| r.policy == p).map(|r| r.episodes.iter().map(|l| l.final_belief.clone()).collect::<Vec<_>>())
    };
    let post = match (e.post_learning, beliefs(PolicyKind::Ce), beliefs(PolicyKind::Dual)) {
        (true, Some(ce), Some(dual)) => {
            let n = cfg.post_n_episodes();
            let pick = |b: &[ParamBelief]| (0..n).map(|i| b[i % b.len()].clone()).collect::<Vec<_>>();
            let (ce, dual) = (pick(&ce), pick(&dual));
            Some(sim::run_post_learning_paired(&setup.plant, &ce, &dual, &setup.mpc, &post_template(cfg, &setup))?)
        }
        (true, _, _) => {
            eprintln!("note: post-learning comparison skipped, it needs both the ce and dual policies");
            None
        }
        _ => None,
    };

    let groups: Vec<(String, Vec<SeriesStats>)> =
        runs.iter().map(|r| (r.policy.to_string(), sim::aggregate(&r.episodes))).collect();

    let mut sink = Sink::new(cfg)?;
    for r in &runs {
        for log in &r.episodes {
            sink.episode_csv(log)?;
            sink.json(&format!("belief_{}_{}.json", r.policy, log.config.seed), &log.final_belief)?;
        }
    }
    let g: Vec<_> = groups.iter().map(|(label, stats)| logs::Group { label, stats }).collect();
    sink.aggregate_csv("aggregate.csv", &g)?;
    for which in Series::ALL {
        sink.chart(&format!("chart_{}.svg", which.name()), &mean_chart(which, &groups))?;
    }
    let post_learning_final_cost = post.as_ref().map(|p| post_learning_outputs(&mut sink, p)).transpose()?;
    let summary = McSummary { config: cfg, final_cost: final_costs(&groups), post_learning_final_cost };
    sink.json("mc_summary.json", &summary)?;
    Ok(sink.written)
}

#[derive(Serialize)]
struct PostSummary<'a> {
    config: &'a RunConfig,
    ce_belief: &'a Path,
    dual_belief: &'a Path,
    final_cost: Vec<FinalCost>,
}

/// Frozen-model comparison of two belief files (α = 0, no learning).
pub fn cmd_post_learn(cfg: &RunConfig, ce_belief: &Path, dual_belief: &Path) -> Result<Vec<PathBuf>, CliError> {
    let setup = cfg.validate()?;
    let (n, m) = (setup.plant.n(), setup.plant.m());
    let ce = logs::read_belief(ce_belief, n, m)?;
    let dual = logs::read_belief(dual_belief, n, m)?;
    let runs = sim::run_post_learning(
        &setup.plant,
        &ce,
        &dual,
        &setup.mpc,
        &post_template(cfg, &setup),
        cfg.post_n_episodes(),
    )?;

    let mut sink = Sink::new(cfg)?;
    let final_cost = post_learning_outputs(&mut sink, &runs)?;
    sink.json("post_learning_summary.json", &PostSummary { config: cfg, ce_belief, dual_belief, final_cost })?;
    Ok(sink.written)
}

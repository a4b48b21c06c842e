//! CSV and JSON artifacts.

use std::io::Write;
use std::path::Path;

use dualmpc_core::sim::{Series, SeriesStats};
use dualmpc_core::{EpisodeLog, ParamBelief};
use serde::Serialize;

use crate::CliError;

/// Seventeen significant digits, enough to reparse the exact `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn episode_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    for prefix in ["u_applied", "u_ce", "u_dual", "u_orc"] {
        h.extend((1..=m).map(|i| format!("{prefix}_{i}")));
    }
    h.extend(["S", "G", "E_par", "M_orc", "trace_Sigma", "J_reg_cum", "alpha_eff"].map(String::from));
    h
}

pub fn write_episode_csv<W: Write>(out: W, log: &EpisodeLog) -> Result<(), CliError> {
    let n = log.config.x0.len();
    let m = log.steps.first().map_or(0, |s| s.u_applied.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(episode_header(n, m))?;
    for rec in &log.steps {
        let mut row = vec![rec.t.to_string()];
        for v in [&rec.x, &rec.u_applied, &rec.u_ce, &rec.u_dual, &rec.u_oracle] {
            row.extend(v.iter().map(|&x| fmt_f64(x)));
        }
        let k = &rec.metrics;
        row.extend([k.s, k.g, k.e_par, k.m_orc, k.trace_sigma, k.j_reg_cum, rec.alpha_eff].map(fmt_f64));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub const AGGREGATE_HEADER: [&str; 5] = ["t", "policy", "series", "mean", "std"];

/// One labelled group of per-series statistics, e.g. a policy or a
/// post-learning arm.
pub struct Group<'a> {
    pub label: &'a str,
    pub stats: &'a [SeriesStats],
}

pub fn write_aggregate_csv<W: Write>(out: W, groups: &[Group<'_>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for g in groups {
        for s in g.stats {
            for (t, (mean, std)) in s.mean.iter().zip(&s.std).enumerate() {
                w.write_record([t.to_string(), g.label.to_string(), s.series.name().to_string(), fmt_f64(*mean), fmt_f64(*std)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn series(stats: &[SeriesStats], which: Series) -> &SeriesStats {
    stats.iter().find(|s| s.series == which).expect("aggregate covers every series")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value).map_err(|e| CliError::Io(e.into()))
}

/// Reads a belief file; shape mismatches against `(n, m)` are reported as
/// configuration errors.
pub fn read_belief(path: &Path, n: usize, m: usize) -> Result<ParamBelief, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read belief {}: {e}", path.display())))?;
    let belief: ParamBelief = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid belief {}: {e}", path.display())))?;
    if belief.n() != n || belief.m() != m {
        return Err(CliError::Config(format!(
            "belief {} has n={}, m={} but the plant has n={n}, m={m}",
            path.display(),
            belief.n(),
            belief.m()
        )));
    }
    Ok(belief)
}

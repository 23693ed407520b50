use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::read_metrics_csv;
use crate::trainer::MetricRow;
use crate::{Error, Result};

/// Share of logged iterations that make up the final window.
pub const FINAL_WINDOW_FRACTION: f64 = 0.1;

/// Number of trailing rows in the final window: `ceil(0.1 n)`, at least one.
pub fn final_window_len(rows: usize) -> usize {
    ((rows as f64 * FINAL_WINDOW_FRACTION).ceil() as usize).clamp(1, rows.max(1))
}

/// Mean episodic return over the final window, skipping iterations in which
/// no episode finished. NaN when nothing in the window finished.
pub fn final_window_mean(rows: &[MetricRow]) -> f64 {
    window_mean(rows, |r| r.episodic_return_mean)
}

fn window_mean(rows: &[MetricRow], metric: impl Fn(&MetricRow) -> f64) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    let window = &rows[rows.len() - final_window_len(rows.len())..];
    let vals: Vec<f64> = window.iter().map(metric).filter(|v| !v.is_nan()).collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub iterations: usize,
    pub final_return_mean: f64,
    pub initial_entropy: f64,
    pub final_entropy: f64,
}

/// Cross-seed summary of one (env, variant) pair. `final_return_std` is the
/// population standard deviation of the per-seed final-window means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub env: String,
    pub variant: String,
    pub seeds: Vec<SeedSummary>,
    pub final_return_mean: f64,
    pub final_return_std: f64,
    pub normalized_return: Option<f64>,
}

impl AggregateSummary {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn aggregate_runs(env: &str, variant: &str, runs: &[(u64, Vec<MetricRow>)]) -> Result<AggregateSummary> {
    if runs.is_empty() {
        return Err(Error::Usage(format!("{env}/{variant}: no runs to aggregate")));
    }
    let seeds: Vec<SeedSummary> = runs
        .iter()
        .map(|(seed, rows)| SeedSummary {
            seed: *seed,
            iterations: rows.len(),
            final_return_mean: final_window_mean(rows),
            initial_entropy: rows.first().map_or(f64::NAN, |r| r.policy_entropy),
            final_entropy: rows.last().map_or(f64::NAN, |r| r.policy_entropy),
        })
        .collect();
    let n = seeds.len() as f64;
    let mean = seeds.iter().map(|s| s.final_return_mean).sum::<f64>() / n;
    let var = seeds.iter().map(|s| (s.final_return_mean - mean).powi(2)).sum::<f64>() / n;
    Ok(AggregateSummary {
        env: env.to_owned(),
        variant: variant.to_owned(),
        seeds,
        final_return_mean: mean,
        final_return_std: var.sqrt(),
        normalized_return: None,
    })
}

/// Seed number of a `seed<k>.csv` file name.
pub(crate) fn seed_of(path: &Path) -> Option<u64> {
    path.file_name()?
        .to_str()?
        .strip_prefix("seed")?
        .strip_suffix(".csv")?
        .parse()
        .ok()
}

/// Per-seed CSVs of a variant directory, ordered by seed.
pub(crate) fn seed_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(seed) = seed_of(&path) {
            files.push((seed, path));
        }
    }
    files.sort();
    Ok(files)
}

/// Re-aggregates `<env>/<variant>` from its seed CSVs.
pub fn load_variant(dir: impl AsRef<Path>) -> Result<AggregateSummary> {
    let dir = dir.as_ref();
    let files = seed_files(dir)?;
    if files.is_empty() {
        return Err(Error::Usage(format!("no seed<k>.csv files in {}", dir.display())));
    }
    let runs = files
        .iter()
        .map(|(seed, path)| Ok((*seed, read_metrics_csv(path)?)))
        .collect::<Result<Vec<_>>>()?;
    let name = |p: Option<&Path>| {
        p.and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let variant = name(Some(dir));
    let env = name(dir.parent());
    aggregate_runs(&env, &variant, &runs)
}

/// Per-environment min-max normalization of final-window means, averaged
/// over the environments each variant appears in. An environment whose
/// variants all score the same contributes 0.5. The per-env score is stored
/// back into each summary.
pub fn normalized_return(summaries: &mut [AggregateSummary]) -> BTreeMap<String, f64> {
    let mut by_env: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in summaries.iter().enumerate() {
        by_env.entry(s.env.clone()).or_default().push(i);
    }
    let mut totals: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for idx in by_env.values() {
        let means = idx.iter().map(|&i| summaries[i].final_return_mean);
        let lo = means.clone().fold(f64::INFINITY, f64::min);
        let hi = means.fold(f64::NEG_INFINITY, f64::max);
        for &i in idx {
            let s = &mut summaries[i];
            let score = if hi > lo {
                (s.final_return_mean - lo) / (hi - lo)
            } else {
                0.5
            };
            s.normalized_return = Some(score);
            let t = totals.entry(s.variant.clone()).or_insert((0.0, 0));
            t.0 += score;
            t.1 += 1;
        }
    }
    totals.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect()
}

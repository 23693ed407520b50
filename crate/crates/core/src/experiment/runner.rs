use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::aggregate::{aggregate_runs, normalized_return, AggregateSummary};
use super::charts::{render_line_chart, BandPoint, SeriesBand};
use super::metrics::MetricWriter;
use crate::envs::EnvKind;
use crate::trainer::{train, Algo, MetricRow, TrainConfig};
use crate::{Error, Result};

/// A seed sweep of one training configuration on one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub env: EnvKind,
    /// Shared settings; `seed` is replaced by each entry of `seeds`.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Seeds trained concurrently.
    pub workers: usize,
}

impl RunSpec {
    pub fn new(env: EnvKind, train: TrainConfig, seeds: Vec<u64>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            env,
            train,
            seeds,
            out_dir: out_dir.into(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Usage("at least one seed is required".into()));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Usage(format!("seeds must be distinct, got {:?}", self.seeds)));
        }
        if self.workers == 0 {
            return Err(Error::Usage("workers must be at least 1".into()));
        }
        self.train.validate()
    }

    pub fn variant(&self) -> String {
        self.train.variant_name()
    }

    /// `<out>/<env>/<variant>`
    pub fn variant_dir(&self) -> PathBuf {
        self.out_dir.join(self.env.name()).join(self.variant())
    }

    pub fn seed_path(&self, seed: u64) -> PathBuf {
        self.variant_dir().join(format!("seed{seed}.csv"))
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub variant_dir: PathBuf,
    pub summary: AggregateSummary,
    /// Logged rows per seed, in the order of `RunSpec::seeds`.
    pub histories: Vec<(u64, Vec<MetricRow>)>,
}

fn run_seed(spec: &RunSpec, seed: u64) -> Result<Vec<MetricRow>> {
    let cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let mut writer = MetricWriter::create(spec.seed_path(seed))?;
    let env = spec.env;
    let outcome = train(&cfg, &|| env.make(), &mut |row| writer.write(row))?;
    Ok(outcome.history)
}

/// Trains every seed, writes `seed<k>.csv` per seed and `aggregate.json`.
/// Any failed seed aborts the run after the remaining workers finish; no
/// aggregate is written in that case.
pub fn run(spec: &RunSpec) -> Result<RunReport> {
    spec.validate()?;
    let dir = spec.variant_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let n = spec.seeds.len();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<MetricRow>>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..spec.workers.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let outcome = run_seed(spec, spec.seeds[i]);
                results.lock().expect("result slots")[i] = Some(outcome);
            });
        }
    });

    let mut histories = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (seed, res) in spec.seeds.iter().zip(results.into_inner().expect("result slots")) {
        match res.expect("every seed is claimed by a worker") {
            Ok(rows) => histories.push((*seed, rows)),
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Aborted(format!(
            "{}/{}: {} of {n} runs aborted: {}",
            spec.env,
            spec.variant(),
            failures.len(),
            failures.join("; ")
        )));
    }

    let summary = aggregate_runs(spec.env.name(), &spec.variant(), &histories)?;
    summary.write_json(dir.join("aggregate.json"))?;
    Ok(RunReport {
        variant_dir: dir,
        summary,
        histories,
    })
}

/// One row of an ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub summary: AggregateSummary,
}

fn sweep(
    base: &RunSpec,
    values: &[f64],
    param: &str,
    configure: impl Fn(&mut TrainConfig, f64),
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Usage(format!("{param} sweep needs at least one value")));
    }
    // Reject bad grids before any training starts.
    let specs: Vec<RunSpec> = values
        .iter()
        .map(|&v| {
            let mut spec = base.clone();
            configure(&mut spec.train, v);
            spec.validate().map(|_| spec)
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::with_capacity(specs.len());
    for spec in &specs {
        summaries.push(run(spec)?.summary);
    }
    normalized_return(&mut summaries);
    let rows: Vec<SweepRow> = values
        .iter()
        .zip(summaries)
        .map(|(&value, summary)| SweepRow { value, summary })
        .collect();
    write_sweep(&base.out_dir.join(base.env.name()), param, &rows)?;
    Ok(rows)
}

fn write_sweep(env_dir: &Path, param: &str, rows: &[SweepRow]) -> Result<()> {
    let csv_path = env_dir.join(format!("sweep_{param}.csv"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Aborted(format!("{}: {e}", csv_path.display())))?;
    let csv_err = |e: csv::Error| Error::Aborted(format!("{}: {e}", csv_path.display()));
    w.write_record([param, "variant", "final_return_mean", "final_return_std", "normalized_return"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.summary.variant.clone(),
            r.summary.final_return_mean.to_string(),
            r.summary.final_return_std.to_string(),
            r.summary.normalized_return.map_or_else(String::new, |v| v.to_string()),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    // Positive grids spanning decades read better on a log axis.
    let log_axis = rows.iter().all(|r| r.value > 0.0) && {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.value), hi.max(r.value)));
        hi / lo >= 100.0
    };
    let band = SeriesBand {
        points: rows
            .iter()
            .map(|r| BandPoint {
                x: if log_axis { r.value.log10() } else { r.value },
                mean: r.summary.final_return_mean,
                std: r.summary.final_return_std,
            })
            .collect(),
    };
    let x_label = if log_axis { format!("log10 {param}") } else { param.to_owned() };
    let (svg, _) = render_line_chart(
        &format!("final return vs {param}"),
        &x_label,
        "final-window return",
        &[(base_label(rows), band)],
    );
    let svg_path = env_dir.join(format!("sweep_{param}.svg"));
    std::fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))
}

fn base_label(rows: &[SweepRow]) -> String {
    rows.first().map(|r| r.summary.env.clone()).unwrap_or_default()
}

/// RPO at each perturbation half-width; the rest of `base` is kept.
pub fn sweep_alpha(base: &RunSpec, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    sweep(base, alphas, "alpha", |cfg, a| {
        cfg.algo = Algo::Rpo;
        cfg.rpo_alpha = a;
    })
}

/// `base` at each entropy coefficient.
pub fn sweep_ent(base: &RunSpec, coefs: &[f64]) -> Result<Vec<SweepRow>> {
    sweep(base, coefs, "ent_coef", |cfg, c| cfg.ent_coef = c)
}

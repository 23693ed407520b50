use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpolab::augmentation::AugMode;
use rpolab::distributions::Family;
use rpolab::envs::EnvKind;
use rpolab::experiment::{
    emit_charts, env_overrides, find_variant_dirs, load_variant, normalized_return, parse_config_file, run, sweep_alpha, sweep_ent,
    Layered, RunSpec, SweepRow,
};
use rpolab::trainer::{Algo, TrainConfig, ENT_COEF_PRESETS};
use rpolab::{Error, Result};

/// Train and compare PPO and RPO agents on small control tasks.
#[derive(Debug, Parser)]
#[command(name = "rpolab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one variant over a list of seeds.
    Train(RunArgs),
    /// Train RPO at several perturbation half-widths.
    SweepAlpha {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated values.
        #[arg(long)]
        alphas: Option<String>,
    },
    /// Train one variant at several entropy coefficients.
    SweepEnt {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated values.
        #[arg(long)]
        ent_coefs: Option<String>,
    },
    /// Re-aggregate every variant under a results directory.
    Aggregate { dir: PathBuf },
    /// Write return and entropy charts for every environment under a directory.
    Plot { dir: PathBuf },
}

/// Every flag may also come from a `key=value` config file or an
/// `RPOLAB_<KEY>` environment variable; flags win over both.
#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// pendulum, cartpole or pointmass
    #[arg(long)]
    env: Option<String>,
    /// ppo or rpo
    #[arg(long)]
    algo: Option<String>,
    /// gaussian, laplace or gumbel
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    ent_coef: Option<String>,
    /// none, rad or drac
    #[arg(long)]
    aug: Option<String>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    total_timesteps: Option<String>,
    #[arg(long)]
    num_steps: Option<String>,
    #[arg(long)]
    num_envs: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    anneal_lr: Option<String>,
    #[arg(long)]
    cache_perturbation: Option<String>,
    /// Seeds trained in parallel.
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write zero instead of wall-clock seconds so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

const KEYS: &[&str] = &[
    "config",
    "env",
    "algo",
    "dist",
    "alpha",
    "ent-coef",
    "aug",
    "seeds",
    "total-timesteps",
    "num-steps",
    "num-envs",
    "learning-rate",
    "anneal-lr",
    "cache-perturbation",
    "workers",
    "out",
    "no-timing",
    "alphas",
    "ent-coefs",
];

fn parse_list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::Usage(format!("invalid {key} entry {s:?}: {e}"))))
        .collect()
}

impl RunArgs {
    fn layered(&self, extra: &[(&str, &Option<String>)]) -> Result<Layered> {
        let env: Vec<(String, String)> = std::env::vars().collect();
        let env_layer = env_overrides(env);
        let config_path = self
            .config
            .clone()
            .or_else(|| env_layer.get("config").map(PathBuf::from));
        let mut layered = Layered::new();
        if let Some(path) = config_path {
            layered = layered.layer(parse_config_file(path)?);
        }
        layered = layered.layer(env_layer);
        let flags: [(&str, &Option<String>); 14] = [
            ("env", &self.env),
            ("algo", &self.algo),
            ("dist", &self.dist),
            ("alpha", &self.alpha),
            ("ent-coef", &self.ent_coef),
            ("aug", &self.aug),
            ("seeds", &self.seeds),
            ("total-timesteps", &self.total_timesteps),
            ("num-steps", &self.num_steps),
            ("num-envs", &self.num_envs),
            ("learning-rate", &self.learning_rate),
            ("anneal-lr", &self.anneal_lr),
            ("cache-perturbation", &self.cache_perturbation),
            ("workers", &self.workers),
        ];
        for (key, value) in flags.iter().chain(extra) {
            if let Some(v) = value {
                layered.set(key, v.clone());
            }
        }
        if let Some(out) = &self.out {
            layered.set("out", out.to_string_lossy());
        }
        if self.no_timing {
            layered.set("no-timing", "true");
        }
        if let Some(bad) = layered.unknown_keys(KEYS).next() {
            return Err(Error::Usage(format!("unknown setting {bad:?}")));
        }
        Ok(layered)
    }
}

fn spec_from(layered: &Layered, default_algo: Algo) -> Result<RunSpec> {
    let env: EnvKind = layered.get("env")?.unwrap_or(EnvKind::Pendulum);
    let defaults = TrainConfig::default();
    let mut train = TrainConfig {
        algo: layered.get("algo")?.unwrap_or(default_algo),
        dist_family: layered.get::<Family>("dist")?.unwrap_or(defaults.dist_family),
        rpo_alpha: layered.get("alpha")?.unwrap_or(defaults.rpo_alpha),
        ent_coef: layered.get("ent-coef")?.unwrap_or(defaults.ent_coef),
        total_timesteps: layered.get("total-timesteps")?.unwrap_or(defaults.total_timesteps),
        num_steps: layered.get("num-steps")?.unwrap_or(defaults.num_steps),
        num_envs: layered.get("num-envs")?.unwrap_or(defaults.num_envs),
        learning_rate: layered.get("learning-rate")?.unwrap_or(defaults.learning_rate),
        anneal_lr: layered.get("anneal-lr")?.unwrap_or(defaults.anneal_lr),
        cache_perturbation: layered.get("cache-perturbation")?.unwrap_or(defaults.cache_perturbation),
        timing: !layered.get::<bool>("no-timing")?.unwrap_or(false),
        ..defaults
    };
    train.aug.mode = layered.get::<AugMode>("aug")?.unwrap_or_default();
    let seeds = match layered.raw("seeds") {
        Some(raw) => parse_list("seeds", raw)?,
        None => vec![1],
    };
    let out = layered.raw("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    let mut spec = RunSpec::new(env, train, seeds, out);
    spec.workers = layered.get("workers")?.unwrap_or(1);
    spec.validate().map_err(|e| match e {
        Error::Config(m) => Error::Usage(m),
        other => other,
    })?;
    Ok(spec)
}

fn print_sweep(param: &str, rows: &[SweepRow]) {
    println!("{param:>10}  {:>12}  {:>10}  {:>10}", "final mean", "std", "normalized");
    for r in rows {
        println!(
            "{:>10}  {:>12.2}  {:>10.2}  {:>10.3}",
            r.value,
            r.summary.final_return_mean,
            r.summary.final_return_std,
            r.summary.normalized_return.unwrap_or(f64::NAN)
        );
    }
}

fn aggregate_dir(dir: &Path) -> Result<()> {
    let dirs = find_variant_dirs(dir)?;
    if dirs.is_empty() {
        return Err(Error::Usage(format!("no seed<k>.csv files under {}", dir.display())));
    }
    let mut summaries = dirs.iter().map(load_variant).collect::<Result<Vec<_>>>()?;
    let scores = normalized_return(&mut summaries);
    for (dir, s) in dirs.iter().zip(&summaries) {
        s.write_json(dir.join("aggregate.json"))?;
        println!(
            "{:<12} {:<32} {:>3} seeds  final {:>10.2} ± {:<8.2} normalized {:.3}",
            s.env,
            s.variant,
            s.seeds.len(),
            s.final_return_mean,
            s.final_return_std,
            s.normalized_return.unwrap_or(f64::NAN)
        );
    }
    let path = dir.join("normalized_return.json");
    std::fs::write(&path, serde_json::to_string_pretty(&scores)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let spec = spec_from(&args.layered(&[])?, Algo::Rpo)?;
            let report = run(&spec)?;
            let s = &report.summary;
            println!(
                "{} {}: final-window return {:.2} ± {:.2} over {} seeds ({})",
                s.env,
                s.variant,
                s.final_return_mean,
                s.final_return_std,
                s.seeds.len(),
                report.variant_dir.display()
            );
        }
        Command::SweepAlpha { run, alphas } => {
            let layered = run.layered(&[("alphas", &alphas)])?;
            let values = parse_list("alphas", layered.raw("alphas").unwrap_or("0.001,0.1,0.5,3,1000"))?;
            let spec = spec_from(&layered, Algo::Rpo)?;
            print_sweep("alpha", &sweep_alpha(&spec, &values)?);
        }
        Command::SweepEnt { run, ent_coefs } => {
            let layered = run.layered(&[("ent-coefs", &ent_coefs)])?;
            let values = match layered.raw("ent-coefs") {
                Some(raw) => parse_list("ent-coefs", raw)?,
                None => ENT_COEF_PRESETS.to_vec(),
            };
            let spec = spec_from(&layered, Algo::Ppo)?;
            print_sweep("ent_coef", &sweep_ent(&spec, &values)?);
        }
        Command::Aggregate { dir } => aggregate_dir(&dir)?,
        Command::Plot { dir } => {
            for path in emit_charts(&dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpolab: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

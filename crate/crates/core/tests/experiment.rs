use std::path::Path;

use rpolab::envs::EnvKind;
use rpolab::experiment::{
    emit_charts, final_window_mean, read_metrics_csv, run, sweep_alpha, write_metrics_csv, RunSpec, CSV_HEADER,
};
use rpolab::trainer::{Algo, MetricRow, TrainConfig};
use rpolab::Error;

fn small(total: usize) -> TrainConfig {
    TrainConfig {
        total_timesteps: total,
        num_steps: 64,
        num_minibatches: 4,
        update_epochs: 2,
        hidden: vec![8],
        timing: false,
        ..TrainConfig::default()
    }
}

fn spec(out: &Path, seeds: Vec<u64>, total: usize) -> RunSpec {
    RunSpec::new(EnvKind::Pendulum, small(total), seeds, out)
}

#[test]
fn one_seed_one_rollout_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(dir.path(), vec![1], 2048);
    s.train.num_steps = 2048;
    s.train.num_minibatches = 32;
    let report = run(&s).unwrap();
    let csvs: Vec<_> = std::fs::read_dir(&report.variant_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    assert_eq!(csvs, vec!["seed1.csv".to_string()]);
    assert_eq!(read_metrics_csv(s.seed_path(1)).unwrap().len(), 1);
    assert!(report.variant_dir.ends_with("pendulum/rpo-gaussian-a0.5"));
    assert!(report.variant_dir.join("aggregate.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&spec(a.path(), vec![4], 640)).unwrap();
    run(&spec(b.path(), vec![4], 640)).unwrap();
    let rel = "pendulum/rpo-gaussian-a0.5/seed4.csv";
    let x = std::fs::read(a.path().join(rel)).unwrap();
    let y = std::fs::read(b.path().join(rel)).unwrap();
    assert_eq!(x, y);
    assert!(String::from_utf8(x).unwrap().starts_with(CSV_HEADER));
}

#[test]
fn aggregate_matches_recomputation_from_csvs() {
    let dir = tempfile::tempdir().unwrap();
    // 200-step rollouts finish one Pendulum episode per iteration.
    let mut s = spec(dir.path(), vec![1, 2, 3], 200 * 12);
    s.train.num_steps = 200;
    s.workers = 2;
    let report = run(&s).unwrap();

    // Independent recomputation straight from the files: 12 rows, window of 2.
    let mut finals = Vec::new();
    for seed in [1, 2, 3] {
        let text = std::fs::read_to_string(s.seed_path(seed)).unwrap();
        let returns: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(returns.len(), 12);
        assert!(returns.iter().all(|r| r.is_finite()));
        finals.push((returns[10] + returns[11]) / 2.0);
    }
    let mean = finals.iter().sum::<f64>() / 3.0;
    let std = (finals.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / 3.0).sqrt();
    assert!((report.summary.final_return_mean - mean).abs() < 1e-9 * mean.abs().max(1.0));
    assert!((report.summary.final_return_std - std).abs() < 1e-9 * std.max(1.0));

    let on_disk = rpolab::experiment::load_variant(&report.variant_dir).unwrap();
    assert_eq!(on_disk.final_return_mean, report.summary.final_return_mean);
    assert_eq!(on_disk.env, "pendulum");
}

#[test]
fn permuting_seeds_leaves_each_file_unchanged() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&spec(a.path(), vec![5, 6], 192)).unwrap();
    let mut permuted = spec(b.path(), vec![6, 5], 192);
    permuted.workers = 2;
    run(&permuted).unwrap();
    for seed in [5, 6] {
        let rel = format!("pendulum/rpo-gaussian-a0.5/seed{seed}.csv");
        assert_eq!(std::fs::read(a.path().join(&rel)).unwrap(), std::fs::read(b.path().join(&rel)).unwrap());
    }
}

#[test]
fn spec_errors_surface_before_training() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(run(&spec(dir.path(), vec![], 64)), Err(Error::Usage(_))));
    assert!(matches!(run(&spec(dir.path(), vec![1, 1], 64)), Err(Error::Usage(_))));
    assert!(matches!("mujoco".parse::<EnvKind>(), Err(Error::Usage(_))));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn alpha_zero_sweep_matches_plain_ppo() {
    let a = tempfile::tempdir().unwrap();
    let rows = sweep_alpha(&spec(a.path(), vec![1, 2], 256), &[0.0]).unwrap();
    assert_eq!(rows.len(), 1);

    let mut ppo = spec(a.path(), vec![1, 2], 256);
    ppo.train.algo = Algo::Ppo;
    let plain = run(&ppo).unwrap().summary;
    assert_eq!(rows[0].summary.final_return_mean, plain.final_return_mean);
    assert_eq!(rows[0].summary.final_return_std, plain.final_return_std);
    assert!(a.path().join("pendulum/sweep_alpha.csv").exists());
    assert!(a.path().join("pendulum/sweep_alpha.svg").exists());
}

#[test]
fn repeated_alpha_gives_identical_rows() {
    let a = tempfile::tempdir().unwrap();
    let rows = sweep_alpha(&spec(a.path(), vec![3], 256), &[0.5, 0.5]).unwrap();
    assert_eq!(rows[0].summary.final_return_mean, rows[1].summary.final_return_mean);
    assert_eq!(rows[0].summary.seeds, rows[1].summary.seeds);
    assert!(matches!(sweep_alpha(&spec(a.path(), vec![3], 256), &[]), Err(Error::Usage(_))));
}

fn synthetic(step_values: &[(u64, f64)]) -> Vec<MetricRow> {
    step_values
        .iter()
        .map(|&(s, v)| MetricRow {
            global_step: s,
            episodic_return_mean: v,
            policy_entropy: 1.0,
            policy_loss: 0.0,
            value_loss: 0.0,
            approx_kl: 0.0,
            clip_fraction: 0.0,
            wall_time_s: 0.0,
        })
        .collect()
}

/// Parses the `points` attribute of the first element with the given class.
fn points(svg: &str, class: &str) -> Vec<(f64, f64)> {
    let start = svg.find(&format!(r#"class="{class}""#)).unwrap();
    let attr = &svg[start..];
    let p = attr.find(r#"points=""#).unwrap() + 8;
    let end = attr[p..].find('"').unwrap();
    attr[p..p + end]
        .split(' ')
        .map(|xy| {
            let (x, y) = xy.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn chart_band_endpoints_match_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    let var = dir.path().join("pendulum/demo");
    // At step 200 the seeds report 2 and 6: mean 4, population std 2.
    write_metrics_csv(var.join("seed1.csv"), &synthetic(&[(100, 0.0), (200, 2.0)])).unwrap();
    write_metrics_csv(var.join("seed2.csv"), &synthetic(&[(100, 0.0), (200, 6.0)])).unwrap();
    let written = emit_charts(dir.path()).unwrap();
    assert_eq!(written.len(), 2);
    let svg = std::fs::read_to_string(dir.path().join("pendulum/return.svg")).unwrap();

    // Frame: x in [100, 200], y in [0, 6]; plot area 60..580 by 60..340.
    let to_px = |x: f64, y: f64| (60.0 + (x - 100.0) / 100.0 * 520.0, 340.0 - y / 6.0 * 280.0);
    let band = points(&svg, "band");
    assert_eq!(band.len(), 4);
    let upper = to_px(200.0, 6.0);
    let lower = to_px(200.0, 2.0);
    assert!((band[1].0 - upper.0).abs() < 1e-3 && (band[1].1 - upper.1).abs() < 1e-3);
    assert!((band[2].0 - lower.0).abs() < 1e-3 && (band[2].1 - lower.1).abs() < 1e-3);
    let mean = points(&svg, "mean");
    let m = to_px(200.0, 4.0);
    assert!((mean[1].1 - m.1).abs() < 1e-3);

    let again = tempfile::tempdir().unwrap();
    let var2 = again.path().join("pendulum/demo");
    write_metrics_csv(var2.join("seed1.csv"), &synthetic(&[(100, 0.0), (200, 2.0)])).unwrap();
    write_metrics_csv(var2.join("seed2.csv"), &synthetic(&[(100, 0.0), (200, 6.0)])).unwrap();
    emit_charts(again.path()).unwrap();
    assert_eq!(svg, std::fs::read_to_string(again.path().join("pendulum/return.svg")).unwrap());
}

#[test]
fn identical_seeds_give_zero_width_band() {
    let dir = tempfile::tempdir().unwrap();
    let var = dir.path().join("cartpole/demo");
    let rows = synthetic(&[(10, 1.0), (20, 5.0), (30, 3.0)]);
    write_metrics_csv(var.join("seed1.csv"), &rows).unwrap();
    write_metrics_csv(var.join("seed2.csv"), &rows).unwrap();
    emit_charts(&var).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("cartpole/return.svg")).unwrap();
    let band = points(&svg, "band");
    let n = band.len() / 2;
    for k in 0..n {
        assert_eq!(band[k], band[band.len() - 1 - k]);
    }
}

#[test]
fn malformed_csv_is_reported_with_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let var = dir.path().join("pendulum/demo");
    std::fs::create_dir_all(&var).unwrap();
    std::fs::write(var.join("seed1.csv"), format!("{CSV_HEADER}\n64,1,1,1,1,1,1,1\n128,1,1\n")).unwrap();
    let err = emit_charts(dir.path()).unwrap_err();
    match err {
        Error::Parse { path, line, .. } => {
            assert!(path.ends_with("seed1.csv"));
            assert_eq!(line, 3);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn final_window_over_synthetic_history() {
    let rows = synthetic(&(1..=20).map(|k| (k * 10, k as f64)).collect::<Vec<_>>());
    assert_eq!(final_window_mean(&rows), 19.5);
}

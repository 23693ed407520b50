use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::aggregate::seed_files;
use super::metrics::read_metrics_csv;
use crate::trainer::MetricRow;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

impl BandPoint {
    pub fn lower(&self) -> f64 {
        self.mean - self.std
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.std
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesBand {
    pub points: Vec<BandPoint>,
}

/// Row of `rows` whose step is nearest to `step`; ties go to the earlier row.
fn nearest(rows: &[MetricRow], step: u64) -> Option<&MetricRow> {
    let i = rows.partition_point(|r| r.global_step < step);
    let after = rows.get(i);
    let before = i.checked_sub(1).and_then(|j| rows.get(j));
    match (before, after) {
        (Some(b), Some(a)) => Some(if step - b.global_step <= a.global_step - step { b } else { a }),
        (b, a) => b.or(a),
    }
}

/// Cross-seed mean and population std of `metric`, evaluated at the steps of
/// the longest run. Other runs contribute their nearest logged step. NaN
/// values are skipped; a step with no finite value is dropped.
pub fn band_from_runs(runs: &[Vec<MetricRow>], metric: impl Fn(&MetricRow) -> f64) -> SeriesBand {
    let Some(reference) = runs.iter().max_by_key(|r| r.len()) else {
        return SeriesBand::default();
    };
    let points = reference
        .iter()
        .filter_map(|r| {
            let vals: Vec<f64> = runs
                .iter()
                .filter_map(|run| nearest(run, r.global_step))
                .map(&metric)
                .filter(|v| !v.is_nan())
                .collect();
            if vals.is_empty() {
                return None;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            Some(BandPoint {
                x: r.global_step as f64,
                mean,
                std: var.sqrt(),
            })
        })
        .collect();
    SeriesBand { points }
}

/// Data-to-pixel mapping of a chart's plot area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartFrame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub width: f64,
    pub height: f64,
    pub margin: f64,
}

impl ChartFrame {
    pub const WIDTH: f64 = 640.0;
    pub const HEIGHT: f64 = 400.0;
    pub const MARGIN: f64 = 60.0;

    fn fit(bands: &[(String, SeriesBand)]) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for p in bands.iter().flat_map(|(_, b)| &b.points) {
            x = (x.0.min(p.x), x.1.max(p.x));
            y = (y.0.min(p.lower()), y.1.max(p.upper()));
        }
        if !x.0.is_finite() {
            x = (0.0, 1.0);
            y = (0.0, 1.0);
        }
        if x.1 <= x.0 {
            x.1 = x.0 + 1.0;
        }
        if y.1 <= y.0 {
            y = (y.0 - 0.5, y.1 + 0.5);
        }
        Self {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            width: Self::WIDTH,
            height: Self::HEIGHT,
            margin: Self::MARGIN,
        }
    }

    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let inner_w = self.width - 2.0 * self.margin;
        let inner_h = self.height - 2.0 * self.margin;
        let px = self.margin + (x - self.x_min) / (self.x_max - self.x_min) * inner_w;
        let py = self.height - self.margin - (y - self.y_min) / (self.y_max - self.y_min) * inner_h;
        (px, py)
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64, span: f64) -> String {
    if span >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders one SVG chart with a shaded mean ± std band and a mean line per
/// series. Coordinates are printed with three decimals.
pub fn render_line_chart(title: &str, x_label: &str, y_label: &str, bands: &[(String, SeriesBand)]) -> (String, ChartFrame) {
    let frame = ChartFrame::fit(bands);
    let mut svg = String::new();
    let (w, h, m) = (frame.width, frame.height, frame.margin);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.3}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{m}" y="{m}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let (px, _) = frame.map(xv, frame.y_min);
        let (_, py) = frame.map(frame.x_min, yv);
        let _ = writeln!(svg, r#"<text x="{px:.3}" y="{:.3}" text-anchor="middle">{}</text>"#, h - m + 16.0, tick(xv, frame.x_max - frame.x_min));
        let _ = writeln!(svg, r#"<text x="{:.3}" y="{py:.3}" text-anchor="end">{}</text>"#, m - 4.0, tick(yv, frame.y_max - frame.y_min));
    }
    let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.3}" text-anchor="middle" transform="rotate(-90 14 {:.3})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );

    for (k, (name, band)) in bands.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper = band.points.iter().map(|p| frame.map(p.x, p.upper()));
        let lower = band.points.iter().rev().map(|p| frame.map(p.x, p.lower()));
        let poly: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
        let line: Vec<String> = band
            .points
            .iter()
            .map(|p| frame.map(p.x, p.mean))
            .map(|(x, y)| format!("{x:.3},{y:.3}"))
            .collect();
        let id = escape(name);
        let _ = writeln!(
            svg,
            r#"<polygon class="band" data-series="{id}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            poly.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" data-series="{id}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{:.3}" fill="{color}">{id}</text>"#,
            m + 8.0,
            m + 16.0 + 14.0 * k as f64
        );
    }
    svg.push_str("</svg>\n");
    (svg, frame)
}

/// Directories under `root` (inclusive) holding `seed<k>.csv` files, sorted.
pub fn find_variant_dirs(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    variant_dirs(root.as_ref(), &mut out)?;
    Ok(out)
}

fn variant_dirs(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !seed_files(root)?.is_empty() {
        out.push(root.to_path_buf());
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    children.iter().try_for_each(|c| variant_dirs(c, out))
}

/// Writes `return.svg` and `entropy.svg` into every environment directory
/// found under `run_dir`, one series per variant. Returns the written paths.
/// Variant name and every seed's history.
type VariantRuns = (String, Vec<Vec<MetricRow>>);
type Metric = fn(&MetricRow) -> f64;

pub fn emit_charts(run_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let run_dir = run_dir.as_ref();
    let dirs = find_variant_dirs(run_dir)?;
    if dirs.is_empty() {
        return Err(Error::Usage(format!("no seed<k>.csv files under {}", run_dir.display())));
    }
    let mut by_env: BTreeMap<PathBuf, Vec<VariantRuns>> = BTreeMap::new();
    for dir in dirs {
        let runs = seed_files(&dir)?
            .iter()
            .map(|(_, p)| read_metrics_csv(p))
            .collect::<Result<Vec<_>>>()?;
        let variant = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let env_dir = dir.parent().unwrap_or(&dir).to_path_buf();
        by_env.entry(env_dir).or_default().push((variant, runs));
    }

    let mut written = Vec::new();
    for (env_dir, variants) in by_env {
        let env = env_dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let charts: [(&str, &str, Metric); 2] = [
            ("return", "episodic return", |r| r.episodic_return_mean),
            ("entropy", "policy entropy", |r| r.policy_entropy),
        ];
        for (file, label, metric) in charts {
            let bands: Vec<(String, SeriesBand)> = variants
                .iter()
                .map(|(name, runs)| (name.clone(), band_from_runs(runs, metric)))
                .collect();
            let (svg, _) = render_line_chart(&format!("{env}: {label}"), "step", label, &bands);
            let path = env_dir.join(format!("{file}.svg"));
            std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

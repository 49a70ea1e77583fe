//! Annotation-budget sweep: every (budget, mode, seed) cell trained on the
//! same pool and scored on one fixed evaluation split.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricOptions, MetricsReport};
use crate::probe::{fit_stage1, predict, run_mode, Mode, ProbeParams, StageFit, TrainConfig, TrainingPool};
use crate::scalar::Scalar;

pub const CSV_HEADER: &str = "budget,method,seed,dataset,auroc,ece,alignment,threshold,qa_accuracy,n";

/// Held-out rows with greedy correctness labels.
#[derive(Debug, Clone)]
pub struct EvalSet<T> {
    pub dataset: String,
    pub ids: Vec<String>,
    pub features: Vec<Vec<T>>,
    pub greedy_correct: Vec<u8>,
}

/// Clamped confidences of `probe` on every evaluation row.
pub fn confidences<T: Scalar>(probe: &ProbeParams<T>, features: &[Vec<T>]) -> Result<Vec<T>> {
    features.iter().map(|h| predict(probe, h).map(|(_, c)| c)).collect()
}

pub fn evaluate_probe<T: Scalar>(
    method: &str,
    probe: &ProbeParams<T>,
    eval: &EvalSet<T>,
    metric_seed: u64,
    options: MetricOptions,
) -> Result<MetricsReport> {
    let conf = confidences(probe, &eval.features)?;
    MetricsReport::compute(method, &eval.dataset, &conf, &eval.greedy_correct, metric_seed, options)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub budget: usize,
    pub method: String,
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub budgets: Vec<usize>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
}

/// Trains and scores every cell. Stage 1 runs once per seed and is shared
/// by all budgets. Alignment thresholds use `metric_seed` for every cell.
pub fn sweep<T: Scalar>(
    pool: &TrainingPool<T>,
    eval: &EvalSet<T>,
    spec: &SweepSpec,
    config: &TrainConfig,
    metric_seed: u64,
    options: MetricOptions,
) -> Result<SweepReport> {
    if spec.budgets.is_empty() || spec.modes.is_empty() || spec.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one budget, mode and seed".into()));
    }
    let mut modes = spec.modes.clone();
    modes.sort();
    modes.dedup();
    let mut seeds = spec.seeds.clone();
    seeds.sort();
    seeds.dedup();
    let mut budgets = spec.budgets.clone();
    budgets.sort();
    budgets.dedup();
    let labeled = pool.labeled_count();
    let max_budget = *budgets.last().expect("non-empty");
    if modes.iter().any(|m| m.uses_labels()) && max_budget > labeled {
        return Err(Error::Budget {
            budget: max_budget,
            available: labeled,
        });
    }

    let need_stage1 = modes.iter().any(|m| m.uses_stage1());
    let stage1: Vec<Option<StageFit<T>>> = seeds
        .par_iter()
        .map(|&seed| {
            if !need_stage1 {
                return Ok(None);
            }
            let cfg = TrainConfig { seed, ..config.clone() };
            fit_stage1(pool, &cfg).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &budget in &budgets {
        for &mode in &modes {
            for (si, &seed) in seeds.iter().enumerate() {
                cells.push((budget, mode, si, seed));
            }
        }
    }
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(budget, mode, si, seed)| {
            let cfg = TrainConfig { seed, ..config.clone() };
            let probe = run_mode(mode, pool, budget, &cfg, stage1[si].as_ref())?;
            let report = evaluate_probe(mode.name(), &probe.params, eval, metric_seed, options)?;
            Ok(SweepRow {
                budget,
                method: mode.name().to_string(),
                seed,
                report,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport { rows })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let r = &row.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.budget,
                csv_field(&row.method),
                row.seed,
                csv_field(&r.dataset),
                r.auroc, r.ece, r.alignment, r.threshold, r.qa_accuracy, r.n
            );
        }
        out
    }

    /// Median over seeds of a metric, keyed by (method, budget).
    pub fn medians(&self, metric: impl Fn(&MetricsReport) -> f64) -> BTreeMap<(String, usize), f64> {
        let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
        for row in &self.rows {
            groups
                .entry((row.method.clone(), row.budget))
                .or_default()
                .push(metric(&row.report));
        }
        groups.into_iter().map(|(k, v)| (k, median(v))).collect()
    }

    /// Line chart of median AUROC against budget (log scale), one line per
    /// method.
    pub fn to_svg(&self) -> String {
        let medians = self.medians(|r| r.auroc);
        let mut lines: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
        for ((method, budget), v) in &medians {
            lines.entry(method.as_str()).or_default().push((*budget, *v));
        }
        let (w, h, pad) = (640.0, 400.0, 50.0);
        let budgets: Vec<f64> = medians.keys().map(|(_, b)| (*b).max(1) as f64).collect();
        let bmin = budgets.iter().copied().fold(f64::INFINITY, f64::min).ln();
        let bmax = budgets.iter().copied().fold(f64::NEG_INFINITY, f64::max).ln();
        let vals: Vec<f64> = medians.values().copied().collect();
        let vmin = vals.iter().copied().fold(f64::INFINITY, f64::min).min(0.5);
        let vmax = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(vmin + 1e-6);
        let x = |b: usize| {
            let span = (bmax - bmin).max(1e-9);
            pad + ((b.max(1) as f64).ln() - bmin) / span * (w - 2.0 * pad)
        };
        let y = |v: f64| h - pad - (v - vmin) / (vmax - vmin) * (h - 2.0 * pad);
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

        let mut svg = String::new();
        let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}" stroke="black"/>"#,
            h - pad,
            w - pad
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">budget (log scale)</text>"#, w / 2.0, h - 10.0);
        let _ = writeln!(svg, r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">median AUROC</text>"#, h / 2.0, h / 2.0);
        let _ = writeln!(svg, r#"<text x="{pad}" y="{}" font-size="10">{vmax:.3}</text>"#, pad - 5.0);
        let _ = writeln!(svg, r#"<text x="{pad}" y="{}" font-size="10">{vmin:.3}</text>"#, h - pad + 12.0);
        for (i, (method, points)) in lines.iter().enumerate() {
            let color = colors[i % colors.len()];
            let path: Vec<String> = points.iter().map(|&(b, v)| format!("{:.2},{:.2}", x(b), y(v))).collect();
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
            for &(b, v) in points {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x(b), y(v));
            }
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="12" fill="{color}">{method}</text>"#,
                w - pad - 80.0,
                pad + 15.0 * i as f64
            );
        }
        for &b in medians.keys().map(|(_, b)| b).collect::<std::collections::BTreeSet<_>>().iter() {
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" font-size="10" text-anchor="middle">{b}</text>"#, x(*b), h - pad + 14.0);
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of empty set");
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> (TrainingPool<f64>, EvalSet<f64>) {
        let row = |i: usize| -> (Vec<f64>, f64) {
            let z = ((i * 37) % 101) as f64 / 100.0;
            (vec![z * 2.0 - 1.0, ((i * 13) % 7) as f64 * 0.01], z)
        };
        let (features, ys): (Vec<_>, Vec<_>) = (0..n).map(row).unzip();
        let pool = TrainingPool {
            ids: (0..n).map(|i| format!("p{i}")).collect(),
            features,
            self_consistency: ys.clone(),
            accuracy: ys.iter().map(|&y| Some(y)).collect(),
        };
        let (ef, ey): (Vec<_>, Vec<_>) = (n..n + 60).map(row).unzip();
        let eval = EvalSet {
            dataset: "toy".into(),
            ids: (0..60).map(|i| format!("e{i}")).collect(),
            features: ef,
            greedy_correct: ey.iter().map(|&y| u8::from(y > 0.4)).collect(),
        };
        (pool, eval)
    }

    #[test]
    fn cell_count_and_header() {
        let (pool, eval) = fixture(200);
        let spec = SweepSpec {
            budgets: vec![20, 100],
            modes: vec![Mode::Elical, Mode::CalOnly],
            seeds: (1..=5).collect(),
        };
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let report = sweep(&pool, &eval, &spec, &cfg, 0, MetricOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 20);
        let csv = report.to_csv();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().count(), 21);
        let again = sweep(&pool, &eval, &spec, &cfg, 0, MetricOptions::default()).unwrap();
        assert_eq!(again.to_csv(), csv);
        assert!(report.to_svg().starts_with("<svg"));
    }

    #[test]
    fn budget_over_pool_is_rejected() {
        let (pool, eval) = fixture(50);
        let spec = SweepSpec {
            budgets: vec![51],
            modes: vec![Mode::CalOnly],
            seeds: vec![1],
        };
        let err = sweep(&pool, &eval, &spec, &TrainConfig::default(), 0, MetricOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Budget { budget: 51, available: 50 }));
    }

    #[test]
    fn median_values() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

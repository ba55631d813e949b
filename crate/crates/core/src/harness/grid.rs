use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{run_key, run_pipeline, ExperimentConfig, GridPoint, HarnessError, RunRecord, RunStatus};
use crate::dataset::ConditionClass;
use crate::metrics::EvalReport;
use crate::par;

/// Metrics aggregated per grid point, in column order.
pub const AGGREGATE_METRICS: [&str; 6] = ["accuracy", "macro_precision", "macro_recall", "macro_f1", "macro_auc", "out3_recall"];

fn metric(report: &EvalReport, name: &str) -> Option<f64> {
    match name {
        "accuracy" => Some(report.accuracy),
        "macro_precision" => Some(report.macro_precision),
        "macro_recall" => Some(report.macro_recall),
        "macro_f1" => Some(report.macro_f1),
        "macro_auc" => report.macro_auc,
        "out3_recall" => report.class(ConditionClass::MINORITY.name())?.recall,
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct GridOptions {
    pub out: PathBuf,
    /// Concurrent runs; `0` uses every core.
    pub jobs: usize,
    /// Reuse successful records already present under `out/runs/`.
    pub reuse_cache: bool,
}

/// Mean and sample standard deviation of one metric over a grid point's
/// successful runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricStats {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl MetricStats {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let std = mean.filter(|_| n > 1).map(|m| (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub alpha: f64,
    pub snr_db: Option<f64>,
    pub runs: usize,
    pub failed: usize,
    /// Same order as [`AGGREGATE_METRICS`].
    pub metrics: Vec<MetricStats>,
}

impl AggregateRow {
    pub fn get(&self, name: &str) -> Option<&MetricStats> {
        AGGREGATE_METRICS.iter().position(|m| *m == name).map(|i| &self.metrics[i])
    }
}

/// One row per grid point in `points` order; only successful runs enter the
/// statistics.
pub fn aggregate(points: &[GridPoint], records: &[RunRecord]) -> Vec<AggregateRow> {
    points
        .iter()
        .map(|p| {
            let here: Vec<&RunRecord> = records.iter().filter(|r| r.point() == *p).collect();
            let ok: Vec<&EvalReport> = here.iter().filter(|r| r.is_ok()).filter_map(|r| r.report.as_ref()).collect();
            let metrics = AGGREGATE_METRICS
                .iter()
                .map(|m| MetricStats::of(&ok.iter().filter_map(|r| metric(r, m)).collect::<Vec<_>>()))
                .collect();
            AggregateRow { alpha: p.alpha, snr_db: p.snr_db, runs: here.len(), failed: here.len() - ok.len(), metrics }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub records: Vec<RunRecord>,
    pub aggregate: Vec<AggregateRow>,
    /// Per record: taken from the cache rather than executed.
    pub cached: Vec<bool>,
}

impl GridOutcome {
    pub fn reused(&self) -> usize {
        self.cached.iter().filter(|c| **c).count()
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }

    /// 0 when every run succeeded, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures() == 0 {
            0
        } else {
            3
        }
    }
}

fn cached(path: &Path, key: &str) -> Option<RunRecord> {
    let text = fs::read_to_string(path).ok()?;
    match serde_json::from_str::<RunRecord>(&text) {
        Ok(r) if r.key == key && r.is_ok() => Some(r),
        Ok(_) => None,
        Err(e) => {
            log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
            None
        }
    }
}

/// Runs every grid point × repetition × test fold and writes the result
/// tables under `opts.out`.
///
/// Each record is cached as `runs/<key>.json`; the key hashes the settings
/// that affect a run together with its grid point, repetition and fold, so
/// extending the grid only executes the new cells.
pub fn run_grid(cfg: &ExperimentConfig, opts: &GridOptions) -> Result<GridOutcome, HarnessError> {
    cfg.validate()?;
    let runs_dir = opts.out.join("runs");
    fs::create_dir_all(&runs_dir)?;
    fs::write(opts.out.join("config.json"), cfg.to_json())?;

    let mut tasks = Vec::new();
    for point in cfg.points() {
        for rep in 0..cfg.repetitions {
            for fold in 0..cfg.test_folds() {
                tasks.push((point, rep, fold));
            }
        }
    }
    let results: Vec<(RunRecord, bool)> = par::with_jobs(opts.jobs, || {
        par::map(&tasks, |(point, rep, fold)| {
            let key = run_key(cfg, point, *rep, *fold);
            let path = runs_dir.join(format!("{key}.json"));
            if opts.reuse_cache {
                if let Some(r) = cached(&path, &key) {
                    log::info!("reusing {} rep {rep} fold {fold}", point.label());
                    return (r, true);
                }
            }
            log::info!("running {} rep {rep} fold {fold}", point.label());
            let r = run_pipeline(cfg, point, *rep, *fold, Some(&opts.out));
            if let Err(e) = fs::write(&path, serde_json::to_string_pretty(&r).expect("record serializes")) {
                log::warn!("could not cache {}: {e}", path.display());
            }
            (r, false)
        })
    });
    let (records, cached): (Vec<RunRecord>, Vec<bool>) = results.into_iter().unzip();
    let outcome = GridOutcome { aggregate: aggregate(&cfg.points(), &records), records, cached };
    write_grid_outputs(cfg, &outcome, &opts.out)?;
    write_timing_csv(&opts.out.join("timing.csv"), &outcome)?;
    Ok(outcome)
}

/// Reads every record of `cfg`'s grid from `out/runs/`, failing on the
/// first one that is missing.
pub fn load_records(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut records = Vec::new();
    for point in cfg.points() {
        for rep in 0..cfg.repetitions {
            for fold in 0..cfg.test_folds() {
                let key = run_key(cfg, &point, rep, fold);
                let path = out.join("runs").join(format!("{key}.json"));
                let text = fs::read_to_string(&path).map_err(|e| {
                    HarnessError::Data(format!("no record for {} rep {rep} fold {fold} ({}): {e}", point.label(), path.display()))
                })?;
                records.push(
                    serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?,
                );
            }
        }
    }
    Ok(records)
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn counts(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// `records.csv` header.
pub const RECORD_COLUMNS: [&str; 20] = [
    "key",
    "config_hash",
    "alpha",
    "snr_db",
    "repetition",
    "fold",
    "status",
    "failed_stage",
    "message",
    "accuracy",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "macro_auc",
    "out3_recall",
    "classic_added",
    "fakes_added",
    "raw_train_counts",
    "train_counts",
    "test_counts",
];

pub fn write_records_csv(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        let (status, stage, message) = match &r.status {
            RunStatus::Ok => ("ok", "", ""),
            RunStatus::Failed { stage, message } => ("failed", stage.as_str(), message.as_str()),
        };
        let m = |name| num(r.report.as_ref().and_then(|rep| metric(rep, name)));
        let mut row = vec![
            r.key.clone(),
            r.config_hash.clone(),
            r.alpha.to_string(),
            num(r.snr_db),
            r.repetition.to_string(),
            r.fold.to_string(),
            status.into(),
            stage.into(),
            message.into(),
        ];
        row.extend(AGGREGATE_METRICS.iter().map(|n| m(n)));
        row.extend([
            r.classic_added.to_string(),
            r.fakes_added.to_string(),
            counts(&r.raw_train_counts),
            counts(&r.train_counts),
            counts(&r.test_counts),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `aggregate.csv`: `alpha, snr_db, runs, failed`, then `<metric>_mean`,
/// `<metric>_std` for each metric.
pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["alpha".to_string(), "snr_db".into(), "runs".into(), "failed".into()];
    for m in AGGREGATE_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.alpha.to_string(), num(r.snr_db), r.runs.to_string(), r.failed.to_string()];
        for s in &r.metrics {
            row.push(num(s.mean));
            row.push(num(s.std));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn axes(rows: &[AggregateRow]) -> (Vec<f64>, Vec<Option<f64>>) {
    let mut alphas: Vec<f64> = Vec::new();
    let mut snrs: Vec<Option<f64>> = Vec::new();
    for r in rows {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
        if !snrs.contains(&r.snr_db) {
            snrs.push(r.snr_db);
        }
    }
    (alphas, snrs)
}

fn cell(rows: &[AggregateRow], alpha: f64, snr: Option<f64>, m: &str) -> Option<f64> {
    rows.iter().find(|r| r.alpha == alpha && r.snr_db == snr)?.get(m)?.mean
}

fn snr_name(s: Option<f64>) -> String {
    s.map_or_else(|| "clean".to_string(), |v| v.to_string())
}

/// Mean of `metric` with one row per α and one column per SNR.
pub fn write_pivot_csv(path: &Path, rows: &[AggregateRow], metric: &str) -> Result<(), HarnessError> {
    let (alphas, snrs) = axes(rows);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["alpha".to_string()];
    header.extend(snrs.iter().map(|s| format!("snr_{}", snr_name(*s))));
    w.write_record(&header)?;
    for a in &alphas {
        let mut row = vec![a.to_string()];
        row.extend(snrs.iter().map(|s| num(cell(rows, *a, *s, metric))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Heatmap of the pivot table; white is the lowest value, dark blue the highest.
pub fn heatmap_svg(rows: &[AggregateRow], metric: &str) -> String {
    let (alphas, snrs) = axes(rows);
    let (cw, ch, left, top) = (90.0, 40.0, 80.0, 50.0);
    let values: Vec<f64> = alphas.iter().flat_map(|a| snrs.iter().filter_map(move |s| cell(rows, *a, *s, metric))).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = left + cw * snrs.len() as f64 + 10.0;
    let height = top + ch * alphas.len() as f64 + 10.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<text x="{left}" y="18">{metric} (rows: alpha, columns: SNR dB)</text>"#);
    for (j, s) in snrs.iter().enumerate() {
        let x = left + cw * (j as f64 + 0.5);
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, top - 8.0, snr_name(*s));
    }
    for (i, a) in alphas.iter().enumerate() {
        let y = top + ch * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{a}</text>"#, left - 8.0, y + ch / 2.0 + 4.0);
        for (j, s) in snrs.iter().enumerate() {
            let x = left + cw * j as f64;
            let (fill, label) = match cell(rows, *a, *s, metric) {
                Some(v) => {
                    let t = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
                    let r = (255.0 - 225.0 * t).round();
                    let g = (255.0 - 175.0 * t).round();
                    let b = (255.0 - 75.0 * t).round();
                    (format!("rgb({r},{g},{b})"), format!("{v:.4}"))
                }
                None => ("rgb(220,220,220)".into(), "n/a".into()),
            };
            let _ = writeln!(svg, r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="white"/>"#);
            let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#, x + cw / 2.0, y + ch / 2.0 + 4.0);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Serialize)]
struct FailureEntry<'a> {
    key: &'a str,
    alpha: f64,
    snr_db: Option<f64>,
    repetition: usize,
    fold: usize,
    stage: &'a str,
    message: &'a str,
}

#[derive(Serialize)]
struct GridSummary<'a> {
    config_hash: String,
    run_hash: String,
    runs: usize,
    succeeded: usize,
    failed: usize,
    failures: Vec<FailureEntry<'a>>,
    aggregate: &'a [AggregateRow],
}

/// `timing.csv`: wall-clock seconds per run, and whether it came from the cache.
pub fn write_timing_csv(path: &Path, outcome: &GridOutcome) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["key", "wall_clock_s", "cached"])?;
    for (r, cached) in outcome.records.iter().zip(&outcome.cached) {
        w.write_record([r.key.clone(), r.wall_clock_s.to_string(), cached.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `records.csv`, `aggregate.csv`, `grid_<metric>.csv`,
/// optional `grid_<metric>.svg` and `summary.json` into `out`.
///
/// Every file is a function of the configuration alone.
pub fn write_grid_outputs(cfg: &ExperimentConfig, outcome: &GridOutcome, out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out)?;
    write_records_csv(&out.join("records.csv"), &outcome.records)?;
    write_aggregate_csv(&out.join("aggregate.csv"), &outcome.aggregate)?;
    for m in AGGREGATE_METRICS {
        write_pivot_csv(&out.join(format!("grid_{m}.csv")), &outcome.aggregate, m)?;
        if cfg.heatmaps {
            fs::write(out.join(format!("grid_{m}.svg")), heatmap_svg(&outcome.aggregate, m))?;
        }
    }
    let failures = outcome
        .records
        .iter()
        .filter_map(|r| match &r.status {
            RunStatus::Failed { stage, message } => Some(FailureEntry {
                key: &r.key,
                alpha: r.alpha,
                snr_db: r.snr_db,
                repetition: r.repetition,
                fold: r.fold,
                stage,
                message,
            }),
            RunStatus::Ok => None,
        })
        .collect::<Vec<_>>();
    let summary = GridSummary {
        config_hash: cfg.full_hash(),
        run_hash: cfg.run_hash(),
        runs: outcome.records.len(),
        succeeded: outcome.records.len() - failures.len(),
        failed: failures.len(),
        failures,
        aggregate: &outcome.aggregate,
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::{GridPoint, HarnessError, RunRecord};
use crate::dataset::ConditionClass;

type PairKey = (u64, Option<u64>, usize, usize);

fn pair_key(r: &RunRecord) -> PairKey {
    (r.alpha.to_bits(), r.snr_db.map(f64::to_bits), r.repetition, r.fold)
}

fn describe(r: &RunRecord) -> String {
    format!("{} rep {} fold {}", r.point().label(), r.repetition, r.fold)
}

/// Matches baseline and variant records on grid point, repetition and fold.
///
/// Every record must have exactly one partner; otherwise the error lists
/// the offending cells.
pub fn pair_records<'a>(
    base: &'a [RunRecord],
    variant: &'a [RunRecord],
) -> Result<Vec<(&'a RunRecord, &'a RunRecord)>, HarnessError> {
    let mut problems = Vec::new();
    let mut index: BTreeMap<PairKey, &RunRecord> = BTreeMap::new();
    for r in variant {
        if index.insert(pair_key(r), r).is_some() {
            problems.push(format!("variant has {} twice", describe(r)));
        }
    }
    let mut seen = BTreeMap::new();
    let mut pairs = Vec::new();
    for r in base {
        if seen.insert(pair_key(r), ()).is_some() {
            problems.push(format!("baseline has {} twice", describe(r)));
            continue;
        }
        match index.get(&pair_key(r)) {
            Some(v) => pairs.push((r, *v)),
            None => problems.push(format!("baseline {} has no variant partner", describe(r))),
        }
    }
    for r in variant {
        if !seen.contains_key(&pair_key(r)) {
            problems.push(format!("variant {} has no baseline partner", describe(r)));
        }
    }
    if !problems.is_empty() {
        let n = problems.len();
        problems.truncate(10);
        let more = if n > 10 { format!(" (and {} more)", n - 10) } else { String::new() };
        return Err(HarnessError::Unpaired(format!("{n} pairing problem(s): {}{more}", problems.join("; "))));
    }
    if base.is_empty() {
        return Err(HarnessError::Unpaired("no records to compare".into()));
    }
    Ok(pairs)
}

/// One paired comparison; deltas are variant minus baseline and are empty
/// when either run failed or the metric is undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationPair {
    pub alpha: f64,
    pub snr_db: Option<f64>,
    pub repetition: usize,
    pub fold: usize,
    pub base_key: String,
    pub variant_key: String,
    pub base_macro_f1: Option<f64>,
    pub variant_macro_f1: Option<f64>,
    pub delta_macro_f1: Option<f64>,
    pub base_out3_recall: Option<f64>,
    pub variant_out3_recall: Option<f64>,
    pub delta_out3_recall: Option<f64>,
    pub delta_accuracy: Option<f64>,
}

/// Win/tie/loss counts of the variant per grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub alpha: f64,
    pub snr_db: Option<f64>,
    pub pairs: usize,
    /// Pairs where either run failed.
    pub failed_pairs: usize,
    pub f1_wins: usize,
    pub f1_ties: usize,
    pub f1_losses: usize,
    pub mean_delta_macro_f1: Option<f64>,
    pub recall_wins: usize,
    pub recall_ties: usize,
    pub recall_losses: usize,
    pub mean_delta_out3_recall: Option<f64>,
    pub mean_delta_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSummary {
    pub pairs: Vec<AblationPair>,
    pub points: Vec<PointSummary>,
}

fn tally(deltas: &[f64]) -> (usize, usize, usize, Option<f64>) {
    let wins = deltas.iter().filter(|d| **d > 0.0).count();
    let ties = deltas.iter().filter(|d| **d == 0.0).count();
    let mean = (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64);
    (wins, ties, deltas.len() - wins - ties, mean)
}

/// Paired deltas of `variant` against `base` and per-point win counts.
pub fn ablate(base: &[RunRecord], variant: &[RunRecord]) -> Result<AblationSummary, HarnessError> {
    let pairs = pair_records(base, variant)?;
    let minority = ConditionClass::MINORITY;
    let table: Vec<AblationPair> = pairs
        .iter()
        .map(|(b, v)| {
            let f1 = |r: &RunRecord| r.is_ok().then_some(()).and(r.report.as_ref()).map(|x| x.macro_f1);
            let acc = |r: &RunRecord| r.is_ok().then_some(()).and(r.report.as_ref()).map(|x| x.accuracy);
            let rec = |r: &RunRecord| r.is_ok().then_some(()).and(r.recall(minority));
            let delta = |x: Option<f64>, y: Option<f64>| Some(y? - x?);
            AblationPair {
                alpha: b.alpha,
                snr_db: b.snr_db,
                repetition: b.repetition,
                fold: b.fold,
                base_key: b.key.clone(),
                variant_key: v.key.clone(),
                base_macro_f1: f1(b),
                variant_macro_f1: f1(v),
                delta_macro_f1: delta(f1(b), f1(v)),
                base_out3_recall: rec(b),
                variant_out3_recall: rec(v),
                delta_out3_recall: delta(rec(b), rec(v)),
                delta_accuracy: delta(acc(b), acc(v)),
            }
        })
        .collect();

    let mut points: Vec<GridPoint> = Vec::new();
    for (b, _) in &pairs {
        if !points.contains(&b.point()) {
            points.push(b.point());
        }
    }
    let points = points
        .iter()
        .map(|p| {
            let here: Vec<(&AblationPair, bool)> = table
                .iter()
                .zip(&pairs)
                .filter(|(a, _)| a.alpha == p.alpha && a.snr_db == p.snr_db)
                .map(|(a, (b, v))| (a, b.is_ok() && v.is_ok()))
                .collect();
            let f1: Vec<f64> = here.iter().filter_map(|(a, _)| a.delta_macro_f1).collect();
            let rec: Vec<f64> = here.iter().filter_map(|(a, _)| a.delta_out3_recall).collect();
            let acc: Vec<f64> = here.iter().filter_map(|(a, _)| a.delta_accuracy).collect();
            let (f1_wins, f1_ties, f1_losses, mean_delta_macro_f1) = tally(&f1);
            let (recall_wins, recall_ties, recall_losses, mean_delta_out3_recall) = tally(&rec);
            PointSummary {
                alpha: p.alpha,
                snr_db: p.snr_db,
                pairs: here.len(),
                failed_pairs: here.iter().filter(|(_, ok)| !ok).count(),
                f1_wins,
                f1_ties,
                f1_losses,
                mean_delta_macro_f1,
                recall_wins,
                recall_ties,
                recall_losses,
                mean_delta_out3_recall,
                mean_delta_accuracy: tally(&acc).3,
            }
        })
        .collect();
    Ok(AblationSummary { pairs: table, points })
}

impl AblationSummary {
    /// Writes `ablation_pairs.csv` and `ablation_summary.csv` into `out`.
    pub fn write_csvs(&self, out: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_path(out.join("ablation_pairs.csv"))?;
        for p in &self.pairs {
            w.serialize(p)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(out.join("ablation_summary.csv"))?;
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

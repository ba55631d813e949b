use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use fdd_core::dataset::{write_fddb, LabelEntry, Origin, Split};
use fdd_core::harness::*;
use fdd_core::metrics::{ClassMetrics, EvalReport};
use fdd_core::ConditionClass;
use proptest::prelude::*;

fn tiny() -> ExperimentConfig {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.json")).unwrap();
    let mut cfg = ExperimentConfig::from_json(&text).unwrap();
    cfg.gan.epochs = 10;
    cfg.clstm.training.epochs = 1;
    cfg.heatmaps = false;
    cfg
}

fn point(cfg: &ExperimentConfig) -> GridPoint {
    cfg.points()[0]
}

fn seeds(cfg: &ExperimentConfig) -> RunSeeds {
    RunSeeds::new(cfg.seed, &point(cfg), 0, 0)
}

fn grid_opts(out: &Path) -> GridOptions {
    GridOptions { out: out.to_path_buf(), jobs: 1, reuse_cache: true }
}

#[test]
fn smoke_run_completes_every_stage() {
    let mut cfg = tiny();
    cfg.balance_tolerance = 0;
    let r = run_pipeline(&cfg, &point(&cfg), 0, 0, None);
    assert_eq!(r.status, RunStatus::Ok, "{:?}", r.status);
    assert!(r.fakes_added > 0, "the minority deficit should be filled by the generator");
    let report = r.report.expect("report");
    assert_eq!(report.classes.len(), 6);
    assert!((0.0..=1.0).contains(&report.accuracy));
    assert_eq!(report.meta.unwrap().fold, 0);
    let total_test: usize = r.test_counts.iter().sum();
    assert_eq!(report.confusion.iter().flatten().sum::<u64>() as usize, total_test);
}

#[test]
fn gan_off_leaves_training_counts_raw() {
    let mut cfg = tiny();
    cfg.toggles.gan = false;
    cfg.balance_tolerance = 0;
    let r = run_pipeline(&cfg, &point(&cfg), 0, 0, None);
    assert!(r.is_ok());
    assert_eq!(r.train_counts, r.raw_train_counts);
    assert_eq!(r.fakes_added + r.classic_added, 0);
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = tiny();
    let a = run_pipeline(&cfg, &point(&cfg), 0, 0, None);
    let b = run_pipeline(&cfg, &point(&cfg), 0, 0, None);
    assert!(a.is_ok());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn gan_balances_fault_classes() {
    let mut cfg = tiny();
    cfg.balance_tolerance = 0;
    let s = seeds(&cfg);
    let ds = split_fold(materialize(&cfg, &point(&cfg), &s).unwrap(), cfg.folds, 0, s.split).unwrap();
    let aug = augment(ds, &cfg, &s).unwrap();
    let counts = aug.dataset.class_counts_where(|s| s == Split::Train);
    let faults: Vec<usize> = ConditionClass::ALL.iter().filter(|c| c.is_fault()).map(|c| counts[c.index()]).collect();
    assert!(faults.iter().all(|&c| c == faults[0]), "{faults:?}");
    let generated = aug.dataset.bursts.iter().filter(|b| b.origin == Origin::Generated).count();
    assert_eq!(generated, aug.fakes_added.values().sum::<usize>());
    assert!(aug.dataset.bursts.iter().zip(&aug.dataset.splits).all(|(b, s)| b.origin == Origin::Real || *s == Split::Train));
}

#[test]
fn classic_and_gan_split_each_deficit() {
    let mut cfg = tiny();
    cfg.balance_tolerance = 0;
    cfg.total = 800;
    cfg.alphas = vec![1.0];
    cfg.toggles.classic = true;
    let p = point(&cfg);
    let s = RunSeeds::new(cfg.seed, &p, 0, 0);
    let ds = split_fold(materialize(&cfg, &p, &s).unwrap(), cfg.folds, 0, s.split).unwrap();
    let deficits: BTreeMap<_, _> = ds.fault_deficits().into_iter().collect();
    let aug = augment(ds, &cfg, &s).unwrap();
    for (class, d) in &deficits {
        assert_eq!(aug.classic_added.get(class).copied().unwrap_or(0), d / 2);
        assert_eq!(aug.fakes_added.get(class).copied().unwrap_or(0), d - d / 2);
    }

    cfg.toggles.gan = false;
    let ds = split_fold(materialize(&cfg, &p, &s).unwrap(), cfg.folds, 0, s.split).unwrap();
    let aug = augment(ds, &cfg, &s).unwrap();
    for (class, d) in &deficits {
        assert_eq!(aug.classic_added[class], *d);
    }
    assert!(aug.dataset.bursts.iter().any(|b| b.origin == Origin::Augmented));
}

#[test]
fn leakage_guard_rejects_non_training_bursts() {
    let cfg = tiny();
    let s = seeds(&cfg);
    let ds = split_fold(materialize(&cfg, &point(&cfg), &s).unwrap(), cfg.folds, 0, s.split).unwrap();
    let train = ds.indices_of(Split::Train);
    let test = ds.indices_of(Split::Test);
    assert!(guard_training_only(&ds, &train, "x").is_ok());
    let mut mixed = train.clone();
    mixed.push(test[0]);
    assert!(matches!(guard_training_only(&ds, &mixed, "x"), Err(HarnessError::Leakage { .. })));
}

#[test]
fn test_fold_does_not_influence_fitting() {
    // Replacing every test burst with zeros must leave the fitted pipeline,
    // and therefore its predictions on a fixed probe set, unchanged.
    let cfg = tiny();
    let s = seeds(&cfg);
    let ds = split_fold(materialize(&cfg, &point(&cfg), &s).unwrap(), cfg.folds, 0, s.split).unwrap();
    let mut poisoned = ds.clone();
    for (b, sp) in poisoned.bursts.iter_mut().zip(&poisoned.splits) {
        if *sp == Split::Test {
            b.samples.iter_mut().for_each(|v| *v = 1e3);
        }
    }
    let a = TrainedPipeline::fit(&augment(ds.clone(), &cfg, &s).unwrap().dataset, &cfg, &s).unwrap();
    let b = TrainedPipeline::fit(&augment(poisoned, &cfg, &s).unwrap().dataset, &cfg, &s).unwrap();
    let probe: Vec<_> = ds.bursts_of(Split::Test);
    assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
}

#[test]
fn softmax_head_and_checkpoint_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    for head in [Head::Welm, Head::Softmax] {
        let mut cfg = tiny();
        cfg.toggles.head = head;
        let s = seeds(&cfg);
        let ds = split_fold(materialize(&cfg, &point(&cfg), &s).unwrap(), cfg.folds, 0, s.split).unwrap();
        let p = TrainedPipeline::fit(&ds, &cfg, &s).unwrap();
        let path = dir.path().join("p.fddw");
        p.save(&path).unwrap();
        let q = TrainedPipeline::load(&path, &cfg).unwrap();
        let probe = ds.bursts_of(Split::Test);
        let (a, b) = (p.predict(&probe).unwrap(), q.predict(&probe).unwrap());
        assert_eq!(a.labels, b.labels);
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert!((x - y).abs() < 1e-9);
        }
        if head == Head::Softmax {
            for row in a.scores.chunks(6) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn predict_rejects_foreign_geometry() {
    let cfg = tiny();
    let s = seeds(&cfg);
    let ds = split_fold(materialize(&cfg, &point(&cfg), &s).unwrap(), cfg.folds, 0, s.split).unwrap();
    let p = TrainedPipeline::fit(&ds, &cfg, &s).unwrap();
    let mut b = ds.bursts[0].clone();
    b.samples.truncate(400);
    assert!(matches!(p.predict(&[&b]), Err(HarnessError::Data(_))));
}

#[test]
fn fddb_source_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    let s = seeds(&cfg);
    let ds = materialize(&cfg, &point(&cfg), &s).unwrap();
    let path = dir.path().join("pool.fddb");
    write_fddb(fs::File::create(&path).unwrap(), &ds.bursts, &LabelEntry::standard_table()).unwrap();
    cfg.source = DataSource::Fddb { path: path.clone() };
    cfg.total = 200;
    let r = run_pipeline(&cfg, &point(&cfg), 0, 0, None);
    assert!(r.is_ok(), "{:?}", r.status);

    cfg.total = 4000;
    let r = run_pipeline(&cfg, &point(&cfg), 0, 0, None);
    assert!(matches!(&r.status, RunStatus::Failed { stage, .. } if stage == "scenario"));

    cfg.source = DataSource::Fddb { path: dir.path().join("missing.fddb") };
    let e = materialize(&cfg, &point(&cfg), &s).unwrap_err();
    assert_eq!(e.exit_code(), 4);
}

fn small_grid() -> ExperimentConfig {
    let mut cfg = tiny();
    cfg.toggles.gan = false;
    cfg.alphas = vec![4.0, 2.0];
    cfg.snrs = vec![Some(100.0), None];
    cfg.repetitions = 2;
    cfg.folds = 2;
    cfg.max_folds = None;
    cfg
}

#[test]
fn grid_runs_every_cell_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_grid();
    let out = run_grid(&cfg, &grid_opts(dir.path())).unwrap();
    assert_eq!(out.records.len(), 16);
    assert_eq!(out.failures(), 0);
    assert_eq!(out.exit_code(), 0);

    let mut rdr = csv::Reader::from_path(dir.path().join("aggregate.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..4], ["alpha", "snr_db", "runs", "failed"]);
    for m in AGGREGATE_METRICS {
        assert!(header.contains(&format!("{m}_mean")) && header.contains(&format!("{m}_std")), "{m}");
    }
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(&r[2], "4");
    }

    // Means recomputed from the per-run table.
    let mut rec = csv::Reader::from_path(dir.path().join("records.csv")).unwrap();
    let cols: Vec<String> = rec.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(cols, RECORD_COLUMNS);
    let f1 = cols.iter().position(|c| c == "macro_f1").unwrap();
    let all: Vec<csv::StringRecord> = rec.records().map(Result::unwrap).collect();
    for row in &out.aggregate {
        let vals: Vec<f64> = all
            .iter()
            .filter(|r| r[2].parse::<f64>().unwrap() == row.alpha && r[3].parse::<f64>().ok() == row.snr_db)
            .map(|r| r[f1].parse().unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((row.get("macro_f1").unwrap().mean.unwrap() - mean).abs() < 1e-12);
    }
    for name in ["records.csv", "timing.csv", "summary.json", "config.json", "grid_macro_f1.csv", "grid_out3_recall.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let pivot = fs::read_to_string(dir.path().join("grid_accuracy.csv")).unwrap();
    assert_eq!(pivot.lines().next().unwrap(), "alpha,snr_100,snr_clean");
    assert_eq!(pivot.lines().count(), 3);
}

#[test]
fn grid_outputs_are_byte_identical_across_runs() {
    let cfg = {
        let mut c = small_grid();
        c.alphas = vec![4.0];
        c.snrs = vec![Some(100.0)];
        c.repetitions = 1;
        c.heatmaps = true;
        c
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_grid(&cfg, &grid_opts(a.path())).unwrap();
    run_grid(&cfg, &grid_opts(b.path())).unwrap();
    let mut compared = 0;
    for entry in walk(a.path()) {
        let rel = entry.strip_prefix(a.path()).unwrap();
        if rel == Path::new("timing.csv") {
            continue;
        }
        assert_eq!(fs::read(&entry).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
        compared += 1;
    }
    assert!(compared > 10);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn adding_a_grid_point_reuses_cached_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_grid();
    cfg.alphas = vec![4.0];
    let first = run_grid(&cfg, &grid_opts(dir.path())).unwrap();
    assert_eq!(first.reused(), 0);
    cfg.alphas.push(2.0);
    let second = run_grid(&cfg, &grid_opts(dir.path())).unwrap();
    assert_eq!(second.records.len(), 16);
    assert_eq!(second.reused(), first.records.len());
    for r in &first.records {
        let again = second.records.iter().find(|s| s.key == r.key).unwrap();
        assert_eq!(again.report, r.report);
    }

    // A change to a run-affecting setting invalidates every key.
    cfg.elm.hidden += 1;
    let third = run_grid(&cfg, &grid_opts(dir.path())).unwrap();
    assert_eq!(third.reused(), 0);
    assert_eq!(load_records(&cfg, dir.path()).unwrap().len(), 16);
}

#[test]
fn failed_runs_are_recorded_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_grid();
    cfg.snrs = vec![Some(100.0)];
    cfg.repetitions = 1;
    cfg.max_folds = Some(1);
    // 40 bursts at alpha = 0.25 leave out3 without a single burst per fold.
    cfg.alphas = vec![4.0, 0.25];
    cfg.total = 400;
    cfg.alphas = vec![4.0, 0.25];
    let out = run_grid(&cfg, &grid_opts(dir.path())).unwrap();
    assert_eq!(out.failures(), 1);
    assert_eq!(out.exit_code(), 3);
    let bad = &out.aggregate[1];
    assert_eq!((bad.runs, bad.failed), (1, 1));
    assert_eq!(bad.get("accuracy").unwrap().n, 0);
    assert!(bad.get("accuracy").unwrap().mean.is_none());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failed"], 1);
    assert_eq!(summary["failures"][0]["stage"], "split");
}

#[test]
fn config_validation_and_hashes() {
    let cfg = ExperimentConfig::default();
    cfg.validate().unwrap();
    assert_eq!(cfg.points().len(), 9);
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);

    let mut other = cfg.clone();
    other.alphas.push(2.0);
    other.repetitions = 10;
    assert_eq!(other.run_hash(), cfg.run_hash());
    assert_ne!(other.full_hash(), cfg.full_hash());
    other.toggles.gan = false;
    assert_ne!(other.run_hash(), cfg.run_hash());

    for bad in [
        r#"{"alphas": []}"#,
        r#"{"repetitions": 0}"#,
        r#"{"folds": 1}"#,
        r#"{"alphas": [0.0]}"#,
        r#"{"elm": {"hidden": 0}}"#,
        r#"{"gan": {"n_critic": 0}}"#,
        r#"{"alphas": "x"}"#,
    ] {
        let e = ExperimentConfig::from_json(bad).and_then(|c| c.validate().map(|_| c)).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{bad}");
    }
    let mut t = Toggles::default();
    t.set("classic", true).unwrap();
    t.set("gan", false).unwrap();
    assert!(t.classic && !t.gan && t.weighting);
    assert!(t.set("dropout", true).is_err());
}

#[test]
fn seed_streams_are_hierarchical() {
    let a = GridPoint { alpha: 1.0, snr_db: Some(20.0) };
    let b = GridPoint { alpha: 1.0, snr_db: Some(50.0) };
    let s = RunSeeds::new(3, &a, 0, 0);
    assert_eq!(s, RunSeeds::new(3, &a, 0, 0));
    assert_ne!(s.scenario, RunSeeds::new(3, &b, 0, 0).scenario);
    assert_ne!(s.scenario, RunSeeds::new(3, &a, 1, 0).scenario);
    assert_ne!(s.scenario, RunSeeds::new(4, &a, 0, 0).scenario);
    // Folds of one repetition share the dataset but not the model streams.
    let f1 = RunSeeds::new(3, &a, 0, 1);
    assert_eq!((s.scenario, s.noise, s.split), (f1.scenario, f1.noise, f1.split));
    assert_ne!(s.stage("clstm"), f1.stage("clstm"));
    let all = [s.scenario, s.noise, s.split, s.fold, s.stage("clstm"), s.stage("elm")];
    for i in 0..all.len() {
        for j in 0..i {
            assert_ne!(all[i], all[j]);
        }
    }
}

fn fake_record(alpha: f64, rep: usize, f1: f64, out3: Option<f64>, ok: bool) -> RunRecord {
    let report = EvalReport {
        accuracy: f1,
        macro_precision: f1,
        macro_recall: f1,
        macro_f1: f1,
        macro_auc: None,
        classes: ConditionClass::names(),
        confusion: vec![],
        normalized_confusion: vec![],
        per_class: vec![ClassMetrics { class: "out3".into(), support: 1, precision: None, recall: out3, f1: None, auc: None }],
        meta: None,
    };
    RunRecord {
        key: format!("{alpha}-{rep}"),
        config_hash: "h".into(),
        alpha,
        snr_db: Some(20.0),
        repetition: rep,
        fold: 0,
        status: if ok { RunStatus::Ok } else { RunStatus::Failed { stage: "x".into(), message: "y".into() } },
        raw_train_counts: vec![],
        train_counts: vec![],
        test_counts: vec![],
        classic_added: 0,
        fakes_added: 0,
        report: ok.then_some(report),
        artifacts: vec![],
        wall_clock_s: 0.0,
    }
}

#[test]
fn self_pairing_gives_zero_deltas() {
    let recs: Vec<RunRecord> = (0..5).map(|r| fake_record(0.25, r, 0.1 * r as f64, Some(0.5), true)).collect();
    let s = ablate(&recs, &recs).unwrap();
    assert_eq!(s.pairs.len(), 5);
    for p in &s.pairs {
        assert_eq!(p.delta_macro_f1, Some(0.0));
        assert_eq!(p.delta_out3_recall, Some(0.0));
    }
    assert_eq!(s.points[0].f1_ties, 5);
    assert_eq!(s.points[0].f1_wins + s.points[0].recall_wins, 0);
}

#[test]
fn unpaired_records_are_rejected() {
    let base: Vec<RunRecord> = (0..3).map(|r| fake_record(1.0, r, 0.5, None, true)).collect();
    let e = ablate(&base, &base[..2]).unwrap_err();
    assert!(matches!(&e, HarnessError::Unpaired(m) if m.contains("rep 2")), "{e}");
    let dup = vec![base[0].clone(), base[0].clone()];
    assert!(ablate(&dup, &dup).is_err());
    assert!(ablate(&[], &[]).is_err());
}

#[test]
fn ablation_tables_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let base: Vec<RunRecord> = (0..3).map(|r| fake_record(0.25, r, 0.5, Some(0.5), true)).collect();
    let var: Vec<RunRecord> = (0..3).map(|r| fake_record(0.25, r, 0.6, Some(0.4 + 0.1 * r as f64), r != 1)).collect();
    let s = ablate(&base, &var).unwrap();
    s.write_csvs(dir.path()).unwrap();
    let pairs = fs::read_to_string(dir.path().join("ablation_pairs.csv")).unwrap();
    assert!(pairs.lines().next().unwrap().contains("delta_out3_recall"));
    assert_eq!(pairs.lines().count(), 4);
    let p = &s.points[0];
    assert_eq!(p.failed_pairs, 1);
    assert_eq!((p.recall_wins, p.recall_ties, p.recall_losses), (1, 0, 1));
    assert!(s.pairs[1].delta_macro_f1.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn win_counts_match_recount(
        rows in prop::collection::vec((0usize..2, 0u8..5, 0u8..5, 0u8..5, 0u8..5, any::<bool>()), 1..20)
    ) {
        let mut base = Vec::new();
        let mut var = Vec::new();
        for (i, (a, f1b, f1v, rb, rv, ok)) in rows.iter().enumerate() {
            let alpha = [0.25, 1.0][*a];
            base.push(fake_record(alpha, i, f64::from(*f1b) / 4.0, Some(f64::from(*rb) / 4.0), true));
            var.push(fake_record(alpha, i, f64::from(*f1v) / 4.0, Some(f64::from(*rv) / 4.0), *ok));
        }
        let s = ablate(&base, &var).unwrap();
        for p in &s.points {
            let here: Vec<usize> = (0..rows.len()).filter(|&i| base[i].alpha == p.alpha).collect();
            let ok: Vec<usize> = here.iter().copied().filter(|&i| rows[i].5).collect();
            prop_assert_eq!(p.pairs, here.len());
            prop_assert_eq!(p.failed_pairs, here.len() - ok.len());
            prop_assert_eq!(p.f1_wins, ok.iter().filter(|&&i| rows[i].2 > rows[i].1).count());
            prop_assert_eq!(p.f1_losses, ok.iter().filter(|&&i| rows[i].2 < rows[i].1).count());
            prop_assert_eq!(p.recall_wins, ok.iter().filter(|&&i| rows[i].4 > rows[i].3).count());
            prop_assert_eq!(p.recall_ties, ok.iter().filter(|&&i| rows[i].4 == rows[i].3).count());
        }
    }
}

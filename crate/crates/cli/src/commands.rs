use std::fs;
use std::path::{Path, PathBuf};

use fdd_autodiff::{load_fddw, save_fddw, NamedTensor};
use fdd_core::dataset::{write_fddb, Burst, LabelEntry, Origin, Split};
use fdd_core::features::{save_tensors, FeatureExtractor, TensorStandardizer};
use fdd_core::harness::{
    ablate, aggregate, augment, load_fddb_bursts, load_records, materialize, run_grid, split_fold, write_grid_outputs,
    ExperimentConfig, GridOptions, GridOutcome, GridPoint, HarnessError, Head, RunRecord, RunSeeds, TrainedPipeline,
};
use fdd_core::metrics::evaluate;
use fdd_core::par;
use fdd_core::wgan::{train_wgan_gp, GanConfig, GeneratorNet};
use fdd_core::{derive_seed, seeded, ConditionClass};

use crate::{CellArgs, Cli, Command};

type Result<T> = std::result::Result<T, HarnessError>;

fn io<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> HarnessError + '_ {
    move |e| HarnessError::Io(format!("{}: {e}", path.display()))
}

fn stage<E: std::fmt::Display>(name: &'static str) -> impl Fn(E) -> HarnessError {
    move |e| HarnessError::Stage { stage: name, message: e.to_string() }
}

/// Loads, overrides and validates the configuration.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cell_point(cfg: &ExperimentConfig, cell: &CellArgs) -> Result<GridPoint> {
    let alpha = cell.alpha.unwrap_or(cfg.alphas[0]);
    if !(alpha > 0.0 && alpha <= 5.0) {
        return Err(HarnessError::Config(format!("alpha {alpha} outside (0, 5]")));
    }
    let snr_db = if cell.clean { None } else { cell.snr.or(cfg.snrs[0]) };
    if cell.fold >= cfg.folds {
        return Err(HarnessError::Config(format!("fold {} out of {}", cell.fold, cfg.folds)));
    }
    Ok(GridPoint { alpha, snr_db })
}

fn write_bursts(path: &Path, bursts: &[Burst]) -> Result<()> {
    let owned: Vec<Burst> = bursts.to_vec();
    let file = fs::File::create(path).map_err(io(path))?;
    write_fddb(std::io::BufWriter::new(file), &owned, &LabelEntry::standard_table()).map_err(io(path))
}

fn parse_class(name: &str) -> Result<ConditionClass> {
    ConditionClass::from_name(name).ok_or_else(|| {
        HarnessError::Config(format!("unknown class {name:?}; expected one of {}", ConditionClass::names().join(", ")))
    })
}

pub fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    let cfg = load_config(g.config.as_deref(), g.seed)?;
    fs::create_dir_all(&g.out).map_err(io(&g.out))?;
    par::with_jobs(g.jobs, || match &cli.command {
        Command::Synth { cell, split } => synth(&cfg, cell, split.as_deref(), &g.out),
        Command::GanTrain { class, data, cell } => gan_train(&cfg, parse_class(class)?, data.as_deref(), cell, &g.out),
        Command::GanSample { generator, count } => gan_sample(&cfg, generator, *count, &g.out),
        Command::Features { data } => features(&cfg, data, &g.out),
        Command::Train { cell } => train(&cfg, cell, &g.out),
        Command::Evaluate { model, data } => {
            let sidecar = model.with_file_name("config.json");
            let cfg = match (&g.config, sidecar.exists()) {
                (None, true) => load_config(Some(&sidecar), g.seed)?,
                _ => cfg.clone(),
            };
            evaluate_cmd(&cfg, model, data, &g.out)
        }
        Command::Grid { no_cache } => grid(&cfg, g.jobs, !no_cache, &g.out),
        Command::Ablate { toggle, base, variant } => match (toggle, base, variant) {
            (Some(t), _, _) => ablate_toggle(&cfg, t, g.jobs, &g.out),
            (None, Some(b), Some(v)) => ablate_dirs(b, v, &g.out),
            _ => Err(HarnessError::Config("ablate needs --toggle or both --base and --variant".into())),
        },
        Command::Report => report(&cfg, &g.out),
    })
}

fn synth(cfg: &ExperimentConfig, cell: &CellArgs, split: Option<&str>, out: &Path) -> Result<u8> {
    let point = cell_point(cfg, cell)?;
    let seeds = RunSeeds::new(cfg.seed, &point, cell.repetition, cell.fold);
    let mut ds = materialize(cfg, &point, &seeds)?;
    let name = match split {
        None => "dataset.fddb".to_string(),
        Some(s) => {
            let want = match s {
                "train" => Split::Train,
                "val" => Split::Val,
                "test" => Split::Test,
                other => return Err(HarnessError::Config(format!("unknown split {other:?}"))),
            };
            let tagged = split_fold(ds, cfg.folds, cell.fold, seeds.split)?;
            ds = fdd_core::LabeledDataset::new(tagged.bursts_of(want).into_iter().cloned().collect());
            format!("dataset_{s}.fddb")
        }
    };
    let path = out.join(name);
    write_bursts(&path, &ds.bursts)?;
    println!("wrote {} bursts ({}) to {}", ds.len(), counts_line(&ds.class_counts()), path.display());
    Ok(0)
}

fn counts_line(counts: &[usize]) -> String {
    ConditionClass::ALL.iter().map(|c| format!("{}={}", c.name(), counts[c.index()])).collect::<Vec<_>>().join(" ")
}

fn gan_train(cfg: &ExperimentConfig, class: ConditionClass, data: Option<&Path>, cell: &CellArgs, out: &Path) -> Result<u8> {
    let bursts: Vec<Burst> = match data {
        Some(p) => load_fddb_bursts(p)?.into_iter().filter(|b| b.label == class).collect(),
        None => {
            let point = cell_point(cfg, cell)?;
            let seeds = RunSeeds::new(cfg.seed, &point, cell.repetition, cell.fold);
            let ds = split_fold(materialize(cfg, &point, &seeds)?, cfg.folds, cell.fold, seeds.split)?;
            ds.bursts_of(Split::Train).into_iter().filter(|b| b.label == class && b.origin == Origin::Real).cloned().collect()
        }
    };
    let first = bursts.first().ok_or_else(|| HarnessError::Data(format!("no {class} bursts to train on")))?;
    let geometry = (first.len(), first.channels, first.sample_rate);
    if let Some(b) = bursts.iter().find(|b| (b.len(), b.channels, b.sample_rate) != geometry) {
        return Err(HarnessError::Data(format!("burst {} differs in shape from burst {}", b.id, first.id)));
    }
    let gan_cfg = GanConfig {
        burst_len: geometry.0 * geometry.1,
        seed: derive_seed(cfg.seed, &format!("gan-train/{}", class.name())),
        ..cfg.gan.clone()
    };
    let real: Vec<Vec<f64>> = bursts.iter().map(|b| b.samples.clone()).collect();
    log::info!("training a generator on {} {class} bursts for {} epochs", real.len(), gan_cfg.epochs);
    let (generator, history) = train_wgan_gp(&real, &gan_cfg).map_err(stage("gan"))?;

    let path = out.join(format!("generator_{}.fddw", class.name()));
    let mut named = generator.to_named();
    named.push(NamedTensor::new("burst/geometry", &[3], vec![geometry.0 as f64, geometry.1 as f64, geometry.2]));
    named.push(NamedTensor::scalar("burst/class", class.index() as f64));
    save_fddw(&path, &named).map_err(io(&path))?;
    let curve = out.join(format!("gan_{}.csv", class.name()));
    history.write_csv(fs::File::create(&curve).map_err(io(&curve))?).map_err(io(&curve))?;
    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "generator for {class}: {} epochs, final critic loss {:.4}, gradient norm {:.4}; wrote {} and {}",
        history.epochs.len(),
        last.critic_loss,
        last.grad_norm,
        path.display(),
        curve.display()
    );
    Ok(0)
}

fn gan_sample(cfg: &ExperimentConfig, generator: &Path, count: usize, out: &Path) -> Result<u8> {
    let named = load_fddw(generator).map_err(|e| HarnessError::Data(format!("{}: {e}", generator.display())))?;
    let g = GeneratorNet::from_named(&named).map_err(|e| HarnessError::Data(format!("{}: {e}", generator.display())))?;
    let find = |n: &str| {
        named
            .iter()
            .find(|t| t.name == n)
            .map(|t| t.values.clone())
            .ok_or_else(|| HarnessError::Data(format!("{} lacks {n}", generator.display())))
    };
    let geo = find("burst/geometry")?;
    let class = ConditionClass::from_index(find("burst/class")?[0] as usize)
        .ok_or_else(|| HarnessError::Data("bad class index in generator file".into()))?;
    let (channels, fs) = (geo[1] as usize, geo[2]);
    if count == 0 {
        return Err(HarnessError::Config("--count must be positive".into()));
    }
    let mut rng = seeded(derive_seed(cfg.seed, "gan-sample"));
    let bursts = g
        .sample(count, &mut rng)
        .map_err(stage("gan-sample"))?
        .into_iter()
        .enumerate()
        .map(|(i, s)| Burst::new(i as u64, class, channels, fs, s).map(|b| Burst { origin: Origin::Generated, ..b }))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(stage("gan-sample"))?;
    let path = out.join("samples.fddb");
    write_bursts(&path, &bursts)?;
    println!("wrote {count} generated {class} bursts to {}", path.display());
    Ok(0)
}

fn features(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<u8> {
    let bursts = load_fddb_bursts(data)?;
    let ds = fdd_core::LabeledDataset::new(bursts);
    let (len, _, fs) = ds.geometry().map_err(|e| HarnessError::Data(e.to_string()))?;
    let extractor = FeatureExtractor::new(cfg.features.clone(), fs, len).map_err(|e| HarnessError::Config(e.to_string()))?;
    let tensors = extractor.tensors(&ds.bursts).map_err(stage("features"))?;
    let std = TensorStandardizer::fit(&tensors).map_err(stage("features"))?;
    let scaled = std.apply_all(&tensors).map_err(stage("features"))?;
    let path = out.join("features.fddw");
    save_tensors(&path, "tensor", &scaled).map_err(io(&path))?;
    save_fddw(out.join("standardizer.fddw"), &std.to_named()).map_err(io(&path))?;
    let index = out.join("features_index.csv");
    let mut text = String::from("burst_id,label\n");
    for b in &ds.bursts {
        text.push_str(&format!("{},{}\n", b.id, b.label.name()));
    }
    fs::write(&index, text).map_err(io(&index))?;
    let t = &scaled[0];
    println!("wrote {} tensors of {}×{} to {}", scaled.len(), t.channels, t.timesteps, path.display());
    Ok(0)
}

fn train(cfg: &ExperimentConfig, cell: &CellArgs, out: &Path) -> Result<u8> {
    let point = cell_point(cfg, cell)?;
    let seeds = RunSeeds::new(cfg.seed, &point, cell.repetition, cell.fold);
    let ds = split_fold(materialize(cfg, &point, &seeds)?, cfg.folds, cell.fold, seeds.split)?;
    let raw = ds.class_counts_where(|s| s == Split::Train);
    let aug = augment(ds, cfg, &seeds)?;
    let pipeline = TrainedPipeline::fit(&aug.dataset, cfg, &seeds)?;
    let model = out.join("pipeline.fddw");
    pipeline.save(&model)?;
    let cp = out.join("config.json");
    fs::write(&cp, cfg.to_json()).map_err(io(&cp))?;
    let test = out.join("test.fddb");
    let test_bursts: Vec<Burst> = aug.dataset.bursts_of(Split::Test).into_iter().cloned().collect();
    write_bursts(&test, &test_bursts)?;
    let curves = out.join("clstm_curves.csv");
    pipeline.clstm.curves.write_csv(fs::File::create(&curves).map_err(io(&curves))?).map_err(io(&curves))?;
    for (class, h) in &aug.gan_histories {
        let p = out.join(format!("gan_{}.csv", class.name()));
        h.write_csv(fs::File::create(&p).map_err(io(&p))?).map_err(io(&p))?;
    }
    let summary = serde_json::json!({
        "grid_point": point.label(),
        "repetition": cell.repetition,
        "fold": cell.fold,
        "raw_train_counts": raw,
        "train_counts": aug.dataset.class_counts_where(|s| s == Split::Train),
        "fakes_added": aug.fakes_added.values().sum::<usize>(),
        "classic_added": aug.classic_added.values().sum::<usize>(),
        "head": if pipeline.head == Head::Welm { "welm" } else { "softmax" },
    });
    let sp = out.join("train_summary.json");
    fs::write(&sp, serde_json::to_string_pretty(&summary)? + "\n").map_err(io(&sp))?;
    println!(
        "trained on {} bursts; wrote {}, {} ({} test bursts) and {}",
        aug.dataset.class_counts_where(|s| s == Split::Train).iter().sum::<usize>(),
        model.display(),
        test.display(),
        test_bursts.len(),
        curves.display()
    );
    Ok(0)
}

fn evaluate_cmd(cfg: &ExperimentConfig, model: &Path, data: &Path, out: &Path) -> Result<u8> {
    let pipeline = TrainedPipeline::load(model, cfg)?;
    let bursts = load_fddb_bursts(data)?;
    if bursts.is_empty() {
        return Err(HarnessError::Data(format!("{} holds no bursts", data.display())));
    }
    let refs: Vec<&Burst> = bursts.iter().collect();
    let pred = pipeline.predict(&refs)?;
    let truth: Vec<usize> = bursts.iter().map(|b| b.label.index()).collect();
    let report = evaluate(&truth, &pred.labels, &pred.scores, &ConditionClass::names()).map_err(stage("evaluate"))?;
    let rp = out.join("report.json");
    fs::write(&rp, report.to_json() + "\n").map_err(io(&rp))?;
    let cp = out.join("confusion.csv");
    report.write_confusion_csv(fs::File::create(&cp).map_err(io(&cp))?).map_err(io(&cp))?;
    println!(
        "accuracy {:.4}, macro-F1 {:.4} over {} bursts; wrote {} and {}",
        report.accuracy,
        report.macro_f1,
        bursts.len(),
        rp.display(),
        cp.display()
    );
    Ok(0)
}

fn print_grid(outcome: &GridOutcome, out: &Path) {
    for row in &outcome.aggregate {
        let f1 = row.get("macro_f1").and_then(|s| s.mean);
        let rec = row.get("out3_recall").and_then(|s| s.mean);
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let snr = row.snr_db.map_or("clean".to_string(), |s| format!("{s} dB"));
        println!(
            "alpha {:>5} snr {:>7}: macro-F1 {} out3 recall {} ({} runs, {} failed)",
            row.alpha,
            snr,
            fmt(f1),
            fmt(rec),
            row.runs,
            row.failed
        );
    }
    println!(
        "{} runs ({} cached, {} failed); tables in {}",
        outcome.records.len(),
        outcome.reused(),
        outcome.failures(),
        out.display()
    );
}

fn grid(cfg: &ExperimentConfig, jobs: usize, reuse_cache: bool, out: &Path) -> Result<u8> {
    let outcome = run_grid(cfg, &GridOptions { out: out.to_path_buf(), jobs, reuse_cache })?;
    print_grid(&outcome, out);
    Ok(outcome.exit_code() as u8)
}

fn ablate_toggle(cfg: &ExperimentConfig, toggle: &str, jobs: usize, out: &Path) -> Result<u8> {
    let mut base = cfg.clone();
    base.toggles.set(toggle, false)?;
    let mut variant = cfg.clone();
    variant.toggles.set(toggle, true)?;
    let mut code = 0;
    let mut records: Vec<Vec<RunRecord>> = Vec::new();
    for (name, c) in [("base", &base), ("variant", &variant)] {
        let dir = out.join(name);
        log::info!("ablation arm {name}: {toggle} {}", if name == "base" { "off" } else { "on" });
        let outcome = run_grid(c, &GridOptions { out: dir.clone(), jobs, reuse_cache: true })?;
        print_grid(&outcome, &dir);
        code = code.max(outcome.exit_code() as u8);
        records.push(outcome.records);
    }
    finish_ablation(&records[0], &records[1], out)?;
    Ok(code)
}

fn ablate_dirs(base: &Path, variant: &Path, out: &Path) -> Result<u8> {
    let load = |dir: &PathBuf| -> Result<Vec<RunRecord>> {
        let cfg = ExperimentConfig::load(&dir.join("config.json"))?;
        load_records(&cfg, dir)
    };
    finish_ablation(&load(&base.to_path_buf())?, &load(&variant.to_path_buf())?, out)?;
    Ok(0)
}

fn finish_ablation(base: &[RunRecord], variant: &[RunRecord], out: &Path) -> Result<()> {
    let summary = ablate(base, variant)?;
    summary.write_csvs(out)?;
    for p in &summary.points {
        let snr = p.snr_db.map_or("clean".to_string(), |s| format!("{s} dB"));
        println!(
            "alpha {:>5} snr {:>7}: macro-F1 wins {}/{} (mean delta {}), out3 recall wins {}/{} (mean delta {})",
            p.alpha,
            snr,
            p.f1_wins,
            p.pairs,
            p.mean_delta_macro_f1.map_or("n/a".into(), |d| format!("{d:+.4}")),
            p.recall_wins,
            p.pairs,
            p.mean_delta_out3_recall.map_or("n/a".into(), |d| format!("{d:+.4}")),
        );
    }
    println!("wrote {} and {}", out.join("ablation_pairs.csv").display(), out.join("ablation_summary.csv").display());
    Ok(())
}

fn report(cfg: &ExperimentConfig, out: &Path) -> Result<u8> {
    let records = load_records(cfg, out)?;
    let outcome = GridOutcome { aggregate: aggregate(&cfg.points(), &records), cached: vec![true; records.len()], records };
    write_grid_outputs(cfg, &outcome, out)?;
    print_grid(&outcome, out);
    Ok(outcome.exit_code() as u8)
}

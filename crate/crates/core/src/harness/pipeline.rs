use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fdd_autodiff::{load_fddw, save_fddw, NamedTensor};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataSource, ExperimentConfig, GridPoint, HarnessError, Head, RunSeeds};
use crate::clstm::{extract_features, train_clstm, ClstmConfig, ClstmModel, LabeledTensors, SoftmaxHead, TrainedClstm};
use crate::dataset::{
    apply_awgn, assign_fold_splits, build_scenario, kfold_split, read_fddb, Burst, BurstPool, ClassicAugment,
    ConditionClass, LabeledDataset, Origin, ScenarioSpec, Split, Synthesizer,
};
use crate::features::{FeatureExtractor, FeatureTensor, TensorStandardizer};
use crate::metrics::{evaluate, EvalReport, RunMeta};
use crate::welm::{fit_welm, ElmConfig, ElmModel};
use crate::wgan::{balance_with_fakes, train_wgan_gp, GanHistory, GeneratorNet};
use crate::seeded;

/// Pipeline stage names used in failure records.
pub mod stage {
    pub const SCENARIO: &str = "scenario";
    pub const NOISE: &str = "noise";
    pub const SPLIT: &str = "split";
    pub const AUGMENT: &str = "augment";
    pub const FEATURES: &str = "features";
    pub const EXTRACTOR: &str = "extractor";
    pub const CLASSIFIER: &str = "classifier";
    pub const EVALUATE: &str = "evaluate";
}

fn at(stage: &'static str) -> impl Fn(String) -> HarnessError {
    move |message| HarnessError::Stage { stage, message }
}

/// Builds the scenario for `point` and adds noise.
pub fn materialize(cfg: &ExperimentConfig, point: &GridPoint, seeds: &RunSeeds) -> Result<LabeledDataset, HarnessError> {
    let spec = ScenarioSpec::standard(point.alpha, cfg.total, point.snr_db, seeds.scenario);
    let ds = match &cfg.source {
        DataSource::Synth { params } => {
            let mut source = Synthesizer::new(params.clone());
            build_scenario(&spec, &mut source)
        }
        DataSource::Fddb { path } => {
            let mut pool = load_pool(path)?;
            build_scenario(&spec, &mut pool)
        }
    }
    .map_err(|e| at(stage::SCENARIO)(e.to_string()))?;
    match point.snr_db {
        Some(snr) => apply_awgn(&ds, snr, seeds.noise).map_err(|e| at(stage::NOISE)(e.to_string())),
        None => Ok(ds),
    }
}

/// Labeled bursts from an FDDB file, as a sampling pool.
pub fn load_pool(path: &Path) -> Result<BurstPool, HarnessError> {
    Ok(BurstPool::new(load_fddb_bursts(path)?))
}

pub fn load_fddb_bursts(path: &Path) -> Result<Vec<Burst>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    let contents = read_fddb(std::io::BufReader::new(file)).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    let classes: BTreeMap<u16, ConditionClass> = contents
        .labels
        .iter()
        .map(|l| {
            ConditionClass::from_name(&l.name)
                .map(|c| (l.id, c))
                .ok_or_else(|| HarnessError::Data(format!("unknown class name {:?} in label table", l.name)))
        })
        .collect::<Result<_, _>>()?;
    contents
        .records
        .into_iter()
        .enumerate()
        .map(|(i, (code, samples))| {
            let class = classes.get(&code).ok_or_else(|| HarnessError::Data(format!("record {i} has unknown label {code}")))?;
            Burst::new(i as u64, *class, contents.channels as usize, f64::from(contents.sample_rate), samples)
                .map_err(|e| HarnessError::Data(e.to_string()))
        })
        .collect()
}

/// Tags the dataset's bursts for test fold `fold`.
pub fn split_fold(mut ds: LabeledDataset, folds: usize, fold: usize, seed: u64) -> Result<LabeledDataset, HarnessError> {
    if fold >= folds {
        return Err(HarnessError::Config(format!("test fold {fold} out of {folds}")));
    }
    let assignment = kfold_split(&ds, folds, seed).map_err(|e| at(stage::SPLIT)(e.to_string()))?;
    assign_fold_splits(&mut ds, &assignment, folds, fold);
    Ok(ds)
}

/// Fails unless every listed burst belongs to the training split, so no
/// validation or test burst can reach a fitted stage.
pub fn guard_training_only(ds: &LabeledDataset, idx: &[usize], what: &'static str) -> Result<(), HarnessError> {
    match idx.iter().find(|&&i| ds.splits[i] != Split::Train) {
        Some(&i) => Err(HarnessError::Leakage { stage: what, burst: ds.bursts[i].id }),
        None => Ok(()),
    }
}

/// Result of the augmentation stage.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub dataset: LabeledDataset,
    pub classic_added: BTreeMap<ConditionClass, usize>,
    pub fakes_added: BTreeMap<ConditionClass, usize>,
    pub generators: BTreeMap<ConditionClass, GeneratorNet>,
    pub gan_histories: BTreeMap<ConditionClass, GanHistory>,
}

/// Tops up fault classes in the training split.
///
/// Classic augmentation alone fills each deficit with transformed copies of
/// random real training bursts. With both switches on, classic copies cover
/// half of each deficit (rounded down) and generated bursts the rest.
pub fn augment(ds: LabeledDataset, cfg: &ExperimentConfig, seeds: &RunSeeds) -> Result<Augmented, HarnessError> {
    let err = at(stage::AUGMENT);
    let mut out = Augmented {
        dataset: ds,
        classic_added: BTreeMap::new(),
        fakes_added: BTreeMap::new(),
        generators: BTreeMap::new(),
        gan_histories: BTreeMap::new(),
    };
    let t = cfg.toggles;
    if t.classic {
        let aug = ClassicAugment::default();
        let mut rng = seeded(seeds.stage("classic"));
        let mut extra = Vec::new();
        for (class, deficit) in out.dataset.fault_deficits() {
            let n = if t.gan { deficit / 2 } else { deficit };
            let sources: Vec<&Burst> = real_train(&out.dataset, class);
            for _ in 0..n {
                let src = sources[rng.gen_range(0..sources.len())];
                let (b, _) = aug.apply(src, &mut rng).map_err(|e| err(e.to_string()))?;
                extra.push(Burst { origin: Origin::Augmented, ..b });
            }
            if n > 0 {
                out.classic_added.insert(class, n);
            }
        }
        out.dataset.push_train(extra);
    }
    if t.gan {
        let (len, channels, _) = out.dataset.geometry().map_err(|e| err(e.to_string()))?;
        for (class, deficit) in out.dataset.fault_deficits() {
            if deficit <= cfg.balance_tolerance {
                continue;
            }
            let idx: Vec<usize> = (0..out.dataset.len())
                .filter(|&i| {
                    let b = &out.dataset.bursts[i];
                    b.label == class && b.origin == Origin::Real && out.dataset.splits[i] == Split::Train
                })
                .collect();
            guard_training_only(&out.dataset, &idx, "gan")?;
            let real: Vec<Vec<f64>> = idx.iter().map(|&i| out.dataset.bursts[i].samples.clone()).collect();
            let gan_cfg = crate::wgan::GanConfig {
                burst_len: len * channels,
                seed: seeds.stage(&format!("gan/{}", class.name())),
                ..cfg.gan.clone()
            };
            let (g, history) = train_wgan_gp(&real, &gan_cfg).map_err(|e| err(format!("{class}: {e}")))?;
            out.generators.insert(class, g);
            out.gan_histories.insert(class, history);
        }
        let (ds, added) = balance_with_fakes(&out.dataset, &out.generators, seeds.stage("fakes"), cfg.balance_tolerance)
            .map_err(|e| err(e.to_string()))?;
        out.dataset = ds;
        out.fakes_added = added;
    }
    Ok(out)
}

fn real_train(ds: &LabeledDataset, class: ConditionClass) -> Vec<&Burst> {
    ds.bursts
        .iter()
        .zip(&ds.splits)
        .filter(|(b, s)| b.label == class && b.origin == Origin::Real && **s == Split::Train)
        .map(|(b, _)| b)
        .collect()
}

/// Column standardization for the ELM inputs, fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Self { mean, std }
    }

    /// Matrix of standardized rows; constant columns become zero.
    pub fn apply(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.mean.len(), |i, j| {
            let s = self.std[j];
            if s <= 1e-12 * self.mean[j].abs().max(1.0) {
                0.0
            } else {
                (rows[i][j] - self.mean[j]) / s
            }
        })
    }

    fn to_named(&self) -> Vec<NamedTensor> {
        vec![
            NamedTensor::new("feature_scaler/mean", &[self.mean.len()], self.mean.clone()),
            NamedTensor::new("feature_scaler/std", &[self.std.len()], self.std.clone()),
        ]
    }

    fn from_named(ts: &[NamedTensor]) -> Option<Self> {
        let get = |n: &str| ts.iter().find(|t| t.name == n).map(|t| t.values.clone());
        Some(Self { mean: get("feature_scaler/mean")?, std: get("feature_scaler/std")? })
    }
}

/// Everything fitted on a training split.
#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub extractor: FeatureExtractor,
    pub tensor_scaler: TensorStandardizer,
    pub clstm: TrainedClstm,
    pub feature_scaler: FeatureScaler,
    pub elm: Option<ElmModel>,
    pub head: Head,
    /// Burst length, channels and sample rate the pipeline expects.
    pub geometry: (usize, usize, f64),
}

/// Class predictions with row-major `n × classes` scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelinePrediction {
    pub labels: Vec<usize>,
    pub scores: Vec<f64>,
}

fn module_configs(cfg: &ExperimentConfig, seeds: &RunSeeds) -> (ClstmConfig, ElmConfig) {
    let mut clstm = cfg.clstm.clone();
    clstm.seed = seeds.stage("clstm");
    clstm.training.class_weighting = cfg.toggles.weighting;
    let elm = ElmConfig { weighting: cfg.toggles.weighting, seed: seeds.stage("elm"), ..cfg.elm.clone() };
    (clstm, elm)
}

impl TrainedPipeline {
    /// Fits tensors, trunk and classifier on the dataset's training split.
    /// The validation split only feeds the trunk's curves.
    pub fn fit(ds: &LabeledDataset, cfg: &ExperimentConfig, seeds: &RunSeeds) -> Result<Self, HarnessError> {
        let geometry = ds.geometry().map_err(|e| at(stage::FEATURES)(e.to_string()))?;
        let extractor = FeatureExtractor::new(cfg.features.clone(), geometry.2, geometry.0)
            .map_err(|e| at(stage::FEATURES)(e.to_string()))?;
        let train_idx = ds.indices_of(Split::Train);
        let val_idx = ds.indices_of(Split::Val);
        if train_idx.is_empty() {
            return Err(at(stage::FEATURES)("empty training split".into()));
        }
        guard_training_only(ds, &train_idx, "standardization")?;
        let tensors_of = |idx: &[usize]| {
            let refs: Vec<&Burst> = idx.iter().map(|&i| &ds.bursts[i]).collect();
            extractor.tensors_ref(&refs).map_err(|e| at(stage::FEATURES)(e.to_string()))
        };
        let raw_train = tensors_of(&train_idx)?;
        let tensor_scaler = TensorStandardizer::fit(&raw_train).map_err(|e| at(stage::FEATURES)(e.to_string()))?;
        let scale = |ts: &[FeatureTensor]| tensor_scaler.apply_all(ts).map_err(|e| at(stage::FEATURES)(e.to_string()));
        let train_t = scale(&raw_train)?;
        drop(raw_train);
        let val_t = scale(&tensors_of(&val_idx)?)?;
        let labels_of = |idx: &[usize]| idx.iter().map(|&i| ds.bursts[i].label.index()).collect::<Vec<_>>();
        let (train_y, val_y) = (labels_of(&train_idx), labels_of(&val_idx));

        let (clstm_cfg, elm_cfg) = module_configs(cfg, seeds);
        let val = (!val_t.is_empty()).then(|| LabeledTensors::new(&val_t, &val_y));
        let clstm = train_clstm(LabeledTensors::new(&train_t, &train_y), val, ConditionClass::COUNT, &clstm_cfg)
            .map_err(|e| at(stage::EXTRACTOR)(e.to_string()))?;
        let feats = extract_features(&clstm.model, &train_t).map_err(|e| at(stage::EXTRACTOR)(e.to_string()))?;
        let feature_scaler = FeatureScaler::fit(&feats);
        let elm = match cfg.toggles.head {
            Head::Welm => Some(
                fit_welm(&feature_scaler.apply(&feats), &train_y, ConditionClass::COUNT, &elm_cfg)
                    .map_err(|e| at(stage::CLASSIFIER)(e.to_string()))?,
            ),
            Head::Softmax => None,
        };
        Ok(Self { extractor, tensor_scaler, clstm, feature_scaler, elm, head: cfg.toggles.head, geometry })
    }

    pub fn predict(&self, bursts: &[&Burst]) -> Result<PipelinePrediction, HarnessError> {
        for b in bursts {
            if (b.len(), b.channels, b.sample_rate) != self.geometry {
                return Err(HarnessError::Data(format!(
                    "burst {} is {}×{} at {} Hz; the pipeline was fitted on {}×{} at {} Hz",
                    b.id, b.channels, b.len(), b.sample_rate, self.geometry.1, self.geometry.0, self.geometry.2
                )));
            }
        }
        let raw = self.extractor.tensors_ref(bursts).map_err(|e| at(stage::FEATURES)(e.to_string()))?;
        let ts = self.tensor_scaler.apply_all(&raw).map_err(|e| at(stage::FEATURES)(e.to_string()))?;
        let feats = extract_features(&self.clstm.model, &ts).map_err(|e| at(stage::EXTRACTOR)(e.to_string()))?;
        match (&self.head, &self.elm) {
            (Head::Welm, Some(elm)) => {
                let p = elm.predict(&self.feature_scaler.apply(&feats)).map_err(|e| at(stage::CLASSIFIER)(e.to_string()))?;
                let scores = p.scores.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
                Ok(PipelinePrediction { labels: p.labels, scores })
            }
            (Head::Welm, None) => Err(at(stage::CLASSIFIER)("ELM head selected but no ELM was fitted".into())),
            (Head::Softmax, _) => {
                let probs = self.clstm.head.probabilities(&feats).map_err(|e| at(stage::CLASSIFIER)(e.to_string()))?;
                let labels = probs
                    .iter()
                    .map(|p| p.iter().enumerate().fold(0, |a, (j, &v)| if v > p[a] { j } else { a }))
                    .collect();
                Ok(PipelinePrediction { labels, scores: probs.into_iter().flatten().collect() })
            }
        }
    }

    /// Writes every fitted part to one FDDW file.
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let mut named = self.clstm.model.to_named();
        named.extend(self.clstm.head.params.entries().iter().cloned());
        named.extend(self.tensor_scaler.to_named());
        named.extend(self.feature_scaler.to_named());
        if let Some(elm) = &self.elm {
            named.extend(elm.to_named());
        }
        let (len, ch, fs) = self.geometry;
        named.push(NamedTensor::new("pipeline/geometry", &[3], vec![len as f64, ch as f64, fs]));
        named.push(NamedTensor::scalar("pipeline/head", if self.head == Head::Welm { 0.0 } else { 1.0 }));
        save_fddw(path, &named).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    /// Restores a pipeline saved with [`TrainedPipeline::save`]; `cfg` must
    /// carry the same feature and trunk settings.
    pub fn load(path: &Path, cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let named = load_fddw(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        let bad = |what: &str| HarnessError::Data(format!("{}: {what}", path.display()));
        let get = |n: &str| named.iter().find(|t| t.name == n).ok_or_else(|| bad(&format!("missing {n}")));
        let g = &get("pipeline/geometry")?.values;
        let geometry = (g[0] as usize, g[1] as usize, g[2]);
        let head = if get("pipeline/head")?.values[0] == 0.0 { Head::Welm } else { Head::Softmax };
        let model = ClstmModel::from_named(&cfg.clstm, &named).map_err(|e| bad(&e.to_string()))?;
        let classes = ConditionClass::COUNT;
        let mut softmax = SoftmaxHead::new(model.feature_dim(), classes, 0);
        let missing = softmax.params.load_from(&named);
        if !missing.is_empty() {
            return Err(bad(&format!("missing {}", missing.join(", "))));
        }
        let extractor = FeatureExtractor::new(cfg.features.clone(), geometry.2, geometry.0).map_err(|e| bad(&e.to_string()))?;
        let tensor_scaler = TensorStandardizer::from_named(&named).ok_or_else(|| bad("missing tensor standardizer"))?;
        let feature_scaler = FeatureScaler::from_named(&named).ok_or_else(|| bad("missing feature scaler"))?;
        let elm = match head {
            Head::Welm => Some(ElmModel::from_named(&named).ok_or_else(|| bad("missing ELM"))?),
            Head::Softmax => None,
        };
        Ok(Self {
            extractor,
            tensor_scaler,
            clstm: TrainedClstm { model, head: softmax, curves: Default::default() },
            feature_scaler,
            elm,
            head,
            geometry,
        })
    }
}

/// Scores a fitted pipeline on the dataset's test split.
pub fn evaluate_split(pipeline: &TrainedPipeline, ds: &LabeledDataset, meta: RunMeta) -> Result<EvalReport, HarnessError> {
    let test: Vec<&Burst> = ds.bursts_of(Split::Test);
    if test.is_empty() {
        return Err(at(stage::EVALUATE)("empty test split".into()));
    }
    let pred = pipeline.predict(&test)?;
    let truth: Vec<usize> = test.iter().map(|b| b.label.index()).collect();
    let mut report =
        evaluate(&truth, &pred.labels, &pred.scores, &ConditionClass::names()).map_err(|e| at(stage::EVALUATE)(e.to_string()))?;
    report.meta = Some(meta);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { stage: String, message: String },
}

/// Outcome of one (grid point, repetition, fold) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Unique per run: the run-identity hash plus grid point, repetition and fold.
    pub key: String,
    pub config_hash: String,
    pub alpha: f64,
    pub snr_db: Option<f64>,
    pub repetition: usize,
    pub fold: usize,
    #[serde(flatten)]
    pub status: RunStatus,
    /// Training-split counts per class, in class order, before and after augmentation.
    pub raw_train_counts: Vec<usize>,
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub classic_added: usize,
    pub fakes_added: usize,
    pub report: Option<EvalReport>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    /// Seconds; kept out of the serialized record so records are reproducible.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunRecord {
    pub fn point(&self) -> GridPoint {
        GridPoint { alpha: self.alpha, snr_db: self.snr_db }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Recall of `class`, when the run succeeded and the class was present.
    pub fn recall(&self, class: ConditionClass) -> Option<f64> {
        self.report.as_ref()?.class(class.name())?.recall
    }
}

pub fn run_key(cfg: &ExperimentConfig, point: &GridPoint, repetition: usize, fold: usize) -> String {
    let id = format!("{}|{}|{repetition}|{fold}", cfg.run_hash(), point.label());
    hex::encode(&<sha2::Sha256 as sha2::Digest>::digest(id.as_bytes())[..8])
}

/// Runs every stage for one grid point, repetition and test fold.
///
/// Stage failures are captured in the record rather than returned. When
/// `out` is given, loss curves (and checkpoints if configured) are written
/// under `out/runs/<key>/`.
pub fn run_pipeline(cfg: &ExperimentConfig, point: &GridPoint, repetition: usize, fold: usize, out: Option<&Path>) -> RunRecord {
    let start = Instant::now();
    let key = run_key(cfg, point, repetition, fold);
    let mut record = RunRecord {
        key: key.clone(),
        config_hash: cfg.run_hash(),
        alpha: point.alpha,
        snr_db: point.snr_db,
        repetition,
        fold,
        status: RunStatus::Ok,
        raw_train_counts: Vec::new(),
        train_counts: Vec::new(),
        test_counts: Vec::new(),
        classic_added: 0,
        fakes_added: 0,
        report: None,
        artifacts: Vec::new(),
        wall_clock_s: 0.0,
    };
    if let Err(e) = run_stages(cfg, point, repetition, fold, out, &mut record) {
        let stage = match &e {
            HarnessError::Stage { stage, .. } => stage.to_string(),
            HarnessError::Leakage { stage, .. } => format!("leakage/{stage}"),
            _ => "setup".to_string(),
        };
        let message = match e {
            HarnessError::Stage { message, .. } => message,
            other => other.to_string(),
        };
        log::warn!("run {key} ({}, rep {repetition}, fold {fold}) failed in {stage}: {message}", point.label());
        record.status = RunStatus::Failed { stage, message };
    }
    record.wall_clock_s = start.elapsed().as_secs_f64();
    record
}

fn run_stages(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    repetition: usize,
    fold: usize,
    out: Option<&Path>,
    record: &mut RunRecord,
) -> Result<(), HarnessError> {
    let seeds = RunSeeds::new(cfg.seed, point, repetition, fold);
    let ds = materialize(cfg, point, &seeds)?;
    let ds = split_fold(ds, cfg.folds, fold, seeds.split)?;
    record.raw_train_counts = ds.class_counts_where(|s| s == Split::Train).to_vec();
    record.test_counts = ds.class_counts_where(|s| s == Split::Test).to_vec();
    let aug = augment(ds, cfg, &seeds)?;
    record.classic_added = aug.classic_added.values().sum();
    record.fakes_added = aug.fakes_added.values().sum();
    record.train_counts = aug.dataset.class_counts_where(|s| s == Split::Train).to_vec();
    let dir = out.map(|o| (o.to_path_buf(), PathBuf::from("runs").join(&record.key)));
    if let Some((root, rel)) = &dir {
        fs::create_dir_all(root.join(rel)).map_err(|e| HarnessError::Io(e.to_string()))?;
        for (class, h) in &aug.gan_histories {
            let p = rel.join(format!("gan_{}.csv", class.name()));
            let f = fs::File::create(root.join(&p)).map_err(|e| HarnessError::Io(e.to_string()))?;
            h.write_csv(f).map_err(|e| HarnessError::Io(e.to_string()))?;
            record.artifacts.push(p.to_string_lossy().into_owned());
        }
    }
    let pipeline = TrainedPipeline::fit(&aug.dataset, cfg, &seeds)?;
    if let Some((root, rel)) = &dir {
        let p = rel.join("clstm_curves.csv");
        let f = fs::File::create(root.join(&p)).map_err(|e| HarnessError::Io(e.to_string()))?;
        pipeline.clstm.curves.write_csv(f).map_err(|e| HarnessError::Io(e.to_string()))?;
        record.artifacts.push(p.to_string_lossy().into_owned());
        if cfg.save_checkpoints {
            let p = rel.join("pipeline.fddw");
            pipeline.save(&root.join(&p))?;
            record.artifacts.push(p.to_string_lossy().into_owned());
            for (class, g) in &aug.generators {
                let p = rel.join(format!("generator_{}.fddw", class.name()));
                save_fddw(root.join(&p), &g.to_named()).map_err(|e| HarnessError::Io(e.to_string()))?;
                record.artifacts.push(p.to_string_lossy().into_owned());
            }
        }
    }
    let meta = RunMeta { seed: seeds.fold, scenario: point.label(), fold };
    record.report = Some(evaluate_split(&pipeline, &aug.dataset, meta)?);
    Ok(())
}

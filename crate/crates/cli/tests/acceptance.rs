//! Acceptance suite. Prints one PASS/FAIL line per criterion with its
//! runtime against the budget, then exits non-zero if any criterion failed.
//!
//! ```text
//! cargo test --release -p fdd-cli --test acceptance               # everything
//! cargo test --release -p fdd-cli --test acceptance -- spectral   # name filter
//! ```
//!
//! Grid outputs of the two end-to-end criteria are kept under
//! `target/tmp/acceptance/` for inspection.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::rc::Rc;
use std::time::{Duration, Instant};

use fdd_autodiff::gradcheck::check_gradients;
use fdd_autodiff::{
    affine, backward, batchnorm, conv1d, conv_output_len, lstm_sequence, lstm_step, maxpool1d, pool_output_len,
    Activation, AutodiffError, BatchNormMode, LstmWeights, ParamId, ParamStore, RunningStats, Tensor,
};
use fdd_core::clstm::{extract_features, ClstmConfig, ClstmModel, ConvBlock};
use fdd_core::dataset::{add_awgn, measured_snr_db, synthesize_burst, ConditionClass, ScenarioSpec, SynthParams};
use fdd_core::features::{cwt_scalogram, fft_magnitude, full_spectrum, FeatureConfig, FeatureTensor, MorletBank};
use fdd_core::harness::{ablate, materialize, run_grid, ExperimentConfig, GridOptions, GridPoint, RunSeeds};
use fdd_core::seeded;
use fdd_core::welm::{class_weights, fit_welm, one_hot, solve_beta, Branch, ElmConfig, ElmModel};
use fdd_core::wgan::{gradient_penalty, train_wgan_gp, Critic, CriticConfig, GanConfig, MlpCritic};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { name: "autodiff-gradients", budget: secs(120), run: autodiff_gradients },
        Criterion { name: "double-backprop", budget: secs(60), run: double_backprop },
        Criterion { name: "welm-algebra", budget: secs(60), run: welm_algebra },
        Criterion { name: "imbalance-weighting", budget: secs(120), run: imbalance_weighting },
        Criterion { name: "wgan-gp-toy", budget: secs(600), run: wgan_toy },
        Criterion { name: "directional-gan", budget: secs(3600), run: directional },
        Criterion { name: "scenario-fidelity", budget: secs(1), run: scenario_fidelity },
        Criterion { name: "snr-calibration", budget: secs(10), run: snr_calibration },
        Criterion { name: "spectral", budget: secs(10), run: spectral },
        Criterion { name: "shape-contracts", budget: secs(10), run: shape_contracts },
        Criterion { name: "grid-determinism", budget: secs(900), run: grid_determinism },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| filters.is_empty() || filters.iter().any(|f| c.name.contains(f.as_str()))) {
        ran += 1;
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:<20} {:>8.1}s / {:>4}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scratch(name: &str) -> Result<PathBuf, String> {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| format!("clearing {}: {e}", dir.display()))?;
    }
    fs::create_dir_all(&dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
    Ok(dir)
}

// ---------------------------------------------------------------- autodiff

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn contract(out: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let r = Tensor::new(uniform(&mut rng, out.numel(), -1.0, 1.0), out.shape());
    out.mul(&r).sum()
}

type OpFn = Box<dyn Fn(&[Tensor]) -> Result<Tensor, AutodiffError>>;

struct Op {
    name: &'static str,
    shapes: Vec<Vec<usize>>,
    range: (f64, f64),
    f: OpFn,
}

fn op(
    name: &'static str,
    shapes: &[&[usize]],
    range: (f64, f64),
    f: impl Fn(&[Tensor]) -> Result<Tensor, AutodiffError> + 'static,
) -> Op {
    Op { name, shapes: shapes.iter().map(|s| s.to_vec()).collect(), range, f: Box::new(f) }
}

fn lstm_weights(t: &[Tensor]) -> LstmWeights {
    LstmWeights { input: t[0].clone(), recurrent: t[1].clone(), bias: t[2].clone() }
}

fn ops() -> Vec<Op> {
    let u = (-1.0, 1.0);
    let pos = (0.5, 2.0);
    let idx: Rc<[usize]> = Rc::from(vec![0, 3, 3, 9, 4, 1]);
    let idx2 = idx.clone();
    vec![
        op("add", &[&[3, 4], &[3, 4]], u, |t| Ok(t[0].add(&t[1]))),
        op("sub", &[&[3, 4], &[3, 4]], u, |t| Ok(t[0].sub(&t[1]))),
        op("mul", &[&[3, 4], &[3, 4]], u, |t| Ok(t[0].mul(&t[1]))),
        op("div", &[&[3, 4], &[3, 4]], pos, |t| Ok(t[0].div(&t[1]))),
        op("neg", &[&[5]], u, |t| Ok(t[0].neg())),
        op("scale", &[&[5]], u, |t| Ok(t[0].scale(-2.5))),
        op("add_scalar", &[&[5]], u, |t| Ok(t[0].add_scalar(0.7))),
        op("matmul", &[&[3, 4], &[4, 2]], u, |t| Ok(t[0].matmul(&t[1]))),
        op("transpose", &[&[3, 4]], u, |t| Ok(t[0].transpose())),
        op("reshape", &[&[3, 4]], u, |t| Ok(t[0].reshape(&[2, 6]))),
        op("sum", &[&[3, 4]], u, |t| Ok(t[0].sum().square())),
        op("mean", &[&[3, 4]], u, |t| Ok(t[0].mean().square())),
        op("expand", &[&[1]], u, |t| Ok(t[0].expand(&[2, 3]))),
        op("sum_rows", &[&[3, 4]], u, |t| Ok(t[0].sum_rows())),
        op("broadcast_rows", &[&[4]], u, |t| Ok(t[0].broadcast_rows(3))),
        op("sum_cols", &[&[3, 4]], u, |t| Ok(t[0].sum_cols())),
        op("broadcast_cols", &[&[3]], u, |t| Ok(t[0].broadcast_cols(4))),
        op("exp", &[&[6]], u, |t| Ok(t[0].exp())),
        op("ln", &[&[6]], pos, |t| Ok(t[0].ln())),
        op("sqrt", &[&[6]], pos, |t| Ok(t[0].sqrt())),
        op("square", &[&[6]], u, |t| Ok(t[0].square())),
        op("sigmoid", &[&[6]], u, |t| Ok(t[0].sigmoid())),
        op("tanh", &[&[6]], u, |t| Ok(t[0].tanh())),
        op("relu", &[&[6]], u, |t| Ok(t[0].relu())),
        op("leaky_relu", &[&[6]], u, |t| Ok(t[0].leaky_relu(0.2))),
        op("unfold", &[&[2, 6, 3]], u, |t| Ok(t[0].unfold(3))),
        op("fold", &[&[10, 6]], u, |t| Ok(t[0].fold(&[2, 6, 3], 2))),
        op("gather", &[&[2, 5]], u, move |t| Ok(t[0].gather(idx.clone(), &[2, 3]))),
        op("scatter_add", &[&[6]], u, move |t| Ok(t[0].scatter_add(idx2.clone(), &[2, 5]))),
        op("index0", &[&[4, 3]], u, |t| Ok(t[0].index0(1).add(&t[0].index0(3)))),
        op("stack0", &[&[2, 3], &[2, 3]], u, |t| Ok(Tensor::stack0(&[t[0].clone(), t[1].clone(), t[0].clone()]))),
        op("slice_cols", &[&[3, 5]], u, |t| Ok(t[0].slice_cols(1, 3))),
        op("pad_cols", &[&[3, 2]], u, |t| Ok(t[0].pad_cols(2, 6))),
        op("concat_cols", &[&[3, 2], &[3, 4]], u, |t| Ok(Tensor::concat_cols(&[t[0].clone(), t[1].clone()]))),
        op("swap01", &[&[2, 3, 4]], u, |t| Ok(t[0].swap01())),
        op("affine", &[&[3, 4], &[4, 2], &[2]], u, |t| affine(&t[0], &t[1], &t[2])),
        op("conv1d", &[&[2, 10, 3], &[4, 3, 5], &[5]], u, |t| conv1d(&t[0], &t[1], &t[2], Activation::Tanh)),
        op("maxpool1d", &[&[2, 9, 3]], u, |t| maxpool1d(&t[0], 3)),
        op("batchnorm_train", &[&[5, 3], &[3], &[3]], u, |t| {
            let mut stats = RunningStats::new(3, 0.1);
            batchnorm(&t[0], &t[1], &t[2], 1e-5, BatchNormMode::Train(&mut stats))
        }),
        op("batchnorm_eval", &[&[5, 3], &[3], &[3]], u, |t| {
            let stats = RunningStats { mean: vec![0.1, -0.2, 0.3], var: vec![0.5, 1.5, 2.0], momentum: 0.1 };
            batchnorm(&t[0], &t[1], &t[2], 1e-5, BatchNormMode::Eval(&stats))
        }),
        op("lstm_step", &[&[3, 8], &[2, 8], &[8], &[2, 3], &[2, 2], &[2, 2]], u, |t| {
            let (h, c) = lstm_step(&t[3], &t[4], &t[5], &lstm_weights(t))?;
            Ok(Tensor::concat_cols(&[h, c]))
        }),
        op("lstm_sequence", &[&[3, 8], &[2, 8], &[8], &[2, 5, 3]], u, |t| {
            let (seq, last) = lstm_sequence(&t[3], &lstm_weights(t))?;
            Ok(seq.sum().add(&last.sum()))
        }),
        op("conv_lstm_chain", &[&[3, 2, 4], &[4], &[4, 12], &[3, 12], &[12], &[2, 12, 2]], u, |t| {
            let feats = conv1d(&t[5], &t[0], &t[1], Activation::LeakyRelu(0.2))?;
            let pooled = maxpool1d(&feats, 2)?;
            Ok(lstm_sequence(&pooled, &lstm_weights(&t[2..5]))?.1)
        }),
    ]
}

fn autodiff_gradients() -> Outcome {
    const INSTANCES: u64 = 20;
    let ops = ops();
    let mut worst = (0.0f64, "");
    let mut failures = Vec::new();
    for o in &ops {
        let shapes: Vec<&[usize]> = o.shapes.iter().map(Vec::as_slice).collect();
        for seed in 0..INSTANCES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<Vec<f64>> =
                o.shapes.iter().map(|s| uniform(&mut rng, s.iter().product(), o.range.0, o.range.1)).collect();
            let f = |t: &[Tensor]| -> Result<Tensor, AutodiffError> { Ok(contract(&(o.f)(t)?, seed)) };
            let err = check_gradients(&f, &values, &shapes, 1e-5).map_err(|e| format!("{}: {e}", o.name))?.max_relative_error();
            if err > worst.0 {
                worst = (err, o.name);
            }
            if !(err < 1e-4) {
                failures.push(format!("{} seed {seed}: {err:.2e}", o.name));
            }
        }
    }
    ensure(failures.is_empty(), || format!("rel err ≥ 1e-4: {}", failures.join(", ")))?;
    Ok(format!("{} ops × {INSTANCES} instances, max rel err {:.2e} ({})", ops.len(), worst.0, worst.1))
}

// ---------------------------------------------------------------- critic penalty

fn double_backprop() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let c = MlpCritic::new(4, &[5], &mut seeded(seed));
        let mut rng = seeded(100 + seed);
        let x = Tensor::new((0..24).map(|_| rng.sample(StandardNormal)).collect(), &[6, 4]);
        let b = c.params().bind();
        let gp = gradient_penalty(&c, &b, &x, 10.0).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = backward(&gp.penalty, &b.leaves(), false)
            .map_err(|e| e.to_string())?
            .iter()
            .flat_map(|g| g.to_vec())
            .collect();
        let penalty = |s: &ParamStore| gradient_penalty(&c, &s.bind(), &x, 10.0).map(|g| g.penalty.item());
        let h = 1e-6;
        let mut numeric = Vec::new();
        for k in 0..c.params().len() {
            for i in 0..c.params().get(ParamId(k)).values.len() {
                let mut s = c.params().clone();
                s.get_mut(ParamId(k)).values[i] += h;
                let up = penalty(&s).map_err(|e| e.to_string())?;
                s.get_mut(ParamId(k)).values[i] -= 2.0 * h;
                let down = penalty(&s).map_err(|e| e.to_string())?;
                numeric.push((up - down) / (2.0 * h));
            }
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let err = diff / norm(&analytic).max(norm(&numeric));
        worst = worst.max(err);
    }
    ensure(worst < 1e-3, || format!("rel err {worst:.2e}"))?;
    Ok(format!("4→5→1 critic, 5 seeds, max rel err {worst:.2e}"))
}

// ---------------------------------------------------------------- W-ELM

fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    let mut l: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    for (c, slot) in l.iter_mut().take(classes).enumerate() {
        *slot = c;
    }
    l
}

fn welm_algebra() -> Outcome {
    let solve = |h: &DMatrix<f64>, y: &DMatrix<f64>, c: f64, w: Option<&[f64]>, b: Branch| {
        solve_beta(h, y, c, w, b).map_err(|e| e.to_string())
    };
    let mut branch_gap = 0.0f64;
    for (n, k, seed) in [(20, 20, 1), (30, 12, 2), (12, 30, 3), (50, 50, 4)] {
        let h = uniform_matrix(n, k, seed);
        let y = one_hot(&random_labels(n, 4, seed), 4);
        let w: Vec<f64> = (0..n).map(|i| 0.5 + (i % 3) as f64).collect();
        for weights in [None, Some(w.as_slice())] {
            let p = solve(&h, &y, 10.0, weights, Branch::Primal)?;
            let d = solve(&h, &y, 10.0, weights, Branch::Dual)?;
            branch_gap = branch_gap.max(max_abs(&(p - d)));
        }
    }
    let mut residual = 0.0f64;
    for (n, k, seed) in [(60, 25, 10), (15, 40, 11), (40, 40, 12)] {
        let h = uniform_matrix(n, k, seed);
        let labels = random_labels(n, 3, seed);
        let y = one_hot(&labels, 3);
        let w = class_weights(&labels).map_err(|e| e.to_string())?;
        let c = 100.0;
        let beta = solve(&h, &y, c, Some(&w), Branch::Auto)?;
        let wm = DMatrix::from_diagonal(&DVector::from_column_slice(&w));
        let lhs = (DMatrix::identity(k, k) / c + h.transpose() * &wm * &h) * &beta;
        residual = residual.max(max_abs(&(lhs - h.transpose() * &wm * &y)));
    }
    let mut unit_gap = 0.0f64;
    let h = uniform_matrix(40, 15, 9);
    let y = one_hot(&random_labels(40, 3, 9), 3);
    let ones = vec![1.0; 40];
    for branch in [Branch::Primal, Branch::Dual] {
        let a = solve(&h, &y, 100.0, None, branch)?;
        let b = solve(&h, &y, 100.0, Some(&ones), branch)?;
        unit_gap = unit_gap.max(max_abs(&(a - b)));
    }
    let h = uniform_matrix(20, 20, 5);
    let y = one_hot(&random_labels(20, 3, 6), 3);
    let beta = solve(&h, &y, 1e12, None, Branch::Auto)?;
    let interp = max_abs(&(&h * &beta - &y));
    ensure(branch_gap <= 1e-8 && residual <= 1e-8 && unit_gap <= 1e-10 && interp < 1e-6, || {
        format!("branch {branch_gap:.1e}, residual {residual:.1e}, W=I {unit_gap:.1e}, interpolation {interp:.1e}")
    })?;
    Ok(format!(
        "branch gap {branch_gap:.1e}, residual {residual:.1e}, W=I gap {unit_gap:.1e}, ‖Hβ−Y‖∞ {interp:.1e}"
    ))
}

fn two_gaussians(major: usize, minor: usize, shift: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = seeded(seed);
    let n = major + minor;
    let mut x = DMatrix::zeros(n, 2);
    let mut labels = vec![0; n];
    for i in 0..n {
        let off = if i < major { 0.0 } else { shift };
        for j in 0..2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = off + z;
        }
        labels[i] = usize::from(i >= major);
    }
    (x, labels)
}

fn minority_recall(m: &ElmModel, x: &DMatrix<f64>, labels: &[usize]) -> Result<f64, String> {
    let pred = m.predict(x).map_err(|e| e.to_string())?.labels;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    Ok(pos.iter().filter(|&&i| pred[i] == 1).count() as f64 / pos.len() as f64)
}

fn imbalance_weighting() -> Outcome {
    let mut wins = 0;
    let (mut rw, mut ru) = (0.0, 0.0);
    for s in 0..20 {
        let (x, y) = two_gaussians(500, 10, 2.0, s);
        let (xt, yt) = two_gaussians(200, 200, 2.0, 1000 + s);
        let base = ElmConfig { hidden: 50, c: 100.0, seed: s, ..ElmConfig::default() };
        let w = fit_welm(&x, &y, 2, &ElmConfig { weighting: true, ..base.clone() }).map_err(|e| e.to_string())?;
        let u = fit_welm(&x, &y, 2, &ElmConfig { weighting: false, ..base }).map_err(|e| e.to_string())?;
        let (a, b) = (minority_recall(&w, &xt, &yt)?, minority_recall(&u, &xt, &yt)?);
        rw += a / 20.0;
        ru += b / 20.0;
        if a >= b {
            wins += 1;
        }
    }
    ensure(wins >= 16, || format!("weighted ≥ unweighted in {wins}/20"))?;
    Ok(format!("weighted ≥ unweighted in {wins}/20; mean minority recall {rw:.3} vs {ru:.3}"))
}

// ---------------------------------------------------------------- WGAN-GP

fn wgan_toy() -> Outcome {
    let mut rng = seeded(13);
    let real: Vec<Vec<f64>> =
        (0..1024).map(|_| (0..2).map(|_| 3.0 + rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let cfg = GanConfig {
        burst_len: 2,
        batch_size: 64,
        epochs: 5000,
        seed: 14,
        critic: CriticConfig::Mlp { hidden: vec![64, 64] },
        generator_min_width: 32,
        ..GanConfig::default()
    };
    let (g, history) = train_wgan_gp(&real, &cfg).map_err(|e| e.to_string())?;
    let samples = g.sample(4000, &mut seeded(15)).map_err(|e| e.to_string())?;
    let means: Vec<f64> = (0..2).map(|d| samples.iter().map(|s| s[d]).sum::<f64>() / samples.len() as f64).collect();
    let norm = history.trailing_grad_norm(100).ok_or("no gradient norms recorded")?;
    let finite = history.epochs.iter().all(|e| e.critic_loss.is_finite() && e.generator_loss.is_finite());
    let (g2, history2) = train_wgan_gp(&real, &cfg).map_err(|e| e.to_string())?;
    let reproducible = history2 == history && g2.sample(10, &mut seeded(1)).ok() == g.sample(10, &mut seeded(1)).ok();
    ensure(
        means.iter().all(|m| (m - 3.0).abs() < 0.3) && (0.8..=1.2).contains(&norm) && finite && reproducible,
        || format!("mean {means:.3?}, trailing norm {norm:.3}, finite {finite}, reproducible {reproducible}"),
    )?;
    Ok(format!("mean {means:.3?} (target 3), trailing norm {norm:.3}, 5000 epochs finite and reproducible"))
}

// ---------------------------------------------------------------- directional

fn directional() -> Outcome {
    let cfg = ExperimentConfig::load(&workspace_root().join("configs/directional.json")).map_err(|e| e.to_string())?;
    let out = scratch("directional")?;
    let mut records = Vec::new();
    for (arm, gan) in [("base", false), ("variant", true)] {
        let mut c = cfg.clone();
        c.toggles.gan = gan;
        let opts = GridOptions { out: out.join(arm), jobs: 0, reuse_cache: false };
        let outcome = run_grid(&c, &opts).map_err(|e| e.to_string())?;
        records.push(outcome.records);
    }
    let summary = ablate(&records[0], &records[1]).map_err(|e| e.to_string())?;
    summary.write_csvs(&out).map_err(|e| e.to_string())?;
    let p = summary.points.first().ok_or("no paired points")?;
    let f1_ok = p.f1_wins + p.f1_ties;
    let detail = format!(
        "{} pairs ({} failed): f1 ≥ in {f1_ok}/{}, out3 recall > in {}/{}; mean Δf1 {:+.3}, mean Δrecall {:+.3}",
        p.pairs,
        p.failed_pairs,
        p.pairs,
        p.recall_wins,
        p.pairs,
        p.mean_delta_macro_f1.unwrap_or(f64::NAN),
        p.mean_delta_out3_recall.unwrap_or(f64::NAN),
    );
    ensure(p.pairs == 10 && p.failed_pairs == 0 && f1_ok >= 8 && p.recall_wins >= 7, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- data

/// Class shares in percent: health 80 − α, four faults at 5, out3 at α.
fn table_share(class: ConditionClass, alpha: f64) -> f64 {
    match class {
        ConditionClass::Health => 80.0 - alpha,
        ConditionClass::Out3 => alpha,
        _ => 5.0,
    }
}

fn scenario_fidelity() -> Outcome {
    let alphas = [0.25, 0.5, 1.0, 2.0, 4.0];
    let mut checked = 0;
    for &alpha in &alphas {
        for total in (1..=4000).chain((1..=25).map(|k| 400 * k)) {
            let counts = ScenarioSpec::standard(alpha, total, None, 0).class_counts().map_err(|e| e.to_string())?;
            ensure(counts.iter().sum::<usize>() == total, || format!("α={alpha} N={total}: counts {counts:?}"))?;
            for c in ConditionClass::ALL {
                let exact = table_share(c, alpha) * total as f64 / 100.0;
                let got = counts[c.index()] as f64;
                let ok = if total % 400 == 0 { got == exact } else { (got - exact).abs() <= 1.0 };
                ensure(ok, || format!("α={alpha} N={total} {c}: {got} vs {exact}"))?;
            }
            checked += 1;
        }
    }
    // The generated dataset carries the same counts.
    let cfg = ExperimentConfig { total: 400, ..ExperimentConfig::default() };
    let point = GridPoint { alpha: 0.25, snr_db: None };
    let ds = materialize(&cfg, &point, &RunSeeds::new(0, &point, 0, 0)).map_err(|e| e.to_string())?;
    let counts = ds.class_counts();
    ensure(counts == [319, 20, 20, 20, 20, 1], || format!("materialized α=0.25 N=400: {counts:?}"))?;
    Ok(format!("{checked} (α, N) pairs; α=0.25 N=400 materializes {counts:?}"))
}

fn snr_calibration() -> Outcome {
    let p = SynthParams::default();
    let mut worst = 0.0f64;
    let mut seen = Vec::new();
    for snr in [10.0, 20.0, 50.0, 75.0, 100.0] {
        let mut total = 0.0;
        for s in 0..100 {
            let b = synthesize_burst(ConditionClass::Inner, &p, &mut seeded(s)).map_err(|e| e.to_string())?;
            ensure(b.len() == 800, || format!("burst length {}", b.len()))?;
            let n = add_awgn(&b, snr, &mut seeded(1000 + s)).map_err(|e| e.to_string())?;
            total += measured_snr_db(&b.samples, &n.samples);
        }
        let dev = total / 100.0 - snr;
        worst = worst.max(dev.abs());
        seen.push(format!("{snr}:{dev:+.3}"));
    }
    ensure(worst <= 0.5, || format!("deviations {}", seen.join(" ")))?;
    Ok(format!("mean deviation per SNR dB {}", seen.join(" ")))
}

// ---------------------------------------------------------------- features

const FS: f64 = 12_000.0;

fn tone(freq: f64, n: usize) -> Vec<f64> {
    (0..n).map(|t| (2.0 * PI * freq * t as f64 / FS + 0.3).sin()).collect()
}

fn spectral() -> Outcome {
    let mut rng = seeded(4);
    let mut parseval = 0.0f64;
    for _ in 0..10 {
        let x: Vec<f64> = (0..800).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = full_spectrum(&x).iter().map(|c| c.norm_sqr()).sum::<f64>() / 800.0;
        parseval = parseval.max(((time - freq) / time).abs());
    }
    let mag = fft_magnitude(&tone(120.0, 800)).map_err(|e| e.to_string())?;
    let peak = (0..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(0);

    let bank = MorletBank::new(&FeatureConfig::default(), FS, 800).map_err(|e| e.to_string())?;
    // Morlet center frequencies, log-spaced from Nyquist down to 5 Hz over 32 rows.
    let centers: Vec<f64> = (0..32).map(|j| 6000.0 * (5.0f64 / 6000.0).powf(j as f64 / 31.0)).collect();
    let mut ridges = Vec::new();
    for f in [300.0, 1200.0, 3000.0] {
        let e = cwt_scalogram(&tone(f, 800), 0, &bank, 256).map_err(|e| e.to_string())?.row_energy();
        let ridge = (0..e.len()).max_by(|&i, &j| e[i].total_cmp(&e[j])).unwrap_or(usize::MAX);
        let nearest = (0..32)
            .min_by(|&i, &j| (f / centers[i] - 1.0).abs().total_cmp(&(f / centers[j] - 1.0).abs()))
            .unwrap_or(0);
        ridges.push((f, ridge, nearest));
    }
    let ridges_ok = ridges.iter().all(|(_, r, n)| r == n);
    ensure(parseval < 1e-9 && peak == 8 && ridges_ok, || {
        format!("Parseval {parseval:.1e}, 120 Hz peak bin {peak}, ridges (tone, found, expected) {ridges:?}")
    })?;
    Ok(format!(
        "Parseval rel err {parseval:.1e}; 120 Hz → bin {peak}; ridge rows {:?}",
        ridges.iter().map(|r| r.1).collect::<Vec<_>>()
    ))
}

fn shape_contracts() -> Outcome {
    let mut rng = seeded(21);
    for _ in 0..100 {
        let l = rng.gen_range(4..160usize);
        let m = rng.gen_range(1..=l);
        let conv_len = l - m + 1;
        let s = rng.gen_range(1..=conv_len);
        let x = Tensor::new((0..2 * l).map(|_| rng.gen_range(-1.0..1.0)).collect(), &[2, l, 1]);
        let f = Tensor::new((0..m * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(), &[m, 1, 3]);
        let c = conv1d(&x, &f, &Tensor::new(vec![0.0; 3], &[3]), Activation::Relu).map_err(|e| e.to_string())?;
        let p = maxpool1d(&c, s).map_err(|e| e.to_string())?;
        let pooled = (conv_len - s) / s + 1;
        ensure(c.shape() == [2, conv_len, 3] && conv_output_len(l, m) == Some(conv_len), || {
            format!("conv L={l} m={m}: {:?}", c.shape())
        })?;
        ensure(p.shape() == [2, pooled, 3] && pool_output_len(conv_len, s) == Some(pooled), || {
            format!("pool L={conv_len} s={s}: {:?}", p.shape())
        })?;
    }
    let mut widths = Vec::new();
    for (hidden, dense, rows, t) in [(3, 4, 2, 24), (8, 16, 5, 40), (64, 64, 33, 256), (1, 1, 1, 12)] {
        let cfg = ClstmConfig {
            lstm_hidden: hidden,
            dense,
            blocks: if t >= 256 {
                ClstmConfig::default().blocks
            } else {
                vec![ConvBlock { filters: 2, width: 3, pool: 2 }]
            },
            path1_width: 3,
            ..ClstmConfig::default()
        };
        let mut model = ClstmModel::new(&cfg, rows, t).map_err(|e| e.to_string())?;
        model.frozen = true;
        let tensors: Vec<FeatureTensor> = (0..2)
            .map(|i| FeatureTensor {
                burst_id: i,
                channels: rows,
                timesteps: t,
                values: (0..rows * t).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        let feats = extract_features(&model, &tensors).map_err(|e| e.to_string())?;
        let width = hidden + dense;
        ensure(cfg.feature_dim() == width && model.feature_dim() == width && feats.iter().all(|f| f.len() == width), || {
            format!("hidden {hidden} + dense {dense}: config {} model {} features {}", cfg.feature_dim(), model.feature_dim(), feats[0].len())
        })?;
        widths.push(width);
    }
    Ok(format!("100 (L, m, s) triples; CLSTM widths {widths:?}"))
}

// ---------------------------------------------------------------- end to end

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != "timing.csv") {
            out.insert(path.strip_prefix(root).unwrap_or(&path).to_path_buf(), fs::read(&path)?);
        }
    }
    Ok(())
}

fn grid_determinism() -> Outcome {
    let dir = scratch("determinism")?;
    let mut cfg = ExperimentConfig::load(&workspace_root().join("configs/desk.json")).map_err(|e| e.to_string())?;
    cfg.alphas = vec![1.0];
    cfg.snrs = vec![Some(20.0)];
    cfg.repetitions = 1;
    cfg.max_folds = Some(1);
    let cfg_path = dir.join("cell.json");
    fs::write(&cfg_path, cfg.to_json()).map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        let o = Command::new(env!("CARGO_BIN_EXE_fdd"))
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .arg("grid")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || format!("grid run {run} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)))?;
        let mut files = BTreeMap::new();
        collect_files(&out, &out, &mut files).map_err(|e| e.to_string())?;
        trees.push(files);
    }
    let (a, b) = (&trees[0], &trees[1]);
    ensure(a.keys().eq(b.keys()), || format!("file sets differ: {:?} vs {:?}", a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>()))?;
    let differing: Vec<_> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure(differing.is_empty(), || format!("differing outputs: {}", differing.join(", ")))?;
    let data = a.keys().filter(|k| k.extension().is_some_and(|e| e == "csv" || e == "json")).count();
    Ok(format!("{} files identical ({data} CSV/JSON), timing.csv excluded", a.len()))
}

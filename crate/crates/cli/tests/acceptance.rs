//! Acceptance suite: one line per criterion.
//!
//! Criteria that need the VGLC corpus read it from `VGLC_ROOT` and report
//! `NOT RUN` without it. Set `LEVELCVAE_ACCEPT_STRICT=1` to count that as a
//! failure, `LEVELCVAE_ACCEPT_CACHE=<dir>` to keep trained checkpoints
//! between runs and `LEVELCVAE_ACCEPT_PROTOCOL=subsample` to train the
//! desk-scale models for 10000 epochs on 500 segments instead of 1000
//! epochs on the full dataset. A positional argument filters criteria by
//! name.

mod common;

use std::cell::OnceCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use levelcvae::cvae::{
    load_checkpoint, save_checkpoint, train, Architecture, Checkpoint, CvaeGrads, CvaeModel, ModelSpec, TrainConfig,
};
use levelcvae::dataset::{build_dataset, BuildOptions, CorpusLayout, Dataset, DatasetKind, TileMaps};
use levelcvae::eval::{
    blend_table, e_distance, edist_report, frequency_trend, match_metrics, train_game_classifier, ForestConfig,
    MatchSource, SegmentClassifier, TileFeatures,
};
use levelcvae::labeling::{element_label, int_to_label, label_to_int, ElementMap, LabelVector, Scheme};
use levelcvae::nn::Matrix;
use levelcvae::{Game, Segment, TileMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GRAD_H: f64 = 1e-4;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_MODELS: u64 = 6;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(60);
const CORPUS_COUNTS: [(DatasetKind, usize); 4] = [
    (DatasetKind::Elements(Game::Smb), 2643),
    (DatasetKind::Elements(Game::Ki), 1142),
    (DatasetKind::Elements(Game::Mm), 2983),
    (DatasetKind::Patterns, 407),
];
const CORPUS_TIME_LIMIT: Duration = Duration::from_secs(10);
const RF_MIN_ACCURACY: f64 = 0.95;
const RF_TEST_FRACTION: f64 = 0.2;
const RF_TIME_LIMIT: Duration = Duration::from_secs(300);
const EVAL_N: usize = 1000;
const EVAL_SEED: u64 = 0;
const TRAIN_SEED: u64 = 0;
const LATENT: usize = 32;
const FULL_EPOCHS: u32 = 1000;
const SUBSAMPLE_EPOCHS: u32 = 10_000;
const SUBSAMPLE_SIZE: usize = 500;
const TREND_K: usize = 8;
const TREND_MIN_GAP: f64 = 15.0;
const BLEND_MIN_PCT: f64 = 80.0;
const EDIST_ORACLE_TOL: f64 = 1e-9;
const EDIST_SELF_TOL: f64 = 1e-9;
const EDIST_MAX_SET: usize = 20;
const EDIST_TRIALS: u64 = 200;

enum Verdict {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn verdict(pass: bool, detail: String) -> Verdict {
    if pass {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

/// Corpus-backed state shared by the gated criteria.
struct Ctx {
    root: Option<PathBuf>,
    cache: Option<PathBuf>,
    subsample: bool,
    maps: TileMaps,
    layout: CorpusLayout,
    blend: OnceCell<Result<Dataset, String>>,
    classifier: OnceCell<Result<(SegmentClassifier, f64), String>>,
    blend_model: OnceCell<Result<Checkpoint, String>>,
}

impl Ctx {
    fn from_env() -> Self {
        let var = |k: &str| std::env::var_os(k).filter(|v| !v.is_empty());
        Self {
            root: var("VGLC_ROOT").map(PathBuf::from),
            cache: var("LEVELCVAE_ACCEPT_CACHE").map(PathBuf::from),
            subsample: std::env::var("LEVELCVAE_ACCEPT_PROTOCOL").is_ok_and(|v| v == "subsample"),
            maps: TileMaps::default(),
            layout: CorpusLayout::default(),
            blend: OnceCell::new(),
            classifier: OnceCell::new(),
            blend_model: OnceCell::new(),
        }
    }

    fn build(&self, kind: DatasetKind) -> Result<Dataset, String> {
        let root = self.root.as_deref().expect("gated on VGLC_ROOT");
        build_dataset(
            kind,
            &BuildOptions {
                root,
                layout: &self.layout,
                maps: &self.maps,
                stride: None,
                overrides: None,
            },
        )
        .map_err(|e| format!("building {kind}: {e}"))
    }

    fn blend_dataset(&self) -> Result<&Dataset, String> {
        self.blend.get_or_init(|| self.build(DatasetKind::Blend)).as_ref().map_err(Clone::clone)
    }

    /// Classifier and its held-out accuracy.
    fn classifier(&self) -> Result<&(SegmentClassifier, f64), String> {
        self.classifier
            .get_or_init(|| {
                let data = self.blend_dataset()?;
                let map = self.maps.blend().map_err(|e| e.to_string())?;
                let config = ForestConfig {
                    seed: EVAL_SEED,
                    ..ForestConfig::default()
                };
                let (clf, fit) =
                    train_game_classifier(data, &map, RF_TEST_FRACTION, &config).map_err(|e| e.to_string())?;
                Ok((clf, fit.test_accuracy))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn protocol(&self) -> (u32, Option<usize>) {
        if self.subsample {
            (SUBSAMPLE_EPOCHS, Some(SUBSAMPLE_SIZE))
        } else {
            (FULL_EPOCHS, None)
        }
    }

    /// Desk-scale model, reusing a cached checkpoint when one matches.
    fn trained(&self, name: &str, dataset: &Dataset) -> Result<Checkpoint, String> {
        let (epochs, subsample) = self.protocol();
        let mut config = TrainConfig::preset(dataset.scheme(), TRAIN_SEED);
        config.epochs = epochs;
        let file = format!("{name}-l{LATENT}-e{epochs}-n{}-s{TRAIN_SEED}.ckpt", subsample.unwrap_or(0));
        let cached = self.cache.as_ref().map(|d| d.join(&file));
        if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
            let ck = load_checkpoint(path, Some(&dataset.vocab)).map_err(|e| e.to_string())?;
            if ck.config == config {
                eprintln!("  reusing {}", path.display());
                return Ok(ck);
            }
        }
        let data = match subsample {
            Some(n) => dataset.subsample(n, TRAIN_SEED),
            None => dataset.clone(),
        };
        let spec = ModelSpec::segments(data.scheme(), LATENT, data.vocab.len());
        let set = data.training_set().map_err(|e| e.to_string())?;
        eprintln!("  training {name}: {} segments, {epochs} epochs", set.len());
        let every = (epochs / 20).max(1);
        let outcome = train(&spec, &set, &config, |e| {
            if (e.epoch + 1) % every == 0 {
                eprintln!("  {name} epoch {}/{epochs} recon {:.3} kl {:.3}", e.epoch + 1, e.recon, e.kl);
            }
        })
        .map_err(|e| e.to_string())?;
        if let Some(path) = cached {
            fs::create_dir_all(path.parent().expect("file in cache dir")).map_err(|e| e.to_string())?;
            save_checkpoint(&outcome.checkpoint, &path).map_err(|e| e.to_string())?;
        }
        Ok(outcome.checkpoint)
    }

    fn blend_model(&self) -> Result<&Checkpoint, String> {
        self.blend_model
            .get_or_init(|| self.trained("blend", self.blend_dataset()?))
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn gradient_check(_: &Ctx) -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for seed in 0..GRAD_MODELS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scheme = [Scheme::ElementsKi, Scheme::Blend, Scheme::ElementsSmb][seed as usize % 3];
        let spec = ModelSpec {
            scheme,
            latent_dim: 4,
            vocab_size: 3,
            positions: 16,
            architecture: Architecture {
                encoder_hidden: vec![rng.random_range(3..9), rng.random_range(3..9)],
                decoder_hidden: vec![rng.random_range(3..9), rng.random_range(3..9)],
            },
        };
        let mut model = CvaeModel::init(&spec, &mut rng);
        for p in model.params_mut() {
            for v in p.iter_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        let batch = rng.random_range(1..5);
        let mut x = vec![0.0; batch * 16 * 3];
        for cell in 0..batch * 16 {
            x[cell * 3 + rng.random_range(0..3)] = 1.0;
        }
        let x = Matrix::from_vec(batch, 48, x);
        let c = Matrix::from_vec(
            batch,
            scheme.len(),
            (0..batch * scheme.len()).map(|_| f64::from(rng.random_range(0..2u8))).collect(),
        );
        let eps = Matrix::from_vec(batch, 4, (0..batch * 4).map(|_| rng.sample(StandardNormal)).collect());

        let mut grads = CvaeGrads::zeros_like(&model);
        model.loss_and_grad(&x, &c, &eps, 1.0, &mut grads).expect("shapes agree");
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        for (j, slice) in analytic.iter().enumerate() {
            for (i, &a) in slice.iter().enumerate() {
                let orig = model.params_mut()[j][i];
                let mut at = |v: f64| {
                    model.params_mut()[j][i] = v;
                    model.loss(&x, &c, &eps, 1.0).expect("shapes agree").total
                };
                let numeric = (at(orig + GRAD_H) - at(orig - GRAD_H)) / (2.0 * GRAD_H);
                model.params_mut()[j][i] = orig;
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < GRAD_REL_TOL && elapsed < GRAD_TIME_LIMIT,
        format!(
            "worst relative error {worst:.2e} (tol {GRAD_REL_TOL:.0e}) over {checked} parameters of {GRAD_MODELS} models, {:.1}s (limit {}s)",
            elapsed.as_secs_f64(),
            GRAD_TIME_LIMIT.as_secs()
        ),
    )
}

fn corpus_counts(ctx: &Ctx) -> Verdict {
    if ctx.root.is_none() {
        return Verdict::NotRun("corpus absent: set VGLC_ROOT".into());
    }
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (kind, want) in CORPUS_COUNTS {
        match ctx.build(kind) {
            Ok(ds) => {
                pass &= ds.len() == want;
                parts.push(format!("{kind} {}/{want}", ds.len()));
            }
            Err(e) => return Verdict::Fail(e),
        }
    }
    let elapsed = start.elapsed();
    verdict(
        pass && elapsed < CORPUS_TIME_LIMIT,
        format!("{} in {:.1}s (limit {}s)", parts.join(", "), elapsed.as_secs_f64(), CORPUS_TIME_LIMIT.as_secs()),
    )
}

fn grid(rows: &[(usize, &str)], fill: &str) -> String {
    let mut g = vec![fill.to_string(); 16];
    for &(r, text) in rows {
        g[r] = text.to_string();
    }
    g.join("\n")
}

fn label_machinery(_: &Ctx) -> Verdict {
    let mut problems = Vec::new();
    for (scheme, want) in [
        (Scheme::ElementsSmb, 32),
        (Scheme::ElementsKi, 16),
        (Scheme::ElementsMm, 32),
        (Scheme::Blend, 8),
    ] {
        let labels: Vec<LabelVector> = scheme.all_labels().collect();
        let mut ints: Vec<u32> = labels.iter().map(label_to_int).collect();
        ints.sort_unstable();
        ints.dedup();
        if labels.len() != want || ints.len() != want {
            problems.push(format!("{scheme}: {} labels, {} distinct", labels.len(), ints.len()));
        }
    }
    for scheme in [
        Scheme::ElementsSmb,
        Scheme::ElementsKi,
        Scheme::ElementsMm,
        Scheme::PatternsSmb,
        Scheme::Blend,
    ] {
        for k in 0..scheme.cardinality() {
            let l = int_to_label(k, scheme).expect("in range");
            let bits: String = l.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
            if label_to_int(&l) != k || LabelVector::parse(scheme, &bits).ok() != Some(l) {
                problems.push(format!("{scheme}: {k} does not round-trip"));
            }
        }
        if int_to_label(scheme.cardinality(), scheme).is_ok() {
            problems.push(format!("{scheme}: out-of-range value accepted"));
        }
    }
    let ground = "XXXXXXXXXXXXXXXX";
    let smb = grid(
        &[(8, "-----S?S--------"), (13, "---------E------"), (14, ground), (15, ground)],
        "----------------",
    );
    let ki = grid(
        &[
            (3, "-----TTTT-------"),
            (7, "--D-------------"),
            (8, "##########------"),
            (15, "HHHH############"),
        ],
        "----------------",
    );
    let mm = grid(
        &[
            (5, "#----------L---#"),
            (6, "#----w-----L---#"),
            (7, "#----------L---#"),
            (14, "#-----HHH------#"),
        ],
        "################",
    );
    for (game, text, want) in [(Game::Smb, smb, "10011"), (Game::Ki, ki, "1101"), (Game::Mm, mm, "10101")] {
        let map = TileMap::builtin(game);
        let elements = ElementMap::from_tile_map(&map, game).expect("builtin element map");
        let seg = Segment::parse(&text, map.vocab()).expect("fixture parses");
        let got = element_label(&seg, &elements).to_string();
        if got != want {
            problems.push(format!("{game} example labelled {got}, expected {want}"));
        }
    }
    if problems.is_empty() {
        Verdict::Pass("32/16/32/8 labels, all five schemes round-trip, SMB 10011 KI 1101 MM 10101 reproduced".into())
    } else {
        Verdict::Fail(problems.join("; "))
    }
}

fn classifier_accuracy(ctx: &Ctx) -> Verdict {
    if ctx.root.is_none() {
        return Verdict::NotRun("corpus absent: set VGLC_ROOT".into());
    }
    let start = Instant::now();
    match ctx.classifier() {
        Ok((_, acc)) => {
            let elapsed = start.elapsed();
            verdict(
                *acc >= RF_MIN_ACCURACY && elapsed < RF_TIME_LIMIT,
                format!(
                    "held-out accuracy {acc:.4} (min {RF_MIN_ACCURACY}), {:.1}s (limit {}s)",
                    elapsed.as_secs_f64(),
                    RF_TIME_LIMIT.as_secs()
                ),
            )
        }
        Err(e) => Verdict::Fail(e.clone()),
    }
}

fn conditioning_trend(ctx: &Ctx) -> Verdict {
    if ctx.root.is_none() {
        return Verdict::NotRun("corpus absent: set VGLC_ROOT".into());
    }
    let run = || -> Result<Verdict, String> {
        let data = ctx.build(DatasetKind::Elements(Game::Smb))?;
        let ck = ctx.trained("smb", &data)?;
        let map = TileMap::builtin(Game::Smb);
        let elements = ElementMap::from_tile_map(&map, Game::Smb).map_err(|e| e.to_string())?;
        let mut report =
            match_metrics(&ck, &elements, EVAL_N, EVAL_SEED, MatchSource::Random).map_err(|e| e.to_string())?;
        report.set_train_freq(&data.label_counts());
        let (top, bottom) = frequency_trend(&report, TREND_K);
        let (epochs, subsample) = ctx.protocol();
        Ok(verdict(
            top - bottom >= TREND_MIN_GAP,
            format!(
                "top-{TREND_K} exact {top:.1}% vs bottom-{TREND_K} {bottom:.1}% (gap {:.1}, min {TREND_MIN_GAP}); avg exact {:.1}%, {epochs} epochs on {} segments",
                top - bottom,
                report.avg_exact,
                subsample.unwrap_or(data.len())
            ),
        ))
    };
    run().unwrap_or_else(Verdict::Fail)
}

fn blend_fidelity(ctx: &Ctx) -> Verdict {
    if ctx.root.is_none() {
        return Verdict::NotRun("corpus absent: set VGLC_ROOT".into());
    }
    let run = || -> Result<Verdict, String> {
        let (clf, _) = ctx.classifier()?;
        let ck = ctx.blend_model()?;
        let table = blend_table(ck, clf, EVAL_N, EVAL_SEED).map_err(|e| e.to_string())?;
        let mut pass = true;
        let mut parts = Vec::new();
        for (label, game) in [("100", 0), ("010", 1), ("001", 2)] {
            let pct = table.row(label).expect("all labels present").pct[game];
            pass &= pct >= BLEND_MIN_PCT;
            parts.push(format!("{label}:{pct:.1}%"));
        }
        for (label, excluded) in [("011", 0), ("101", 1), ("110", 2)] {
            let pct = table.row(label).expect("all labels present").pct;
            let is_min = pct.iter().all(|&p| pct[excluded] <= p);
            pass &= is_min;
            parts.push(format!(
                "{label} excluded {:.1}%{}",
                pct[excluded],
                if is_min { "" } else { " (not min)" }
            ));
        }
        Ok(verdict(pass, format!("{} (min {BLEND_MIN_PCT}%)", parts.join(", "))))
    };
    run().unwrap_or_else(Verdict::Fail)
}

/// Brute-force energy distance over pooled z-scores.
fn edist_oracle(a: &[TileFeatures], b: &[TileFeatures]) -> f64 {
    let pts: Vec<[f64; 4]> = a.iter().chain(b).map(|f| f.to_array()).collect();
    let n = pts.len() as f64;
    let mut z = pts.clone();
    for d in 0..4 {
        let mean = pts.iter().map(|p| p[d]).sum::<f64>() / n;
        let sd = (pts.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for (zp, p) in z.iter_mut().zip(&pts) {
            zp[d] = if sd > 0.0 { (p[d] - mean) / sd } else { p[d] - mean };
        }
    }
    let (za, zb) = z.split_at(a.len());
    let dist = |p: &[f64; 4], q: &[f64; 4]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mean_pair = |s: &[[f64; 4]], t: &[[f64; 4]]| {
        let mut total = 0.0;
        for p in s {
            for q in t {
                total += dist(p, q);
            }
        }
        total / (s.len() * t.len()) as f64
    };
    2.0 * mean_pair(za, zb) - mean_pair(za, za) - mean_pair(zb, zb)
}

fn edist_suite(ctx: &Ctx) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut worst_self: f64 = 0.0;
    let features = |rng: &mut ChaCha8Rng, n: usize| -> Vec<TileFeatures> {
        (0..n)
            .map(|_| TileFeatures {
                density: rng.random_range(0.0..1.0),
                nonlinearity: rng.random_range(0.0..20.0),
                leniency: -f64::from(rng.random_range(0..8u8)) / 16.0,
                interestingness: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.2) },
            })
            .collect()
    };
    for _ in 0..EDIST_TRIALS {
        let (na, nb) = (rng.random_range(1..=EDIST_MAX_SET), rng.random_range(1..=EDIST_MAX_SET));
        let a = features(&mut rng, na);
        let b = features(&mut rng, nb);
        let got = e_distance(&a, &b).expect("non-empty sets");
        worst = worst.max((got - edist_oracle(&a, &b)).abs());
        worst_self = worst_self.max(e_distance(&a, &a).expect("non-empty set").abs());
    }
    let oracle_ok = worst <= EDIST_ORACLE_TOL && worst_self <= EDIST_SELF_TOL;
    let oracle_part = format!("oracle diff {worst:.1e}, E(X,X) {worst_self:.1e} (tol {EDIST_ORACLE_TOL:.0e})");
    if ctx.root.is_none() {
        if !oracle_ok {
            return Verdict::Fail(oracle_part);
        }
        return Verdict::NotRun(format!("{oracle_part} passed; trained-model minima need VGLC_ROOT"));
    }
    let run = || -> Result<Verdict, String> {
        let ck = ctx.blend_model()?;
        let map = ctx.maps.blend().map_err(|e| e.to_string())?;
        let report = edist_report(ck, &map, ctx.blend_dataset()?, EVAL_N, EVAL_SEED).map_err(|e| e.to_string())?;
        let smb = report.argmin_label(Game::Smb).unwrap_or("-").to_string();
        let mm = report.argmin_label(Game::Mm).unwrap_or("-").to_string();
        let ki = report.argmin_label(Game::Ki).unwrap_or("-").to_string();
        Ok(verdict(
            oracle_ok && smb == "100" && mm == "001",
            format!("{oracle_part}; closest to SMB {smb} (want 100), MM {mm} (want 001), KI {ki}"),
        ))
    };
    run().unwrap_or_else(Verdict::Fail)
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Runs the CLI pipeline into `out` and returns every artifact by name.
fn pipeline(corpus: &Path, out: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let step = |args: &[&str]| -> Result<(), String> {
        let o = common::run(args);
        if o.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", common::stderr(&o)))
        }
    };
    let d = |name: &str| out.join(name);
    step(&["build-dataset", "--scheme", "elements", "--game", "smb", "--corpus-root", p(corpus), "--out", p(&d("ds"))])?;
    step(&["build-dataset", "--scheme", "blend", "--corpus-root", p(corpus), "--out", p(&d("blend-ds"))])?;
    let ds = d("ds").join("dataset.json");
    let blend_ds = d("blend-ds").join("dataset.json");
    step(&["train", "--dataset", p(&ds), "--epochs", "3", "--seed", "11", "--out", p(&d("train"))])?;
    step(&["train", "--dataset", p(&blend_ds), "--epochs", "2", "--seed", "11", "--out", p(&d("blend-train"))])?;
    let ck = d("train").join("model.ckpt");
    let blend_ck = d("blend-train").join("model.ckpt");
    step(&["generate", "--checkpoint", p(&ck), "--label", "10011", "--count", "8", "--seed", "4", "--out", p(&d("gen"))])?;
    let gen = d("gen").join("segments.txt");
    step(&["relabel", "--checkpoint", p(&ck), "--in", p(&gen), "--target-label", "01100", "--mode", "sampled", "--seed", "2", "--out", p(&d("relabel"))])?;
    step(&["evaluate", "--checkpoint", p(&ck), "--suite", "elements", "--n", "25", "--dataset", p(&ds), "--out", p(&d("eval"))])?;
    step(&["evaluate", "--checkpoint", p(&blend_ck), "--suite", "blend", "--n", "10", "--trees", "8", "--dataset", p(&blend_ds), "--out", p(&d("eval-blend"))])?;
    step(&["evaluate", "--checkpoint", p(&blend_ck), "--suite", "edist", "--n", "10", "--dataset", p(&blend_ds), "--out", p(&d("eval-edist"))])?;
    let mut files = Vec::new();
    for dir in fs::read_dir(out).map_err(|e| e.to_string())? {
        let dir = dir.map_err(|e| e.to_string())?.path();
        for f in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let f = f.map_err(|e| e.to_string())?.path();
            let name = format!(
                "{}/{}",
                dir.file_name().unwrap().to_string_lossy(),
                f.file_name().unwrap().to_string_lossy()
            );
            files.push((name, fs::read(&f).map_err(|e| e.to_string())?));
        }
    }
    files.sort();
    Ok(files)
}

fn determinism(_: &Ctx) -> Verdict {
    let run = || -> Result<Verdict, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let corpus = tmp.path().join("corpus");
        common::synthetic_corpus(&corpus);
        let a = pipeline(&corpus, &tmp.path().join("a"))?;
        let b = pipeline(&corpus, &tmp.path().join("b"))?;
        let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
        let differing: Vec<&str> = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.0.as_str())
            .collect();
        Ok(verdict(
            a.len() == b.len() && differing.is_empty() && names.len() >= 20,
            if differing.is_empty() {
                format!("{} artifacts from build/train/generate/relabel/evaluate byte-identical across reruns", a.len())
            } else {
                format!("differing artifacts: {}", differing.join(", "))
            },
        ))
    };
    run().unwrap_or_else(Verdict::Fail)
}

type Criterion = (&'static str, fn(&Ctx) -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("gradient-check", gradient_check),
        ("corpus-counts", corpus_counts),
        ("label-machinery", label_machinery),
        ("rf-classifier", classifier_accuracy),
        ("conditioning-trend", conditioning_trend),
        ("blend-fidelity", blend_fidelity),
        ("e-distance", edist_suite),
        ("determinism", determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let strict = std::env::var("LEVELCVAE_ACCEPT_STRICT").is_ok_and(|v| v == "1");
    let ctx = Ctx::from_env();
    let mut failed = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let v = check(&ctx);
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::NotRun(d) => {
                if strict {
                    failed += 1;
                }
                ("NOT RUN", d)
            }
        };
        println!("acceptance {name:<20} {tag:<8} {detail} [{secs:.1}s]");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use levelcvae::cvae::{load_checkpoint, train, Checkpoint, ModelSpec, TrainConfig};
use levelcvae::dataset::{build_dataset, BuildOptions, Dataset, DatasetKind, TileMaps};
use levelcvae::eval::{
    blend_table, edist_report, frequency_trend, match_metrics, train_game_classifier, ForestConfig, MatchSource,
};
use levelcvae::generation::{read_segment_file, relabel_segment, sample_conditioned, write_segment_file, SegmentHeader};
use levelcvae::labeling::{ElementMap, LabelVector, Scheme};
use levelcvae::{Game, TileMap};
use serde::Serialize;

use crate::config::Config;
use crate::report;
use crate::run::RunDir;
use crate::{
    BuildArgs, Cli, Command, EvaluateArgs, GenerateArgs, RelabelArgs, SchemeArg, ServeArgs, SourceArg, Suite,
    TrainArgs, Usage,
};

pub const DATASET_FILE: &str = "dataset.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(jobs) = cli.jobs.or(config.jobs) {
        if jobs == 0 {
            bail!(Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::BuildDataset(args) => build(args, &config),
        Command::Train(args) => train_cmd(args, &config),
        Command::Generate(args) => generate(args, &config),
        Command::Relabel(args) => relabel(args, &config),
        Command::Evaluate(args) => evaluate(args, &config),
        Command::Serve(args) => serve(args, &config),
    }
}

fn parse_label(scheme: Scheme, text: &str) -> anyhow::Result<LabelVector> {
    LabelVector::parse(scheme, text).map_err(|e| Usage(format!("label `{text}`: {e}")).into())
}

fn dataset_kind(args: &BuildArgs) -> anyhow::Result<DatasetKind> {
    Ok(match (args.scheme, args.game) {
        (SchemeArg::Elements, Some(game)) => DatasetKind::Elements(game),
        (SchemeArg::Elements, None) => bail!(Usage("--scheme elements needs --game".into())),
        (SchemeArg::Patterns, None | Some(Game::Smb)) => DatasetKind::Patterns,
        (SchemeArg::Blend, None) => DatasetKind::Blend,
        (scheme, Some(game)) => bail!(Usage(format!("--game {game} does not apply to {scheme:?}"))),
    })
}

#[derive(Serialize)]
struct DatasetStats {
    kind: String,
    stride: usize,
    segments: usize,
    per_game: BTreeMap<String, usize>,
    label_counts: BTreeMap<String, usize>,
}

fn build(args: BuildArgs, config: &Config) -> anyhow::Result<()> {
    let kind = dataset_kind(&args)?;
    let root = args
        .corpus_root
        .clone()
        .or_else(|| config.corpus_root.clone())
        .ok_or_else(|| Usage("no corpus root: pass --corpus-root, set VGLC_ROOT or corpus_root in the config".into()))?;
    let maps = config.tile_maps()?;
    let overrides = match &args.overrides {
        Some(p) => Some(
            levelcvae::labeling::PatternOverrides::from_path(p)
                .with_context(|| format!("pattern overrides {}", p.display()))?,
        ),
        None => config.overrides()?,
    };
    let dataset = build_dataset(
        kind,
        &BuildOptions {
            root: &root,
            layout: &config.layout,
            maps: &maps,
            stride: args.stride,
            overrides: overrides.as_ref(),
        },
    )?;

    let mut run = RunDir::create(&args.out, "build-dataset")?;
    run.param("kind", kind.to_string());
    run.param("stride", dataset.stride);
    run.write(DATASET_FILE, dataset.to_json())?;
    let stats = DatasetStats {
        kind: kind.to_string(),
        stride: dataset.stride,
        segments: dataset.len(),
        per_game: Game::ALL
            .iter()
            .map(|&g| (g.to_string(), dataset.count_for(g)))
            .filter(|(_, n)| *n > 0)
            .collect(),
        label_counts: dataset
            .scheme()
            .all_labels()
            .zip(dataset.label_counts())
            .map(|(l, n)| (l.to_string(), n))
            .collect(),
    };
    run.write("stats.json", serde_json::to_string_pretty(&stats)? + "\n")?;
    run.finish()?;
    println!("{} segments", dataset.len());
    Ok(())
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn train_config(args: &TrainArgs, config: &Config, scheme: Scheme) -> TrainConfig {
    let t = &config.train;
    let mut tc = TrainConfig::preset(scheme, args.seed);
    if let Some(v) = args.epochs.or(t.epochs) {
        tc.epochs = v;
    }
    if let Some(v) = args.batch_size.or(t.batch_size) {
        tc.batch_size = v;
    }
    if let Some(v) = args.lr.or(t.base_lr) {
        tc.schedule.base_lr = v;
    }
    if let Some(v) = args.decay_every.or(t.decay_every) {
        tc.schedule.decay_every = v;
    }
    if let Some(v) = args.decay_factor.or(t.decay_factor) {
        tc.schedule.decay_factor = v;
    }
    if let Some(v) = args.kl_weight.or(t.kl_weight) {
        tc.kl_weight = v;
    }
    tc
}

fn train_cmd(args: TrainArgs, config: &Config) -> anyhow::Result<()> {
    let latent = match &args.latent {
        Some(v) => v.parse().expect("validated by clap"),
        None => config.train.latent.unwrap_or(32),
    };
    if ![32, 64, 128].contains(&latent) {
        bail!(Usage(format!("latent size {latent} is not one of 32, 64, 128")));
    }
    let mut dataset = load_dataset(&args.dataset)?;
    if let Some(n) = args.subsample {
        dataset = dataset.subsample(n, args.seed);
    }
    if dataset.is_empty() {
        bail!(Usage(format!("dataset {} has no segments", args.dataset.display())));
    }
    let scheme = dataset.scheme();
    let tc = train_config(&args, config, scheme);
    if tc.batch_size == 0 {
        bail!(Usage("batch size must be at least 1".into()));
    }
    let spec = ModelSpec::segments(scheme, latent, dataset.vocab.len());
    let data = dataset.training_set()?;
    log::info!(
        "training {scheme} latent {latent} on {} segments for {} epochs",
        data.len(),
        tc.epochs
    );

    let every = (tc.epochs / 20).max(1);
    let mut log_lines = String::new();
    let outcome = train(&spec, &data, &tc, |e| {
        log_lines.push_str(&serde_json::to_string(e).expect("epoch log serialises"));
        log_lines.push('\n');
        let done = e.epoch + 1;
        if done % every == 0 || done == tc.epochs {
            log::info!("epoch {done}/{} lr {:.0e} recon {:.4} kl {:.4}", tc.epochs, e.lr, e.recon, e.kl);
        }
    })?;

    let mut run = RunDir::create(&args.out, "train")?;
    run.input("dataset", &args.dataset)?;
    run.param("latent", latent);
    run.param("subsample", args.subsample);
    run.param("train", tc);
    run.write(CHECKPOINT_FILE, outcome.checkpoint.to_bytes())?;
    run.write("train_log.jsonl", log_lines)?;
    run.finish()?;
    let t = outcome.checkpoint.final_terms;
    println!(
        "trained {} epochs: recon {:.4} kl {:.4} -> {}",
        tc.epochs,
        t.recon,
        t.kl,
        run_path(&args.out, CHECKPOINT_FILE)
    );
    Ok(())
}

fn run_path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

/// Checkpoint plus the tile map for its scheme; the two must share a vocabulary.
fn load_model(path: &Path, maps: &TileMaps) -> anyhow::Result<(Checkpoint, TileMap)> {
    let checkpoint = load_checkpoint(path, None).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let map = maps.for_scheme(checkpoint.model.scheme())?;
    if map.vocab().hash() != checkpoint.vocab.hash() {
        bail!(Usage(format!(
            "checkpoint vocabulary `{}` differs from the configured `{}` tile map",
            checkpoint.vocab.name(),
            map.name()
        )));
    }
    Ok((checkpoint, map))
}

fn generate(args: GenerateArgs, config: &Config) -> anyhow::Result<()> {
    let maps = config.tile_maps()?;
    let (checkpoint, _) = load_model(&args.checkpoint, &maps)?;
    let label = parse_label(checkpoint.model.scheme(), &args.label)?;
    let segments = sample_conditioned(&checkpoint, &label, args.count, args.seed)?;
    let text: String = segments
        .iter()
        .enumerate()
        .map(|(index, s)| {
            write_segment_file(
                &SegmentHeader {
                    label,
                    seed: args.seed,
                    index,
                },
                s,
            )
        })
        .collect();

    let mut run = RunDir::create(&args.out, "generate")?;
    run.input("checkpoint", &args.checkpoint)?;
    run.param("label", label.to_string());
    run.param("count", args.count);
    run.param("seed", args.seed);
    run.write("segments.txt", &text)?;
    run.finish()?;
    if args.print {
        print!("{text}");
    }
    println!("{} segments -> {}", segments.len(), run_path(&args.out, "segments.txt"));
    Ok(())
}

fn relabel(args: RelabelArgs, config: &Config) -> anyhow::Result<()> {
    let maps = config.tile_maps()?;
    let (checkpoint, map) = load_model(&args.checkpoint, &maps)?;
    let scheme = checkpoint.model.scheme();
    let target = parse_label(scheme, &args.target_label)?;
    let forced = args.source_label.as_deref().map(|s| parse_label(scheme, s)).transpose()?;
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let inputs = read_segment_file(&text, &map).map_err(|e| Usage(format!("{}: {e}", args.input.display())))?;

    let mut out = String::new();
    let mut records = Vec::new();
    for (index, (header, segment)) in inputs.iter().enumerate() {
        let source = match (forced, header) {
            (Some(l), _) => l,
            (None, Some(h)) if h.label.scheme() == scheme => h.label,
            _ => maps.derive_label(segment, scheme)?.ok_or_else(|| {
                Usage(format!("segment {index} has no {scheme} label; pass --source-label"))
            })?,
        };
        let edited = relabel_segment(&checkpoint, segment, &source, &target, args.mode, args.seed)?;
        out.push_str(&write_segment_file(
            &SegmentHeader {
                label: target,
                seed: args.seed,
                index,
            },
            &edited,
        ));
        records.push(RelabelRecord {
            index,
            source_label: source.to_string(),
            target_label: target.to_string(),
        });
    }

    let mut run = RunDir::create(&args.out, "relabel")?;
    run.input("checkpoint", &args.checkpoint)?;
    run.input("segments", &args.input)?;
    run.param("target_label", target.to_string());
    run.param("mode", args.mode.to_string());
    run.param("seed", args.seed);
    run.write("relabeled.txt", &out)?;
    run.write("records.jsonl", report::json_lines(&records))?;
    run.finish()?;
    if args.print {
        print!("{out}");
    }
    println!("{} segments -> {}", inputs.len(), run_path(&args.out, "relabeled.txt"));
    Ok(())
}

#[derive(Serialize)]
struct RelabelRecord {
    index: usize,
    source_label: String,
    target_label: String,
}

fn require_dataset(args: &EvaluateArgs, scheme: Scheme) -> anyhow::Result<Dataset> {
    let path = args
        .dataset
        .as_ref()
        .ok_or_else(|| Usage(format!("--suite {:?} needs --dataset", args.suite).to_lowercase()))?;
    let dataset = load_dataset(path)?;
    if dataset.scheme() != scheme {
        bail!(Usage(format!(
            "dataset {} is {}, the checkpoint is {scheme}",
            path.display(),
            dataset.scheme()
        )));
    }
    Ok(dataset)
}

#[derive(Serialize)]
struct ClassifierRecord {
    train_accuracy: f64,
    test_accuracy: f64,
    n_train: usize,
    n_test: usize,
    forest: ForestConfig,
}

fn evaluate(args: EvaluateArgs, config: &Config) -> anyhow::Result<()> {
    let maps = config.tile_maps()?;
    let (checkpoint, map) = load_model(&args.checkpoint, &maps)?;
    let scheme = checkpoint.model.scheme();
    let n = args.n.or(config.evaluate.n).unwrap_or(1000);
    let mut run = RunDir::create(&args.out, "evaluate")?;
    run.input("checkpoint", &args.checkpoint)?;
    if let Some(p) = &args.dataset {
        run.input("dataset", p)?;
    }
    run.param("suite", format!("{:?}", args.suite).to_lowercase());
    run.param("n", n);
    run.param("seed", args.seed);

    let text = match args.suite {
        Suite::Elements => {
            let game = scheme
                .element_game()
                .ok_or_else(|| Usage(format!("--suite elements needs an element model, found {scheme}")))?;
            let elements = ElementMap::from_tile_map(&map, game)?;
            let dataset = match (&args.dataset, args.source) {
                (Some(_), _) | (None, SourceArg::Training) => Some(require_dataset(&args, scheme)?),
                (None, SourceArg::Random) => None,
            };
            let source = match (args.source, &dataset) {
                (SourceArg::Training, Some(ds)) => MatchSource::Training(ds),
                _ => MatchSource::Random,
            };
            let mut rep = match_metrics(&checkpoint, &elements, n, args.seed, source)?;
            let trend = dataset.as_ref().map(|ds| {
                rep.set_train_freq(&ds.label_counts());
                let (top, bottom) = frequency_trend(&rep, args.trend_k);
                (args.trend_k, top, bottom)
            });
            run.param("source", rep.source.clone());
            run.write("records.jsonl", report::json_lines(&rep.rows))?;
            run.write("match.csv", report::match_csv(&rep))?;
            run.write("report.json", serde_json::to_string_pretty(&rep)? + "\n")?;
            report::match_table(&rep, trend)
        }
        Suite::Blend => {
            let dataset = require_dataset(&args, Scheme::Blend)?;
            let forest = ForestConfig {
                n_trees: args.trees.or(config.evaluate.trees).unwrap_or(100),
                seed: args.seed,
                ..ForestConfig::default()
            };
            let frac = args.test_fraction.or(config.evaluate.test_fraction).unwrap_or(0.2);
            if !(0.0..1.0).contains(&frac) || frac == 0.0 {
                bail!(Usage(format!("test fraction {frac} is outside (0, 1)")));
            }
            log::info!("fitting {} trees on {} segments", forest.n_trees, dataset.len());
            let (classifier, fit) = train_game_classifier(&dataset, &map, frac, &forest)?;
            let table = blend_table(&checkpoint, &classifier, n, args.seed)?;
            run.param("forest", forest);
            run.param("test_fraction", frac);
            run.write("records.jsonl", report::json_lines(&table.rows))?;
            run.write("blend.csv", report::blend_csv(&table))?;
            let classifier_record = ClassifierRecord {
                train_accuracy: fit.train_accuracy,
                test_accuracy: fit.test_accuracy,
                n_train: fit.n_train,
                n_test: fit.n_test,
                forest,
            };
            run.write("classifier.json", serde_json::to_string_pretty(&classifier_record)? + "\n")?;
            report::blend_table_text(&table, Some((fit.train_accuracy, fit.test_accuracy)))
        }
        Suite::Edist => {
            let dataset = require_dataset(&args, Scheme::Blend)?;
            let rep = edist_report(&checkpoint, &map, &dataset, n, args.seed)?;
            run.write("records.jsonl", report::json_lines(&rep.rows))?;
            run.write("edist.csv", report::edist_csv(&rep))?;
            run.write("report.json", serde_json::to_string_pretty(&rep)? + "\n")?;
            let mut text = report::edist_table_text(&rep);
            for game in [Game::Smb, Game::Mm] {
                if let Some(l) = rep.argmin_label(game) {
                    text.push_str(&format!("closest to {game}: {l}\n"));
                }
            }
            text
        }
    };
    run.write("report.txt", &text)?;
    run.finish()?;
    print!("{text}");
    Ok(())
}

fn serve(args: ServeArgs, config: &Config) -> anyhow::Result<()> {
    if !args.models.is_dir() {
        bail!(Usage(format!("model directory {} does not exist", args.models.display())));
    }
    let state = Arc::new(levelcvae_service::AppState::new(args.models.clone(), config.tile_maps()?));
    let registry = state.registry();
    for w in &registry.warnings {
        log::warn!("{w}");
    }
    log::info!("{} models from {}", registry.models.len(), args.models.display());
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime
        .block_on(levelcvae_service::serve(args.bind, state, args.cors))
        .with_context(|| format!("serving on {}", args.bind))
}

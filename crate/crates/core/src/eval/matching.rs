use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::cvae::{sample_prior, stream_rng, Checkpoint};
use crate::corpus::one_hot_encode;
use crate::dataset::Dataset;
use crate::generation::decode_all;
use crate::labeling::{element_label, int_to_label, label_to_int, ElementMap, LabelVector, Scheme};

/// Where the latent codes come from.
#[derive(Debug, Clone, Copy)]
pub enum MatchSource<'a> {
    /// `z ~ N(0, I)`.
    Random,
    /// Posterior means of training segments, each encoded with its own label.
    Training(&'a Dataset),
}

impl MatchSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            MatchSource::Random => "random",
            MatchSource::Training(_) => "training",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub label: String,
    pub label_int: u32,
    pub n: usize,
    pub exact_pct: f64,
    pub none_pct: f64,
    pub train_freq: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub scheme: Scheme,
    pub source: String,
    pub seed: u64,
    pub rows: Vec<MatchRow>,
    pub avg_exact: f64,
    /// Mean none% over all labels; the all-zero label counts as 100.
    pub avg_none: f64,
    /// Mean none% over labels with at least one requested element.
    pub avg_none_excluding_zero: f64,
}

impl MatchReport {
    /// Fill `train_freq` from per-label training counts.
    pub fn set_train_freq(&mut self, freq: &[usize]) {
        for row in &mut self.rows {
            row.train_freq = freq.get(row.label_int as usize).copied().unwrap_or(0);
        }
    }
}

/// Exact% and none% of derived output labels against one conditioning label.
///
/// None counts outputs in which no category requested by `cond` appears;
/// for the all-zero label that holds vacuously.
pub fn match_percentages(cond: &LabelVector, outputs: &[LabelVector]) -> (f64, f64) {
    if outputs.is_empty() {
        return (0.0, 0.0);
    }
    let want = label_to_int(cond);
    let exact = outputs.iter().filter(|o| label_to_int(o) == want).count();
    let none = outputs.iter().filter(|o| label_to_int(o) & want == 0).count();
    let n = outputs.len() as f64;
    (100.0 * exact as f64 / n, 100.0 * none as f64 / n)
}

/// Examples per integer label value.
pub fn label_frequency<'a>(scheme: Scheme, labels: impl IntoIterator<Item = &'a LabelVector>) -> Vec<usize> {
    let mut counts = vec![0; scheme.cardinality() as usize];
    for l in labels {
        counts[label_to_int(l) as usize] += 1;
    }
    counts
}

/// Conditioning fidelity for every label of an element scheme.
///
/// Each label is processed with its own RNG stream, so the report does not
/// depend on how labels are spread across threads.
pub fn match_metrics(
    checkpoint: &Checkpoint,
    elements: &ElementMap,
    n_per_label: usize,
    seed: u64,
    source: MatchSource<'_>,
) -> Result<MatchReport, EvalError> {
    let scheme = checkpoint.model.scheme();
    if scheme.element_game().is_none() || elements.scheme() != scheme {
        return Err(EvalError::SchemeMismatch(format!(
            "match metrics need an element model with its element map (model {scheme}, map {})",
            elements.scheme()
        )));
    }
    let freq = match source {
        MatchSource::Training(ds) => {
            if ds.scheme() != scheme {
                return Err(EvalError::SchemeMismatch(format!(
                    "dataset {} does not match model {scheme}",
                    ds.scheme()
                )));
            }
            if ds.is_empty() {
                return Err(EvalError::EmptySet);
            }
            label_frequency(scheme, ds.examples.iter().map(|e| &e.label))
        }
        MatchSource::Random => vec![0; scheme.cardinality() as usize],
    };

    let zs = latent_codes(checkpoint, n_per_label, seed, source)?;
    let rows = (0..scheme.cardinality())
        .into_par_iter()
        .map(|k| {
            let cond = int_to_label(k, scheme).expect("k below cardinality");
            let zs = match &zs {
                Latents::Shared(zs) => zs.clone(),
                Latents::PerLabel => {
                    let mut rng = stream_rng(seed, u64::from(k) + 1);
                    (0..n_per_label).map(|_| sample_prior(checkpoint.model.latent_dim(), &mut rng)).collect()
                }
            };
            let outputs: Vec<LabelVector> = if zs.is_empty() {
                Vec::new()
            } else {
                decode_all(checkpoint, &zs, &cond)?
                    .iter()
                    .map(|s| element_label(s, elements))
                    .collect()
            };
            let (exact_pct, none_pct) = match_percentages(&cond, &outputs);
            Ok(MatchRow {
                label: cond.to_string(),
                label_int: k,
                n: outputs.len(),
                exact_pct,
                none_pct,
                train_freq: freq[k as usize],
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mean = |f: &dyn Fn(&MatchRow) -> f64, rows: &[&MatchRow]| {
        rows.iter().map(|r| f(r)).sum::<f64>() / rows.len().max(1) as f64
    };
    let all: Vec<&MatchRow> = rows.iter().collect();
    let nonzero: Vec<&MatchRow> = rows.iter().filter(|r| r.label_int != 0).collect();
    Ok(MatchReport {
        scheme,
        source: source.name().to_string(),
        seed,
        avg_exact: mean(&|r| r.exact_pct, &all),
        avg_none: mean(&|r| r.none_pct, &all),
        avg_none_excluding_zero: mean(&|r| r.none_pct, &nonzero),
        rows,
    })
}

enum Latents {
    /// The same codes are decoded under every label.
    Shared(Vec<Vec<f64>>),
    /// Fresh prior samples per label.
    PerLabel,
}

fn latent_codes(
    checkpoint: &Checkpoint,
    n: usize,
    seed: u64,
    source: MatchSource<'_>,
) -> Result<Latents, EvalError> {
    match source {
        MatchSource::Random => Ok(Latents::PerLabel),
        MatchSource::Training(ds) => {
            let mut rng = stream_rng(seed, 0);
            let picks = sample(&mut rng, ds.len(), n.min(ds.len())).into_vec();
            picks
                .into_iter()
                .map(|i| {
                    let e = &ds.examples[i];
                    let x = one_hot_encode(&e.segment, &checkpoint.vocab).map_err(|err| EvalError::Other(err.to_string()))?;
                    let (mu, _) = checkpoint
                        .model
                        .encode(&x.values, &e.label)
                        .map_err(|err| EvalError::Other(err.to_string()))?;
                    Ok(mu)
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Latents::Shared)
        }
    }
}

/// Mean exact% over the `k` most and `k` least frequent training labels.
/// Ties in frequency are broken by the lower label value.
pub fn frequency_trend(report: &MatchReport, k: usize) -> (f64, f64) {
    let mut rows: Vec<&MatchRow> = report.rows.iter().collect();
    rows.sort_by(|a, b| b.train_freq.cmp(&a.train_freq).then(a.label_int.cmp(&b.label_int)));
    let k = k.min(rows.len());
    let avg = |rs: &[&MatchRow]| rs.iter().map(|r| r.exact_pct).sum::<f64>() / rs.len().max(1) as f64;
    (avg(&rows[..k]), avg(&rows[rows.len() - k..]))
}

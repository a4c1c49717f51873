//! CART decision trees with Gini impurity and a bagged random forest.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::cvae::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `⌊√F⌋` (at least 1).
    pub max_features: Option<usize>,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            min_samples_split: 2,
            max_depth: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Grow a tree on the rows listed in `samples` (repeats allowed).
    pub fn fit<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        samples: Vec<usize>,
        config: &ForestConfig,
        rng: &mut R,
    ) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let mtry = config
            .max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1));
        let mut builder = Builder {
            x,
            y,
            n_classes,
            mtry,
            config,
            nodes: Vec::new(),
        };
        builder.grow(samples, 0, rng);
        Self { nodes: builder.nodes }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    mtry: usize,
    config: &'a ForestConfig,
    nodes: Vec<Node>,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

/// Most frequent class; ties go to the lowest index.
fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn grow<R: Rng + ?Sized>(&mut self, samples: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &s in &samples {
            counts[self.y[s]] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority(&counts) });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_deep = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || too_deep || samples.len() < self.config.min_samples_split {
            return id;
        }
        let Some(best) = self.best_split(&samples, rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&s| self.x[s][best.feature] <= best.threshold);
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Examine features in random order until at least `mtry` have been
    /// tried and one of them admits a split.
    fn best_split<R: Rng + ?Sized>(&self, samples: &[usize], rng: &mut R) -> Option<BestSplit> {
        let n_features = self.x[0].len();
        let mut features: Vec<usize> = (0..n_features).collect();
        features.shuffle(rng);
        let n = samples.len();
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = samples.to_vec();
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = vec![0usize; self.n_classes];
            for &s in &order {
                right[self.y[s]] += 1;
            }
            for i in 0..n - 1 {
                let c = self.y[order[i]];
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (self.x[order[i]][f], self.x[order[i + 1]][f]);
                if lo == hi {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
    n_features: usize,
}

impl RandomForest {
    /// Each tree sees its own bootstrap sample, drawn from a stream keyed by
    /// the tree index so the result is independent of thread scheduling.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, config: &ForestConfig) -> Result<Self, EvalError> {
        if x.is_empty() || x.len() != y.len() || config.n_trees == 0 {
            return Err(EvalError::TooFewSamples("forest needs rows, labels and trees".into()));
        }
        let n_features = x[0].len();
        if x.iter().any(|r| r.len() != n_features) || y.iter().any(|&c| c >= n_classes) {
            return Err(EvalError::TooFewSamples("ragged rows or class out of range".into()));
        }
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream_rng(config.seed, t as u64 + 1);
                let samples: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
                DecisionTree::fit(x, y, n_classes, samples, config, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            n_classes,
            n_features,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn votes(&self, row: &[f64]) -> Vec<usize> {
        let mut votes = vec![0usize; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(row)] += 1;
        }
        votes
    }

    /// Majority vote; ties go to the lowest class.
    pub fn predict(&self, row: &[f64]) -> usize {
        majority(&self.votes(row))
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        let hits = x.iter().zip(y).filter(|(r, &c)| self.predict(r) == c).count();
        hits as f64 / x.len() as f64
    }

    /// The same forest with its trees in another order.
    pub fn with_tree_order(&self, order: &[usize]) -> Self {
        Self {
            trees: order.iter().map(|&i| self.trees[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Split indices per class so that each class contributes
/// `max(1, round(n·test_fraction))` test rows. Both lists come back sorted.
pub fn stratified_split(
    y: &[usize],
    n_classes: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let mut rng = stream_rng(seed, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut present = 0;
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(EvalError::TooFewSamples(format!(
                "class {class} has {} sample(s); need at least 2",
                idx.len()
            )));
        }
        present += 1;
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    if present < 2 {
        return Err(EvalError::TooFewSamples("need at least two classes".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Result of [`train_rf_classifier`].
#[derive(Debug, Clone)]
pub struct ForestFit {
    pub forest: RandomForest,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Stratified split, fit on the training part, score both parts.
pub fn train_rf_classifier(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    test_fraction: f64,
    config: &ForestConfig,
) -> Result<ForestFit, EvalError> {
    let (train, test) = stratified_split(y, n_classes, test_fraction, config.seed)?;
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
    };
    let (xt, yt) = pick(&train);
    let (xs, ys) = pick(&test);
    let forest = RandomForest::fit(&xt, &yt, n_classes, config)?;
    Ok(ForestFit {
        train_accuracy: forest.accuracy(&xt, &yt),
        test_accuracy: forest.accuracy(&xs, &ys),
        n_train: xt.len(),
        n_test: xs.len(),
        forest,
    })
}

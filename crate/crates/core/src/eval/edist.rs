use super::{EvalError, TileFeatures};

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn mean_pairwise(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for p in a {
        for q in b {
            sum += euclid(p, q);
        }
    }
    sum / (a.len() * b.len()) as f64
}

/// Energy distance `2·E‖a−b‖ − E‖a−a′‖ − E‖b−b′‖` over all ordered pairs,
/// on the points as given.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySet);
    }
    Ok(2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b))
}

/// Z-score every coordinate with the mean and population standard
/// deviation of the pooled sets. Constant coordinates are only centred.
pub fn pooled_standardize(a: &[Vec<f64>], b: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = a.first().or(b.first()).map_or(0, Vec::len);
    let n = (a.len() + b.len()) as f64;
    let mut mean = vec![0.0; dim];
    for p in a.iter().chain(b) {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for p in a.iter().chain(b) {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 })
        .collect();
    let apply = |set: &[Vec<f64>]| -> Vec<Vec<f64>> {
        set.iter()
            .map(|p| p.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
            .collect()
    };
    (apply(a), apply(b))
}

/// Energy distance between two sets of tile metrics after pooled
/// standardisation.
pub fn e_distance(a: &[TileFeatures], b: &[TileFeatures]) -> Result<f64, EvalError> {
    let to_vecs = |s: &[TileFeatures]| s.iter().map(|f| f.to_array().to_vec()).collect::<Vec<_>>();
    let (sa, sb) = pooled_standardize(&to_vecs(a), &to_vecs(b));
    energy_distance(&sa, &sb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent double loop over explicit index pairs.
    fn brute_force(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let d = |p: &Vec<f64>, q: &Vec<f64>| {
            let mut s = 0.0;
            for k in 0..p.len() {
                s += (p[k] - q[k]) * (p[k] - q[k]);
            }
            s.sqrt()
        };
        let (n, m) = (a.len() as f64, b.len() as f64);
        let mut ab = 0.0;
        for x in a.iter() {
            for y in b.iter() {
                ab += d(x, y);
            }
        }
        let mut aa = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                aa += d(&a[i], &a[j]);
            }
        }
        let mut bb = 0.0;
        for i in 0..b.len() {
            for j in 0..b.len() {
                bb += d(&b[i], &b[j]);
            }
        }
        2.0 * ab / (n * m) - aa / (n * n) - bb / (m * m)
    }

    fn set(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..=max)
    }

    #[test]
    fn singletons() {
        let p = vec![vec![0.0, 0.0]];
        let q = vec![vec![3.0, 4.0]];
        assert!((energy_distance(&p, &q).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(energy_distance(&[], &[vec![1.0]]), Err(EvalError::EmptySet)));
    }

    #[test]
    fn five_point_sets_match_oracle() {
        let a: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64 * 0.1, 1.0, -(i as f64)]).collect();
        let b: Vec<Vec<f64>> = (0..5).map(|i| vec![0.5 * i as f64, 2.0, (i as f64).sin(), 0.0]).collect();
        assert!((energy_distance(&a, &b).unwrap() - brute_force(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn constant_feature_is_centred_only() {
        let a = vec![vec![1.0, 2.0], vec![1.0, 4.0]];
        let b = vec![vec![1.0, 6.0]];
        let (sa, sb) = pooled_standardize(&a, &b);
        assert!(sa.iter().chain(&sb).all(|p| p[0] == 0.0));
        let col: Vec<f64> = sa.iter().chain(&sb).map(|p| p[1]).collect();
        let mean = col.iter().sum::<f64>() / 3.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in set(20), b in set(20)) {
            prop_assert!((energy_distance(&a, &b).unwrap() - brute_force(&a, &b)).abs() < 1e-9);
        }

        #[test]
        fn symmetric_and_non_negative(a in set(20), b in set(20)) {
            let ab = energy_distance(&a, &b).unwrap();
            let ba = energy_distance(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!(ab >= -1e-9);
        }

        #[test]
        fn self_distance_is_zero(a in set(20)) {
            prop_assert!(energy_distance(&a, &a).unwrap().abs() <= 1e-9);
            let feats: Vec<TileFeatures> = a.iter().map(|p| TileFeatures {
                density: p[0], nonlinearity: p[1], leniency: p[2], interestingness: p[3],
            }).collect();
            prop_assert!(e_distance(&feats, &feats).unwrap().abs() <= 1e-9);
        }
    }
}

//! Seeded splits, k-fold cross-validation and learning curves.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::example::LabeledExample;
use crate::metrics::{metrics, Scores};
use crate::model::{train, ModelSpec, TrainedModel};
use crate::MlError;

pub fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Contiguous folds over a seeded shuffle; sizes differ by at most one.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, MlError> {
    if folds < 2 {
        return Err(MlError::Invalid(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(MlError::TooFewExamples { need: folds, got: n });
    }
    let order = shuffled(n, seed);
    let (base, extra) = (n / folds, n % folds);
    let mut start = 0;
    Ok((0..folds)
        .map(|f| {
            let len = base + (f < extra) as usize;
            let fold = order[start..start + len].to_vec();
            start += len;
            fold
        })
        .collect())
}

/// Seeded train/test split with `test_fraction` of the examples held out.
pub fn holdout(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), MlError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(MlError::Invalid(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut order = shuffled(n, seed);
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(MlError::TooFewExamples { need: 2, got: n });
    }
    let test = order.split_off(n - n_test);
    Ok((order, test))
}

pub fn pick(examples: &[LabeledExample], indices: &[usize]) -> Vec<LabeledExample> {
    indices.iter().map(|&i| examples[i].clone()).collect()
}

/// Scores raw classifier output, before the conservative substitution.
pub fn score(model: &TrainedModel, examples: &[LabeledExample]) -> Result<Scores, MlError> {
    let predicted =
        examples.iter().map(|e| model.predict_features(&e.x).map(|p| p.raw)).collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<_> = examples.iter().map(|e| e.y.clone()).collect();
    metrics(&predicted, &truth)
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub folds: Vec<Scores>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_fscore: f64,
}

pub fn cross_validate(
    examples: &[LabeledExample],
    folds: usize,
    spec: &ModelSpec,
    seed: u64,
) -> Result<CvReport, MlError> {
    let parts = fold_partition(examples.len(), folds, seed)?;
    let mut scores = Vec::with_capacity(folds);
    for (f, test) in parts.iter().enumerate() {
        let train_idx: Vec<usize> =
            parts.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, p)| p.iter().copied()).collect();
        let model = train(&pick(examples, &train_idx), spec)?;
        scores.push(score(&model, &pick(examples, test))?);
    }
    let mean = |g: fn(&Scores) -> f64| scores.iter().map(g).sum::<f64>() / scores.len() as f64;
    Ok(CvReport {
        mean_precision: mean(|s| s.precision),
        mean_recall: mean(|s| s.recall),
        mean_fscore: mean(|s| s.fscore),
        folds: scores,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePoint {
    pub train_size: usize,
    pub scores: Scores,
}

/// Held-out scores of models trained on growing prefixes of `train_set`.
pub fn learning_curve(
    train_set: &[LabeledExample],
    test_set: &[LabeledExample],
    spec: &ModelSpec,
    sizes: &[usize],
) -> Result<Vec<CurvePoint>, MlError> {
    sizes
        .iter()
        .map(|&size| {
            if size > train_set.len() {
                return Err(MlError::TooFewExamples { need: size, got: train_set.len() });
            }
            let model = train(&train_set[..size], spec)?;
            Ok(CurvePoint { train_size: size, scores: score(&model, test_set)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_cover_everything_once() {
        let parts = fold_partition(23, 5, 7).unwrap();
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = parts.concat();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(parts, fold_partition(23, 5, 7).unwrap());
        assert_ne!(parts, fold_partition(23, 5, 8).unwrap());
    }

    #[test]
    fn fold_preconditions() {
        assert!(fold_partition(10, 1, 0).is_err());
        assert!(matches!(fold_partition(3, 4, 0), Err(MlError::TooFewExamples { need: 4, got: 3 })));
    }

    #[test]
    fn holdout_is_disjoint() {
        let (train, test) = holdout(100, 0.2, 3).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert!(test.iter().all(|t| !train.contains(t)));
        assert!(holdout(100, 1.0, 0).is_err());
    }
}

//! Brute-force k-nearest-neighbors with per-label majority vote.

use serde::{Deserialize, Serialize};

use crate::MlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub dim: usize,
    pub n_labels: usize,
    /// Training points, row-major.
    points: Vec<f64>,
    /// Training labels, row-major.
    labels: Vec<bool>,
}

impl Knn {
    pub fn fit(k: usize, rows: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<Self, MlError> {
        if k == 0 {
            return Err(MlError::Invalid("k must be positive".into()));
        }
        if rows.len() < k {
            return Err(MlError::TooFewExamples { need: k, got: rows.len() });
        }
        if rows.len() != labels.len() {
            return Err(MlError::Dimension(format!("{} rows, {} label vectors", rows.len(), labels.len())));
        }
        let (dim, n_labels) = (rows[0].len(), labels[0].len());
        if let Some(i) = (0..rows.len()).find(|&i| rows[i].len() != dim || labels[i].len() != n_labels) {
            return Err(MlError::Dimension(format!("training example {i} has a different shape")));
        }
        Ok(Knn { k, dim, n_labels, points: rows.concat(), labels: labels.concat() })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the `k` nearest training points, nearest first; equal
    /// distances are ordered by training index.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        let mut bound = f64::INFINITY;
        for (i, p) in self.points.chunks_exact(self.dim.max(1)).enumerate().take(self.len()) {
            let mut d = 0.0;
            for (a, b) in p.iter().zip(query) {
                let t = a - b;
                d += t * t;
                if d > bound {
                    break;
                }
            }
            if d > bound || (d == bound && best.len() == self.k) {
                continue;
            }
            let at = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(at, (d, i));
            if best.len() > self.k {
                best.pop();
            }
            if best.len() == self.k {
                bound = best[self.k - 1].0;
            }
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of neighbors voting for each label.
    pub fn predict_proba(&self, query: &[f64]) -> Vec<f64> {
        let mut votes = vec![0usize; self.n_labels];
        let neighbors = self.neighbors(query);
        for &i in &neighbors {
            for (v, &b) in votes.iter_mut().zip(&self.labels[i * self.n_labels..(i + 1) * self.n_labels]) {
                *v += b as usize;
            }
        }
        votes.iter().map(|&v| v as f64 / neighbors.len() as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lower_index() {
        let rows = vec![vec![1.0], vec![-1.0], vec![1.0], vec![3.0]];
        let labels = vec![vec![true], vec![false], vec![false], vec![true]];
        let m = Knn::fit(2, &rows, &labels).unwrap();
        assert_eq!(m.neighbors(&[0.0]), vec![0, 1]);
        assert_eq!(m.neighbors(&[1.0]), vec![0, 2]);
        assert_eq!(m.neighbors(&[2.0]), vec![0, 2]);
        assert_eq!(m.neighbors(&[2.5]), vec![3, 0]);
    }

    #[test]
    fn rejects_bad_input() {
        let rows = vec![vec![0.0]];
        assert!(matches!(Knn::fit(2, &rows, &[vec![true]]), Err(MlError::TooFewExamples { need: 2, got: 1 })));
        assert!(Knn::fit(0, &rows, &[vec![true]]).is_err());
        assert!(Knn::fit(1, &[vec![0.0], vec![0.0, 1.0]], &[vec![true], vec![true]]).is_err());
    }
}

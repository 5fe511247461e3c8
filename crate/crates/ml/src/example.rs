//! Learning examples built from dataset triples, and feature scaling.

use fcaz_core::fc_engine::AzConfig;
use fcaz_core::features::{DatasetTriple, MobilityRow};
use fcaz_core::roadnet::LinkId;
use serde::{Deserialize, Serialize};

use crate::MlError;

/// Mobility features contributed by each link.
pub const FEATURES_PER_LINK: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    /// Flattened mobility matrix, link-major.
    pub x: Vec<f64>,
    pub y: AzConfig,
}

pub fn flatten(p_mob: &[MobilityRow]) -> Vec<f64> {
    p_mob.iter().flat_map(|m| [m.n_vehicles, m.nu, m.lambda, m.t_lambda, m.tx]).collect()
}

/// True when the recorded content availability misses `s_des` on some ZOI link.
pub fn fails_target(triple: &DatasetTriple, zoi: &[LinkId], s_des: f64) -> bool {
    zoi.iter().any(|&l| triple.p_com[l].availability < s_des)
}

/// Turns triples into examples, replacing the label of every triple that
/// misses the availability target with the all-OFF vector. Order is kept.
pub fn preprocess(triples: &[DatasetTriple], zoi: &[LinkId], s_des: f64) -> Result<Vec<LabeledExample>, MlError> {
    let Some(first) = triples.first() else { return Ok(Vec::new()) };
    let n = first.n_links();
    if let Some(&bad) = zoi.iter().find(|&&l| l >= n) {
        return Err(MlError::Dimension(format!("ZOI link {bad} outside {n} links")));
    }
    triples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.n_links() != n || t.p_mob.len() != n || t.p_com.len() != n {
                return Err(MlError::Dimension(format!("triple {i} has {} links, expected {n}", t.n_links())));
            }
            let y = if fails_target(t, zoi, s_des) { AzConfig::all_off(n) } else { t.label.clone() };
            Ok(LabeledExample { x: flatten(&t.p_mob), y })
        })
        .collect()
}

/// Per-feature z-score parameters. Constant features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, MlError> {
        let mut rows = rows.into_iter().peekable();
        let d = rows.peek().map(|r| r.len()).ok_or(MlError::TooFewExamples { need: 1, got: 0 })?;
        let (mut n, mut mean, mut m2) = (0.0, vec![0.0; d], vec![0.0; d]);
        for row in rows {
            if row.len() != d {
                return Err(MlError::Dimension(format!("row of {} features, expected {d}", row.len())));
            }
            n += 1.0;
            for ((mu, s), &v) in mean.iter_mut().zip(&mut m2).zip(row) {
                let delta = v - *mu;
                *mu += delta / n;
                *s += delta * (v - *mu);
            }
        }
        let scale = m2
            .iter()
            .map(|&s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Ok(Scaler { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((&v, m), s)| (v - m) / s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fcaz_core::features::ContentRow;

    fn triple(avail: [f64; 3], label: &str) -> DatasetTriple {
        let m = MobilityRow { n_vehicles: 2.0, nu: 10.0, lambda: 1.0, t_lambda: 4.0, tx: 100.0 };
        DatasetTriple {
            p_mob: vec![m; 3],
            p_com: avail.iter().map(|&a| ContentRow { v_c: a, availability: a }).collect(),
            label: label.parse().unwrap(),
        }
    }

    #[test]
    fn failing_triples_become_all_off_and_order_is_kept() {
        let ts = [triple([1.0, 0.95, 0.0], "110"), triple([1.0, 0.85, 1.0], "111"), triple([0.9, 0.9, 0.0], "011")];
        let ex = preprocess(&ts, &[0, 1], 0.9).unwrap();
        let labels: Vec<String> = ex.iter().map(|e| e.y.to_string()).collect();
        assert_eq!(labels, ["110", "000", "011"]);
        assert!(ex.iter().all(|e| e.x == flatten(&ts[0].p_mob)));
    }

    #[test]
    fn preprocess_rejects_bad_zoi() {
        assert!(matches!(preprocess(&[triple([1.0; 3], "111")], &[3], 0.9), Err(MlError::Dimension(_))));
    }

    #[test]
    fn scaler_matches_population_moments() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let s = Scaler::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(s.mean, vec![3.0, 5.0]);
        assert!((s.scale[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.scale[1], 1.0);
        assert_eq!(s.transform(&[3.0, 7.0]), vec![0.0, 2.0]);
    }
}

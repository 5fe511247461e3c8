//! Availability, the application and resource cost components, the weighted
//! objective, the ZOI availability constraint and the congestion cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fc_engine::AzConfig;
use crate::features::LinkFeatures;
use crate::roadnet::LinkId;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("negative vehicle count ({0}, {1})")]
    NegativeCount(f64, f64),
    #[error("link {link}: mean contact duration is zero while {lambda} vehicles are in contact")]
    ZeroContactDuration { link: LinkId, lambda: f64 },
    #[error("configuration has {config} bits but features cover {features} links")]
    Dimension { config: usize, features: usize },
    #[error("the zone of interest is empty")]
    EmptyZoi,
    #[error("link {0} is outside the feature table")]
    UnknownLink(LinkId),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Relative weight of the application cost.
    pub k: f64,
    /// Availability target on every ZOI link.
    pub s_des: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { k: 1.0, s_des: 0.9 }
    }
}

impl CostWeights {
    pub fn new(k: f64, s_des: f64) -> Result<Self, CostError> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(CostError::InvalidWeights(format!("k = {k} must be >= 0")));
        }
        if !(0.0..=1.0).contains(&s_des) {
            return Err(CostError::InvalidWeights(format!("s_des = {s_des} must be in [0, 1]")));
        }
        Ok(CostWeights { k, s_des })
    }
}

/// Fraction of vehicles carrying the content; an empty link has availability 0.
pub fn availability(v_c: f64, v_nc: f64) -> Result<f64, CostError> {
    if v_c < 0.0 || v_nc < 0.0 {
        return Err(CostError::NegativeCount(v_c, v_nc));
    }
    let total = v_c + v_nc;
    Ok(if total > 0.0 { v_c / total } else { 0.0 })
}

fn check_dims(az: &AzConfig, features: &[LinkFeatures]) -> Result<(), CostError> {
    if az.len() == features.len() {
        Ok(())
    } else {
        Err(CostError::Dimension { config: az.len(), features: features.len() })
    }
}

/// Resource cost: `sum over enabled links of λ (V_c + V_nc) Tx / t_λ`. A link
/// without contacts costs nothing.
pub fn cost_loss(az: &AzConfig, features: &[LinkFeatures]) -> Result<f64, CostError> {
    check_dims(az, features)?;
    let mut total = 0.0;
    for (link, f) in features.iter().enumerate() {
        if !az.is_enabled(link) || f.lambda == 0.0 {
            continue;
        }
        if f.t_lambda == 0.0 {
            return Err(CostError::ZeroContactDuration { link, lambda: f.lambda });
        }
        total += f.lambda * f.total() * f.tx / f.t_lambda;
    }
    Ok(total)
}

/// Application cost: `sum over enabled links of a (V_c + V_nc)`, which is the
/// mean number of carriers on enabled links.
pub fn cost_app(az: &AzConfig, features: &[LinkFeatures]) -> Result<f64, CostError> {
    check_dims(az, features)?;
    // a * (V_c + V_nc) == V_c; summing V_c keeps the identity exact.
    Ok(features.iter().enumerate().filter(|(l, _)| az.is_enabled(*l)).map(|(_, f)| f.v_c).sum())
}

/// Raw cost components of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostComponents {
    pub c_app: f64,
    pub c_loss: f64,
}

impl CostComponents {
    pub fn of(az: &AzConfig, features: &[LinkFeatures]) -> Result<Self, CostError> {
        Ok(CostComponents { c_app: cost_app(az, features)?, c_loss: cost_loss(az, features)? })
    }
}

fn normalized(value: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        value / reference
    } else {
        0.0
    }
}

/// `k * C_app / C_app_ref + C_loss / C_loss_ref`, with each component divided
/// by its value under the all-ON configuration on the same feature table.
pub fn objective(az: &AzConfig, features: &[LinkFeatures], weights: &CostWeights) -> Result<f64, CostError> {
    let reference = CostComponents::of(&AzConfig::all_on(features.len()), features)?;
    Ok(objective_against(&CostComponents::of(az, features)?, &reference, weights))
}

/// Objective of `costs` normalized by an explicit reference, e.g. the costs
/// measured when the all-ON configuration was actually simulated.
pub fn objective_against(costs: &CostComponents, reference: &CostComponents, weights: &CostWeights) -> f64 {
    weights.k * normalized(costs.c_app, reference.c_app) + normalized(costs.c_loss, reference.c_loss)
}

/// True iff every ZOI link reaches the availability target.
pub fn constraint_met<'a>(
    availabilities: impl Fn(LinkId) -> Option<f64>,
    zoi: impl IntoIterator<Item = &'a LinkId>,
    s_des: f64,
) -> Result<bool, CostError> {
    let mut any = false;
    let mut met = true;
    for &link in zoi {
        any = true;
        let a = availabilities(link).ok_or(CostError::UnknownLink(link))?;
        met &= a >= s_des;
    }
    if any {
        Ok(met)
    } else {
        Err(CostError::EmptyZoi)
    }
}

/// Congestion variant of the application cost: `sum over congested links of
/// (V_c + V_nc) / (ν + 1)`.
pub fn cost_congestion(features: &[LinkFeatures], congested: &[LinkId]) -> Result<f64, CostError> {
    congested
        .iter()
        .map(|&l| features.get(l).map(|f| f.total() / (f.nu + 1.0)).ok_or(CostError::UnknownLink(l)))
        .sum()
}

/// Links whose mean speed is below `speed_threshold` while carrying traffic.
pub fn congested_links(features: &[LinkFeatures], speed_threshold: f64) -> Vec<LinkId> {
    features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.total() > 0.0 && f.nu < speed_threshold)
        .map(|(l, _)| l)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub c_app: f64,
    pub c_loss: f64,
    pub c_app_norm: f64,
    pub c_loss_norm: f64,
    pub total: f64,
    pub constraint_met: bool,
    /// `(link, availability)` for each ZOI link.
    pub availability_zoi: Vec<(LinkId, f64)>,
}

impl CostReport {
    /// `availability` is the per-link availability the constraint is judged
    /// on, normally the `p_com` column of the same interval.
    pub fn new(
        az: &AzConfig,
        features: &[LinkFeatures],
        availability: &[f64],
        reference: &CostComponents,
        zoi: &[LinkId],
        weights: &CostWeights,
    ) -> Result<Self, CostError> {
        let costs = CostComponents::of(az, features)?;
        let availability_zoi = zoi
            .iter()
            .map(|&l| availability.get(l).map(|&a| (l, a)).ok_or(CostError::UnknownLink(l)))
            .collect::<Result<Vec<_>, _>>()?;
        let met = constraint_met(|l| availability.get(l).copied(), zoi, weights.s_des)?;
        Ok(CostReport {
            c_app: costs.c_app,
            c_loss: costs.c_loss,
            c_app_norm: normalized(costs.c_app, reference.c_app),
            c_loss_norm: normalized(costs.c_loss, reference.c_loss),
            total: objective_against(&costs, reference, weights),
            constraint_met: met,
            availability_zoi,
        })
    }

    pub fn min_zoi_availability(&self) -> f64 {
        self.availability_zoi.iter().map(|&(_, a)| a).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn link(v_c: f64, v_nc: f64, lambda: f64, t_lambda: f64) -> LinkFeatures {
        LinkFeatures { v_c, v_nc, lambda, t_lambda, nu: 10.0, tx: 100.0 }
    }

    #[test]
    fn availability_cases() {
        assert_eq!(availability(9.0, 1.0).unwrap(), 0.9);
        assert_eq!(availability(0.0, 7.0).unwrap(), 0.0);
        assert_eq!(availability(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(availability(5.0, 5.0).unwrap(), 0.5);
        assert!(availability(-1.0, 2.0).is_err());
    }

    #[test]
    fn loss_arithmetic() {
        let f = [link(4.0, 6.0, 4.0, 5.0)];
        assert_eq!(cost_loss(&AzConfig::all_on(1), &f).unwrap(), 800.0);
        assert_eq!(cost_loss(&AzConfig::all_off(1), &f).unwrap(), 0.0);
    }

    #[test]
    fn loss_without_contacts_is_free_but_zero_duration_with_contacts_is_an_error() {
        assert_eq!(cost_loss(&AzConfig::all_on(1), &[link(1.0, 1.0, 0.0, 0.0)]).unwrap(), 0.0);
        assert_eq!(
            cost_loss(&AzConfig::all_on(1), &[link(1.0, 1.0, 2.0, 0.0)]).unwrap_err(),
            CostError::ZeroContactDuration { link: 0, lambda: 2.0 }
        );
    }

    #[test]
    fn app_arithmetic() {
        let f = [link(5.0, 5.0, 1.0, 1.0)];
        assert_eq!(cost_app(&AzConfig::all_on(1), &f).unwrap(), 5.0);
        assert_eq!(cost_app(&AzConfig::all_off(1), &f).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(cost_app(&AzConfig::all_on(2), &[link(1.0, 1.0, 1.0, 1.0)]), Err(CostError::Dimension { .. })));
    }

    #[test]
    fn objective_anchors() {
        let f = [link(2.0, 3.0, 1.0, 2.0), link(1.0, 0.0, 3.0, 4.0), link(0.5, 0.5, 2.0, 1.0)];
        let w = CostWeights::new(2.5, 0.9).unwrap();
        assert!((objective(&AzConfig::all_on(3), &f, &w).unwrap() - 3.5).abs() < 1e-12);
        assert_eq!(objective(&AzConfig::all_off(3), &f, &w).unwrap(), 0.0);
        let w0 = CostWeights::new(0.0, 0.9).unwrap();
        let az = AzConfig::from_links(3, [1]);
        let loss_norm = cost_loss(&az, &f).unwrap() / cost_loss(&AzConfig::all_on(3), &f).unwrap();
        assert!((objective(&az, &f, &w0).unwrap() - loss_norm).abs() < 1e-15);
    }

    #[test]
    fn objective_ranking_on_three_links() {
        // By hand: c_app per link 2, 1, 0.5 (all-ON 3.5); c_loss per link
        // 1*5*100/2 = 250, 3*1*100/4 = 75, 2*1*100/1 = 200 (all-ON 525).
        // Per-link objective shares: 1.0476, 0.4286, 0.5238.
        let f = [link(2.0, 3.0, 1.0, 2.0), link(1.0, 0.0, 3.0, 4.0), link(0.5, 0.5, 2.0, 1.0)];
        let w = CostWeights::new(1.0, 0.0).unwrap();
        let app = [2.0, 1.0, 0.5];
        let loss = [250.0, 75.0, 200.0];
        let mut expected: Vec<(f64, u32)> = (0..8u32)
            .map(|m| {
                let on = |l: usize| (m >> l) & 1 == 1;
                let a: f64 = (0..3).filter(|&l| on(l)).map(|l| app[l]).sum();
                let c: f64 = (0..3).filter(|&l| on(l)).map(|l| loss[l]).sum();
                (a / 3.5 + c / 525.0, m)
            })
            .collect();
        let mut got: Vec<(f64, u32)> = (0..8u32)
            .map(|m| {
                let az = AzConfig::from_bits((0..3).map(|l| (m >> l) & 1 == 1).collect());
                (objective(&az, &f, &w).unwrap(), m)
            })
            .collect();
        for ((g, _), (e, _)) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
        expected.sort_by(|a, b| a.0.total_cmp(&b.0));
        got.sort_by(|a, b| a.0.total_cmp(&b.0));
        let order = |v: &[(f64, u32)]| v.iter().map(|x| x.1).collect::<Vec<_>>();
        assert_eq!(order(&got), order(&expected));
        assert_eq!(order(&got), vec![0, 2, 4, 6, 1, 3, 5, 7]);
    }

    #[test]
    fn constraint_cases() {
        let a = [0.95, 0.92, 0.89];
        let get = |l: LinkId| a.get(l).copied();
        assert!(constraint_met(get, &[0, 1], 0.9).unwrap());
        assert!(!constraint_met(get, &[0, 2], 0.9).unwrap());
        assert!(constraint_met(get, &[2], 0.0).unwrap());
        assert_eq!(constraint_met(get, &[], 0.9).unwrap_err(), CostError::EmptyZoi);
        assert_eq!(constraint_met(get, &[7], 0.9).unwrap_err(), CostError::UnknownLink(7));
    }

    #[test]
    fn congestion_cases() {
        let mut f = link(4.0, 6.0, 0.0, 0.0);
        f.nu = 0.0;
        assert_eq!(cost_congestion(&[f], &[0]).unwrap(), 10.0);
        assert_eq!(cost_congestion(&[f], &[]).unwrap(), 0.0);
        f.nu = 1e12;
        assert!(cost_congestion(&[f], &[0]).unwrap() < 1e-10);
        assert!(cost_congestion(&[f], &[3]).is_err());
    }

    #[test]
    fn congested_link_selection() {
        let mut slow = link(1.0, 1.0, 0.0, 0.0);
        slow.nu = 2.0;
        let empty = LinkFeatures { nu: 0.0, ..LinkFeatures::default() };
        assert_eq!(congested_links(&[slow, link(1.0, 1.0, 0.0, 0.0), empty], 5.0), vec![0]);
    }

    #[test]
    fn report_fields() {
        let f = [link(9.0, 1.0, 1.0, 1.0), link(0.0, 3.0, 1.0, 1.0)];
        let reference = CostComponents::of(&AzConfig::all_on(2), &f).unwrap();
        let avail: Vec<f64> = f.iter().map(LinkFeatures::availability).collect();
        let r = CostReport::new(&AzConfig::from_links(2, [0]), &f, &avail, &reference, &[0], &CostWeights::default())
            .unwrap();
        assert!(r.constraint_met);
        assert_eq!(r.availability_zoi, vec![(0, 0.9)]);
        assert_eq!(r.c_app_norm, 1.0);
        assert!((r.c_loss_norm - 1000.0 / 1300.0).abs() < 1e-12);
        assert!((r.total - (1.0 + 1000.0 / 1300.0)).abs() < 1e-12);
    }

    fn feature_table(n: usize) -> impl Strategy<Value = Vec<LinkFeatures>> {
        prop::collection::vec((0.0..20.0f64, 0.0..20.0f64, 0.0..10.0f64, 0.5..30.0f64, 0.0..20.0f64), n).prop_map(|v| {
            v.into_iter()
                .map(|(v_c, v_nc, lambda, t_lambda, nu)| LinkFeatures { v_c, v_nc, lambda, t_lambda, nu, tx: 100.0 })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn costs_monotone_under_inclusion(f in feature_table(10), small in any::<u16>(), extra in any::<u16>()) {
            let a = AzConfig::from_bits((0..10).map(|l| (small >> l) & 1 == 1).collect());
            let b = AzConfig::from_bits((0..10).map(|l| ((small | extra) >> l) & 1 == 1).collect());
            prop_assert!(cost_loss(&a, &f).unwrap() <= cost_loss(&b, &f).unwrap());
            prop_assert!(cost_app(&a, &f).unwrap() <= cost_app(&b, &f).unwrap());
        }

        #[test]
        fn app_cost_is_availability_times_total(f in feature_table(8), mask in any::<u8>()) {
            let az = AzConfig::from_bits((0..8).map(|l| (mask >> l) & 1 == 1).collect());
            let by_definition: f64 = f.iter().enumerate()
                .filter(|(l, _)| az.is_enabled(*l))
                .map(|(_, x)| availability(x.v_c, x.v_nc).unwrap() * (x.v_c + x.v_nc))
                .sum();
            let got = cost_app(&az, &f).unwrap();
            prop_assert!((got - by_definition).abs() <= 1e-12 * got.max(1.0));
        }

        #[test]
        fn availability_in_unit_interval(v_c in 0.0..1e6f64, v_nc in 0.0..1e6f64) {
            let a = availability(v_c, v_nc).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(constraint_met(|_| Some(a), &[0], 0.0).unwrap());
        }
    }
}

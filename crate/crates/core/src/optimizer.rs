//! Anchor-zone search: the trivial bounds, an exhaustive oracle over the
//! supersets of the ZOI, and a greedy heuristic.
//!
//! A [`Problem`] fixes the mobility of one or more interval traces. Every
//! candidate configuration is replayed over all of them with the bit-sliced
//! evaluator, and availability is pooled over the traces.

use std::cmp::Ordering;

use thiserror::Error;

use crate::cost::{constraint_met, objective_against, CostComponents, CostError, CostReport, CostWeights};
use crate::fc_engine::batch::carrier_sums;
use crate::fc_engine::{select_seeders, AzConfig, MobilityFrame};
use crate::features::{aggregate_mobility, ContentRow, FeatureError, LinkFeatures, MobilityAggregate, MobilityRow};
use crate::roadnet::{LinkId, RoadNet};

/// Hard limit on the network size accepted by [`brute_force`].
pub const BRUTE_FORCE_CAP: usize = 20;

/// Configurations evaluated per batch in the exhaustive search.
const BATCH: usize = 4096;

const GREEDY_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("exhaustive search refused: network has {n} links, cap is {cap}")]
    TooManyLinks { n: usize, cap: usize },
    #[error("the zone of interest is empty")]
    EmptyZoi,
    #[error("zoi link {0} is not in the network")]
    UnknownZoiLink(LinkId),
    #[error("no interval traces to evaluate on")]
    NoTraces,
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// One interval of recorded mobility and the seed of its seeder selection.
#[derive(Debug, Clone, Copy)]
pub struct Trace<'a> {
    pub frames: &'a [MobilityFrame],
    pub seeder_seed: u64,
}

/// A simulated configuration with its pooled content features and costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub az: AzConfig,
    pub p_com: Vec<ContentRow>,
    pub costs: CostComponents,
    pub objective: f64,
    pub min_zoi_availability: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Feasible(Evaluation),
    /// No candidate met the target; carries the A_all evaluation.
    Infeasible(Evaluation),
}

impl Outcome {
    pub fn evaluation(&self) -> &Evaluation {
        match self {
            Outcome::Feasible(e) | Outcome::Infeasible(e) => e,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Outcome::Feasible(_))
    }
}

pub fn trivial_bounds(net: &RoadNet) -> (AzConfig, AzConfig) {
    (AzConfig::all_on(net.len()), AzConfig::from_links(net.len(), net.zoi().iter().copied()))
}

#[derive(Debug)]
pub struct Problem<'a> {
    n_links: usize,
    zoi: Vec<LinkId>,
    weights: CostWeights,
    seeding_fraction: f64,
    traces: Vec<Trace<'a>>,
    mobility: MobilityAggregate,
    reference: Evaluation,
}

impl<'a> Problem<'a> {
    pub fn new(
        net: &RoadNet,
        zoi: &[LinkId],
        weights: CostWeights,
        seeding_fraction: f64,
        tx: f64,
        traces: Vec<Trace<'a>>,
    ) -> Result<Self, OptimizerError> {
        if zoi.is_empty() {
            return Err(OptimizerError::EmptyZoi);
        }
        if let Some(&bad) = zoi.iter().find(|&&l| l >= net.len()) {
            return Err(OptimizerError::UnknownZoiLink(bad));
        }
        if traces.is_empty() {
            return Err(OptimizerError::NoTraces);
        }
        let frames: Vec<&[MobilityFrame]> = traces.iter().map(|t| t.frames).collect();
        let mobility = aggregate_mobility(&frames, net.len(), tx)?;
        let mut zoi = zoi.to_vec();
        zoi.sort_unstable();
        zoi.dedup();
        let placeholder = Evaluation {
            az: AzConfig::all_on(net.len()),
            p_com: Vec::new(),
            costs: CostComponents { c_app: 0.0, c_loss: 0.0 },
            objective: 0.0,
            min_zoi_availability: 0.0,
            feasible: false,
        };
        let mut problem =
            Problem { n_links: net.len(), zoi, weights, seeding_fraction, traces, mobility, reference: placeholder };
        let all_on = AzConfig::all_on(problem.n_links);
        let (p_com, costs) = problem.simulate(std::slice::from_ref(&all_on))?.pop().expect("one result");
        problem.reference = problem.finish(all_on, p_com, costs, &costs)?;
        Ok(problem)
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn zoi(&self) -> &[LinkId] {
        &self.zoi
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn p_mob(&self) -> &[MobilityRow] {
        &self.mobility.rows
    }

    /// The simulated all-ON configuration, which also normalizes every objective.
    pub fn reference(&self) -> &Evaluation {
        &self.reference
    }

    pub fn a_zoi(&self) -> AzConfig {
        AzConfig::from_links(self.n_links, self.zoi.iter().copied())
    }

    fn simulate(&self, configs: &[AzConfig]) -> Result<Vec<(Vec<ContentRow>, CostComponents)>, OptimizerError> {
        let mut sums = vec![vec![0u64; self.n_links]; configs.len()];
        for trace in &self.traces {
            let seeders: Vec<Vec<LinkId>> =
                configs.iter().map(|az| select_seeders(az, self.seeding_fraction, trace.seeder_seed)).collect();
            for (acc, s) in sums.iter_mut().zip(carrier_sums(trace.frames, self.n_links, configs, &seeders)) {
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v;
                }
            }
        }
        configs
            .iter()
            .zip(sums)
            .map(|(az, s)| {
                let p_com = self.mobility.content_rows(&s);
                let features = LinkFeatures::combine(&self.mobility.rows, &p_com)?;
                let costs = CostComponents::of(az, &features)?;
                Ok((p_com, costs))
            })
            .collect()
    }

    fn finish(
        &self,
        az: AzConfig,
        p_com: Vec<ContentRow>,
        costs: CostComponents,
        reference: &CostComponents,
    ) -> Result<Evaluation, OptimizerError> {
        let availability = |l: LinkId| p_com.get(l).map(|c| c.availability);
        let feasible = constraint_met(availability, &self.zoi, self.weights.s_des)?;
        let min_zoi_availability = self.zoi.iter().map(|&l| p_com[l].availability).fold(f64::INFINITY, f64::min);
        Ok(Evaluation {
            objective: objective_against(&costs, reference, &self.weights),
            az,
            p_com,
            costs,
            min_zoi_availability,
            feasible,
        })
    }

    pub fn evaluate_many(&self, configs: &[AzConfig]) -> Result<Vec<Evaluation>, OptimizerError> {
        for az in configs {
            az.check_len(self.n_links).map_err(|_| FeatureError::Dimension(format!("config {az}")))?;
        }
        let reference = self.reference.costs;
        self.simulate(configs)?
            .into_iter()
            .zip(configs)
            .map(|((p_com, costs), az)| self.finish(az.clone(), p_com, costs, &reference))
            .collect()
    }

    pub fn evaluate(&self, az: &AzConfig) -> Result<Evaluation, OptimizerError> {
        Ok(self.evaluate_many(std::slice::from_ref(az))?.pop().expect("one result"))
    }

    pub fn report(&self, e: &Evaluation) -> Result<CostReport, OptimizerError> {
        let features = LinkFeatures::combine(&self.mobility.rows, &e.p_com)?;
        let availability: Vec<f64> = e.p_com.iter().map(|c| c.availability).collect();
        Ok(CostReport::new(&e.az, &features, &availability, &self.reference.costs, &self.zoi, &self.weights)?)
    }
}

/// Total order of candidates: objective, then fewer enabled links, then bits.
pub fn compare(a: &Evaluation, b: &Evaluation) -> Ordering {
    a.objective
        .total_cmp(&b.objective)
        .then_with(|| a.az.count().cmp(&b.az.count()))
        .then_with(|| a.az.cmp(&b.az))
}

/// Exhaustive search over every superset of A_zoi.
pub fn brute_force(problem: &Problem, max_n: usize) -> Result<Outcome, OptimizerError> {
    let cap = max_n.min(BRUTE_FORCE_CAP);
    let n = problem.n_links();
    if n > cap {
        return Err(OptimizerError::TooManyLinks { n, cap });
    }
    let base = problem.a_zoi();
    let free: Vec<LinkId> = (0..n).filter(|&l| !base.is_enabled(l)).collect();
    let total = 1u64 << free.len();
    let mut best: Option<Evaluation> = None;
    let mut batch = Vec::with_capacity(BATCH);
    let mut mask = 0u64;
    while mask < total {
        batch.clear();
        while mask < total && batch.len() < BATCH {
            let mut az = base.clone();
            for (b, &l) in free.iter().enumerate() {
                if (mask >> b) & 1 == 1 {
                    az.set(l, true);
                }
            }
            batch.push(az);
            mask += 1;
        }
        for e in problem.evaluate_many(&batch)? {
            if e.feasible && best.as_ref().map_or(true, |b| compare(&e, b) == Ordering::Less) {
                best = Some(e);
            }
        }
    }
    Ok(match best {
        Some(e) => Outcome::Feasible(e),
        None => Outcome::Infeasible(problem.reference().clone()),
    })
}

/// Grows A_zoi one adjacent link at a time, picking the largest gain in
/// minimum ZOI availability per unit of objective increase.
pub fn greedy(problem: &Problem, net: &RoadNet) -> Result<Outcome, OptimizerError> {
    let mut current = problem.evaluate(&problem.a_zoi())?;
    while !current.feasible {
        let candidates: Vec<AzConfig> = (0..problem.n_links())
            .filter(|&l| !current.az.is_enabled(l))
            .filter(|&l| net.neighbors(l).iter().any(|&m| current.az.is_enabled(m)))
            .map(|l| {
                let mut az = current.az.clone();
                az.set(l, true);
                az
            })
            .collect();
        if candidates.is_empty() {
            break;
        }
        let score = |e: &Evaluation| {
            (e.min_zoi_availability - current.min_zoi_availability) / (e.objective - current.objective).max(GREEDY_EPS)
        };
        let mut best: Option<(f64, Evaluation)> = None;
        // Candidates are in link order, so a strict comparison keeps the lowest id on ties.
        for e in problem.evaluate_many(&candidates)? {
            let s = score(&e);
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                best = Some((s, e));
            }
        }
        current = best.expect("non-empty candidates").1;
    }
    Ok(if current.feasible { Outcome::Feasible(current) } else { Outcome::Infeasible(problem.reference().clone()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fc_engine::{record_mobility, MobilityRun};
    use crate::roadnet::{Link, Point};
    use crate::scenario::Scenario;

    fn corridor(n: usize) -> RoadNet {
        let links = (0..n)
            .map(|i| {
                Link::new(i, Point::new(i as f64 * 200.0, 0.0), Point::new((i + 1) as f64 * 200.0, 0.0), 16.67).unwrap()
            })
            .collect();
        RoadNet::new(links, [n / 2]).unwrap()
    }

    fn recorded(scenario: &Scenario, net: &RoadNet, run: u64) -> MobilityRun {
        let schedule = scenario.schedule(net, run).unwrap();
        record_mobility(net, &schedule, scenario).unwrap()
    }

    fn problem<'a>(scenario: &Scenario, net: &RoadNet, run: &'a MobilityRun) -> Problem<'a> {
        let trace = Trace { frames: run.interval(0).unwrap(), seeder_seed: scenario.seeder_seed(0, 0) };
        let weights = CostWeights::new(scenario.k, scenario.s_des).unwrap();
        Problem::new(net, &scenario.zoi, weights, scenario.seeding_fraction, scenario.tx, vec![trace]).unwrap()
    }

    fn dense_corridor() -> (Scenario, RoadNet) {
        let mut s = Scenario::desk_grid();
        let net = corridor(6);
        s.zoi = vec![3];
        s.arrival_rate = 2.0;
        s.tx = 250.0;
        s.s_des = 0.9;
        (s, net)
    }

    #[test]
    fn bounds() {
        let net = corridor(5);
        let (all, zoi) = trivial_bounds(&net);
        assert_eq!(all.to_string(), "11111");
        assert_eq!(zoi.to_string(), "00100");
        assert!(zoi.is_subset_of(&all));
        let everything = net.with_zoi(0..5).unwrap();
        let (all, zoi) = trivial_bounds(&everything);
        assert_eq!(all, zoi);
    }

    #[test]
    fn reference_objective_is_k_plus_one() {
        let (s, net) = dense_corridor();
        let run = recorded(&s, &net, 0);
        let p = problem(&s, &net, &run);
        assert!((p.reference().objective - (s.k + 1.0)).abs() < 1e-12);
        let again = p.evaluate(&AzConfig::all_on(6)).unwrap();
        assert_eq!(&again, p.reference());
    }

    #[test]
    fn feasible_zoi_is_the_oracle_answer() {
        let (s, net) = dense_corridor();
        let run = recorded(&s, &net, 0);
        let p = problem(&s, &net, &run);
        let zoi_eval = p.evaluate(&p.a_zoi()).unwrap();
        assert!(zoi_eval.feasible, "min availability {}", zoi_eval.min_zoi_availability);
        let brute = brute_force(&p, 12).unwrap();
        assert_eq!(brute.evaluation().az, p.a_zoi());
        let greedy = greedy(&p, &net).unwrap();
        assert_eq!(greedy.evaluation().az, p.a_zoi());
    }

    #[test]
    fn sparse_traffic_is_infeasible() {
        let (mut s, net) = dense_corridor();
        s.tx = 1.0;
        s.arrival_rate = 0.01;
        let run = recorded(&s, &net, 0);
        let p = problem(&s, &net, &run);
        assert!(!brute_force(&p, 12).unwrap().is_feasible());
        assert!(!greedy(&p, &net).unwrap().is_feasible());
    }

    #[test]
    fn cap_is_enforced() {
        let net = corridor(21);
        let mut s = Scenario::desk_grid();
        s.zoi = vec![10];
        s.duration = 160.0;
        s.interval = 10.0;
        let run = recorded(&s, &net, 0);
        let p = problem(&s, &net, &run);
        assert!(matches!(brute_force(&p, 12), Err(OptimizerError::TooManyLinks { n: 21, cap: 12 })));
        assert!(matches!(brute_force(&p, 64), Err(OptimizerError::TooManyLinks { n: 21, cap: 20 })));
    }

    #[test]
    fn oracle_beats_greedy_and_enumeration_order_is_irrelevant() {
        let mut s = Scenario::desk_grid();
        s.s_des = 0.6;
        let net = s.build_net().unwrap();
        for run_id in 0..3 {
            let run = recorded(&s, &net, run_id);
            let p = problem(&s, &net, &run);
            let brute = brute_force(&p, 12).unwrap();
            let greedy = greedy(&p, &net).unwrap();
            if let (Outcome::Feasible(b), Outcome::Feasible(g)) = (&brute, &greedy) {
                assert!(g.objective >= b.objective);
                assert!(p.a_zoi().is_subset_of(&g.az));
            }
            if let Outcome::Feasible(b) = &brute {
                // Reverse-order scan of every superset agrees with the batch search.
                let base = p.a_zoi();
                let free: Vec<LinkId> = (0..12).filter(|&l| !base.is_enabled(l)).collect();
                let mut all = Vec::new();
                for m in (0..1u32 << free.len()).rev() {
                    let mut az = base.clone();
                    for (i, &l) in free.iter().enumerate() {
                        az.set(l, (m >> i) & 1 == 1);
                    }
                    all.push(az);
                }
                let best = p
                    .evaluate_many(&all)
                    .unwrap()
                    .into_iter()
                    .filter(|e| e.feasible)
                    .min_by(compare)
                    .unwrap();
                assert_eq!(&best, b);
                let report = p.report(b).unwrap();
                assert!(report.constraint_met);
                assert!((report.total - b.objective).abs() < 1e-12);
            }
        }
    }
}

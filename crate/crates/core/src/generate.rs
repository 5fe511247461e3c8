//! Dataset generation over scenario runs and intervals, and re-simulation of
//! recorded intervals for evaluating predicted configurations.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, CostWeights};
use crate::dataset::{DatasetMeta, TripleOrigin};
use crate::fc_engine::batch::carrier_sums;
use crate::fc_engine::{record_mobility, select_seeders, AzConfig, EngineError, MobilityRun};
use crate::features::{aggregate_mobility, make_triple, DatasetTriple, FeatureError};
use crate::optimizer::{brute_force, greedy, OptimizerError, Problem, Trace};
use crate::roadnet::{LinkId, RoadNet};
use crate::scenario::{derive_seed, Scenario, ScenarioError, Stream};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid generation settings: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// How the label of each triple is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelPolicy {
    /// Every sampled strategy becomes a triple labeled with its own configuration.
    Sweep,
    /// One triple per interval, labeled with the exhaustive optimum.
    Brute,
    /// One triple per interval, labeled with the greedy solution.
    Greedy,
}

impl fmt::Display for LabelPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelPolicy::Sweep => "sweep",
            LabelPolicy::Brute => "brute",
            LabelPolicy::Greedy => "greedy",
        })
    }
}

impl FromStr for LabelPolicy {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sweep" => Ok(LabelPolicy::Sweep),
            "brute" => Ok(LabelPolicy::Brute),
            "greedy" => Ok(LabelPolicy::Greedy),
            other => Err(GenerateError::Invalid(format!("unknown label policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub policy: LabelPolicy,
    pub first_run: u64,
    pub runs: u64,
    /// Number of sampled strategies (sweep only).
    pub strategies: usize,
    /// Range of the fraction of links enabled by a sampled strategy.
    pub enabled_range: [f64; 2],
    /// Seeding fractions are spread evenly over this range across strategies.
    pub seeding_range: [f64; 2],
    pub max_n: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            policy: LabelPolicy::Sweep,
            first_run: 0,
            runs: 1,
            strategies: 1,
            enabled_range: [0.0, 1.0],
            seeding_range: [0.05, 1.0],
            max_n: 20,
        }
    }
}

/// A sampled communication strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub az: AzConfig,
    pub seeding_fraction: f64,
}

/// Supersets of the ZOI with an enabled share drawn from `enabled_range`,
/// and seeding fractions evenly spaced over `seeding_range`.
pub fn sample_strategies(
    n_links: usize,
    zoi: &[LinkId],
    count: usize,
    enabled_range: [f64; 2],
    seeding_range: [f64; 2],
    rng_seed: u64,
) -> Vec<Strategy> {
    let base = AzConfig::from_links(n_links, zoi.iter().copied());
    let free: Vec<LinkId> = (0..n_links).filter(|&l| !base.is_enabled(l)).collect();
    (0..count)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, Stream::Strategies, s as u64));
            let share = if enabled_range[0] < enabled_range[1] {
                rng.gen_range(enabled_range[0]..=enabled_range[1])
            } else {
                enabled_range[0]
            };
            let extra = ((share * n_links as f64).round() as usize).saturating_sub(base.count()).min(free.len());
            let mut az = base.clone();
            for i in sample(&mut rng, free.len(), extra) {
                az.set(free[i], true);
            }
            let t = if count > 1 { s as f64 / (count - 1) as f64 } else { 1.0 };
            Strategy { az, seeding_fraction: seeding_range[0] + t * (seeding_range[1] - seeding_range[0]) }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub triples: Vec<DatasetTriple>,
    pub meta: DatasetMeta,
}

/// Builds a dataset over runs `first_run..first_run + runs` and every
/// interval of each run. Triples are ordered by run, interval, strategy.
pub fn generate(scenario: &Scenario, net: &RoadNet, config: &GenerateConfig) -> Result<Generated, GenerateError> {
    let [lo, hi] = config.seeding_range;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(GenerateError::Invalid(format!("seeding range [{lo}, {hi}] must lie in (0, 1]")));
    }
    let [elo, ehi] = config.enabled_range;
    if !(0.0..=1.0).contains(&elo) || !(elo..=1.0).contains(&ehi) {
        return Err(GenerateError::Invalid(format!("enabled range [{elo}, {ehi}] must lie in [0, 1]")));
    }
    if config.policy == LabelPolicy::Sweep && config.strategies == 0 {
        return Err(GenerateError::Invalid("at least one strategy is required".into()));
    }
    let n = net.len();
    let weights = CostWeights::new(scenario.k, scenario.s_des)?;
    let strategies = match config.policy {
        LabelPolicy::Sweep => sample_strategies(
            n,
            &scenario.zoi,
            config.strategies,
            config.enabled_range,
            config.seeding_range,
            scenario.rng_seed,
        ),
        _ => Vec::new(),
    };
    let configs: Vec<AzConfig> = strategies.iter().map(|s| s.az.clone()).collect();

    let mut triples = Vec::new();
    let mut origins = Vec::new();
    for run in config.first_run..config.first_run + config.runs {
        let schedule = scenario.schedule(net, run)?;
        let mobility = record_mobility(net, &schedule, scenario)?;
        for interval in 0..mobility.intervals() {
            let frames = mobility.interval(interval)?;
            let seeder_seed = scenario.seeder_seed(run, interval);
            match config.policy {
                LabelPolicy::Sweep => {
                    let aggregate = aggregate_mobility(&[frames], n, scenario.tx)?;
                    let seeders: Vec<Vec<LinkId>> = strategies
                        .iter()
                        .enumerate()
                        .map(|(s, st)| {
                            select_seeders(&st.az, st.seeding_fraction, derive_seed(seeder_seed, Stream::Strategies, s as u64))
                        })
                        .collect();
                    let sums = carrier_sums(frames, n, &configs, &seeders);
                    for (s, (st, sum)) in strategies.iter().zip(sums).enumerate() {
                        let p_com = aggregate.content_rows(&sum);
                        triples.push(make_triple(aggregate.rows.clone(), p_com, st.az.clone())?);
                        origins.push(TripleOrigin {
                            run,
                            interval,
                            strategy: Some(s),
                            seeding_fraction: st.seeding_fraction,
                        });
                    }
                }
                LabelPolicy::Brute | LabelPolicy::Greedy => {
                    let trace = Trace { frames, seeder_seed };
                    let problem =
                        Problem::new(net, &scenario.zoi, weights, scenario.seeding_fraction, scenario.tx, vec![trace])?;
                    let outcome = if config.policy == LabelPolicy::Brute {
                        brute_force(&problem, config.max_n)?
                    } else {
                        greedy(&problem, net)?
                    };
                    let e = outcome.evaluation();
                    triples.push(make_triple(problem.p_mob().to_vec(), e.p_com.clone(), e.az.clone())?);
                    origins.push(TripleOrigin {
                        run,
                        interval,
                        strategy: None,
                        seeding_fraction: scenario.seeding_fraction,
                    });
                }
            }
        }
    }
    let mut zoi = scenario.zoi.clone();
    zoi.sort_unstable();
    let meta = DatasetMeta {
        n_links: n,
        interval: scenario.interval,
        scenario_hash: scenario.hash(),
        s_des: scenario.s_des,
        zoi,
        label_policy: config.policy.to_string(),
        n_triples: triples.len(),
        origins,
    };
    Ok(Generated { triples, meta })
}

/// Re-simulates intervals of a scenario, caching the mobility of the most
/// recent run so that consecutive requests for one run record it once.
pub struct Replayer<'a> {
    scenario: &'a Scenario,
    net: &'a RoadNet,
    weights: CostWeights,
    cached: Option<(u64, MobilityRun)>,
}

impl<'a> Replayer<'a> {
    pub fn new(scenario: &'a Scenario, net: &'a RoadNet) -> Result<Self, GenerateError> {
        Ok(Replayer { scenario, net, weights: CostWeights::new(scenario.k, scenario.s_des)?, cached: None })
    }

    /// The optimization problem of one interval, seeded as during generation.
    pub fn problem(&mut self, run: u64, interval: usize) -> Result<Problem<'_>, GenerateError> {
        if self.cached.as_ref().map_or(true, |(r, _)| *r != run) {
            let schedule = self.scenario.schedule(self.net, run)?;
            self.cached = Some((run, record_mobility(self.net, &schedule, self.scenario)?));
        }
        let mobility = &self.cached.as_ref().expect("cached run").1;
        let trace = Trace { frames: mobility.interval(interval)?, seeder_seed: self.scenario.seeder_seed(run, interval) };
        Ok(Problem::new(
            self.net,
            &self.scenario.zoi,
            self.weights,
            self.scenario.seeding_fraction,
            self.scenario.tx,
            vec![trace],
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (Scenario, RoadNet) {
        let mut s = Scenario::desk_grid();
        s.interval = 100.0;
        s.duration = 350.0;
        let net = s.build_net().unwrap();
        (s, net)
    }

    #[test]
    fn strategies_are_zoi_supersets_with_spread_seeding() {
        let st = sample_strategies(12, &[4], 5, [0.25, 1.0], [0.05, 1.0], 7);
        assert_eq!(st.len(), 5);
        for s in &st {
            assert!(s.az.is_enabled(4));
            assert!(s.az.count() >= 3);
        }
        let fractions: Vec<f64> = st.iter().map(|s| s.seeding_fraction).collect();
        assert!((fractions[0] - 0.05).abs() < 1e-12 && (fractions[4] - 1.0).abs() < 1e-12);
        assert!(fractions.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(st, sample_strategies(12, &[4], 5, [0.25, 1.0], [0.05, 1.0], 7));
        let single = sample_strategies(12, &[4], 1, [1.0, 1.0], [0.05, 1.0], 0);
        assert!(single[0].az.is_all_on() && single[0].seeding_fraction == 1.0);
    }

    #[test]
    fn one_strategy_gives_one_triple_per_interval() {
        let (s, net) = small();
        let g = generate(&s, &net, &GenerateConfig::default()).unwrap();
        assert_eq!(g.triples.len(), s.intervals());
        assert_eq!(g.meta.n_triples, 2);
        assert_eq!(g.meta.scenario_hash, s.hash());
        assert_eq!(g.meta.s_des, s.s_des);
        let cfg = GenerateConfig { runs: 2, strategies: 3, ..GenerateConfig::default() };
        let g = generate(&s, &net, &cfg).unwrap();
        assert_eq!(g.triples.len(), 2 * 2 * 3);
        let order: Vec<(u64, usize, Option<usize>)> = g.meta.origins.iter().map(|o| (o.run, o.interval, o.strategy)).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
    }

    #[test]
    fn p_mob_is_shared_across_strategies() {
        let (s, net) = small();
        let cfg = GenerateConfig { strategies: 4, enabled_range: [0.1, 1.0], ..GenerateConfig::default() };
        let g = generate(&s, &net, &cfg).unwrap();
        for chunk in g.triples.chunks(4) {
            assert!(chunk.iter().all(|t| t.p_mob == chunk[0].p_mob));
        }
    }

    #[test]
    fn optimizer_labels_match_replayed_problems() {
        let (s, net) = small();
        let cfg = GenerateConfig { policy: LabelPolicy::Brute, runs: 1, ..GenerateConfig::default() };
        let g = generate(&s, &net, &cfg).unwrap();
        let mut replayer = Replayer::new(&s, &net).unwrap();
        for (t, o) in g.triples.iter().zip(&g.meta.origins) {
            let p = replayer.problem(o.run, o.interval).unwrap();
            let e = p.evaluate(&t.label).unwrap();
            assert_eq!(e.p_com, t.p_com);
            assert_eq!(p.p_mob(), &t.p_mob[..]);
            assert!(t.label.is_all_on() || e.feasible);
        }
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let (s, net) = small();
        for cfg in [
            GenerateConfig { seeding_range: [0.0, 1.0], ..GenerateConfig::default() },
            GenerateConfig { seeding_range: [0.5, 1.5], ..GenerateConfig::default() },
            GenerateConfig { enabled_range: [0.8, 0.2], ..GenerateConfig::default() },
            GenerateConfig { strategies: 0, ..GenerateConfig::default() },
        ] {
            assert!(matches!(generate(&s, &net, &cfg), Err(GenerateError::Invalid(_))));
        }
        assert!("forest".parse::<LabelPolicy>().is_err());
        assert_eq!("greedy".parse::<LabelPolicy>().unwrap(), LabelPolicy::Greedy);
    }
}

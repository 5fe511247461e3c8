use fcaz_core::cost::{cost_app, cost_loss};
use fcaz_core::fc_engine::{record_mobility, replay, AzConfig, MobilityRun, Seeder};
use fcaz_core::features::{aggregate, LinkFeatures};
use fcaz_core::scenario::Scenario;
use proptest::prelude::*;
use std::sync::OnceLock;

fn fixture() -> &'static (Scenario, MobilityRun) {
    static CELL: OnceLock<(Scenario, MobilityRun)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut s = Scenario::desk_grid();
        s.arrival_rate = 0.4;
        s.cruise_speed_range = Some([5.56, 16.67]);
        let net = s.build_net().unwrap();
        let run = record_mobility(&net, &s.schedule(&net, 3).unwrap(), &s).unwrap();
        (s, run)
    })
}

fn simulate(az: &AzConfig) -> (Vec<Vec<bool>>, Vec<LinkFeatures>) {
    let (s, run) = fixture();
    let frames = run.interval(0).unwrap();
    let trace = replay(frames, az, Seeder::new(az, 1.0, 11));
    let (p_mob, p_com) = aggregate(frames, &trace.content, az.len(), s.tx).unwrap();
    (trace.content, LinkFeatures::combine(&p_mob, &p_com).unwrap())
}

fn pair() -> impl Strategy<Value = (AzConfig, AzConfig)> {
    (any::<u16>(), any::<u16>()).prop_map(|(a, extra)| {
        let small = AzConfig::from_bits((0..12).map(|i| a >> i & 1 == 1).collect());
        let large = AzConfig::from_bits((0..12).map(|i| (a | extra) >> i & 1 == 1).collect());
        (small, large)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inclusion_preserves_carriers_and_costs((small, large) in pair()) {
        prop_assert!(small.is_subset_of(&large));
        let (content_a, features_a) = simulate(&small);
        let (content_b, features_b) = simulate(&large);
        for (tick, (a, b)) in content_a.iter().zip(&content_b).enumerate() {
            for (i, (&ca, &cb)) in a.iter().zip(b).enumerate() {
                prop_assert!(!ca || cb, "tick {tick} vehicle slot {i}");
            }
        }
        prop_assert!(cost_loss(&small, &features_a).unwrap() <= cost_loss(&large, &features_b).unwrap());
        prop_assert!(cost_app(&small, &features_a).unwrap() <= cost_app(&large, &features_b).unwrap());
    }
}

#[test]
fn fixture_has_contacts() {
    let (_, run) = fixture();
    let frames = run.interval(0).unwrap();
    assert!(frames.iter().any(|f| !f.pairs.is_empty()));
    let (content, _) = simulate(&AzConfig::all_on(12));
    assert!(content.iter().flatten().any(|&c| c));
}

use fcaz_core::fc_engine::AzConfig;
use fcaz_ml::metrics::{fscore, metrics, rejection, resources_saved, Counts};

fn az(s: &str) -> AzConfig {
    s.parse().unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn hand_counts_reproduce_the_formulas() {
    let c = Counts { tp: 72, fp: 18, fn_: 8, tn: 2 };
    assert!(close(c.precision(), 0.8));
    assert!(close(c.recall(), 0.9));
    assert!(close(c.fscore(), 2.0 * 0.8 * 0.9 / 1.7));
    assert!((c.fscore() - 0.8470588).abs() < 1e-7);
    assert!(close(fscore(0.8, 0.9), 1.44 / 1.7));

    let c = Counts { tp: 3, fp: 1, fn_: 5, tn: 0 };
    assert!(close(c.precision(), 0.75));
    assert!(close(c.recall(), 0.375));
    assert!(close(c.fscore(), 0.5));
}

#[test]
fn zero_denominators_give_zero() {
    let none = Counts::default();
    assert_eq!((none.precision(), none.recall(), none.fscore()), (0.0, 0.0, 0.0));
    let only_negatives = Counts { tn: 9, ..Counts::default() };
    assert_eq!(only_negatives.fscore(), 0.0);
    let no_predictions = Counts { fn_: 4, ..Counts::default() };
    assert_eq!((no_predictions.precision(), no_predictions.recall()), (0.0, 0.0));
    let no_truth = Counts { fp: 4, ..Counts::default() };
    assert_eq!((no_truth.precision(), no_truth.recall()), (0.0, 0.0));
    assert_eq!(fscore(0.0, 0.0), 0.0);
}

#[test]
fn micro_and_macro_averages() {
    let predicted = [az("1100"), az("0000"), az("1010")];
    let truth = [az("1000"), az("0000"), az("1011")];
    let s = metrics(&predicted, &truth).unwrap();
    assert_eq!((s.counts.tp, s.counts.fp, s.counts.fn_, s.counts.tn), (3, 1, 1, 7));
    assert!(close(s.precision, 0.75) && close(s.recall, 0.75) && close(s.fscore, 0.75));
    // Per sample: 2/3, 0 (0/0), 0.8.
    assert!(close(s.macro_fscore, (2.0 / 3.0 + 0.0 + 0.8) / 3.0));
    assert!(metrics(&predicted, &truth[..2]).is_err());
    assert!(metrics(&[az("1")], &[az("10")]).is_err());
}

#[test]
fn rejection_interval_by_hand() {
    let r = rejection(3, 100).unwrap();
    assert!(close(r.probability, 0.03));
    assert!((r.half_width - 0.0397).abs() < 5e-5);
    assert!(close(r.half_width, 2.326 * (0.03f64 * 0.97 / 100.0).sqrt()));
    assert_eq!(rejection(0, 10).unwrap().half_width, 0.0);
    assert!(rejection(1, 0).is_err() && rejection(5, 4).is_err());
}

#[test]
fn savings_against_the_reference() {
    assert!(close(resources_saved(&[1.0, 2.0], &[2.0, 2.0]).unwrap(), 0.25));
    assert_eq!(resources_saved(&[2.0], &[2.0]).unwrap(), 0.0);
    assert!(resources_saved(&[1.0], &[0.0]).is_err());
    assert!(resources_saved(&[], &[]).is_err());
}

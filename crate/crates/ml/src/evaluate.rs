//! Re-simulation of predicted anchor zones: rejection probability and
//! resource savings.
//!
//! A sample is *servable* when the all-ON configuration meets the target on
//! its interval. Unservable samples cannot be satisfied by any answer; they
//! are counted but excluded from rejection and savings figures.

use fcaz_core::dataset::TripleOrigin;
use fcaz_core::fc_engine::AzConfig;
use fcaz_core::features::{ContentRow, DatasetTriple};
use fcaz_core::generate::Replayer;
use fcaz_core::roadnet::RoadNet;
use fcaz_core::scenario::Scenario;
use serde::Serialize;

use crate::example::preprocess;
use crate::io::PredictionRow;
use crate::metrics::{metrics, rejection, resources_saved, Rejection, Scores};
use crate::model::{decide, TrainedModel};
use crate::MlError;

/// A final answer to evaluate, never all-OFF.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub raw: AzConfig,
    pub az: AzConfig,
    pub conservative: bool,
}

/// Applies the conservative rule to externally produced predictions.
pub fn answers_from_rows(rows: &[PredictionRow]) -> Vec<Answer> {
    rows.iter()
        .map(|r| {
            let p = decide(r.bits.bits().iter().map(|&b| b as u8 as f64).collect());
            Answer { raw: r.bits.clone(), az: p.az, conservative: p.conservative }
        })
        .collect()
}

pub fn answers_from_model(model: &TrainedModel, triples: &[DatasetTriple]) -> Result<Vec<Answer>, MlError> {
    triples
        .iter()
        .map(|t| model.predict(&t.p_mob).map(|p| Answer { raw: p.raw, az: p.az, conservative: p.conservative }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub az: AzConfig,
    pub conservative: bool,
    pub servable: bool,
    pub rejected: bool,
    /// Objective of the answer, or of all-ON when rejected.
    pub charged: f64,
    pub reference: f64,
    /// Content features of the answer under re-simulation.
    pub p_com: Vec<ContentRow>,
}

/// Re-simulates every answer on the interval its triple came from.
pub fn resimulate(
    answers: &[Answer],
    origins: &[TripleOrigin],
    scenario: &Scenario,
    net: &RoadNet,
) -> Result<Vec<SampleOutcome>, MlError> {
    if answers.len() != origins.len() {
        return Err(MlError::Dimension(format!("{} answers for {} origins", answers.len(), origins.len())));
    }
    if answers.is_empty() {
        return Err(MlError::TooFewExamples { need: 1, got: 0 });
    }
    let mut replayer = Replayer::new(scenario, net)?;
    answers
        .iter()
        .zip(origins)
        .map(|(a, o)| {
            if o.strategy.is_some() || o.seeding_fraction != scenario.seeding_fraction {
                return Err(MlError::Invalid(
                    "triples must come from optimizer-labeled intervals at the scenario seeding fraction".into(),
                ));
            }
            if a.az.is_all_off() {
                return Err(MlError::Invalid("all-OFF answer reached evaluation".into()));
            }
            let problem = replayer.problem(o.run, o.interval)?;
            let reference = problem.reference();
            let e = problem.evaluate(&a.az)?;
            let rejected = !e.feasible;
            Ok(SampleOutcome {
                az: a.az.clone(),
                conservative: a.conservative,
                servable: reference.feasible,
                rejected,
                charged: if rejected { reference.objective } else { e.objective },
                reference: reference.objective,
                p_com: e.p_com,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    pub servable: usize,
    pub conservative: usize,
    pub scores: Option<Scores>,
    /// Over servable samples.
    pub rejection: Option<Rejection>,
    /// Over servable samples, rejected ones charged the all-ON objective.
    pub resources_saved: Option<f64>,
}

pub fn summarize(outcomes: &[SampleOutcome], scores: Option<Scores>) -> Result<EvalReport, MlError> {
    let servable: Vec<&SampleOutcome> = outcomes.iter().filter(|o| o.servable).collect();
    let (rejection, saved) = if servable.is_empty() {
        (None, None)
    } else {
        let charged: Vec<f64> = servable.iter().map(|o| o.charged).collect();
        let reference: Vec<f64> = servable.iter().map(|o| o.reference).collect();
        (
            Some(rejection(servable.iter().filter(|o| o.rejected).count(), servable.len())?),
            Some(resources_saved(&charged, &reference)?),
        )
    };
    Ok(EvalReport {
        samples: outcomes.len(),
        servable: servable.len(),
        conservative: outcomes.iter().filter(|o| o.conservative).count(),
        scores,
        rejection,
        resources_saved: saved,
    })
}

/// Predicts, scores against preprocessed labels, and re-simulates every test triple.
pub fn evaluate_rejection(
    model: &TrainedModel,
    triples: &[DatasetTriple],
    origins: &[TripleOrigin],
    scenario: &Scenario,
    net: &RoadNet,
) -> Result<(EvalReport, Vec<SampleOutcome>), MlError> {
    let answers = answers_from_model(model, triples)?;
    evaluate_answers(&answers, triples, origins, scenario, net)
}

pub fn evaluate_answers(
    answers: &[Answer],
    triples: &[DatasetTriple],
    origins: &[TripleOrigin],
    scenario: &Scenario,
    net: &RoadNet,
) -> Result<(EvalReport, Vec<SampleOutcome>), MlError> {
    if answers.len() != triples.len() {
        return Err(MlError::Dimension(format!("{} answers for {} triples", answers.len(), triples.len())));
    }
    let truth: Vec<AzConfig> = preprocess(triples, &scenario.zoi, scenario.s_des)?.into_iter().map(|e| e.y).collect();
    let raw: Vec<AzConfig> = answers.iter().map(|a| a.raw.clone()).collect();
    let scores = metrics(&raw, &truth)?;
    let outcomes = resimulate(answers, origins, scenario, net)?;
    Ok((summarize(&outcomes, Some(scores))?, outcomes))
}

/// New triples for the online growth log: the input mobility with the
/// answer and its re-simulated content features.
pub fn growth_triples(triples: &[DatasetTriple], outcomes: &[SampleOutcome]) -> Vec<DatasetTriple> {
    triples
        .iter()
        .zip(outcomes)
        .map(|(t, o)| DatasetTriple { p_mob: t.p_mob.clone(), p_com: o.p_com.clone(), label: o.az.clone() })
        .collect()
}

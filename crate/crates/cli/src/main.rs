//! `fcaz`: Floating Content anchor-zone toolkit.
//!
//! Reports go to stdout as JSON. Exit codes: 0 success, 2 configuration
//! error, 3 data error, 4 no feasible anchor zone.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fcaz_core::cost::CostWeights;
use fcaz_core::dataset::{export_dataset, import_dataset, import_meta, DatasetError, DatasetMeta};
use fcaz_core::fc_engine::{record_mobility, replay, AzConfig, MobilityRun, Seeder, SimTrace};
use fcaz_core::generate::{generate, GenerateConfig, GenerateError, LabelPolicy};
use fcaz_core::optimizer::{brute_force, greedy, OptimizerError, Outcome, Problem, Trace};
use fcaz_core::roadnet::RoadNet;
use fcaz_core::scenario::Scenario;
use fcaz_ml::cv::{cross_validate, learning_curve};
use fcaz_ml::evaluate::{answers_from_model, answers_from_rows, evaluate_answers, growth_triples};
use fcaz_ml::example::preprocess;
use fcaz_ml::io::{export_curve, export_predictions, import_mobility, import_predictions, PredictionRow};
use fcaz_ml::model::{train, ModelKind, ModelSpec, TrainedModel};
use fcaz_ml::MlError;
use serde_json::json;

const CONFIG: u8 = 2;
const DATA: u8 = 3;
const INFEASIBLE: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn config(e: impl Display) -> Failure {
    Failure { code: CONFIG, message: e.to_string() }
}

fn data(e: impl Display) -> Failure {
    Failure { code: DATA, message: e.to_string() }
}

fn optimizer_failure(e: OptimizerError) -> Failure {
    match e {
        OptimizerError::TooManyLinks { .. } | OptimizerError::EmptyZoi | OptimizerError::UnknownZoiLink(_) => config(e),
        other => data(other),
    }
}

fn generate_failure(e: GenerateError) -> Failure {
    match e {
        GenerateError::Optimizer(o) => optimizer_failure(o),
        GenerateError::Invalid(_) | GenerateError::Scenario(_) | GenerateError::Cost(_) => config(e),
        other => data(other),
    }
}

fn ml_failure(e: MlError) -> Failure {
    match e {
        MlError::Invalid(_) => config(e),
        MlError::Generate(g) => generate_failure(g),
        MlError::Optimizer(o) => optimizer_failure(o),
        other => data(other),
    }
}

fn dataset_failure(e: DatasetError) -> Failure {
    data(e)
}

#[derive(Parser)]
#[command(name = "fcaz", version, about = "Floating Content anchor-zone simulation, optimization and learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the weight k of the application cost.
    #[arg(long = "k-weight")]
    k_weight: Option<f64>,
    /// Overrides the availability target.
    #[arg(long = "s-des")]
    s_des: Option<f64>,
    /// Overrides the interval length in seconds.
    #[arg(long)]
    interval: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<(Scenario, RoadNet), Failure> {
        let mut s = Scenario::load(&self.scenario).map_err(config)?;
        if let Some(seed) = self.seed {
            s.rng_seed = seed;
        }
        if let Some(k) = self.k_weight {
            s.k = k;
        }
        if let Some(t) = self.s_des {
            s.s_des = t;
        }
        if let Some(i) = self.interval {
            s.interval = i;
        }
        s.validate().map_err(config)?;
        let net = s.build_net().map_err(config)?;
        Ok((s, net))
    }
}

#[derive(Args, Clone, Copy)]
struct IntervalArgs {
    /// First run (trip schedule) index.
    #[arg(long, default_value_t = 0)]
    run: u64,
    /// Interval index within each run.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Number of runs pooled into the features.
    #[arg(long, default_value_t = 1)]
    replications: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Brute,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Label {
    Sweep,
    Brute,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Knn,
    Tree,
    Forest,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Knn => ModelKind::Knn,
            Kind::Tree => ModelKind::Tree,
            Kind::Forest => ModelKind::Forest,
        }
    }
}

#[derive(Args, Clone, Copy)]
struct ModelArgs {
    /// Neighbors for knn.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Trees for forest.
    #[arg(long = "n-trees", default_value_t = 100)]
    n_trees: usize,
    /// Model and shuffle seed.
    #[arg(long = "model-seed", default_value_t = 0)]
    model_seed: u64,
}

impl ModelArgs {
    fn spec(&self, kind: Kind) -> ModelSpec {
        let mut spec = ModelSpec::of(kind.into()).with_k(self.k).with_seed(self.model_seed);
        spec.forest.n_trees = self.n_trees;
        spec
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one anchor-zone configuration and print its cost report.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        at: IntervalArgs,
        /// Configuration as a 0/1 string, one character per link.
        #[arg(long)]
        az: String,
        /// Writes a per-vehicle trace CSV of the first run.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled dataset and its metadata sidecar.
    GenDataset {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "sweep")]
        label: Label,
        #[arg(long = "first-run", default_value_t = 0)]
        first_run: u64,
        #[arg(long, default_value_t = 1)]
        runs: u64,
        /// Sweep strategies per interval.
        #[arg(long, default_value_t = 1)]
        strategies: usize,
        /// Share of links enabled by sweep strategies, as `lo,hi`.
        #[arg(long = "enabled-range", value_delimiter = ',', num_args = 2, default_values_t = [0.0, 1.0])]
        enabled_range: Vec<f64>,
        /// Seeding fractions of sweep strategies, as `lo,hi`.
        #[arg(long = "seeding-range", value_delimiter = ',', num_args = 2, default_values_t = [0.05, 1.0])]
        seeding_range: Vec<f64>,
        #[arg(long = "max-n", default_value_t = 20)]
        max_n: usize,
    },
    /// Search the cheapest anchor zone meeting the availability target.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        at: IntervalArgs,
        #[arg(long, value_enum, default_value = "brute")]
        method: Method,
        #[arg(long = "max-n", default_value_t = 20)]
        max_n: usize,
    },
    /// Train a classifier on a dataset, optionally cross-validating it.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: Kind,
        #[command(flatten)]
        params: ModelArgs,
        /// Runs k-fold cross-validation and reports it.
        #[arg(long)]
        folds: Option<usize>,
        /// Model file to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Availability target; defaults to the dataset metadata.
        #[arg(long = "s-des")]
        s_des: Option<f64>,
    },
    /// Predict anchor zones for mobility inputs.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Mobility CSV or dataset CSV.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulate predictions on test intervals and report accuracy,
    /// rejection probability and savings.
    Evaluate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Test dataset generated from the same scenario.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        model: Option<PathBuf>,
        /// Prediction CSV from any predictor.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Also writes the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Writes F-score against training size to this CSV.
        #[arg(long, requires = "train")]
        curve: Option<PathBuf>,
        /// Training dataset for the curve.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long = "curve-model", value_enum, default_value = "knn")]
        curve_model: Kind,
        #[arg(long = "curve-points", default_value_t = 5)]
        curve_points: usize,
        #[command(flatten)]
        params: ModelArgs,
        /// Appends re-simulated answers to this growth dataset.
        #[arg(long)]
        online: Option<PathBuf>,
    },
}

fn print(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn record_runs(scenario: &Scenario, net: &RoadNet, at: IntervalArgs) -> Result<Vec<MobilityRun>, Failure> {
    if at.replications == 0 {
        return Err(config("--replications must be at least 1"));
    }
    if at.index >= scenario.intervals() {
        return Err(config(format!("--index {} but the scenario has {} intervals", at.index, scenario.intervals())));
    }
    (at.run..at.run + at.replications)
        .map(|run| {
            let schedule = scenario.schedule(net, run).map_err(config)?;
            record_mobility(net, &schedule, scenario).map_err(data)
        })
        .collect()
}

fn problem<'a>(
    scenario: &'a Scenario,
    net: &'a RoadNet,
    runs: &'a [MobilityRun],
    at: IntervalArgs,
) -> Result<Problem<'a>, Failure> {
    let weights = CostWeights::new(scenario.k, scenario.s_des).map_err(config)?;
    let traces = runs
        .iter()
        .zip(at.run..)
        .map(|(m, run)| {
            Ok(Trace { frames: m.interval(at.index).map_err(data)?, seeder_seed: scenario.seeder_seed(run, at.index) })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    Problem::new(net, &scenario.zoi, weights, scenario.seeding_fraction, scenario.tx, traces).map_err(optimizer_failure)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| data(format!("cannot write {}: {e}", path.display())))
}

fn simulate(args: &ScenarioArgs, at: IntervalArgs, az: &str, out: Option<&Path>) -> Result<u8, Failure> {
    let (scenario, net) = args.load()?;
    let az = AzConfig::parse_for(az, net.len()).map_err(config)?;
    let runs = record_runs(&scenario, &net, at)?;
    let problem = problem(&scenario, &net, &runs, at)?;
    let e = problem.evaluate(&az).map_err(optimizer_failure)?;
    let report = problem.report(&e).map_err(optimizer_failure)?;
    if let Some(path) = out {
        let frames = runs[0].interval(at.index).map_err(data)?;
        let seeder = Seeder::new(&az, scenario.seeding_fraction, scenario.seeder_seed(at.run, at.index));
        let trace = SimTrace { frames: frames.to_vec(), content: replay(frames, &az, seeder) };
        trace.write_records(create(path)?).map_err(data)?;
    }
    print(&json!({
        "az": az.to_string(),
        "run": at.run,
        "index": at.index,
        "replications": at.replications,
        "objective": e.objective,
        "report": report,
        "p_mob": problem.p_mob(),
        "p_com": e.p_com,
    }));
    Ok(0)
}

fn optimize(args: &ScenarioArgs, at: IntervalArgs, method: Method, max_n: usize) -> Result<u8, Failure> {
    let (scenario, net) = args.load()?;
    let runs = record_runs(&scenario, &net, at)?;
    let problem = problem(&scenario, &net, &runs, at)?;
    let outcome = match method {
        Method::Brute => brute_force(&problem, max_n),
        Method::Greedy => greedy(&problem, &net),
    }
    .map_err(optimizer_failure)?;
    let e = outcome.evaluation();
    let report = problem.report(e).map_err(optimizer_failure)?;
    let feasible = matches!(outcome, Outcome::Feasible(_));
    print(&json!({
        "method": match method { Method::Brute => "brute", Method::Greedy => "greedy" },
        "feasible": feasible,
        "az": e.az.to_string(),
        "enabled": e.az.count(),
        "objective": e.objective,
        "reference_objective": problem.reference().objective,
        "report": report,
    }));
    Ok(if feasible { 0 } else { INFEASIBLE })
}

fn gen_dataset(args: &ScenarioArgs, out: &Path, cfg: GenerateConfig) -> Result<u8, Failure> {
    let (scenario, net) = args.load()?;
    let g = generate(&scenario, &net, &cfg).map_err(generate_failure)?;
    export_dataset(&g.triples, Some(&g.meta), out).map_err(dataset_failure)?;
    print(&json!({
        "out": out.display().to_string(),
        "triples": g.triples.len(),
        "links": g.meta.n_links,
        "label_policy": g.meta.label_policy,
        "scenario_hash": g.meta.scenario_hash,
    }));
    Ok(0)
}

fn load_dataset(path: &Path) -> Result<(Vec<fcaz_core::features::DatasetTriple>, Option<DatasetMeta>), Failure> {
    let triples = import_dataset(path).map_err(dataset_failure)?;
    let meta = import_meta(path).map_err(dataset_failure)?;
    Ok((triples, meta))
}

fn train_cmd(
    data_path: &Path,
    kind: Kind,
    params: ModelArgs,
    folds: Option<usize>,
    out: Option<&Path>,
    s_des: Option<f64>,
) -> Result<u8, Failure> {
    let (triples, meta) = load_dataset(data_path)?;
    let meta = meta.ok_or_else(|| data(format!("{} has no metadata sidecar", data_path.display())))?;
    let s_des = s_des.unwrap_or(meta.s_des);
    let examples = preprocess(&triples, &meta.zoi, s_des).map_err(ml_failure)?;
    let relabeled = examples.iter().zip(&triples).filter(|(e, t)| e.y != t.label).count();
    let spec = params.spec(kind);
    let cv = folds.map(|f| cross_validate(&examples, f, &spec, params.model_seed)).transpose().map_err(ml_failure)?;
    if let Some(path) = out {
        train(&examples, &spec).map_err(ml_failure)?.save(path).map_err(ml_failure)?;
    }
    print(&json!({
        "model": ModelKind::from(kind).to_string(),
        "examples": examples.len(),
        "relabeled_all_off": relabeled,
        "cross_validation": cv,
        "out": out.map(|p| p.display().to_string()),
    }));
    Ok(0)
}

fn predict_cmd(model: &Path, input: &Path, out: &Path) -> Result<u8, Failure> {
    let model = TrainedModel::load(model).map_err(ml_failure)?;
    let inputs = import_mobility(input).map_err(ml_failure)?;
    let predictions =
        inputs.iter().map(|p| model.predict(p)).collect::<Result<Vec<_>, _>>().map_err(ml_failure)?;
    let rows: Vec<PredictionRow> =
        predictions.iter().map(|p| PredictionRow { probabilities: p.probabilities.clone(), bits: p.raw.clone() }).collect();
    export_predictions(&rows, out).map_err(ml_failure)?;
    print(&json!({
        "model": model.kind().to_string(),
        "triples": rows.len(),
        "conservative": predictions.iter().filter(|p| p.conservative).count(),
        "out": out.display().to_string(),
    }));
    Ok(0)
}

struct EvaluateArgs<'a> {
    data: &'a Path,
    model: Option<&'a Path>,
    predictions: Option<&'a Path>,
    out: Option<&'a Path>,
    curve: Option<&'a Path>,
    train: Option<&'a Path>,
    curve_model: Kind,
    curve_points: usize,
    params: ModelArgs,
    online: Option<&'a Path>,
}

fn evaluate_cmd(args: &ScenarioArgs, e: EvaluateArgs) -> Result<u8, Failure> {
    let (scenario, net) = args.load()?;
    let (triples, meta) = load_dataset(e.data)?;
    let meta = meta.ok_or_else(|| data(format!("{} has no metadata sidecar", e.data.display())))?;
    if meta.scenario_hash != scenario.hash() {
        return Err(data("test dataset was generated from a different scenario (hash mismatch)"));
    }
    if meta.origins.len() != triples.len() {
        return Err(data("metadata origins do not match the dataset"));
    }
    let answers = match (e.model, e.predictions) {
        (Some(path), _) => {
            let model = TrainedModel::load(path).map_err(ml_failure)?;
            answers_from_model(&model, &triples).map_err(ml_failure)?
        }
        (None, Some(path)) => {
            let rows = import_predictions(path).map_err(ml_failure)?;
            if rows.len() != triples.len() {
                return Err(data(format!("{} predictions for {} test triples", rows.len(), triples.len())));
            }
            answers_from_rows(&rows)
        }
        (None, None) => return Err(config("either --model or --predictions is required")),
    };
    let (report, outcomes) =
        evaluate_answers(&answers, &triples, &meta.origins, &scenario, &net).map_err(ml_failure)?;

    if let (Some(curve), Some(train_path)) = (e.curve, e.train) {
        let (train_triples, train_meta) = load_dataset(train_path)?;
        let train_meta = train_meta.ok_or_else(|| data(format!("{} has no metadata sidecar", train_path.display())))?;
        let train_set = preprocess(&train_triples, &train_meta.zoi, scenario.s_des).map_err(ml_failure)?;
        let test_set = preprocess(&triples, &scenario.zoi, scenario.s_des).map_err(ml_failure)?;
        if e.curve_points == 0 {
            return Err(config("--curve-points must be at least 1"));
        }
        let spec = e.params.spec(e.curve_model);
        let floor = if matches!(e.curve_model, Kind::Knn) { spec.k } else { 1 };
        let sizes: Vec<usize> = (1..=e.curve_points)
            .map(|i| (train_set.len() * i / e.curve_points).max(floor).min(train_set.len()))
            .collect();
        let points = learning_curve(&train_set, &test_set, &spec, &sizes).map_err(ml_failure)?;
        export_curve(&points, curve).map_err(ml_failure)?;
    }
    if let Some(path) = e.online {
        let grown = growth_triples(&triples, &outcomes);
        let growth_meta = DatasetMeta { label_policy: "online".into(), n_triples: grown.len(), ..meta.clone() };
        export_dataset(&grown, Some(&growth_meta), path).map_err(dataset_failure)?;
    }
    let value = json!({ "report": report, "conservative_all_off_emitted": outcomes.iter().any(|o| o.az.is_all_off()) });
    if let Some(path) = e.out {
        serde_json::to_writer_pretty(create(path)?, &value).map_err(data)?;
    }
    print(&value);
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Simulate { scenario, at, az, out } => simulate(&scenario, at, &az, out.as_deref()),
        Command::Optimize { scenario, at, method, max_n } => optimize(&scenario, at, method, max_n),
        Command::GenDataset {
            scenario,
            out,
            label,
            first_run,
            runs,
            strategies,
            enabled_range,
            seeding_range,
            max_n,
        } => {
            let policy = match label {
                Label::Sweep => LabelPolicy::Sweep,
                Label::Brute => LabelPolicy::Brute,
                Label::Greedy => LabelPolicy::Greedy,
            };
            let cfg = GenerateConfig {
                policy,
                first_run,
                runs,
                strategies,
                enabled_range: [enabled_range[0], enabled_range[1]],
                seeding_range: [seeding_range[0], seeding_range[1]],
                max_n,
            };
            gen_dataset(&scenario, &out, cfg)
        }
        Command::Train { data, model, params, folds, out, s_des } => {
            train_cmd(&data, model, params, folds, out.as_deref(), s_des)
        }
        Command::Predict { model, input, out } => predict_cmd(&model, &input, &out),
        Command::Evaluate {
            scenario,
            data,
            model,
            predictions,
            out,
            curve,
            train,
            curve_model,
            curve_points,
            params,
            online,
        } => evaluate_cmd(
            &scenario,
            EvaluateArgs {
                data: &data,
                model: model.as_deref(),
                predictions: predictions.as_deref(),
                out: out.as_deref(),
                curve: curve.as_deref(),
                train: train.as_deref(),
                curve_model,
                curve_points,
                params,
                online: online.as_deref(),
            },
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

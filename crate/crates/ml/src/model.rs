//! Trained models, prediction with the conservative rule, and model files.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use fcaz_core::fc_engine::AzConfig;
use fcaz_core::features::MobilityRow;
use serde::{Deserialize, Serialize};

use crate::example::{flatten, LabeledExample, Scaler, FEATURES_PER_LINK};
use crate::knn::Knn;
use crate::tree::{Forest, ForestParams, MaxFeatures, TrainingSet, Tree, TreeParams};
use crate::MlError;

pub const FORMAT: &str = "fcaz-model/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Knn,
    Tree,
    Forest,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Knn => "knn",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
        })
    }
}

impl FromStr for ModelKind {
    type Err = MlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knn" => Ok(ModelKind::Knn),
            "tree" => Ok(ModelKind::Tree),
            "forest" => Ok(ModelKind::Forest),
            other => Err(MlError::Invalid(format!("unknown model kind {other:?} (knn, tree, forest)"))),
        }
    }
}

/// Which learner to fit and with which settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub k: usize,
    pub forest: ForestParams,
    pub tree: TreeParams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn knn(k: usize) -> Self {
        Self::of(ModelKind::Knn).with_k(k)
    }

    pub fn of(kind: ModelKind) -> Self {
        ModelSpec { kind, k: 10, forest: ForestParams::default(), tree: TreeParams::default(), seed: 0 }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Learner {
    Knn(Knn),
    Tree(Tree),
    Forest(Forest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub n_links: usize,
    pub scaler: Scaler,
    pub learner: Learner,
}

/// Output of [`TrainedModel::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    /// Bits with probability above one half.
    pub raw: AzConfig,
    /// Final answer; never all-OFF.
    pub az: AzConfig,
    /// Set when a raw all-OFF answer was replaced by the all-ON configuration.
    pub conservative: bool,
}

/// Thresholds probabilities and applies the conservative rule.
pub fn decide(probabilities: Vec<f64>) -> Prediction {
    let raw = AzConfig::from_bits(probabilities.iter().map(|&p| p > 0.5).collect());
    let conservative = raw.is_all_off();
    let az = if conservative { AzConfig::all_on(raw.len()) } else { raw.clone() };
    Prediction { probabilities, raw, az, conservative }
}

fn check(examples: &[LabeledExample]) -> Result<usize, MlError> {
    let first = examples.first().ok_or(MlError::TooFewExamples { need: 1, got: 0 })?;
    let n = first.y.len();
    if n == 0 || first.x.len() != n * FEATURES_PER_LINK {
        return Err(MlError::Dimension(format!("{} features for {n} links", first.x.len())));
    }
    if let Some(i) = examples.iter().position(|e| e.y.len() != n || e.x.len() != first.x.len()) {
        return Err(MlError::Dimension(format!("example {i} has a different shape")));
    }
    Ok(n)
}

pub fn train(examples: &[LabeledExample], spec: &ModelSpec) -> Result<TrainedModel, MlError> {
    let n_links = check(examples)?;
    let scaler = Scaler::fit(examples.iter().map(|e| e.x.as_slice()))?;
    let rows: Vec<Vec<f64>> = examples.iter().map(|e| scaler.transform(&e.x)).collect();
    let labels: Vec<Vec<bool>> = examples.iter().map(|e| e.y.bits().to_vec()).collect();
    let learner = match spec.kind {
        ModelKind::Knn => Learner::Knn(Knn::fit(spec.k, &rows, &labels)?),
        ModelKind::Tree => Learner::Tree(Tree::fit(&TrainingSet::new(&rows, &labels)?, spec.tree, spec.seed)),
        ModelKind::Forest => Learner::Forest(Forest::fit(&TrainingSet::new(&rows, &labels)?, spec.forest, spec.seed)?),
    };
    Ok(TrainedModel { format: FORMAT.into(), n_links, scaler, learner })
}

pub fn train_knn(examples: &[LabeledExample], n_neighbors: usize) -> Result<TrainedModel, MlError> {
    train(examples, &ModelSpec::knn(n_neighbors))
}

pub fn train_tree(examples: &[LabeledExample], rng_seed: u64) -> Result<TrainedModel, MlError> {
    train(examples, &ModelSpec::of(ModelKind::Tree).with_seed(rng_seed))
}

pub fn train_forest(examples: &[LabeledExample], n_trees: usize, rng_seed: u64) -> Result<TrainedModel, MlError> {
    let mut spec = ModelSpec::of(ModelKind::Forest).with_seed(rng_seed);
    spec.forest.n_trees = n_trees;
    train(examples, &spec)
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.learner {
            Learner::Knn(_) => ModelKind::Knn,
            Learner::Tree(_) => ModelKind::Tree,
            Learner::Forest(_) => ModelKind::Forest,
        }
    }

    /// Per-link probability of belonging to the anchor zone, from raw features.
    pub fn predict_proba_features(&self, x: &[f64]) -> Result<Vec<f64>, MlError> {
        if x.len() != self.scaler.dim() {
            return Err(MlError::Dimension(format!("{} features, model expects {}", x.len(), self.scaler.dim())));
        }
        let z = self.scaler.transform(x);
        Ok(match &self.learner {
            Learner::Knn(m) => m.predict_proba(&z),
            Learner::Tree(m) => m.predict_proba(&z),
            Learner::Forest(m) => m.predict_proba(&z),
        })
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<Prediction, MlError> {
        self.predict_proba_features(x).map(decide)
    }

    pub fn predict(&self, p_mob: &[MobilityRow]) -> Result<Prediction, MlError> {
        if p_mob.len() != self.n_links {
            return Err(MlError::Dimension(format!("{} links, model expects {}", p_mob.len(), self.n_links)));
        }
        self.predict_features(&flatten(p_mob))
    }

    pub fn save(&self, path: &Path) -> Result<(), MlError> {
        let file = std::fs::File::create(path).map_err(|e| MlError::Io { path: path.into(), source: e })?;
        serde_json::to_writer(std::io::BufWriter::new(file), self).map_err(|e| MlError::ModelFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, MlError> {
        let file = std::fs::File::open(path).map_err(|e| MlError::Io { path: path.into(), source: e })?;
        let model: TrainedModel =
            serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| MlError::ModelFile(e.to_string()))?;
        if model.format != FORMAT {
            return Err(MlError::ModelFile(format!("unsupported format {:?}", model.format)));
        }
        if model.scaler.dim() != model.n_links * FEATURES_PER_LINK {
            return Err(MlError::ModelFile("scaler does not match link count".into()));
        }
        Ok(model)
    }
}

/// Single-tree forest settings equivalent to [`train_tree`].
pub fn degenerate_forest() -> ForestParams {
    ForestParams { n_trees: 1, bootstrap: false, tree: TreeParams { min_samples_leaf: 1, max_features: MaxFeatures::All } }
}

//! Black-box classifier contract and the built-in learners.
//!
//! The federation never inspects a model: it only calls `predict` on the
//! public dataset. Each learner is closed-world, so every prediction lies in
//! the label space it was trained for.

mod knn;
mod logistic;
mod mlp;
mod naive_bayes;
mod optim;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aggregation::PseudolabelBundle;
use crate::domain::{CategoryId, FeatureMatrix, LabelSpace, LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};

pub use knn::KnnModel;
pub use logistic::LogisticModel;
pub use mlp::MlpModel;
pub use naive_bayes::NaiveBayesModel;

/// Scores closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    Knn,
    NaiveBayes,
    Mlp,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [
        LearnerKind::Logistic,
        LearnerKind::Knn,
        LearnerKind::NaiveBayes,
        LearnerKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Logistic => "logistic",
            LearnerKind::Knn => "knn",
            LearnerKind::NaiveBayes => "naive_bayes",
            LearnerKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown learner kind {s:?}")))
    }
}

/// Which training phase a fit belongs to. Only the minibatch size differs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Local,
    Update,
}

/// Hyperparameters for every built-in learner. Each learner reads only the
/// fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub update_batch_size: usize,
    pub l2: f64,
    pub k: usize,
    pub var_smoothing: f64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 50,
            update_batch_size: 1000,
            l2: 1e-4,
            k: 5,
            var_smoothing: 1e-9,
            hidden: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("update_batch_size", self.update_batch_size),
            ("k", self.k),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        if !(self.var_smoothing.is_finite() && self.var_smoothing >= 0.0) {
            return Err(Error::Config("var_smoothing must be non-negative".into()));
        }
        Ok(())
    }

    /// Minibatch size for a phase, capped at the dataset size.
    pub fn batch_for(&self, phase: Phase, n: usize) -> usize {
        let b = match phase {
            Phase::Local => self.batch_size,
            Phase::Update => self.update_batch_size,
        };
        b.min(n).max(1)
    }
}

/// A trained, immutable classifier.
pub trait Classifier: Send + Sync + fmt::Debug {
    fn label_space(&self) -> &LabelSpace;

    fn predict(&self, x: &[f64]) -> CategoryId;

    fn predict_batch(&self, xs: &FeatureMatrix) -> Vec<CategoryId> {
        xs.iter_rows().map(|x| self.predict(x)).collect()
    }
}

/// Predicted categories over the public dataset, aligned to its index order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictionVector {
    pub labels: Vec<CategoryId>,
}

impl PredictionVector {
    pub fn new(labels: Vec<CategoryId>) -> Self {
        PredictionVector { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self, space: &LabelSpace, m: usize) -> Result<()> {
        if self.labels.len() != m {
            return Err(Error::LengthMismatch(format!(
                "prediction vector has {} entries, public dataset has {m}",
                self.labels.len()
            )));
        }
        for (i, &c) in self.labels.iter().enumerate() {
            space.check(c, || format!(" (public index {i})"))?;
        }
        Ok(())
    }
}

/// Index of the highest score; near-ties resolve to the lowest index, which
/// is the lowest category because label spaces are sorted.
pub(crate) fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] + TIE_TOLERANCE {
            best = i;
        }
    }
    best
}

/// Per-feature standardization fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub(crate) fn fit(x: &FeatureMatrix) -> Self {
        let n = x.rows() as f64;
        let d = x.dim();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub(crate) fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub(crate) fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
    }

    pub(crate) fn transform(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let mut data = Vec::with_capacity(x.as_slice().len());
        let mut buf = Vec::with_capacity(x.dim());
        for row in x.iter_rows() {
            self.apply(row, &mut buf);
            data.extend_from_slice(&buf);
        }
        FeatureMatrix::new(x.dim(), data).expect("standardized rows stay finite")
    }
}

/// Class position of every label within `space`.
pub(crate) fn class_indices(data: &LabeledDataset, space: &LabelSpace) -> Result<Vec<usize>> {
    data.labels()
        .iter()
        .enumerate()
        .map(|(row, &c)| {
            space.position(c).ok_or_else(|| Error::LabelOutsideSpace {
                category: c,
                context: format!(" (training row {row})"),
            })
        })
        .collect()
}

/// Fits a classifier of `kind` on `data`.
pub fn fit(
    kind: LearnerKind,
    data: &LabeledDataset,
    space: &LabelSpace,
    config: &TrainConfig,
    phase: Phase,
    seed: u64,
) -> Result<Box<dyn Classifier>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    let classes = class_indices(data, space)?;
    Ok(match kind {
        LearnerKind::Logistic => Box::new(LogisticModel::fit(data, &classes, space, config, phase, seed)),
        LearnerKind::Knn => Box::new(KnnModel::fit(data, &classes, space, config)),
        LearnerKind::NaiveBayes => Box::new(NaiveBayesModel::fit(data, &classes, space, config)),
        LearnerKind::Mlp => Box::new(MlpModel::fit(data, &classes, space, config, phase, seed)),
    })
}

/// A participant's learner binding: kind, config, label space, and the
/// current trained state if any.
#[derive(Debug)]
pub struct Model {
    kind: LearnerKind,
    space: LabelSpace,
    config: TrainConfig,
    trained: Option<Box<dyn Classifier>>,
}

impl Model {
    pub fn new(kind: LearnerKind, space: LabelSpace, config: TrainConfig) -> Self {
        Model {
            kind,
            space,
            config,
            trained: None,
        }
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_trained(&self) -> bool {
        self.trained.is_some()
    }

    pub fn classifier(&self) -> Result<&dyn Classifier> {
        self.trained.as_deref().ok_or(Error::Untrained)
    }

    /// Local training on the private dataset.
    pub fn train_local(&mut self, data: &LabeledDataset, seed: u64) -> Result<()> {
        self.trained = Some(fit(self.kind, data, &self.space, &self.config, Phase::Local, seed)?);
        Ok(())
    }

    /// Retrains from scratch on the private dataset plus the received bundle.
    pub fn update_train(
        &mut self,
        data: &LabeledDataset,
        bundle: &PseudolabelBundle,
        public: &UnlabeledDataset,
        seed: u64,
    ) -> Result<()> {
        let combined = combine(data, bundle, public, &self.space)?;
        self.trained = Some(fit(self.kind, &combined, &self.space, &self.config, Phase::Update, seed)?);
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<CategoryId> {
        Ok(self.classifier()?.predict(x))
    }

    pub fn pseudolabel(&self, public: &UnlabeledDataset) -> Result<PredictionVector> {
        pseudolabel(self.classifier()?, public)
    }

    pub fn evaluate(&self, test: &LabeledDataset) -> Result<f64> {
        evaluate(self.classifier()?, test)
    }
}

/// Concatenates the private dataset with the bundle's pseudolabeled public
/// instances, entries in category order and indices ascending.
pub fn combine(
    data: &LabeledDataset,
    bundle: &PseudolabelBundle,
    public: &UnlabeledDataset,
    space: &LabelSpace,
) -> Result<LabeledDataset> {
    if public.dim() != data.dim() {
        return Err(Error::LengthMismatch(format!(
            "public dimension {} differs from local dimension {}",
            public.dim(),
            data.dim()
        )));
    }
    let mut extra = FeatureMatrix::empty(public.dim());
    let mut labels = Vec::new();
    for (category, set) in bundle.entries() {
        space.check(*category, || " (bundle entry)".to_string())?;
        for &idx in set.indices() {
            if idx >= public.len() {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    size: public.len(),
                });
            }
            extra.push_row(public.instance(idx));
            labels.push(*category);
        }
    }
    let combined = data.concat(&extra, &labels)?;
    if combined.is_empty() {
        return Err(Error::EmptyDataset("combined training set is empty".into()));
    }
    Ok(combined)
}

pub fn pseudolabel(classifier: &dyn Classifier, public: &UnlabeledDataset) -> Result<PredictionVector> {
    Ok(PredictionVector::new(classifier.predict_batch(public.features())))
}

/// Fraction of test instances predicted correctly.
pub fn evaluate(classifier: &dyn Classifier, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("test set is empty".into()));
    }
    test.validate_labels(classifier.label_space())?;
    let predictions = classifier.predict_batch(test.features());
    let correct = predictions
        .iter()
        .zip(test.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

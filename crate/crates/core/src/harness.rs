//! Task datasets and the evaluation protocol: per-task hyperparameter tuning
//! on validation, k-fold handling for datasets without published splits,
//! multi-seed averaging, metrics, and report rendering.
//!
//! Datasets arrive as JSON Lines (`text`, optional `text2`, exactly one of
//! `label`/`score`, optional `split`) with a `<name>.meta.json` sidecar
//! carrying `{name, kind, score_support?}`.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    self, build_features, score_to_distribution, EvalTargets, FeatureMode, LinearHead, Targets,
    TrainSpec,
};
use crate::embeddings::EmbeddingTable;
use crate::encoders::{
    build_encoder, Activation, EncoderConfig, EncoderFamily, PoolKind, PoolingSpec,
};
use crate::numerics::SeededRng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ClassificationSingle,
    ClassificationPair,
    RelatednessPair,
    Probing,
}

impl TaskKind {
    pub fn is_pair(&self) -> bool {
        matches!(self, TaskKind::ClassificationPair | TaskKind::RelatednessPair)
    }

    pub fn metric(&self) -> MetricKind {
        match self {
            TaskKind::RelatednessPair => MetricKind::Pearson,
            _ => MetricKind::Accuracy,
        }
    }

    pub fn feature_mode(&self) -> FeatureMode {
        match self {
            TaskKind::ClassificationSingle | TaskKind::Probing => FeatureMode::Single,
            TaskKind::ClassificationPair => FeatureMode::PairClass,
            TaskKind::RelatednessPair => FeatureMode::PairRelated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Pearson,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Pearson => "pearson",
        }
    }
}

/// One labeled example; `tokens` are the space-split text.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tokens: Vec<String>,
    pub tokens2: Option<Vec<String>>,
    pub label: Option<String>,
    pub score: Option<f64>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub name: String,
    pub kind: TaskKind,
    pub examples: Vec<Example>,
    /// Score support points (relatedness tasks only).
    pub support: Option<Vec<f64>>,
    labels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub kind: TaskKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_support: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLine {
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    text2: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

fn tokenize(text: &str) -> Vec<String> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split(' ').map(str::to_string).collect()
    }
}

impl TaskDataset {
    /// Assemble and validate a dataset; the label vocabulary is frozen in
    /// first-appearance order.
    pub fn from_examples(
        name: impl Into<String>,
        kind: TaskKind,
        examples: Vec<Example>,
        support: Option<Vec<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        let mut labels: Vec<String> = Vec::new();
        let tagged = examples.iter().filter(|e| e.split.is_some()).count();
        if tagged != 0 && tagged != examples.len() {
            return Err(Error::BadDataset {
                path: name.clone().into(),
                message: "mixed presence of split tags".into(),
            });
        }
        for (i, e) in examples.iter().enumerate() {
            let line = i + 1;
            let fail = |message: String| Error::BadDataset {
                path: name.clone().into(),
                message: format!("line {line}: {message}"),
            };
            if e.label.is_some() == e.score.is_some() {
                return Err(fail("need exactly one of label/score".into()));
            }
            match kind {
                TaskKind::ClassificationSingle | TaskKind::Probing => {
                    if e.tokens2.is_some() {
                        return Err(fail("single-sentence task has text2".into()));
                    }
                    if e.label.is_none() {
                        return Err(fail("missing label".into()));
                    }
                }
                TaskKind::ClassificationPair => {
                    if e.tokens2.is_none() {
                        return Err(fail("missing text2".into()));
                    }
                    if e.label.is_none() {
                        return Err(fail("missing label".into()));
                    }
                }
                TaskKind::RelatednessPair => {
                    if e.tokens2.is_none() {
                        return Err(fail("missing text2".into()));
                    }
                    let score = e.score.ok_or_else(|| fail("missing score".into()))?;
                    let support = support.as_ref().ok_or_else(|| {
                        fail("relatedness dataset needs score_support metadata".into())
                    })?;
                    let lo = support[0];
                    let hi = support[support.len() - 1];
                    if score < lo || score > hi {
                        return Err(fail(format!("score {score} outside support [{lo}, {hi}]")));
                    }
                }
            }
            if let Some(label) = &e.label {
                if !labels.iter().any(|l| l == label) {
                    labels.push(label.clone());
                }
            }
        }
        if kind.metric() == MetricKind::Accuracy && labels.len() < 2 {
            return Err(Error::BadDataset {
                path: name.into(),
                message: "classification needs at least two label values".into(),
            });
        }
        Ok(TaskDataset {
            name,
            kind,
            examples,
            support,
            labels,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn has_splits(&self) -> bool {
        self.examples.first().is_some_and(|e| e.split.is_some())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Distinct tokens in first-appearance order over all texts.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for e in &self.examples {
            for t in e.tokens.iter().chain(e.tokens2.iter().flatten()) {
                if seen.insert(t.clone()) {
                    out.push(t.clone());
                }
            }
        }
        out
    }

    /// Write `<path>` (JSON Lines) and its `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for e in &self.examples {
            let raw = RawLine {
                text: e.tokens.join(" "),
                text2: e.tokens2.as_ref().map(|t| t.join(" ")),
                label: e.label.clone(),
                score: e.score,
                split: e.split,
            };
            body.push_str(&serde_json::to_string(&raw).expect("line serializes"));
            body.push('\n');
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
        let meta = DatasetMeta {
            name: self.name.clone(),
            kind: self.kind,
            score_support: self.support.clone(),
        };
        let mpath = path.with_extension("meta.json");
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
    }
}

/// Load a JSON Lines dataset and its metadata sidecar.
pub fn load_dataset(path: &Path) -> Result<TaskDataset> {
    let mpath = path.with_extension("meta.json");
    let meta_text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::parse(&mpath, 1, format!("bad dataset metadata: {e}")))?;

    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        examples.push(Example {
            tokens: tokenize(&raw.text),
            tokens2: raw.text2.as_deref().map(tokenize),
            label: raw.label,
            score: raw.score,
            split: raw.split,
        });
    }
    TaskDataset::from_examples(meta.name, meta.kind, examples, meta.score_support).map_err(|e| {
        match e {
            Error::BadDataset { message, .. } => Error::BadDataset {
                path: path.into(),
                message,
            },
            other => other,
        }
    })
}

/// Partition `0..n` into `k` disjoint folds whose sizes differ by at most one,
/// deterministically in `seed`.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::TooFewExamples { n, k });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut stream = SeededRng::new(seed, "folds").stream();
    indices.shuffle(&mut stream);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold: Vec<usize> = indices[cursor..cursor + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        cursor += size;
    }
    Ok(folds)
}

/// Fraction of matching predictions.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::Invalid(format!(
            "accuracy needs matching non-empty inputs ({} vs {})",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Sample Pearson correlation (two-pass, centered).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!(
            "pearson needs equal lengths ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::DegenerateCorrelation("need at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateCorrelation("constant input vector".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// How train/dev/test splits are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Use the dataset's own split tags.
    Provided,
    /// Cross-validation for datasets without published splits.
    KFold { k: usize, inner_dev_fraction: f64 },
}

impl SplitMode {
    pub fn kfold_default() -> Self {
        SplitMode::KFold {
            k: 10,
            inner_dev_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    PerTask,
    BestOverall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    Default,
    None,
}

/// Full evaluation protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub split_mode: SplitMode,
    pub seeds: Vec<u64>,
    pub tuning: TuningMode,
    pub grid: GridSpec,
    pub train: TrainSpec,
    /// Optional classifier regularization sweep; off by default.
    pub l2_sweep: Option<Vec<f64>>,
}

impl Protocol {
    /// The paper-default protocol: 5 seeds `base..base+5`, per-task tuning
    /// over the default grid.
    pub fn standard(base_seed: u64, split_mode: SplitMode) -> Self {
        Protocol {
            split_mode,
            seeds: (0..5).map(|i| base_seed + i).collect(),
            tuning: TuningMode::PerTask,
            grid: GridSpec::Default,
            train: TrainSpec::default(),
            l2_sweep: None,
        }
    }

    pub fn l2_options(&self) -> Vec<f64> {
        self.l2_sweep.clone().unwrap_or_else(|| vec![self.train.l2])
    }
}

/// Default classifier regularization sweep (enabled with `l2_sweep`).
pub const L2_SWEEP: [f64; 4] = [0.0, 1e-4, 1e-3, 1e-2];

/// Enumerate the tuning grid for `template`, in the fixed order that also
/// serves as the tie-break: pooling outermost, then the family-specific lists
/// (ESN: radius, input scale, sparsity, activation).
pub fn expand_grid(template: &EncoderConfig, grid: GridSpec) -> Vec<EncoderConfig> {
    if grid == GridSpec::None {
        return vec![template.clone()];
    }
    let poolings = [PoolKind::Mean, PoolKind::Max];
    let mut out = Vec::new();
    for pooling in poolings {
        let with_pool = |family: EncoderFamily| EncoderConfig {
            family,
            pooling: PoolingSpec {
                kind: pooling,
                pad_mode: template.pooling.pad_mode,
            },
            ..template.clone()
        };
        match &template.family {
            EncoderFamily::Boe | EncoderFamily::RandLstm => {
                out.push(with_pool(template.family.clone()));
            }
            EncoderFamily::Borep { .. } => {
                for activation in [Activation::None, Activation::Relu] {
                    out.push(with_pool(EncoderFamily::Borep { activation }));
                }
            }
            EncoderFamily::Esn { leak_rate, .. } => {
                for rho in [0.4, 0.6, 0.8, 1.0] {
                    for scale in [0.01, 0.05, 0.1, 0.2] {
                        for sparsity in [0.0, 0.25, 0.5, 0.75] {
                            for activation in [Activation::Relu, Activation::None] {
                                out.push(with_pool(EncoderFamily::Esn {
                                    spectral_radius: rho,
                                    input_scale: scale,
                                    sparsity,
                                    leak_rate: *leak_rate,
                                    activation,
                                }));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// One seed's selected grid point and its metrics (percent scale).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub test_metric: f64,
    pub dev_metric: f64,
    pub chosen: String,
}

/// Seed-aggregated evaluation of one task. Metrics are on the percent scale
/// (accuracy x100, Pearson x100); `std` is the population standard deviation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: String,
    pub metric: MetricKind,
    pub per_seed: Vec<SeedOutcome>,
    pub mean: f64,
    pub std: f64,
    /// Full-corpus encode passes performed (one per seed and grid point).
    pub encodings: usize,
}

impl EvalResult {
    fn from_seeds(task: String, metric: MetricKind, per_seed: Vec<SeedOutcome>, encodings: usize) -> Self {
        let (mean, std) = mean_std(&per_seed.iter().map(|s| s.test_metric).collect::<Vec<_>>());
        EvalResult {
            task,
            metric,
            per_seed,
            mean,
            std,
            encodings,
        }
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// evaluation internals
// ---------------------------------------------------------------------------

struct PreparedTask<'a> {
    dataset: &'a TaskDataset,
    /// Example indices in canonical content order; splits and folds are taken
    /// over this order so on-disk shuffling cannot change any result.
    order: Vec<usize>,
    label_ids: Vec<usize>,
    scores: Vec<f64>,
}

impl<'a> PreparedTask<'a> {
    fn new(dataset: &'a TaskDataset) -> Result<Self> {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let key = |i: usize| {
            let e = &dataset.examples[i];
            (
                e.tokens.join("\u{1f}"),
                e.tokens2.as_ref().map(|t| t.join("\u{1f}")).unwrap_or_default(),
                e.label.clone().unwrap_or_default(),
                e.score.map(|s| s.to_bits()).unwrap_or(0),
            )
        };
        order.sort_by_key(|&i| key(i));
        let mut label_ids = Vec::new();
        let mut scores = Vec::new();
        match dataset.kind.metric() {
            MetricKind::Accuracy => {
                for e in &dataset.examples {
                    let label = e.label.as_ref().expect("validated at load");
                    label_ids.push(dataset.label_index(label).expect("frozen vocabulary"));
                }
            }
            MetricKind::Pearson => {
                for e in &dataset.examples {
                    scores.push(e.score.expect("validated at load"));
                }
            }
        }
        Ok(PreparedTask {
            dataset,
            order,
            label_ids,
            scores,
        })
    }

    fn class_count(&self) -> usize {
        match self.dataset.kind.metric() {
            MetricKind::Accuracy => self.dataset.labels.len(),
            MetricKind::Pearson => self.dataset.support.as_ref().expect("validated").len(),
        }
    }

    fn train_targets(&self, idx: &[usize]) -> Result<Targets> {
        match self.dataset.kind.metric() {
            MetricKind::Accuracy => Ok(Targets::Classes(
                idx.iter().map(|&i| self.label_ids[i]).collect(),
            )),
            MetricKind::Pearson => {
                let support = self.dataset.support.as_ref().expect("validated");
                let mut rows = Array2::zeros((idx.len(), support.len()));
                for (row, &i) in idx.iter().enumerate() {
                    rows.row_mut(row)
                        .assign(&score_to_distribution(self.scores[i], support)?);
                }
                Ok(Targets::Distributions(rows))
            }
        }
    }

    fn eval_targets(&self, idx: &[usize]) -> EvalTargets {
        match self.dataset.kind.metric() {
            MetricKind::Accuracy => {
                EvalTargets::Labels(idx.iter().map(|&i| self.label_ids[i]).collect())
            }
            MetricKind::Pearson => EvalTargets::Scores {
                values: idx.iter().map(|&i| self.scores[i]).collect(),
                support: self.dataset.support.clone().expect("validated"),
            },
        }
    }

    /// (train, dev, test) index sets for provided-split mode.
    fn provided_splits(&self) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        if !self.dataset.has_splits() {
            return Err(Error::BadDataset {
                path: self.dataset.name.clone().into(),
                message: "split mode `provided` needs split tags".into(),
            });
        }
        let mut train = Vec::new();
        let mut dev = Vec::new();
        let mut test = Vec::new();
        for &i in &self.order {
            match self.dataset.examples[i].split.expect("tagged") {
                Split::Train => train.push(i),
                Split::Dev => dev.push(i),
                Split::Test => test.push(i),
            }
        }
        if train.is_empty() || dev.is_empty() || test.is_empty() {
            return Err(Error::BadDataset {
                path: self.dataset.name.clone().into(),
                message: "empty split".into(),
            });
        }
        Ok((train, dev, test))
    }
}

/// Encode every sentence of the task once for `config`; returns per-example
/// feature rows.
fn encode_features(
    config: &EncoderConfig,
    table: &EmbeddingTable,
    task: &PreparedTask<'_>,
) -> Result<Array2<f64>> {
    let encoder = build_encoder(config)?;
    let mode = task.dataset.kind.feature_mode();
    let dim = mode.output_dim(encoder.output_dim());
    let mut features = Array2::zeros((task.dataset.len(), dim));
    for (i, e) in task.dataset.examples.iter().enumerate() {
        let u = encoder.encode(&table.embed_sentence(&e.tokens))?;
        let row = match mode {
            FeatureMode::Single => build_features(mode, u.view(), None)?,
            _ => {
                let tokens2 = e.tokens2.as_ref().expect("validated pair task");
                let v = encoder.encode(&table.embed_sentence(tokens2))?;
                build_features(mode, u.view(), Some(v.view()))?
            }
        };
        features.row_mut(i).assign(&row);
    }
    Ok(features)
}

fn gather_rows(features: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), features.ncols()));
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&features.row(i));
    }
    out
}

fn test_metric_of(
    head: &LinearHead,
    features: &Array2<f64>,
    targets: &EvalTargets,
) -> Result<f64> {
    let probs = head.predict_batch(features.view())?;
    match targets {
        EvalTargets::Labels(labels) => {
            let predictions: Vec<usize> = (0..probs.nrows())
                .map(|i| {
                    let row = probs.row(i);
                    let mut best = 0;
                    for (j, v) in row.iter().enumerate() {
                        if *v > row[best] {
                            best = j;
                        }
                    }
                    best
                })
                .collect();
            accuracy(&predictions, labels)
        }
        EvalTargets::Scores { values, support } => {
            let predicted: Vec<f64> = (0..probs.nrows())
                .map(|i| classifier::expected_score(&probs.row(i).to_owned(), support))
                .collect();
            // a constant prediction carries no correlation
            match pearson(&predicted, values) {
                Ok(r) => Ok(r),
                Err(Error::DegenerateCorrelation(_)) => Ok(0.0),
                Err(e) => Err(e),
            }
        }
    }
}

/// Per-unit dev/test metrics for one seed (raw fractions, not percent).
struct SeedUnits {
    descs: Vec<String>,
    dev: Vec<f64>,
    test: Vec<f64>,
    encodings: usize,
}

fn derived_shuffle_seed(seed: u64, label: &str) -> u64 {
    SeededRng::new(seed, label).stream().next_u64()
}

fn run_unit(
    features: &Array2<f64>,
    task: &PreparedTask<'_>,
    train_idx: &[usize],
    dev_idx: &[usize],
    test_idx: &[usize],
    spec: &TrainSpec,
) -> Result<(f64, f64)> {
    if train_idx.is_empty() || dev_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Invalid("empty split portion".into()));
    }
    let head = LinearHead::zeros(task.class_count(), features.ncols());
    let outcome = classifier::train(
        head,
        gather_rows(features, train_idx).view(),
        &task.train_targets(train_idx)?,
        gather_rows(features, dev_idx).view(),
        &task.eval_targets(dev_idx),
        spec,
    )?;
    let test = test_metric_of(
        &outcome.head,
        &gather_rows(features, test_idx),
        &task.eval_targets(test_idx),
    )?;
    Ok((outcome.best_metric, test))
}

/// Evaluate every grid unit for one seed. Sentences are encoded exactly once
/// per grid point and shared across folds and the l2 sweep; the classifier
/// never reaches back into the encoder.
fn evaluate_units(
    template: &EncoderConfig,
    table: &EmbeddingTable,
    task: &PreparedTask<'_>,
    protocol: &Protocol,
    seed: u64,
) -> Result<SeedUnits> {
    let mut configs = expand_grid(template, protocol.grid);
    for c in &mut configs {
        c.seed = seed;
    }
    let l2s = protocol.l2_options();
    let sweep = protocol.l2_sweep.is_some();

    let mut descs = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    let mut encodings = 0usize;

    for (ci, config) in configs.iter().enumerate() {
        let features = encode_features(config, table, task)?;
        encodings += 1;
        for (li, &l2) in l2s.iter().enumerate() {
            let mut spec = protocol.train.clone();
            spec.l2 = l2;
            let desc = if sweep {
                format!("{} l2={l2}", config.describe())
            } else {
                config.describe()
            };
            let (unit_dev, unit_test) = match protocol.split_mode {
                SplitMode::Provided => {
                    let (train_idx, dev_idx, test_idx) = task.provided_splits()?;
                    spec.shuffle_seed = derived_shuffle_seed(seed, &format!("shuffle/{ci}/{li}"));
                    run_unit(&features, task, &train_idx, &dev_idx, &test_idx, &spec)?
                }
                SplitMode::KFold {
                    k,
                    inner_dev_fraction,
                } => {
                    let folds = make_folds(task.order.len(), k, seed)?;
                    let mut fold_dev = Vec::with_capacity(k);
                    let mut fold_test = Vec::with_capacity(k);
                    for (fi, fold) in folds.iter().enumerate() {
                        let test_idx: Vec<usize> = fold.iter().map(|&p| task.order[p]).collect();
                        let mut rest: Vec<usize> = folds
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != fi)
                            .flat_map(|(_, f)| f.iter().map(|&p| task.order[p]))
                            .collect();
                        rest.sort_unstable();
                        // hold out the inner dev portion of the training part
                        let mut holdout = rest.clone();
                        let mut stream =
                            SeededRng::new(seed, &format!("innerdev/{fi}")).stream();
                        holdout.shuffle(&mut stream);
                        let n_dev = ((inner_dev_fraction * rest.len() as f64).round() as usize)
                            .clamp(1, rest.len().saturating_sub(1));
                        let mut dev_idx: Vec<usize> = holdout[..n_dev].to_vec();
                        dev_idx.sort_unstable();
                        let train_idx: Vec<usize> = rest
                            .iter()
                            .copied()
                            .filter(|i| !dev_idx.contains(i))
                            .collect();
                        let mut fold_spec = spec.clone();
                        fold_spec.shuffle_seed =
                            derived_shuffle_seed(seed, &format!("shuffle/{ci}/{li}/{fi}"));
                        let (d, t) =
                            run_unit(&features, task, &train_idx, &dev_idx, &test_idx, &fold_spec)?;
                        fold_dev.push(d);
                        fold_test.push(t);
                    }
                    (
                        fold_dev.iter().sum::<f64>() / fold_dev.len() as f64,
                        fold_test.iter().sum::<f64>() / fold_test.len() as f64,
                    )
                }
            };
            descs.push(desc);
            dev.push(unit_dev);
            test.push(unit_test);
        }
    }
    Ok(SeedUnits {
        descs,
        dev,
        test,
        encodings,
    })
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Run the full protocol for one task: per seed, build encoders, encode once
/// per grid point, tune on validation, and report the test metric of the
/// selected point. Seeds run in parallel.
pub fn evaluate_task(
    template: &EncoderConfig,
    table: &EmbeddingTable,
    dataset: &TaskDataset,
    protocol: &Protocol,
) -> Result<EvalResult> {
    if dataset.kind.is_pair() && dataset.examples.iter().any(|e| e.tokens2.is_none()) {
        return Err(Error::BadDataset {
            path: dataset.name.clone().into(),
            message: "pair task with missing text2".into(),
        });
    }
    let task = PreparedTask::new(dataset)?;
    let outcomes: Vec<Result<(SeedOutcome, usize)>> = protocol
        .seeds
        .par_iter()
        .map(|&seed| {
            let units = evaluate_units(template, table, &task, protocol, seed)?;
            let winner = argmax_first(&units.dev);
            Ok((
                SeedOutcome {
                    seed,
                    test_metric: 100.0 * units.test[winner],
                    dev_metric: 100.0 * units.dev[winner],
                    chosen: units.descs[winner].clone(),
                },
                units.encodings,
            ))
        })
        .collect();
    let mut per_seed = Vec::new();
    let mut encodings = 0;
    for o in outcomes {
        let (outcome, e) = o?;
        per_seed.push(outcome);
        encodings += e;
    }
    Ok(EvalResult::from_seeds(
        dataset.name.clone(),
        dataset.kind.metric(),
        per_seed,
        encodings,
    ))
}

/// Outcome of best-overall tuning: one grid point per metric kind, shared by
/// all tasks of that kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestOverallOutcome {
    /// Chosen grid point per metric kind and seed.
    pub chosen: Vec<ChosenPoint>,
    pub results: Vec<EvalResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChosenPoint {
    pub metric: MetricKind,
    pub seed: u64,
    pub description: String,
}

/// Appendix-style robustness protocol: per seed, pick the single grid point
/// with the best unweighted mean dev metric across all tasks of each metric
/// kind, then report every task's test metric at that shared point.
pub fn tune_best_overall(
    template: &EncoderConfig,
    table: &EmbeddingTable,
    datasets: &[&TaskDataset],
    protocol: &Protocol,
) -> Result<BestOverallOutcome> {
    if datasets.is_empty() {
        return Err(Error::Invalid("best-overall tuning needs at least one dataset".into()));
    }
    let tasks: Vec<PreparedTask<'_>> = datasets
        .iter()
        .map(|d| PreparedTask::new(d))
        .collect::<Result<_>>()?;

    let mut chosen = Vec::new();
    let mut per_task_seeds: Vec<Vec<SeedOutcome>> = vec![Vec::new(); datasets.len()];
    let mut encodings = vec![0usize; datasets.len()];

    for &seed in &protocol.seeds {
        let units_by_task: Vec<SeedUnits> = tasks
            .par_iter()
            .map(|task| evaluate_units(template, table, task, protocol, seed))
            .collect::<Result<_>>()?;
        for metric in [MetricKind::Accuracy, MetricKind::Pearson] {
            let members: Vec<usize> = (0..datasets.len())
                .filter(|&i| datasets[i].kind.metric() == metric)
                .collect();
            if members.is_empty() {
                continue;
            }
            let unit_count = units_by_task[members[0]].dev.len();
            let mean_dev: Vec<f64> = (0..unit_count)
                .map(|u| {
                    members.iter().map(|&t| units_by_task[t].dev[u]).sum::<f64>()
                        / members.len() as f64
                })
                .collect();
            let winner = argmax_first(&mean_dev);
            chosen.push(ChosenPoint {
                metric,
                seed,
                description: units_by_task[members[0]].descs[winner].clone(),
            });
            for &t in &members {
                per_task_seeds[t].push(SeedOutcome {
                    seed,
                    test_metric: 100.0 * units_by_task[t].test[winner],
                    dev_metric: 100.0 * units_by_task[t].dev[winner],
                    chosen: units_by_task[t].descs[winner].clone(),
                });
            }
        }
        for (t, units) in units_by_task.iter().enumerate() {
            encodings[t] += units.encodings;
        }
    }

    let results = datasets
        .iter()
        .enumerate()
        .map(|(t, d)| {
            EvalResult::from_seeds(
                d.name.clone(),
                d.kind.metric(),
                per_task_seeds[t].clone(),
                encodings[t],
            )
        })
        .collect();
    Ok(BestOverallOutcome { chosen, results })
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

/// Render `mean(std)` in the table style: one decimal each, with the std's
/// leading zero dropped, e.g. `77.3(.2)`.
pub fn render_cell(mean: f64, std: f64) -> String {
    let std_text = format!("{std:.1}");
    let std_text = std_text.strip_prefix("0").unwrap_or(&std_text);
    format!("{mean:.1}({std_text})")
}

/// Aligned plain-text results table.
pub fn render_table(results: &[EvalResult]) -> String {
    let mut rows = vec![(
        "task".to_string(),
        "metric".to_string(),
        "score".to_string(),
    )];
    for r in results {
        rows.push((
            r.task.clone(),
            r.metric.name().to_string(),
            render_cell(r.mean, r.std),
        ));
    }
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(4);
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(6);
    let mut out = String::new();
    for (a, b, c) in rows {
        out.push_str(&format!("{a:<w0$}  {b:<w1$}  {c}\n"));
    }
    out
}

/// JSON report for one task. `tuning` records that grid selection happens
/// independently per seed (each seed sees only its own dev scores).
#[derive(Debug, Serialize)]
pub struct TaskReport<'a> {
    pub task: &'a str,
    pub config: String,
    pub metric: &'a str,
    pub tuning: &'a str,
    pub per_seed: &'a [SeedOutcome],
    pub mean: f64,
    pub std: f64,
    pub chosen_hparams: BTreeMap<u64, &'a str>,
}

pub fn report_json(template: &EncoderConfig, results: &[EvalResult], tuning: TuningMode) -> String {
    let tuning = match tuning {
        TuningMode::PerTask => "per_task, selected independently per seed",
        TuningMode::BestOverall => "best_overall, selected independently per seed",
    };
    let reports: Vec<TaskReport<'_>> = results
        .iter()
        .map(|r| TaskReport {
            task: &r.task,
            config: template.describe(),
            metric: r.metric.name(),
            tuning,
            per_seed: &r.per_seed,
            mean: r.mean,
            std: r.std,
            chosen_hparams: r
                .per_seed
                .iter()
                .map(|s| (s.seed, s.chosen.as_str()))
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&reports).expect("report serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use crate::numerics::InitScheme;

    fn example(text: &str, label: &str, split: Option<Split>) -> Example {
        Example {
            tokens: tokenize(text),
            tokens2: None,
            label: Some(label.to_string()),
            score: None,
            split,
        }
    }

    fn toy_dataset(split: bool) -> TaskDataset {
        let splits: Vec<Option<Split>> = if split {
            vec![
                Some(Split::Train),
                Some(Split::Train),
                Some(Split::Train),
                Some(Split::Train),
                Some(Split::Dev),
                Some(Split::Dev),
                Some(Split::Test),
                Some(Split::Test),
            ]
        } else {
            vec![None; 8]
        };
        let rows = [
            ("good fine nice", "pos"),
            ("fine good good", "pos"),
            ("bad awful poor", "neg"),
            ("poor bad bad", "neg"),
            ("nice fine", "pos"),
            ("awful poor", "neg"),
            ("good nice", "pos"),
            ("bad poor", "neg"),
        ];
        let examples = rows
            .iter()
            .zip(splits)
            .map(|((t, l), s)| example(t, l, s))
            .collect();
        TaskDataset::from_examples("toy", TaskKind::ClassificationSingle, examples, None).unwrap()
    }

    fn toy_table(dataset: &TaskDataset) -> EmbeddingTable {
        EmbeddingTable::generate_random(&dataset.vocabulary(), 4, InitScheme::Normal, 9).unwrap()
    }

    fn quick_protocol(split_mode: SplitMode) -> Protocol {
        Protocol {
            split_mode,
            seeds: vec![1, 2],
            tuning: TuningMode::PerTask,
            grid: GridSpec::Default,
            train: TrainSpec {
                max_epochs: 12,
                check_every: 4,
                ..TrainSpec::default()
            },
            l2_sweep: None,
        }
    }

    #[test]
    fn dataset_round_trips_and_validates() {
        let dataset = toy_dataset(true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.jsonl");
        dataset.save(&path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.kind, TaskKind::ClassificationSingle);
        assert_eq!(loaded.len(), 8);
        assert_eq!(loaded.labels(), &["pos".to_string(), "neg".to_string()]);
        assert!(loaded.has_splits());
    }

    #[test]
    fn pair_line_without_text2_names_the_line() {
        let examples = vec![
            Example {
                tokens: tokenize("a b"),
                tokens2: Some(tokenize("c d")),
                label: Some("yes".into()),
                score: None,
                split: None,
            },
            Example {
                tokens: tokenize("a"),
                tokens2: None,
                label: Some("no".into()),
                score: None,
                split: None,
            },
        ];
        let err =
            TaskDataset::from_examples("p", TaskKind::ClassificationPair, examples, None)
                .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn score_outside_support_is_rejected() {
        let examples = vec![Example {
            tokens: tokenize("a"),
            tokens2: Some(tokenize("b")),
            label: None,
            score: Some(7.0),
            split: None,
        }];
        let err = TaskDataset::from_examples(
            "r",
            TaskKind::RelatednessPair,
            examples,
            Some(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
        )
        .unwrap_err();
        assert!(err.to_string().contains("outside support"));
    }

    #[test]
    fn mixed_split_tags_are_rejected() {
        let examples = vec![
            example("a b", "x", Some(Split::Train)),
            example("c d", "y", None),
        ];
        let err =
            TaskDataset::from_examples("m", TaskKind::ClassificationSingle, examples, None)
                .unwrap_err();
        assert!(err.to_string().contains("mixed"));
    }

    #[test]
    fn folds_partition_and_balance() {
        let folds = make_folds(10, 10, 3).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.len() == 1));

        let folds = make_folds(103, 10, 3).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![10, 10, 10, 10, 10, 10, 10, 11, 11, 11]);

        let mut stream = SeededRng::new(50, "foldprops").stream();
        use rand::Rng;
        for _ in 0..100 {
            let k = stream.random_range(2..8usize);
            let n = stream.random_range(k..60usize);
            let seed = stream.random_range(0..1000u64);
            let folds = make_folds(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>(), "n={n} k={k}");
        }
        assert!(make_folds(3, 5, 0).is_err());
    }

    #[test]
    fn folds_are_seed_deterministic() {
        assert_eq!(make_folds(20, 4, 7).unwrap(), make_folds(20, 4, 7).unwrap());
        assert_ne!(make_folds(20, 4, 7).unwrap(), make_folds(20, 4, 8).unwrap());
    }

    #[test]
    fn pearson_matches_textbook_cases_and_oracle() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());

        let mut stream = SeededRng::new(4, "pearson").stream();
        use rand::Rng;
        let x: Vec<f64> = (0..1000).map(|_| stream.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.6 * v + stream.random_range(-1.0..1.0))
            .collect();
        let mine = pearson(&x, &y).unwrap();
        let reference = crate::oracle::pearson_reference(&x, &y);
        assert!((mine - reference).abs() < 1e-12);
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn grid_orders_are_fixed() {
        let template = EncoderConfig {
            family: EncoderFamily::Borep {
                activation: Activation::None,
            },
            output_dim: 16,
            input_dim: 4,
            init: InitScheme::Heuristic,
            pooling: PoolingSpec::length(PoolKind::Max),
            seed: 0,
        };
        let grid = expand_grid(&template, GridSpec::Default);
        assert_eq!(grid.len(), 4);
        assert!(grid[0].describe().contains("pooling=mean activation=none"));
        assert!(grid[1].describe().contains("pooling=mean activation=relu"));
        assert!(grid[2].describe().contains("pooling=max activation=none"));
        assert!(grid[3].describe().contains("pooling=max activation=relu"));

        let esn = EncoderConfig {
            family: EncoderFamily::Esn {
                spectral_radius: 1.0,
                input_scale: 0.1,
                sparsity: 0.0,
                leak_rate: 1.0,
                activation: Activation::Relu,
            },
            ..template.clone()
        };
        assert_eq!(expand_grid(&esn, GridSpec::Default).len(), 2 * 4 * 4 * 4 * 2);
        assert_eq!(expand_grid(&esn, GridSpec::None).len(), 1);
    }

    #[test]
    fn render_cell_matches_table_style() {
        assert_eq!(render_cell(77.3, 0.2), "77.3(.2)");
        assert_eq!(render_cell(86.5, 1.1), "86.5(1.1)");
        assert_eq!(render_cell(80.04, 0.04), "80.0(.0)");
    }

    fn borep_template() -> EncoderConfig {
        EncoderConfig {
            family: EncoderFamily::Borep {
                activation: Activation::None,
            },
            output_dim: 16,
            input_dim: 4,
            init: InitScheme::Heuristic,
            pooling: PoolingSpec::length(PoolKind::Max),
            seed: 0,
        }
    }

    #[test]
    fn evaluate_task_is_deterministic_and_counts_encodings() {
        let dataset = toy_dataset(true);
        let table = toy_table(&dataset);
        let protocol = quick_protocol(SplitMode::Provided);
        let template = borep_template();
        let a = evaluate_task(&template, &table, &dataset, &protocol).unwrap();
        let b = evaluate_task(&template, &table, &dataset, &protocol).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std, b.std);
        for (x, y) in a.per_seed.iter().zip(b.per_seed.iter()) {
            assert_eq!(x.test_metric, y.test_metric);
            assert_eq!(x.chosen, y.chosen);
        }
        // encode once per (seed, grid point): 2 seeds x 4 grid points
        assert_eq!(a.encodings, 8);
        let (mean, std) = mean_std(&a.per_seed.iter().map(|s| s.test_metric).collect::<Vec<_>>());
        assert!((mean - a.mean).abs() < 1e-12);
        assert!((std - a.std).abs() < 1e-12);
    }

    #[test]
    fn permuting_example_order_changes_nothing() {
        let dataset = toy_dataset(true);
        let mut shuffled = dataset.examples.clone();
        shuffled.reverse();
        let permuted =
            TaskDataset::from_examples("toy", TaskKind::ClassificationSingle, shuffled, None)
                .unwrap();
        let table = toy_table(&dataset);
        let protocol = quick_protocol(SplitMode::Provided);
        let template = borep_template();
        let a = evaluate_task(&template, &table, &dataset, &protocol).unwrap();
        let b = evaluate_task(&template, &table, &permuted, &protocol).unwrap();
        assert_eq!(a.mean, b.mean);
        for (x, y) in a.per_seed.iter().zip(b.per_seed.iter()) {
            assert_eq!(x.chosen, y.chosen);
            assert_eq!(x.test_metric, y.test_metric);
        }
    }

    #[test]
    fn kfold_mode_runs_and_uses_single_encoding_per_grid_point() {
        let dataset = toy_dataset(false);
        let table = toy_table(&dataset);
        let mut protocol = quick_protocol(SplitMode::KFold {
            k: 4,
            inner_dev_fraction: 0.2,
        });
        protocol.grid = GridSpec::None;
        protocol.seeds = vec![3];
        let template = borep_template();
        let result = evaluate_task(&template, &table, &dataset, &protocol).unwrap();
        assert_eq!(result.encodings, 1);
        assert!(result.mean >= 0.0 && result.mean <= 100.0);
    }

    #[test]
    fn relatedness_pipeline_trains_with_kl() {
        let pairs = [
            ("good nice", "good fine", 4.6),
            ("good nice", "bad poor", 1.2),
            ("bad poor", "awful bad", 4.4),
            ("fine nice", "awful poor", 1.4),
            ("good good", "nice fine", 4.2),
            ("poor awful", "nice good", 1.0),
            ("nice nice", "fine good", 4.8),
            ("bad bad", "fine good", 1.6),
        ];
        let splits = [
            Split::Train,
            Split::Train,
            Split::Train,
            Split::Train,
            Split::Dev,
            Split::Dev,
            Split::Test,
            Split::Test,
        ];
        let examples: Vec<Example> = pairs
            .iter()
            .zip(splits)
            .map(|((a, b, s), split)| Example {
                tokens: tokenize(a),
                tokens2: Some(tokenize(b)),
                label: None,
                score: Some(*s),
                split: Some(split),
            })
            .collect();
        let dataset = TaskDataset::from_examples(
            "rel",
            TaskKind::RelatednessPair,
            examples,
            Some(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
        )
        .unwrap();
        let table = toy_table(&dataset);
        let mut protocol = quick_protocol(SplitMode::Provided);
        protocol.grid = GridSpec::None;
        protocol.seeds = vec![1];
        let template = borep_template();
        let result = evaluate_task(&template, &table, &dataset, &protocol).unwrap();
        assert_eq!(result.metric, MetricKind::Pearson);
        assert!(result.mean >= -100.0 && result.mean <= 100.0);
    }

    #[test]
    fn best_overall_degenerates_to_per_task_for_one_dataset() {
        let dataset = toy_dataset(true);
        let table = toy_table(&dataset);
        let protocol = quick_protocol(SplitMode::Provided);
        let template = borep_template();
        let single = evaluate_task(&template, &table, &dataset, &protocol).unwrap();
        let overall = tune_best_overall(&template, &table, &[&dataset], &protocol).unwrap();
        assert_eq!(overall.results.len(), 1);
        for (a, b) in overall.results[0]
            .per_seed
            .iter()
            .zip(single.per_seed.iter())
        {
            assert_eq!(a.chosen, b.chosen);
            assert_eq!(a.test_metric, b.test_metric);
        }
    }

    #[test]
    fn best_overall_maximizes_the_mean_dev_metric() {
        // two tasks with identical structure: selection must match brute force
        let d1 = toy_dataset(true);
        let mut examples = d1.examples.clone();
        examples.rotate_left(1);
        // keep split structure valid: re-tag rotated examples
        let tags = [
            Split::Train,
            Split::Train,
            Split::Train,
            Split::Train,
            Split::Dev,
            Split::Dev,
            Split::Test,
            Split::Test,
        ];
        for (e, t) in examples.iter_mut().zip(tags) {
            e.split = Some(t);
        }
        let d2 =
            TaskDataset::from_examples("toy2", TaskKind::ClassificationSingle, examples, None)
                .unwrap();
        let table = toy_table(&d1);
        let mut protocol = quick_protocol(SplitMode::Provided);
        protocol.seeds = vec![1];
        let template = borep_template();

        let overall = tune_best_overall(&template, &table, &[&d1, &d2], &protocol).unwrap();
        // brute force: recompute each task alone and average unit dev metrics
        let task1 = PreparedTask::new(&d1).unwrap();
        let task2 = PreparedTask::new(&d2).unwrap();
        let u1 = evaluate_units(&template, &table, &task1, &protocol, 1).unwrap();
        let u2 = evaluate_units(&template, &table, &task2, &protocol, 1).unwrap();
        let mean_dev: Vec<f64> = u1
            .dev
            .iter()
            .zip(u2.dev.iter())
            .map(|(a, b)| (a + b) / 2.0)
            .collect();
        let winner = argmax_first(&mean_dev);
        assert_eq!(overall.chosen[0].description, u1.descs[winner]);
    }

}

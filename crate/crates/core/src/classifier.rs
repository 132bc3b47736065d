//! The trained component: a multinomial logistic-regression head optimized
//! with Adam and early stopping. Classification tasks use cross-entropy over
//! class indices; relatedness tasks train a distribution over score support
//! points with a KL objective and read out the expected score.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::numerics::SeededRng;
use crate::{vecio, Error, Result};

/// How sentence vectors are assembled into classifier features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// `u`
    Single,
    /// `[u; v; |u-v|; u*v]`
    PairClass,
    /// `[|u-v|; u*v]`
    PairRelated,
}

impl FeatureMode {
    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            FeatureMode::Single => d,
            FeatureMode::PairClass => 4 * d,
            FeatureMode::PairRelated => 2 * d,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureMode::Single => "single",
            FeatureMode::PairClass => "pair_class",
            FeatureMode::PairRelated => "pair_related",
        }
    }
}

/// Concatenate sentence vectors according to `mode`.
pub fn build_features(
    mode: FeatureMode,
    u: ArrayView1<'_, f64>,
    v: Option<ArrayView1<'_, f64>>,
) -> Result<Array1<f64>> {
    match mode {
        FeatureMode::Single => {
            if v.is_some() {
                return Err(Error::Invalid("single mode takes one vector".into()));
            }
            Ok(u.to_owned())
        }
        FeatureMode::PairClass | FeatureMode::PairRelated => {
            let v = v.ok_or(Error::MissingPairVector)?;
            if u.len() != v.len() {
                return Err(Error::DimMismatch {
                    expected: u.len(),
                    found: v.len(),
                });
            }
            let d = u.len();
            let dim = mode.output_dim(d);
            let mut out = Array1::zeros(dim);
            let mut cursor = 0;
            if mode == FeatureMode::PairClass {
                out.slice_mut(ndarray::s![0..d]).assign(&u);
                out.slice_mut(ndarray::s![d..2 * d]).assign(&v);
                cursor = 2 * d;
            }
            for i in 0..d {
                out[cursor + i] = (u[i] - v[i]).abs();
                out[cursor + d + i] = u[i] * v[i];
            }
            Ok(out)
        }
    }
}

/// A linear map plus softmax over `classes` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weights: Array2<f64>, // C x F
    bias: Array1<f64>,    // C
}

impl LinearHead {
    pub fn zeros(classes: usize, features: usize) -> Self {
        assert!(classes >= 2, "a head needs at least two classes");
        LinearHead {
            weights: Array2::zeros((classes, features)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Self {
        assert_eq!(weights.nrows(), bias.len());
        LinearHead { weights, bias }
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    /// Softmax probabilities for one feature vector.
    pub fn predict(&self, features: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if features.len() != self.features() {
            return Err(Error::DimMismatch {
                expected: self.features(),
                found: features.len(),
            });
        }
        let logits = self.weights.dot(&features) + &self.bias;
        Ok(softmax(&logits))
    }

    /// Softmax probabilities for a batch, one row per example.
    pub fn predict_batch(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.features() {
            return Err(Error::DimMismatch {
                expected: self.features(),
                found: features.ncols(),
            });
        }
        let mut logits = features.dot(&self.weights.t());
        for mut row in logits.rows_mut() {
            row += &self.bias;
            let p = softmax(&row.to_owned());
            row.assign(&p);
        }
        Ok(logits)
    }

    /// Argmax class; ties break toward the lowest class index.
    pub fn predict_class(&self, features: ArrayView1<'_, f64>) -> Result<usize> {
        let probs = self.predict(features)?;
        Ok(argmax(&probs))
    }

    /// Persist as the binary vector format (rows = classes, last column the
    /// bias) plus a JSON metadata sidecar.
    pub fn save(&self, base: &Path, meta: &HeadMetadata) -> Result<()> {
        let c = self.classes();
        let f = self.features();
        let mut packed = Array2::zeros((c, f + 1));
        packed.slice_mut(ndarray::s![.., 0..f]).assign(&self.weights);
        packed.slice_mut(ndarray::s![.., f]).assign(&self.bias);
        vecio::write_matrix(base, packed.view())?;
        let mpath = meta_path(base);
        let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
        std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
    }

    pub fn load(base: &Path) -> Result<(Self, HeadMetadata)> {
        let packed = vecio::read_matrix(base)?;
        let mpath = meta_path(base);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let meta: HeadMetadata = serde_json::from_str(&text)
            .map_err(|e| Error::parse(&mpath, 1, format!("bad head metadata: {e}")))?;
        let f = packed.ncols() - 1;
        let weights = packed.slice(ndarray::s![.., 0..f]).to_owned();
        let bias = packed.slice(ndarray::s![.., f]).to_owned();
        Ok((LinearHead { weights, bias }, meta))
    }
}

fn meta_path(base: &Path) -> std::path::PathBuf {
    let mut name = base.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    base.with_file_name(name)
}

/// Sidecar describing a serialized head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadMetadata {
    pub classes: Option<Vec<String>>,
    pub support: Option<Vec<f64>>,
    pub feature_mode: String,
    pub spec: TrainSpec,
    pub best_metric: f64,
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|v| v / sum);
    out
}

fn argmax(probs: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, v) in probs.iter().enumerate() {
        if *v > probs[best] {
            best = i;
        }
    }
    best
}

/// Training targets: class indices for cross-entropy, probability rows for KL.
#[derive(Debug, Clone)]
pub enum Targets {
    Classes(Vec<usize>),
    Distributions(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Distributions(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, classes: usize) -> Result<()> {
        match self {
            Targets::Classes(v) => {
                for &c in v {
                    if c >= classes {
                        return Err(Error::ClassOutOfRange { class: c, classes });
                    }
                }
            }
            Targets::Distributions(m) => {
                if m.ncols() != classes {
                    return Err(Error::DimMismatch {
                        expected: classes,
                        found: m.ncols(),
                    });
                }
                for row in m.rows() {
                    let sum = row.sum();
                    if (sum - 1.0).abs() > 1e-6 {
                        return Err(Error::UnnormalizedTarget(sum));
                    }
                }
            }
        }
        Ok(())
    }

    fn gather(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Classes(v) => Targets::Classes(indices.iter().map(|&i| v[i]).collect()),
            Targets::Distributions(m) => {
                let mut out = Array2::zeros((indices.len(), m.ncols()));
                for (row, &i) in indices.iter().enumerate() {
                    out.row_mut(row).assign(&m.row(i));
                }
                Targets::Distributions(out)
            }
        }
    }
}

/// Gradient with the same shape as the head.
#[derive(Debug, Clone)]
pub struct HeadGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Mean loss over the batch plus `(l2/2) * ||weights||^2`, with its analytic
/// gradient. Cross-entropy for class targets, `KL(target || model)` for
/// distribution targets; both produce the softmax-minus-target logit gradient.
pub fn loss_and_gradient(
    head: &LinearHead,
    features: ArrayView2<'_, f64>,
    targets: &Targets,
    l2: f64,
) -> Result<(f64, HeadGradient)> {
    let batch = features.nrows();
    if batch == 0 || targets.len() != batch {
        return Err(Error::Invalid(format!(
            "batch of {batch} features with {} targets",
            targets.len()
        )));
    }
    let classes = head.classes();
    targets.validate(classes)?;

    let probs = head.predict_batch(features)?;
    let mut data_loss = 0.0;
    // dL/dlogits, accumulated per example
    let mut dlogits = probs.clone();
    match targets {
        Targets::Classes(labels) => {
            for (i, &label) in labels.iter().enumerate() {
                data_loss -= probs[[i, label]].max(f64::MIN_POSITIVE).ln();
                dlogits[[i, label]] -= 1.0;
            }
        }
        Targets::Distributions(t) => {
            for i in 0..batch {
                for k in 0..classes {
                    let tk = t[[i, k]];
                    if tk > 0.0 {
                        data_loss += tk * (tk.ln() - probs[[i, k]].max(f64::MIN_POSITIVE).ln());
                    }
                    dlogits[[i, k]] -= tk;
                }
            }
        }
    }
    let scale = 1.0 / batch as f64;
    let mut loss = data_loss * scale;

    let mut grad_w = dlogits.t().dot(&features);
    grad_w.mapv_inplace(|v| v * scale);
    let grad_b = dlogits.sum_axis(Axis(0)) * scale;

    if l2 > 0.0 {
        loss += 0.5 * l2 * head.weights.iter().map(|w| w * w).sum::<f64>();
        grad_w.scaled_add(l2, &head.weights);
    }
    Ok((
        loss,
        HeadGradient {
            weights: grad_w,
            bias: grad_b,
        },
    ))
}

/// Optimizer and early-stopping schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving validation checks before stopping.
    pub patience: usize,
    /// Epochs between validation checks.
    pub check_every: usize,
    pub l2: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 200,
            patience: 5,
            check_every: 4,
            l2: 0.0,
            shuffle_seed: 0,
        }
    }
}

/// Validation-side targets for metric computation.
#[derive(Debug, Clone)]
pub enum EvalTargets {
    Labels(Vec<usize>),
    Scores { values: Vec<f64>, support: Vec<f64> },
}

/// One validation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: LinearHead,
    pub best_metric: f64,
    pub log: Vec<CheckEntry>,
    /// Classes absent from the training targets (training proceeds anyway).
    pub empty_class_warnings: usize,
}

/// Minibatch Adam with per-epoch reshuffling and best-snapshot early stopping.
///
/// The validation metric (accuracy or Pearson of expected scores) is computed
/// every `check_every` epochs and at the final epoch; strict improvement
/// resets the patience counter and snapshots the parameters. The returned head
/// is the best snapshot.
pub fn train(
    init: LinearHead,
    train_x: ArrayView2<'_, f64>,
    train_t: &Targets,
    val_x: ArrayView2<'_, f64>,
    val_t: &EvalTargets,
    spec: &TrainSpec,
) -> Result<TrainOutcome> {
    let n = train_x.nrows();
    if n == 0 || val_x.nrows() == 0 {
        return Err(Error::Invalid("train and validation sets must be non-empty".into()));
    }
    if train_t.len() != n {
        return Err(Error::Invalid("training target count mismatch".into()));
    }
    train_t.validate(init.classes())?;

    let empty_class_warnings = match train_t {
        Targets::Classes(labels) => {
            let mut seen = vec![false; init.classes()];
            for &l in labels {
                seen[l] = true;
            }
            seen.iter().filter(|s| !**s).count()
        }
        Targets::Distributions(_) => 0,
    };

    let mut head = init;
    let mut adam = AdamState::new(head.classes(), head.features());
    let mut shuffle = SeededRng::new(spec.shuffle_seed, "classifier/shuffle").stream();
    let mut order: Vec<usize> = (0..n).collect();

    let mut best_metric = f64::NEG_INFINITY;
    let mut best_head = head.clone();
    let mut bad_checks = 0usize;
    let mut log = Vec::new();

    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(spec.batch_size.max(1)) {
            let mut batch_x = Array2::zeros((chunk.len(), head.features()));
            for (row, &i) in chunk.iter().enumerate() {
                batch_x.row_mut(row).assign(&train_x.row(i));
            }
            let batch_t = train_t.gather(chunk);
            let (loss, grad) = loss_and_gradient(&head, batch_x.view(), &batch_t, spec.l2)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch });
            }
            adam.update(&mut head, &grad, spec);
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;

        let is_check = epoch % spec.check_every == 0 || epoch == spec.max_epochs;
        if is_check {
            let metric = validation_metric(&head, val_x, val_t)?;
            log.push(CheckEntry {
                epoch,
                train_loss,
                metric,
            });
            if metric > best_metric {
                best_metric = metric;
                best_head = head.clone();
                bad_checks = 0;
            } else {
                bad_checks += 1;
                if bad_checks >= spec.patience {
                    break;
                }
            }
        }
    }

    Ok(TrainOutcome {
        head: best_head,
        best_metric,
        log,
        empty_class_warnings,
    })
}

fn validation_metric(
    head: &LinearHead,
    val_x: ArrayView2<'_, f64>,
    val_t: &EvalTargets,
) -> Result<f64> {
    let probs = head.predict_batch(val_x)?;
    match val_t {
        EvalTargets::Labels(labels) => {
            let mut correct = 0usize;
            for (i, &label) in labels.iter().enumerate() {
                if argmax(&probs.row(i).to_owned()) == label {
                    correct += 1;
                }
            }
            Ok(correct as f64 / labels.len() as f64)
        }
        EvalTargets::Scores { values, support } => {
            let predicted: Vec<f64> = (0..probs.nrows())
                .map(|i| expected_score(&probs.row(i).to_owned(), support))
                .collect();
            // an untrained head predicts a constant; rank it below everything
            match crate::harness::pearson(&predicted, values) {
                Ok(r) => Ok(r),
                Err(Error::DegenerateCorrelation(_)) => Ok(f64::NEG_INFINITY),
                Err(e) => Err(e),
            }
        }
    }
}

struct AdamState {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
    step: usize,
}

impl AdamState {
    fn new(classes: usize, features: usize) -> Self {
        AdamState {
            m_w: Array2::zeros((classes, features)),
            v_w: Array2::zeros((classes, features)),
            m_b: Array1::zeros(classes),
            v_b: Array1::zeros(classes),
            step: 0,
        }
    }

    fn update(&mut self, head: &mut LinearHead, grad: &HeadGradient, spec: &TrainSpec) {
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - spec.beta1.powi(t);
        let correction2 = 1.0 - spec.beta2.powi(t);
        let lr = spec.learning_rate;

        ndarray::Zip::from(&mut head.weights)
            .and(&mut self.m_w)
            .and(&mut self.v_w)
            .and(&grad.weights)
            .for_each(|w, m, v, g| {
                *m = spec.beta1 * *m + (1.0 - spec.beta1) * g;
                *v = spec.beta2 * *v + (1.0 - spec.beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *w -= lr * m_hat / (v_hat.sqrt() + spec.epsilon);
            });
        ndarray::Zip::from(&mut head.bias)
            .and(&mut self.m_b)
            .and(&mut self.v_b)
            .and(&grad.bias)
            .for_each(|w, m, v, g| {
                *m = spec.beta1 * *m + (1.0 - spec.beta1) * g;
                *v = spec.beta2 * *v + (1.0 - spec.beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *w -= lr * m_hat / (v_hat.sqrt() + spec.epsilon);
            });
    }
}

/// Split unit mass between the two support points adjacent to `score` so the
/// expectation reproduces the score exactly.
pub fn score_to_distribution(score: f64, support: &[f64]) -> Result<Array1<f64>> {
    let k = support.len();
    assert!(k >= 2, "support needs at least two points");
    let lo = support[0];
    let hi = support[k - 1];
    if score < lo || score > hi {
        return Err(Error::ScoreOutOfSupport { score, lo, hi });
    }
    let step = support[1] - support[0];
    let mut out = Array1::zeros(k);
    let i = (((score - lo) / step).floor() as usize).min(k - 2);
    let upper = (score - support[i]) / step;
    out[i] = 1.0 - upper;
    out[i + 1] = upper;
    Ok(out)
}

/// `sum_i p_i s_i`.
pub fn expected_score(probs: &Array1<f64>, support: &[f64]) -> f64 {
    probs
        .iter()
        .zip(support.iter())
        .map(|(p, s)| p * s)
        .sum()
}

//! Analysis tooling: dimensionality sweeps, random re-projection of external
//! sentence vectors, projection distortion statistics, padded-pooling
//! ("sparsed") measurements, and seeded generators for the synthetic probing
//! tasks that exercise the full pipeline at desk scale.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::encoders::{encode_batch, Encoder, EncoderConfig, PadMode, PoolKind, SortMode};
use crate::harness::{
    evaluate_task, EvalResult, Example, Protocol, Split, TaskDataset, TaskKind,
};
use crate::numerics::{init_matrix, InitScheme, SeededRng};
use crate::{Error, Result};

/// Per-dimension evaluation results.
#[derive(Debug, Clone)]
pub struct SweepCurve {
    pub dims: Vec<usize>,
    pub results: Vec<EvalResult>,
}

/// Evaluate the task at each dimension with fresh parameter draws per
/// `(dim, seed)`.
pub fn dim_sweep(
    template: &EncoderConfig,
    table: &EmbeddingTable,
    dims: &[usize],
    dataset: &TaskDataset,
    protocol: &Protocol,
) -> Result<SweepCurve> {
    if dims.is_empty() {
        return Err(Error::Invalid("dimension sweep needs at least one dim".into()));
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("sweep dims must be strictly increasing".into()));
    }
    let mut results = Vec::with_capacity(dims.len());
    for &dim in dims {
        let config = EncoderConfig {
            output_dim: dim,
            ..template.clone()
        };
        results.push(evaluate_task(&config, table, dataset, protocol)?);
    }
    Ok(SweepCurve {
        dims: dims.to_vec(),
        results,
    })
}

/// Plot-ready CSV: `dim,seed,metric` with one row per (dim, seed).
pub fn sweep_csv(curve: &SweepCurve) -> String {
    let mut out = String::from("dim,seed,metric\n");
    for (dim, result) in curve.dims.iter().zip(&curve.results) {
        for seed in &result.per_seed {
            out.push_str(&format!("{dim},{},{}\n", seed.seed, seed.test_metric));
        }
    }
    out
}

/// Apply one shared random projection to every row.
pub fn random_project_vectors(
    vectors: ArrayView2<'_, f64>,
    target_dim: usize,
    scheme: InitScheme,
    seed: u64,
) -> Result<Array2<f64>> {
    if target_dim == 0 {
        return Err(Error::Invalid("projection target dim must be positive".into()));
    }
    let source_dim = vectors.ncols();
    if source_dim == 0 {
        return Err(Error::Invalid("cannot project zero-dimensional vectors".into()));
    }
    let w = init_matrix(
        target_dim,
        source_dim,
        scheme,
        &SeededRng::new(seed, "project/W"),
    );
    project_with_matrix(vectors, &w)
}

/// Projection with an explicit matrix (rows map to output coordinates).
pub fn project_with_matrix(
    vectors: ArrayView2<'_, f64>,
    w: &Array2<f64>,
) -> Result<Array2<f64>> {
    if vectors.ncols() != w.ncols() {
        return Err(Error::DimMismatch {
            expected: w.ncols(),
            found: vectors.ncols(),
        });
    }
    Ok(vectors.dot(&w.t()))
}

/// Pairwise distortion of a random projection.
#[derive(Debug, Clone, Serialize)]
pub struct JlStats {
    pub pairs: usize,
    /// Cosine-similarity distortion statistics (the headline numbers).
    pub max_abs_cosine: f64,
    pub mean_abs_cosine: f64,
    /// Fraction of pairs with cosine distortion within `eps`.
    pub fraction_within_eps: f64,
    pub eps: f64,
    /// Mean absolute inner-product error after the `sqrt(d0/target)` scaling.
    pub mean_abs_dot_scaled: f64,
}

/// Measure how well a heuristic random projection to `target_dim` preserves
/// pairwise geometry; inner products are compared after scaling the projected
/// vectors by `sqrt(d0 / target_dim)`.
pub fn jl_distortion(
    vectors: ArrayView2<'_, f64>,
    target_dim: usize,
    seed: u64,
    eps: f64,
) -> Result<JlStats> {
    let m = vectors.nrows();
    if m < 2 {
        return Err(Error::Invalid("distortion needs at least two vectors".into()));
    }
    let d0 = vectors.ncols();
    let projected = random_project_vectors(vectors, target_dim, InitScheme::Heuristic, seed)?;
    let scale = (d0 as f64 / target_dim as f64).sqrt();
    let scaled = projected.mapv(|v| v * scale);

    let mut pairs = 0usize;
    let mut max_cos: f64 = 0.0;
    let mut sum_cos = 0.0;
    let mut within = 0usize;
    let mut sum_dot = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let before = cosine(vectors.row(i), vectors.row(j));
            let after = cosine(scaled.row(i), scaled.row(j));
            let delta = (after - before).abs();
            max_cos = max_cos.max(delta);
            sum_cos += delta;
            if delta <= eps {
                within += 1;
            }
            let dot_before = vectors.row(i).dot(&vectors.row(j));
            let dot_after = scaled.row(i).dot(&scaled.row(j));
            sum_dot += (dot_after - dot_before).abs();
            pairs += 1;
        }
    }
    Ok(JlStats {
        pairs,
        max_abs_cosine: max_cos,
        mean_abs_cosine: sum_cos / pairs as f64,
        fraction_within_eps: within as f64 / pairs as f64,
        eps,
        mean_abs_dot_scaled: sum_dot / pairs as f64,
    })
}

fn cosine(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(&b) / (na * nb)
}

/// Padded-pooling impact counts for one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct SparsedReport {
    pub total: usize,
    /// Examples whose padded-mode representation differs from length mode.
    pub sparsed: usize,
    pub per_class: Vec<ClassSparsed>,
    pub batch_size: usize,
    pub sort_mode: SortMode,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassSparsed {
    pub label: String,
    pub total: usize,
    pub sparsed: usize,
}

/// Encode every example in both padded and length modes under the stated
/// batching and count the examples whose representations differ, cross-
/// tabulated by class. Sparsing is a max-pooling phenomenon, so any other
/// pooling kind is rejected.
pub fn sparsed_stats(
    encoder: &Encoder,
    table: &EmbeddingTable,
    dataset: &TaskDataset,
    batch_size: usize,
    sort_mode: SortMode,
) -> Result<SparsedReport> {
    if encoder.pooling().kind != PoolKind::Max {
        return Err(Error::Invalid(
            "sparsed statistics need max pooling".into(),
        ));
    }
    let sentences: Vec<Vec<String>> = dataset
        .examples
        .iter()
        .map(|e| e.tokens.clone())
        .collect();
    let padded = encode_batch(encoder, table, &sentences, batch_size, sort_mode, PadMode::Padded)?;
    let length = encode_batch(encoder, table, &sentences, batch_size, sort_mode, PadMode::Length)?;

    let mut per_class: Vec<ClassSparsed> = dataset
        .labels()
        .iter()
        .map(|label| ClassSparsed {
            label: label.clone(),
            total: 0,
            sparsed: 0,
        })
        .collect();
    let mut sparsed = 0usize;
    for (i, example) in dataset.examples.iter().enumerate() {
        let differs = padded.row(i) != length.row(i);
        if differs {
            sparsed += 1;
        }
        if let Some(label) = &example.label {
            let idx = dataset.label_index(label).expect("frozen vocabulary");
            per_class[idx].total += 1;
            if differs {
                per_class[idx].sparsed += 1;
            }
        }
    }
    Ok(SparsedReport {
        total: dataset.len(),
        sparsed,
        per_class,
        batch_size,
        sort_mode,
    })
}

/// Synthetic probing-task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Which of K marked tokens appears in the sentence.
    WordContent,
    /// XOR of the presence of two marked tokens; not linearly separable over
    /// additive bag features.
    XorWords,
    /// Which of six equal-width length bins the sentence falls into.
    LengthBins,
    /// Whether two adjacent tokens were swapped relative to the source
    /// sentence.
    BigramShift,
}

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::WordContent => "word_content",
            SyntheticKind::XorWords => "xor_words",
            SyntheticKind::LengthBins => "length_bins",
            SyntheticKind::BigramShift => "bigram_shift",
        }
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word_content" => Ok(SyntheticKind::WordContent),
            "xor_words" => Ok(SyntheticKind::XorWords),
            "length_bins" => Ok(SyntheticKind::LengthBins),
            "bigram_shift" => Ok(SyntheticKind::BigramShift),
            other => Err(Error::Invalid(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

/// Generator parameters; `default_for` gives the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub examples: usize,
    /// Filler vocabulary size.
    pub vocab_size: usize,
    /// Number of marked tokens (word_content classes; fixed at 2 for xor).
    pub marked: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub embed_dim: usize,
    pub scheme: InitScheme,
    /// Norm factor applied to marked-token embeddings, mirroring the larger
    /// norms content words carry in real embedding spaces.
    pub marker_scale: f64,
}

impl SyntheticParams {
    pub fn default_for(kind: SyntheticKind) -> Self {
        match kind {
            SyntheticKind::WordContent => SyntheticParams {
                examples: 1500,
                vocab_size: 200,
                marked: 20,
                len_min: 5,
                len_max: 12,
                embed_dim: 16,
                scheme: InitScheme::Heuristic,
                marker_scale: 1.0,
            },
            SyntheticKind::XorWords => SyntheticParams {
                examples: 2400,
                vocab_size: 200,
                marked: 2,
                len_min: 20,
                len_max: 20,
                embed_dim: 16,
                scheme: InitScheme::Heuristic,
                marker_scale: 3.0,
            },
            SyntheticKind::LengthBins => SyntheticParams {
                examples: 1200,
                vocab_size: 100,
                marked: 0,
                len_min: 1,
                len_max: 12,
                embed_dim: 16,
                scheme: InitScheme::Heuristic,
                marker_scale: 1.0,
            },
            SyntheticKind::BigramShift => SyntheticParams {
                examples: 2000,
                vocab_size: 24,
                marked: 0,
                len_min: 4,
                len_max: 8,
                embed_dim: 16,
                scheme: InitScheme::Normal,
                marker_scale: 1.0,
            },
        }
    }
}

/// A generated dataset plus the random embedding table for its vocabulary.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub dataset: TaskDataset,
    pub table: EmbeddingTable,
}

fn split_for(index: usize) -> Split {
    match index % 10 {
        0..=6 => Split::Train,
        7 => Split::Dev,
        _ => Split::Test,
    }
}

/// Generate a synthetic task over a synthetic vocabulary, deterministically
/// in `(kind, params, seed)`.
pub fn gen_synthetic(
    kind: SyntheticKind,
    params: &SyntheticParams,
    seed: u64,
) -> Result<SyntheticTask> {
    if params.examples < 10 {
        return Err(Error::Invalid("need at least 10 examples".into()));
    }
    if params.vocab_size < 2 {
        return Err(Error::Invalid("need at least 2 filler tokens".into()));
    }
    if params.len_min == 0 || params.len_min > params.len_max {
        return Err(Error::Invalid("bad length range".into()));
    }
    let rng = SeededRng::new(seed, format!("synthetic/{}", kind.name()));
    let fillers: Vec<String> = (0..params.vocab_size).map(|i| format!("w{i}")).collect();

    let (examples, markers) = match kind {
        SyntheticKind::WordContent => gen_word_content(params, &fillers, &rng)?,
        SyntheticKind::XorWords => gen_xor_words(params, &fillers, &rng)?,
        SyntheticKind::LengthBins => gen_length_bins(params, &fillers, &rng)?,
        SyntheticKind::BigramShift => gen_bigram_shift(params, &fillers, &rng)?,
    };

    if params.marker_scale <= 0.0 {
        return Err(Error::Invalid("marker_scale must be positive".into()));
    }
    let marker_count = markers.len();
    let mut vocab = fillers;
    vocab.extend(markers);
    let table_seed = rng.labeled("table").stream().next_u64();
    let base =
        EmbeddingTable::generate_random(&vocab, params.embed_dim, params.scheme, table_seed)?;
    let table = if params.marker_scale != 1.0 && marker_count > 0 {
        let mut matrix = base.matrix().to_owned();
        for row in matrix.nrows() - marker_count..matrix.nrows() {
            matrix
                .row_mut(row)
                .mapv_inplace(|v| v * params.marker_scale);
        }
        EmbeddingTable::from_parts(
            vocab,
            matrix,
            crate::embeddings::TableSource::Random {
                scheme: params.scheme,
                seed: table_seed,
            },
        )?
    } else {
        base
    };
    let dataset = TaskDataset::from_examples(kind.name(), TaskKind::Probing, examples, None)?;
    Ok(SyntheticTask { dataset, table })
}

use rand::RngCore;

fn gen_word_content(
    params: &SyntheticParams,
    fillers: &[String],
    rng: &SeededRng,
) -> Result<(Vec<Example>, Vec<String>)> {
    if params.marked < 2 {
        return Err(Error::Invalid("word_content needs at least 2 marked tokens".into()));
    }
    let markers: Vec<String> = (0..params.marked).map(|i| format!("key{i}")).collect();
    let mut stream = rng.labeled("examples").stream();
    let mut examples = Vec::with_capacity(params.examples);
    for i in 0..params.examples {
        let len = stream.random_range(params.len_min..=params.len_max);
        let which = stream.random_range(0..params.marked);
        let pos = stream.random_range(0..len);
        let tokens: Vec<String> = (0..len)
            .map(|j| {
                if j == pos {
                    markers[which].clone()
                } else {
                    fillers[stream.random_range(0..fillers.len())].clone()
                }
            })
            .collect();
        examples.push(Example {
            tokens,
            tokens2: None,
            label: Some(markers[which].clone()),
            score: None,
            split: Some(split_for(i)),
        });
    }
    Ok((examples, markers))
}

fn gen_xor_words(
    params: &SyntheticParams,
    fillers: &[String],
    rng: &SeededRng,
) -> Result<(Vec<Example>, Vec<String>)> {
    if params.len_max < 3 {
        return Err(Error::Invalid("xor_words needs sentences of length >= 3".into()));
    }
    let markers = vec!["key0".to_string(), "key1".to_string()];
    let mut stream = rng.labeled("examples").stream();
    let mut examples = Vec::with_capacity(params.examples);
    for i in 0..params.examples {
        // round-robin over the four presence cells keeps the task balanced
        let cell = i % 4;
        let p0 = cell & 1 == 1;
        let p1 = cell & 2 == 2;
        let len = params.len_max;
        let mut tokens: Vec<String> = (0..len)
            .map(|_| fillers[stream.random_range(0..fillers.len())].clone())
            .collect();
        let pos0 = stream.random_range(0..len);
        let mut pos1 = stream.random_range(0..len);
        while pos1 == pos0 {
            pos1 = stream.random_range(0..len);
        }
        if p0 {
            tokens[pos0] = markers[0].clone();
        }
        if p1 {
            tokens[pos1] = markers[1].clone();
        }
        let label = if p0 ^ p1 { "1" } else { "0" };
        examples.push(Example {
            tokens,
            tokens2: None,
            label: Some(label.to_string()),
            score: None,
            split: Some(split_for(i)),
        });
    }
    Ok((examples, markers))
}

fn gen_length_bins(
    params: &SyntheticParams,
    fillers: &[String],
    rng: &SeededRng,
) -> Result<(Vec<Example>, Vec<String>)> {
    let span = params.len_max - params.len_min + 1;
    if span % 6 != 0 {
        return Err(Error::Invalid(format!(
            "length range of {span} does not divide into 6 equal-width bins"
        )));
    }
    let width = span / 6;
    let mut stream = rng.labeled("examples").stream();
    let mut examples = Vec::with_capacity(params.examples);
    for i in 0..params.examples {
        let len = stream.random_range(params.len_min..=params.len_max);
        let bin = (len - params.len_min) / width;
        let tokens: Vec<String> = (0..len)
            .map(|_| fillers[stream.random_range(0..fillers.len())].clone())
            .collect();
        examples.push(Example {
            tokens,
            tokens2: None,
            label: Some(bin.to_string()),
            score: None,
            split: Some(split_for(i)),
        });
    }
    Ok((examples, Vec::new()))
}

// Source sentences follow a canonical grammar: distinct tokens arranged in
// ascending vocabulary order. A shifted example therefore contains exactly one
// adjacent inversion while keeping the bag of tokens identical, which is what
// separates order-sensitive encoders from permutation-invariant ones.
fn gen_bigram_shift(
    params: &SyntheticParams,
    fillers: &[String],
    rng: &SeededRng,
) -> Result<(Vec<Example>, Vec<String>)> {
    if params.len_min < 2 {
        return Err(Error::Invalid("bigram_shift needs sentences of length >= 2".into()));
    }
    if params.len_max > params.vocab_size {
        return Err(Error::Invalid(
            "bigram_shift draws distinct tokens; vocab_size must be >= len_max".into(),
        ));
    }
    if params.examples % 2 != 0 {
        return Err(Error::Invalid("bigram_shift emits source/shifted pairs; use an even example count".into()));
    }
    let sources = params.examples / 2;
    let mut stream = rng.labeled("examples").stream();
    let mut examples = Vec::with_capacity(params.examples);
    for s in 0..sources {
        let len = stream.random_range(params.len_min..=params.len_max);
        let mut picks = rand::seq::index::sample(&mut stream, params.vocab_size, len).into_vec();
        picks.sort_unstable();
        let tokens: Vec<String> = picks.iter().map(|&i| fillers[i].clone()).collect();
        let p = stream.random_range(0..len - 1);
        push_pair(&mut examples, tokens, p, s);
    }
    Ok((examples, Vec::new()))
}

fn push_pair(examples: &mut Vec<Example>, tokens: Vec<String>, swap_at: usize, source: usize) {
    let split = Some(split_for(source));
    let mut shifted = tokens.clone();
    shifted.swap(swap_at, swap_at + 1);
    examples.push(Example {
        tokens,
        tokens2: None,
        label: Some("0".to_string()),
        score: None,
        split,
    });
    examples.push(Example {
        tokens: shifted,
        tokens2: None,
        label: Some("1".to_string()),
        score: None,
        split,
    });
}


#[cfg(test)]
mod paper_scale_tests {
    use super::*;

    #[test]
    fn projection_to_four_thousand_ninety_six_times_six_runs() {
        // 300 -> 24576, the largest dimension used in the sweeps
        let mut stream = SeededRng::new(2, "fullproj").stream();
        let vectors = Array2::from_shape_fn((3, 300), |_| stream.random_range(-1.0..1.0));
        let projected =
            random_project_vectors(vectors.view(), 24576, InitScheme::Heuristic, 11).unwrap();
        assert_eq!(projected.dim(), (3, 24576));
        assert!(projected.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sweep_accepts_the_standard_dimension_list() {
        let dims = [512usize, 1024, 2048, 4096, 8192, 12288, 24576];
        assert!(dims.windows(2).all(|w| w[0] < w[1]));
        for d in dims {
            assert_eq!(d % 2, 0);
        }
    }
}

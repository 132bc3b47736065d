//! Frozen random sentence encoders.
//!
//! Four families map a token matrix to a fixed-size sentence vector without
//! any training: pooling over raw embeddings (BOE), a single random projection
//! per word (BOREP), a randomly initialized bidirectional LSTM, and a
//! bidirectional echo state network. All parameters are drawn from labeled
//! streams of the config seed at build time and never change afterwards.

mod esn;
mod lstm;

pub use esn::EsnParams;
pub use lstm::{Direction, LstmParams};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingTable, TokenMatrix};
use crate::numerics::{init_matrix, InitScheme, SeededRng};
use crate::{Error, Result};

/// A pooled sentence representation.
pub type SentenceVector = Array1<f64>;

/// Reduction applied over per-token states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Mean,
    Sum,
}

impl PoolKind {
    pub fn name(&self) -> &'static str {
        match self {
            PoolKind::Max => "max",
            PoolKind::Mean => "mean",
            PoolKind::Sum => "sum",
        }
    }
}

impl std::str::FromStr for PoolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolKind::Max),
            "mean" => Ok(PoolKind::Mean),
            "sum" => Ok(PoolKind::Sum),
            other => Err(Error::Invalid(format!("unknown pooling `{other}`"))),
        }
    }
}

/// Whether pooling runs over the true sentence length or over the padded
/// batch length. `Padded` exists to reproduce the pooling-over-padding
/// diagnostic; `Length` is the default everywhere else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Length,
    Padded,
}

impl std::str::FromStr for PadMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "length" => Ok(PadMode::Length),
            "padded" => Ok(PadMode::Padded),
            other => Err(Error::Invalid(format!("unknown pad mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingSpec {
    pub kind: PoolKind,
    pub pad_mode: PadMode,
}

impl PoolingSpec {
    pub fn length(kind: PoolKind) -> Self {
        PoolingSpec {
            kind,
            pad_mode: PadMode::Length,
        }
    }
}

/// Elementwise activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::None => "none",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Activation::None),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Invalid(format!("unknown activation `{other}`"))),
        }
    }
}

/// Batch grouping order for [`encode_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortMode {
    SortedByLength,
    AsGiven,
}

impl std::str::FromStr for SortMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sorted_by_length" => Ok(SortMode::SortedByLength),
            "as_given" => Ok(SortMode::AsGiven),
            other => Err(Error::Invalid(format!("unknown sort mode `{other}`"))),
        }
    }
}

/// Encoder family plus its family-specific hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderFamily {
    /// Pooling over raw embeddings; no parameters, output dim equals input dim.
    Boe,
    /// One frozen random projection per word, optional elementwise relu.
    Borep { activation: Activation },
    /// Bidirectional LSTM with frozen random weights.
    RandLstm,
    /// Bidirectional echo state network.
    Esn {
        spectral_radius: f64,
        input_scale: f64,
        sparsity: f64,
        leak_rate: f64,
        activation: Activation,
    },
}

impl EncoderFamily {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EncoderFamily::Boe => "boe",
            EncoderFamily::Borep { .. } => "borep",
            EncoderFamily::RandLstm => "randlstm",
            EncoderFamily::Esn { .. } => "esn",
        }
    }
}

/// Everything needed to build a frozen encoder deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub family: EncoderFamily,
    /// Sentence vector dimension D. Must equal the input dim for BOE and be
    /// even for the recurrent families.
    pub output_dim: usize,
    /// Word embedding dimension d.
    pub input_dim: usize,
    pub init: InitScheme,
    pub pooling: PoolingSpec,
    pub seed: u64,
}

impl EncoderConfig {
    /// Compact `key=value` description used in reports.
    pub fn describe(&self) -> String {
        let mut s = format!(
            "family={} dim={} init={} pooling={}",
            self.family.kind_name(),
            self.output_dim,
            self.init,
            self.pooling.kind.name()
        );
        match &self.family {
            EncoderFamily::Boe | EncoderFamily::RandLstm => {}
            EncoderFamily::Borep { activation } => {
                s.push_str(&format!(" activation={}", activation.name()));
            }
            EncoderFamily::Esn {
                spectral_radius,
                input_scale,
                sparsity,
                leak_rate,
                activation,
            } => {
                s.push_str(&format!(
                    " rho={spectral_radius} input_scale={input_scale} sparsity={sparsity} leak={leak_rate} activation={}",
                    activation.name()
                ));
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct BoeParams {
    dim: usize,
    pooling: PoolingSpec,
}

#[derive(Debug, Clone)]
pub struct BorepParams {
    w: Array2<f64>,
    activation: Activation,
    pooling: PoolingSpec,
}

impl BorepParams {
    pub fn projection(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }
}

/// A built, frozen encoder.
#[derive(Debug, Clone)]
pub enum Encoder {
    Boe(BoeParams),
    Borep(BorepParams),
    RandLstm(LstmParams),
    Esn(EsnParams),
}

/// Draw all parameters for `config` from labeled streams of its seed.
pub fn build_encoder(config: &EncoderConfig) -> Result<Encoder> {
    if config.input_dim == 0 {
        return Err(Error::BadConfig("input dim must be positive".into()));
    }
    if config.output_dim == 0 {
        return Err(Error::BadConfig("output dim must be positive".into()));
    }
    let rng = SeededRng::new(config.seed, "encoder");
    match &config.family {
        EncoderFamily::Boe => {
            if config.output_dim != config.input_dim {
                return Err(Error::BadConfig(format!(
                    "boe output dim {} must equal the embedding dim {}",
                    config.output_dim, config.input_dim
                )));
            }
            Ok(Encoder::Boe(BoeParams {
                dim: config.input_dim,
                pooling: config.pooling,
            }))
        }
        EncoderFamily::Borep { activation } => {
            let w = init_matrix(
                config.output_dim,
                config.input_dim,
                config.init,
                &rng.labeled("borep/W"),
            );
            Ok(Encoder::Borep(BorepParams {
                w,
                activation: *activation,
                pooling: config.pooling,
            }))
        }
        EncoderFamily::RandLstm => {
            if config.output_dim % 2 != 0 {
                return Err(Error::OddDimension(config.output_dim));
            }
            Ok(Encoder::RandLstm(lstm::build(config, &rng)?))
        }
        EncoderFamily::Esn { .. } => {
            if config.output_dim % 2 != 0 {
                return Err(Error::OddDimension(config.output_dim));
            }
            Ok(Encoder::Esn(esn::build(config, &rng)?))
        }
    }
}

impl Encoder {
    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::Boe(p) => p.dim,
            Encoder::Borep(p) => p.w.nrows(),
            Encoder::RandLstm(p) => p.output_dim(),
            Encoder::Esn(p) => p.output_dim(),
        }
    }

    pub fn pooling(&self) -> PoolingSpec {
        match self {
            Encoder::Boe(p) => p.pooling,
            Encoder::Borep(p) => p.pooling,
            Encoder::RandLstm(p) => p.pooling(),
            Encoder::Esn(p) => p.pooling(),
        }
    }

    /// Per-position representations, one row per token. For the recurrent
    /// families each row is the concatenation `[h_fwd_i ; h_bwd_i]`.
    pub fn states(&self, tokens: &TokenMatrix) -> Result<Array2<f64>> {
        let expected = match self {
            Encoder::Boe(p) => p.dim,
            Encoder::Borep(p) => p.w.ncols(),
            Encoder::RandLstm(p) => p.input_dim(),
            Encoder::Esn(p) => p.input_dim(),
        };
        if tokens.dim() != expected {
            return Err(Error::DimMismatch {
                expected,
                found: tokens.dim(),
            });
        }
        Ok(match self {
            Encoder::Boe(_) => tokens.rows().to_owned(),
            Encoder::Borep(p) => {
                let mut projected = tokens.rows().dot(&p.w.t());
                if p.activation != Activation::None {
                    projected.mapv_inplace(|v| p.activation.apply(v));
                }
                projected
            }
            Encoder::RandLstm(p) => p.run(tokens),
            Encoder::Esn(p) => p.run(tokens),
        })
    }

    /// Encode one sentence with the encoder's pooling over its true length.
    pub fn encode(&self, tokens: &TokenMatrix) -> Result<SentenceVector> {
        let states = self.states(tokens)?;
        pool(states.view(), self.pooling(), tokens.len())
    }
}

/// Pool `states` down to one vector.
///
/// `Length` mode reduces over exactly the given rows. `Padded` mode behaves as
/// if `n_max - n` all-zero rows were appended first: the mean divisor becomes
/// `n_max` and a max pool saturates negative coordinates at zero. Reductions
/// are order-canonical, so permuting the rows of `states` can never change a
/// single output bit.
pub fn pool(states: ArrayView2<'_, f64>, spec: PoolingSpec, n_max: usize) -> Result<SentenceVector> {
    let n = states.nrows();
    let dim = states.ncols();
    if n > n_max {
        return Err(Error::BadPadLength { n, n_max });
    }
    let mut out = Array1::zeros(dim);
    if n == 0 {
        return Ok(out);
    }
    let padded = spec.pad_mode == PadMode::Padded && n_max > n;
    let mut column: Vec<f64> = Vec::with_capacity(n);
    for j in 0..dim {
        column.clear();
        column.extend(states.column(j).iter().copied());
        out[j] = match spec.kind {
            PoolKind::Max => {
                let m = column
                    .iter()
                    .copied()
                    .max_by(|a, b| a.total_cmp(b))
                    .expect("non-empty column");
                if padded && 0.0f64.total_cmp(&m).is_gt() {
                    0.0
                } else {
                    m
                }
            }
            PoolKind::Sum | PoolKind::Mean => {
                column.sort_unstable_by(|a, b| a.total_cmp(b));
                let mut sum: f64 = column.iter().sum();
                if padded {
                    sum += 0.0;
                }
                match spec.kind {
                    PoolKind::Sum => sum,
                    PoolKind::Mean => {
                        let divisor = if spec.pad_mode == PadMode::Padded {
                            n_max
                        } else {
                            n
                        };
                        sum / divisor as f64
                    }
                    PoolKind::Max => unreachable!(),
                }
            }
        };
    }
    Ok(out)
}

/// Encode a corpus under explicit batching semantics.
///
/// In `Length` pad mode the output is a pure per-sentence function: batch size
/// and sort order cannot affect any row. In `Padded` mode each batch pools
/// over the length of its longest member, so grouping is part of the input.
/// Rows are always returned in the original sentence order.
pub fn encode_batch<S: AsRef<str> + Sync>(
    encoder: &Encoder,
    table: &EmbeddingTable,
    sentences: &[Vec<S>],
    batch_size: usize,
    sort_mode: SortMode,
    pad_mode: PadMode,
) -> Result<Array2<f64>> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    if sort_mode == SortMode::SortedByLength {
        order.sort_by_key(|&i| sentences[i].len());
    }
    let spec = PoolingSpec {
        kind: encoder.pooling().kind,
        pad_mode,
    };
    let mut out = Array2::zeros((sentences.len(), encoder.output_dim()));
    for chunk in order.chunks(batch_size) {
        let n_max = chunk
            .iter()
            .map(|&i| sentences[i].len())
            .max()
            .unwrap_or(0);
        for &i in chunk {
            let tokens = table.embed_sentence(&sentences[i]);
            let states = encoder.states(&tokens)?;
            let n_max = match pad_mode {
                PadMode::Length => tokens.len(),
                PadMode::Padded => n_max,
            };
            let vec = pool(states.view(), spec, n_max)?;
            out.row_mut(i).assign(&vec);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EmbeddingTable;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_table() -> EmbeddingTable {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, "a 1 0\nb 0 1\nc -1 2\nd 2 -1\n").unwrap();
        crate::embeddings::load_embeddings(&path, None).unwrap()
    }

    fn identity_borep(pooling: PoolingSpec, activation: Activation) -> Encoder {
        Encoder::Borep(BorepParams {
            w: Array2::eye(2),
            activation,
            pooling,
        })
    }

    #[test]
    fn pool_examples_from_all_modes() {
        let states = array![[1.0, -2.0], [3.0, -1.0]];
        let max_len = pool(
            states.view(),
            PoolingSpec { kind: PoolKind::Max, pad_mode: PadMode::Length },
            2,
        )
        .unwrap();
        assert_eq!(max_len, array![3.0, -1.0]);

        let max_pad = pool(
            states.view(),
            PoolingSpec { kind: PoolKind::Max, pad_mode: PadMode::Padded },
            3,
        )
        .unwrap();
        assert_eq!(max_pad, array![3.0, 0.0]);

        let mean_len = pool(
            states.view(),
            PoolingSpec { kind: PoolKind::Mean, pad_mode: PadMode::Length },
            2,
        )
        .unwrap();
        assert_eq!(mean_len, array![2.0, -1.5]);

        let mean_pad = pool(
            states.view(),
            PoolingSpec { kind: PoolKind::Mean, pad_mode: PadMode::Padded },
            4,
        )
        .unwrap();
        assert_eq!(mean_pad, array![1.0, -0.75]);
    }

    #[test]
    fn pool_rejects_n_above_n_max() {
        let states = array![[1.0], [2.0]];
        assert!(matches!(
            pool(states.view(), PoolingSpec::length(PoolKind::Max), 1),
            Err(Error::BadPadLength { .. })
        ));
    }

    #[test]
    fn pool_empty_states_is_zero() {
        let states = Array2::<f64>::zeros((0, 3));
        for kind in [PoolKind::Max, PoolKind::Mean, PoolKind::Sum] {
            let v = pool(states.view(), PoolingSpec::length(kind), 0).unwrap();
            assert_eq!(v, array![0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn padded_max_never_exceeds_length_value_and_zeroes_negatives() {
        let states = array![[-1.0, 0.5], [-3.0, 0.25]];
        let length = pool(states.view(), PoolingSpec { kind: PoolKind::Max, pad_mode: PadMode::Length }, 2).unwrap();
        let padded = pool(states.view(), PoolingSpec { kind: PoolKind::Max, pad_mode: PadMode::Padded }, 5).unwrap();
        assert_eq!(length, array![-1.0, 0.5]);
        assert_eq!(padded, array![0.0, 0.5]);
    }

    #[test]
    fn borep_identity_mean() {
        let table = toy_table();
        let enc = identity_borep(PoolingSpec::length(PoolKind::Mean), Activation::None);
        let v = enc.encode(&table.embed_sentence(&["a", "b"])).unwrap();
        assert_eq!(v, array![0.5, 0.5]);
    }

    #[test]
    fn borep_relu_clamps_single_token() {
        let table = toy_table();
        let enc = identity_borep(PoolingSpec::length(PoolKind::Max), Activation::Relu);
        let v = enc.encode(&table.embed_sentence(&["c"])).unwrap();
        assert_eq!(v, array![0.0, 2.0]);
    }

    #[test]
    fn borep_linearity_with_sum_pooling() {
        // with no activation, projection commutes with linear pooling
        let rng = SeededRng::new(4, "t");
        let w = init_matrix(6, 2, InitScheme::Heuristic, &rng);
        let enc = Encoder::Borep(BorepParams {
            w: w.clone(),
            activation: Activation::None,
            pooling: PoolingSpec::length(PoolKind::Sum),
        });
        let table = toy_table();
        let tokens = table.embed_sentence(&["a", "b", "c", "d", "a"]);
        let encoded = enc.encode(&tokens).unwrap();
        let summed = tokens.rows().sum_axis(ndarray::Axis(0));
        let direct = w.dot(&summed);
        for (a, b) in encoded.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn boe_and_borep_are_bitwise_permutation_invariant() {
        let table = toy_table();
        let sentence = ["a", "b", "c", "d", "a", "c", "b"];
        let permuted = ["c", "a", "b", "a", "d", "b", "c"];
        for kind in [PoolKind::Max, PoolKind::Mean, PoolKind::Sum] {
            let boe = Encoder::Boe(BoeParams { dim: 2, pooling: PoolingSpec::length(kind) });
            let v1 = boe.encode(&table.embed_sentence(&sentence)).unwrap();
            let v2 = boe.encode(&table.embed_sentence(&permuted)).unwrap();
            let bits1: Vec<u64> = v1.iter().map(|v| v.to_bits()).collect();
            let bits2: Vec<u64> = v2.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits1, bits2, "boe {kind:?}");

            let rng = SeededRng::new(17, "perm");
            let w = init_matrix(32, 2, InitScheme::Heuristic, &rng);
            let borep = Encoder::Borep(BorepParams {
                w,
                activation: Activation::Relu,
                pooling: PoolingSpec::length(kind),
            });
            let v1 = borep.encode(&table.embed_sentence(&sentence)).unwrap();
            let v2 = borep.encode(&table.embed_sentence(&permuted)).unwrap();
            let bits1: Vec<u64> = v1.iter().map(|v| v.to_bits()).collect();
            let bits2: Vec<u64> = v2.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits1, bits2, "borep {kind:?}");
        }
    }

    #[test]
    fn empty_sentence_encodes_to_zero_for_all_families() {
        let table = toy_table();
        let empty: Vec<&str> = vec![];
        let tokens = table.embed_sentence(&empty);
        let configs = [
            EncoderConfig {
                family: EncoderFamily::Boe,
                output_dim: 2,
                input_dim: 2,
                init: InitScheme::Heuristic,
                pooling: PoolingSpec::length(PoolKind::Max),
                seed: 1,
            },
            EncoderConfig {
                family: EncoderFamily::Borep { activation: Activation::Relu },
                output_dim: 8,
                input_dim: 2,
                init: InitScheme::Heuristic,
                pooling: PoolingSpec::length(PoolKind::Mean),
                seed: 1,
            },
            EncoderConfig {
                family: EncoderFamily::RandLstm,
                output_dim: 8,
                input_dim: 2,
                init: InitScheme::Heuristic,
                pooling: PoolingSpec::length(PoolKind::Max),
                seed: 1,
            },
            EncoderConfig {
                family: EncoderFamily::Esn {
                    spectral_radius: 0.8,
                    input_scale: 0.1,
                    sparsity: 0.5,
                    leak_rate: 1.0,
                    activation: Activation::Relu,
                },
                output_dim: 8,
                input_dim: 2,
                init: InitScheme::Heuristic,
                pooling: PoolingSpec::length(PoolKind::Max),
                seed: 1,
            },
        ];
        for config in &configs {
            let enc = build_encoder(config).unwrap();
            let v = enc.encode(&tokens).unwrap();
            assert!(v.iter().all(|x| *x == 0.0), "{}", config.describe());
            assert_eq!(v.len(), enc.output_dim());
        }
    }

    #[test]
    fn build_is_deterministic_per_family() {
        let config = EncoderConfig {
            family: EncoderFamily::Esn {
                spectral_radius: 0.8,
                input_scale: 0.1,
                sparsity: 0.5,
                leak_rate: 1.0,
                activation: Activation::None,
            },
            output_dim: 8,
            input_dim: 2,
            init: InitScheme::Heuristic,
            pooling: PoolingSpec::length(PoolKind::Max),
            seed: 3,
        };
        let table = toy_table();
        let tokens = table.embed_sentence(&["a", "c", "d"]);
        let e1 = build_encoder(&config).unwrap();
        let e2 = build_encoder(&config).unwrap();
        let v1 = e1.encode(&tokens).unwrap();
        let v2 = e2.encode(&tokens).unwrap();
        let bits1: Vec<u64> = v1.iter().map(|v| v.to_bits()).collect();
        let bits2: Vec<u64> = v2.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits1, bits2);
    }

    #[test]
    fn recurrent_families_reject_odd_dims() {
        let config = EncoderConfig {
            family: EncoderFamily::RandLstm,
            output_dim: 7,
            input_dim: 2,
            init: InitScheme::Heuristic,
            pooling: PoolingSpec::length(PoolKind::Max),
            seed: 3,
        };
        assert!(matches!(build_encoder(&config), Err(Error::OddDimension(7))));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let table = toy_table();
        let enc = identity_borep(PoolingSpec::length(PoolKind::Max), Activation::None);
        let bad = TokenMatrix::new(Array2::zeros((2, 5)));
        assert!(matches!(enc.states(&bad), Err(Error::DimMismatch { .. })));
        let _ = table;
    }

    #[test]
    fn length_mode_batches_are_grouping_independent() {
        let table = toy_table();
        let sentences: Vec<Vec<String>> = vec![
            vec!["a".into(), "b".into()],
            vec!["c".into()],
            vec!["d".into(), "a".into(), "b".into(), "c".into()],
            vec!["b".into(), "b".into()],
        ];
        let rng = SeededRng::new(11, "batch");
        let enc = Encoder::Borep(BorepParams {
            w: init_matrix(6, 2, InitScheme::Heuristic, &rng),
            activation: Activation::None,
            pooling: PoolingSpec::length(PoolKind::Max),
        });
        let a = encode_batch(&enc, &table, &sentences, 1, SortMode::AsGiven, PadMode::Length).unwrap();
        let b = encode_batch(&enc, &table, &sentences, 64, SortMode::SortedByLength, PadMode::Length).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn padded_mode_depends_on_grouping() {
        let table = toy_table();
        // short sentence with an all-negative feature in some coordinate,
        // long sentence to stretch n_max
        let sentences: Vec<Vec<String>> = vec![
            vec!["c".into(), "c".into()],
            vec!["a".into(), "b".into(), "a".into(), "b".into(), "a".into()],
        ];
        let enc = identity_borep(
            PoolingSpec::length(PoolKind::Max),
            Activation::None,
        );
        let together = encode_batch(&enc, &table, &sentences, 2, SortMode::AsGiven, PadMode::Padded).unwrap();
        let separate = encode_batch(&enc, &table, &sentences, 1, SortMode::AsGiven, PadMode::Padded).unwrap();
        // coordinate 0 of sentence "c c" pools max(-1, -1) = -1 alone but 0 when padded
        assert_eq!(separate[[0, 0]], -1.0);
        assert_eq!(together[[0, 0]], 0.0);
        assert_ne!(together.row(0), separate.row(0));
        // the long sentence is its batch's n_max either way
        assert_eq!(together.row(1), separate.row(1));
    }

    #[test]
    fn sorted_vs_as_given_differ_under_padding() {
        let table = toy_table();
        // crafted 4-sentence corpus: grouping changes under sorting
        let sentences: Vec<Vec<String>> = vec![
            vec!["c".into(), "c".into(), "c".into(), "c".into(), "c".into()],
            vec!["c".into()],
            vec!["c".into(), "c".into()],
            vec!["c".into(), "c".into(), "c".into(), "c".into(), "c".into(), "c".into()],
        ];
        let enc = identity_borep(PoolingSpec::length(PoolKind::Max), Activation::None);
        let sorted = encode_batch(&enc, &table, &sentences, 2, SortMode::SortedByLength, PadMode::Padded).unwrap();
        let unsorted = encode_batch(&enc, &table, &sentences, 2, SortMode::AsGiven, PadMode::Padded).unwrap();
        assert_ne!(sorted, unsorted);
    }
}

//! Shared fixtures for the criterion benchmarks.

use randenc_core::embeddings::EmbeddingTable;
use randenc_core::encoders::{
    build_encoder, Activation, Encoder, EncoderConfig, EncoderFamily, PoolKind, PoolingSpec,
};
use randenc_core::numerics::{InitScheme, SeededRng};

pub const EMBED_DIM: usize = 64;
pub const SEED: u64 = 2024;

/// A deterministic synthetic corpus of `count` sentences over `vocab` tokens.
pub fn corpus(count: usize, vocab: usize, max_len: usize) -> (EmbeddingTable, Vec<Vec<String>>) {
    use rand::Rng;
    let tokens: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    let table = EmbeddingTable::generate_random(&tokens, EMBED_DIM, InitScheme::Normal, SEED)
        .expect("valid vocab");
    let mut stream = SeededRng::new(SEED, "bench/corpus").stream();
    let sentences = (0..count)
        .map(|_| {
            let len = stream.random_range(1..=max_len);
            (0..len)
                .map(|_| tokens[stream.random_range(0..vocab)].clone())
                .collect()
        })
        .collect();
    (table, sentences)
}

pub fn encoder(family: &str, dim: usize) -> Encoder {
    let family = match family {
        "boe" => EncoderFamily::Boe,
        "borep" => EncoderFamily::Borep {
            activation: Activation::Relu,
        },
        "randlstm" => EncoderFamily::RandLstm,
        "esn" => EncoderFamily::Esn {
            spectral_radius: 0.8,
            input_scale: 0.1,
            sparsity: 0.5,
            leak_rate: 1.0,
            activation: Activation::Relu,
        },
        other => panic!("unknown family {other}"),
    };
    let output_dim = if matches!(family, EncoderFamily::Boe) {
        EMBED_DIM
    } else {
        dim
    };
    build_encoder(&EncoderConfig {
        family,
        output_dim,
        input_dim: EMBED_DIM,
        init: InitScheme::Heuristic,
        pooling: PoolingSpec::length(PoolKind::Max),
        seed: SEED,
    })
    .expect("valid config")
}

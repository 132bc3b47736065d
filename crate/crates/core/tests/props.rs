//! Property tests for the contracts that hold over whole input spaces rather
//! than single examples.

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use randenc_core::classifier::{build_features, expected_score, score_to_distribution, FeatureMode};
use randenc_core::embeddings::EmbeddingTable;
use randenc_core::encoders::{
    build_encoder, encode_batch, pool, Activation, EncoderConfig, EncoderFamily, PadMode,
    PoolKind, PoolingSpec, SortMode,
};
use randenc_core::harness::make_folds;
use randenc_core::numerics::{init_matrix, orthogonalize, sparsify, InitScheme, SeededRng};
use randenc_core::vecio;

fn arb_states(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn bits(v: &Array1<f64>) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    /// Pooling output never depends on row order, down to the last bit.
    #[test]
    fn pool_is_bitwise_permutation_invariant(
        rows in 1usize..12,
        cols in 1usize..6,
        seed in 0u64..1000,
        kind_idx in 0usize..3,
    ) {
        let states = {
            let rng = SeededRng::new(seed, "props/pool");
            init_matrix(rows, cols, InitScheme::Normal, &rng)
        };
        let mut order: Vec<usize> = (0..rows).collect();
        let mut stream = SeededRng::new(seed, "props/perm").stream();
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream);
        let mut permuted = Array2::zeros((rows, cols));
        for (to, &from) in order.iter().enumerate() {
            permuted.row_mut(to).assign(&states.row(from));
        }
        let kind = [PoolKind::Max, PoolKind::Mean, PoolKind::Sum][kind_idx];
        for pad_mode in [PadMode::Length, PadMode::Padded] {
            let spec = PoolingSpec { kind, pad_mode };
            let a = pool(states.view(), spec, rows + 2).unwrap();
            let b = pool(permuted.view(), spec, rows + 2).unwrap();
            prop_assert_eq!(bits(&a), bits(&b));
        }
    }

    /// Padded max pooling equals length mode except that all-negative
    /// coordinates saturate at zero.
    #[test]
    fn padded_max_saturates_negatives(states in arb_states(5, 4), extra in 1usize..4) {
        let length = pool(states.view(), PoolingSpec { kind: PoolKind::Max, pad_mode: PadMode::Length }, 5).unwrap();
        let padded = pool(states.view(), PoolingSpec { kind: PoolKind::Max, pad_mode: PadMode::Padded }, 5 + extra).unwrap();
        for j in 0..4 {
            if length[j] >= 0.0 {
                prop_assert_eq!(padded[j], length[j]);
            } else {
                prop_assert_eq!(padded[j], 0.0);
            }
        }
    }

    /// The two mean-pooling divisors describe the same sum.
    #[test]
    fn mean_divisors_are_consistent(states in arb_states(6, 3), extra in 0usize..5) {
        let n = 6.0;
        let n_max = 6.0 + extra as f64;
        let length = pool(states.view(), PoolingSpec { kind: PoolKind::Mean, pad_mode: PadMode::Length }, 6).unwrap();
        let padded = pool(states.view(), PoolingSpec { kind: PoolKind::Mean, pad_mode: PadMode::Padded }, 6 + extra).unwrap();
        for j in 0..3 {
            prop_assert!((length[j] * n - padded[j] * n_max).abs() < 1e-9);
        }
    }

    /// Pair features are symmetric in their arguments.
    #[test]
    fn pair_related_features_are_symmetric(
        u in proptest::collection::vec(-5.0f64..5.0, 6),
        v in proptest::collection::vec(-5.0f64..5.0, 6),
    ) {
        let u = Array1::from_vec(u);
        let v = Array1::from_vec(v);
        let uv = build_features(FeatureMode::PairRelated, u.view(), Some(v.view())).unwrap();
        let vu = build_features(FeatureMode::PairRelated, v.view(), Some(u.view())).unwrap();
        prop_assert_eq!(bits(&uv), bits(&vu));
    }

    /// Splitting a score over neighboring support points preserves its
    /// expectation.
    #[test]
    fn score_distribution_round_trips(score in 1.0f64..5.0) {
        let support = [1.0, 2.0, 3.0, 4.0, 5.0];
        let dist = score_to_distribution(score, &support).unwrap();
        prop_assert!((expected_score(&dist, &support) - score).abs() < 1e-9);
        prop_assert!((dist.sum() - 1.0).abs() < 1e-12);
        prop_assert_eq!(dist.iter().filter(|p| **p > 0.0).count() <= 2, true);
    }

    /// Sparsification zeroes exactly the requested count and nothing else.
    #[test]
    fn sparsify_touches_exactly_the_sampled_entries(
        rows in 1usize..9,
        cols in 1usize..9,
        numerator in 0usize..4,
        seed in 0u64..500,
    ) {
        let fraction = numerator as f64 * 0.25;
        let rng = SeededRng::new(seed, "props/sparsify");
        let m = init_matrix(rows, cols, InitScheme::Normal, &rng);
        let s = sparsify(&m, fraction, &rng.labeled("mask")).unwrap();
        let zeroed = (fraction * (rows * cols) as f64).round() as usize;
        let mut changed = 0usize;
        for (a, b) in m.iter().zip(s.iter()) {
            if a != b {
                prop_assert_eq!(*b, 0.0);
                changed += 1;
            }
        }
        // entries that were already exactly zero cannot be told apart
        prop_assert!(changed <= zeroed);
        prop_assert_eq!(s.iter().filter(|v| **v == 0.0).count() >= zeroed, true);
        prop_assert_eq!(&s, &sparsify(&m, fraction, &rng.labeled("mask")).unwrap());
    }

    /// Folds partition the index range with sizes differing by at most one.
    #[test]
    fn folds_partition_everything(n in 4usize..80, k in 2usize..8, seed in 0u64..100) {
        prop_assume!(n >= k);
        let folds = make_folds(n, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        let min = sizes.iter().min().unwrap();
        let max = sizes.iter().max().unwrap();
        prop_assert!(max - min <= 1);
    }

    /// Orthogonalization always produces an orthonormal short side.
    #[test]
    fn orthogonalize_output_is_orthonormal(rows in 1usize..12, cols in 1usize..12, seed in 0u64..200) {
        let rng = SeededRng::new(seed, "props/ortho");
        let m = init_matrix(rows, cols, InitScheme::Normal, &rng);
        let q = orthogonalize(&m).unwrap();
        let gram = if rows <= cols { q.dot(&q.t()) } else { q.t().dot(&q) };
        for a in 0..gram.nrows() {
            for b in 0..gram.ncols() {
                let expected = if a == b { 1.0 } else { 0.0 };
                prop_assert!((gram[[a, b]] - expected).abs() < 1e-6);
            }
        }
    }

    /// The binary vector format round-trips f32-representable values exactly.
    #[test]
    fn vecio_round_trips_f32_values(rows in 1usize..6, cols in 1usize..6, seed in 0u64..200) {
        let rng = SeededRng::new(seed, "props/vecio");
        let m = init_matrix(rows, cols, InitScheme::Normal, &rng).mapv(|v| v as f32 as f64);
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("m");
        vecio::write_matrix(&base, m.view()).unwrap();
        let back = vecio::read_matrix(&base).unwrap();
        prop_assert_eq!(m, back);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Length-mode batch encoding is a pure per-sentence function.
    #[test]
    fn length_mode_is_batching_invariant(
        seed in 0u64..50,
        batch_a in 1usize..5,
        batch_b in 5usize..40,
        family_idx in 0usize..3,
    ) {
        let vocab: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
        let table = EmbeddingTable::generate_random(&vocab, 6, InitScheme::Normal, seed).unwrap();
        let mut stream = SeededRng::new(seed, "props/batch").stream();
        use rand::Rng;
        let sentences: Vec<Vec<String>> = (0..12)
            .map(|_| {
                let len = stream.random_range(0..8usize);
                (0..len).map(|_| vocab[stream.random_range(0..12)].clone()).collect()
            })
            .collect();
        let family = match family_idx {
            0 => EncoderFamily::Borep { activation: Activation::Relu },
            1 => EncoderFamily::RandLstm,
            _ => EncoderFamily::Esn {
                spectral_radius: 0.8,
                input_scale: 0.1,
                sparsity: 0.25,
                leak_rate: 1.0,
                activation: Activation::None,
            },
        };
        let encoder = build_encoder(&EncoderConfig {
            family,
            output_dim: 16,
            input_dim: 6,
            init: InitScheme::Heuristic,
            pooling: PoolingSpec::length(PoolKind::Max),
            seed,
        })
        .unwrap();
        let a = encode_batch(&encoder, &table, &sentences, batch_a, SortMode::AsGiven, PadMode::Length).unwrap();
        let b = encode_batch(&encoder, &table, &sentences, batch_b, SortMode::SortedByLength, PadMode::Length).unwrap();
        let bits_a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(bits_a, bits_b);
    }
}

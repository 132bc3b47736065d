//! Runnable invariant suites, one report line per check. These re-verify the
//! numeric core against the reference implementations in [`crate::oracle`]
//! without touching any dataset on disk.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::classifier::{loss_and_gradient, LinearHead, Targets};
use crate::diagnostics::{gen_synthetic, jl_distortion, SyntheticKind, SyntheticParams};
use crate::embeddings::EmbeddingTable;
use crate::encoders::{
    build_encoder, encode_batch, Activation, Encoder, EncoderConfig, EncoderFamily, PadMode,
    PoolKind, PoolingSpec, SortMode,
};
use crate::numerics::{
    estimate_spectral_radius, init_matrix, orthogonalize, scale_spectral_radius, sparsify,
    InitScheme, SeededRng,
};
use crate::oracle;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckReport {
            name,
            passed,
            detail,
        }
    }
}

/// Run every invariant suite with streams derived from `seed`.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    vec![
        check_orthogonality(seed),
        check_radius_estimator(seed),
        check_radius_scaling(seed),
        check_sparsify(seed),
        check_echo_state_property(seed),
        check_gradients(seed),
        check_permutation_invariance(seed),
        check_projection_distortion(seed),
        check_padded_pooling(seed),
    ]
}

fn check_orthogonality(seed: u64) -> CheckReport {
    let rng = SeededRng::new(seed, "selfcheck/ortho");
    let shapes: [(usize, usize); 20] = [
        (1, 1),
        (2, 2),
        (3, 5),
        (5, 3),
        (4, 4),
        (7, 2),
        (2, 7),
        (8, 8),
        (6, 12),
        (12, 6),
        (9, 9),
        (10, 3),
        (3, 10),
        (16, 16),
        (13, 20),
        (20, 13),
        (24, 24),
        (17, 31),
        (31, 17),
        (32, 32),
    ];
    let mut worst: f64 = 0.0;
    for (i, (r, c)) in shapes.iter().enumerate() {
        let m = init_matrix(*r, *c, InitScheme::Heuristic, &rng.labeled(&i.to_string()));
        let q = match orthogonalize(&m) {
            Ok(q) => q,
            Err(e) => return CheckReport::new("orthogonality", false, e.to_string()),
        };
        let gram = if r <= c { q.dot(&q.t()) } else { q.t().dot(&q) };
        let n = gram.nrows();
        for a in 0..n {
            for b in 0..n {
                let expected = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((gram[[a, b]] - expected).abs());
            }
        }
    }
    CheckReport::new(
        "orthogonality",
        worst < 1e-6,
        format!("max |Q'Q - I| = {worst:.2e} over 20 shapes (tolerance 1e-6)"),
    )
}

fn check_radius_estimator(seed: u64) -> CheckReport {
    let rng = SeededRng::new(seed, "selfcheck/radius");
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = 4 + (i * 3) % 61; // sizes spread over 4..=64
        let scheme = match i % 3 {
            0 => InitScheme::Heuristic,
            1 => InitScheme::Normal,
            _ => InitScheme::Uniform,
        };
        let m = init_matrix(n, n, scheme, &rng.labeled(&i.to_string()));
        let est = match estimate_spectral_radius(&m, 1e-5, 40_000) {
            Ok(e) => e,
            Err(e) => return CheckReport::new("spectral-radius", false, e.to_string()),
        };
        let truth = oracle::dense_spectral_radius(&m);
        let rel = (est.radius - truth).abs() / truth.max(1.0);
        worst = worst.max(rel);
    }
    CheckReport::new(
        "spectral-radius",
        worst <= 1e-3,
        format!("max relative error vs dense oracle = {worst:.2e} over 20 matrices (tolerance 1e-3)"),
    )
}

fn check_radius_scaling(seed: u64) -> CheckReport {
    let rng = SeededRng::new(seed, "selfcheck/scaling");
    let mut worst: f64 = 0.0;
    for (i, target) in [0.4, 0.6, 0.8, 1.0].iter().enumerate() {
        let m = init_matrix(48, 48, InitScheme::Heuristic, &rng.labeled(&i.to_string()));
        let sparse = match sparsify(&m, 0.5, &rng.labeled(&format!("s{i}"))) {
            Ok(s) => s,
            Err(e) => return CheckReport::new("radius-scaling", false, e.to_string()),
        };
        let scaled = match scale_spectral_radius(&sparse, *target) {
            Ok(s) => s,
            Err(e) => return CheckReport::new("radius-scaling", false, e.to_string()),
        };
        let measured = oracle::dense_spectral_radius(&scaled);
        worst = worst.max((measured - target).abs() / target);
    }
    CheckReport::new(
        "radius-scaling",
        worst <= 1e-3,
        format!("max relative target error = {worst:.2e} over grid {{0.4, 0.6, 0.8, 1.0}}"),
    )
}

fn check_sparsify(seed: u64) -> CheckReport {
    let rng = SeededRng::new(seed, "selfcheck/sparsify");
    let m = Array2::<f64>::ones((20, 20));
    for fraction in [0.0, 0.25, 0.5, 0.75] {
        let s = match sparsify(&m, fraction, &rng.labeled(&fraction.to_string())) {
            Ok(s) => s,
            Err(e) => return CheckReport::new("sparsify", false, e.to_string()),
        };
        let zeros = s.iter().filter(|v| **v == 0.0).count();
        let expected = (fraction * 400.0).round() as usize;
        if zeros != expected {
            return CheckReport::new(
                "sparsify",
                false,
                format!("fraction {fraction}: {zeros} zeros, expected {expected}"),
            );
        }
    }
    CheckReport::new("sparsify", true, "zero counts exact for fractions {0, .25, .5, .75}".into())
}

fn check_echo_state_property(seed: u64) -> CheckReport {
    let mut worst: f64 = 0.0;
    for rho in [0.4, 0.6, 0.8] {
        for activation in [Activation::Relu, Activation::None] {
            let mut ratios = Vec::new();
            for s in 0..5 {
                let config = EncoderConfig {
                    family: EncoderFamily::Esn {
                        spectral_radius: rho,
                        input_scale: 0.1,
                        sparsity: 0.5,
                        leak_rate: 1.0,
                        activation,
                    },
                    output_dim: 64,
                    input_dim: 8,
                    init: InitScheme::Heuristic,
                    pooling: PoolingSpec::length(PoolKind::Max),
                    seed: seed + s,
                };
                let params = match build_encoder(&config) {
                    Ok(Encoder::Esn(p)) => p,
                    Ok(_) => unreachable!(),
                    Err(e) => return CheckReport::new("echo-state-property", false, e.to_string()),
                };
                let vocab: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
                let table =
                    EmbeddingTable::generate_random(&vocab, 8, InitScheme::Normal, seed + s)
                        .expect("valid vocab");
                let sentence: Vec<String> = (0..100).map(|i| format!("w{}", i % 10)).collect();
                let tokens = table.embed_sentence(&sentence);
                let mut stream = SeededRng::new(seed + s, "selfcheck/esp").stream();
                let h0a = Array1::from_iter((0..32).map(|_| stream.random_range(-1.0..1.0f64)));
                let h0b = Array1::from_iter((0..32).map(|_| stream.random_range(-1.0..1.0f64)));
                let run_a = params.run_direction_from(
                    crate::encoders::Direction::Forward,
                    &tokens,
                    &h0a,
                );
                let run_b = params.run_direction_from(
                    crate::encoders::Direction::Forward,
                    &tokens,
                    &h0b,
                );
                let initial = (&h0a - &h0b).mapv(f64::abs).sum();
                let last = run_a.nrows() - 1;
                let final_diff = (&run_a.row(last) - &run_b.row(last)).mapv(f64::abs).sum();
                ratios.push(final_diff / initial);
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            worst = worst.max(mean);
        }
    }
    CheckReport::new(
        "echo-state-property",
        worst <= 1e-3,
        format!("worst mean discrepancy ratio after 100 steps = {worst:.2e} (tolerance 1e-3)"),
    )
}

fn check_gradients(seed: u64) -> CheckReport {
    let mut stream = SeededRng::new(seed, "selfcheck/grad").stream();
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let classes = 2 + case % 4;
        let features = 3 + case % 7;
        let batch = 5 + case % 4;
        let x = Array2::from_shape_fn((batch, features), |_| stream.random_range(-1.5..1.5));
        let targets = if case % 2 == 0 {
            Targets::Classes((0..batch).map(|i| i % classes).collect())
        } else {
            let mut t = Array2::zeros((batch, classes));
            for i in 0..batch {
                let mut row: Vec<f64> = (0..classes)
                    .map(|_| stream.random_range(0.05..1.0))
                    .collect();
                let sum: f64 = row.iter().sum();
                for (k, v) in row.iter_mut().enumerate() {
                    t[[i, k]] = *v / sum;
                }
            }
            Targets::Distributions(t)
        };
        let head = LinearHead::new(
            Array2::from_shape_fn((classes, features), |_| stream.random_range(-0.8..0.8)),
            Array1::from_shape_fn(classes, |_| stream.random_range(-0.5..0.5)),
        );
        let l2 = if case % 3 == 0 { 1e-3 } else { 0.0 };
        let (_, grad) = match loss_and_gradient(&head, x.view(), &targets, l2) {
            Ok(g) => g,
            Err(e) => return CheckReport::new("gradient-check", false, e.to_string()),
        };
        let params: Vec<f64> = head
            .weights()
            .iter()
            .chain(head.bias().iter())
            .copied()
            .collect();
        let f = |p: &[f64]| {
            let w =
                Array2::from_shape_vec((classes, features), p[..classes * features].to_vec())
                    .unwrap();
            let b = Array1::from_vec(p[classes * features..].to_vec());
            loss_and_gradient(&LinearHead::new(w, b), x.view(), &targets, l2)
                .unwrap()
                .0
        };
        let fd = oracle::finite_difference_gradient(f, &params, 1e-5);
        let analytic: Vec<f64> = grad
            .weights
            .iter()
            .chain(grad.bias.iter())
            .copied()
            .collect();
        for (a, n) in analytic.iter().zip(fd.iter()) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    CheckReport::new(
        "gradient-check",
        worst < 1e-4,
        format!("max relative error vs central differences = {worst:.2e} over 20 draws"),
    )
}

fn check_permutation_invariance(seed: u64) -> CheckReport {
    use rand::seq::SliceRandom;
    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let table = EmbeddingTable::generate_random(&vocab, 8, InitScheme::Normal, seed).unwrap();
    let encoders: Vec<Encoder> = [PoolKind::Max, PoolKind::Mean, PoolKind::Sum]
        .into_iter()
        .flat_map(|kind| {
            let boe = build_encoder(&EncoderConfig {
                family: EncoderFamily::Boe,
                output_dim: 8,
                input_dim: 8,
                init: InitScheme::Heuristic,
                pooling: PoolingSpec::length(kind),
                seed,
            })
            .unwrap();
            let borep = build_encoder(&EncoderConfig {
                family: EncoderFamily::Borep {
                    activation: Activation::Relu,
                },
                output_dim: 32,
                input_dim: 8,
                init: InitScheme::Heuristic,
                pooling: PoolingSpec::length(kind),
                seed,
            })
            .unwrap();
            [boe, borep]
        })
        .collect();
    let mut stream = SeededRng::new(seed, "selfcheck/perm").stream();
    let mut trials = 0usize;
    for _ in 0..1000 {
        let len = stream.random_range(1..12usize);
        let mut sentence: Vec<String> = (0..len)
            .map(|_| vocab[stream.random_range(0..vocab.len())].clone())
            .collect();
        let original = sentence.clone();
        sentence.shuffle(&mut stream);
        let encoder = &encoders[trials % encoders.len()];
        let a = encoder.encode(&table.embed_sentence(&original)).unwrap();
        let b = encoder.encode(&table.embed_sentence(&sentence)).unwrap();
        let bits_a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
        if bits_a != bits_b {
            return CheckReport::new(
                "permutation-invariance",
                false,
                format!("trial {trials}: bits differ for {original:?}"),
            );
        }
        trials += 1;
    }
    CheckReport::new(
        "permutation-invariance",
        true,
        "1000 randomized trials bit-identical for BOE/BOREP under all pooling kinds".into(),
    )
}

fn check_projection_distortion(seed: u64) -> CheckReport {
    use rand_distr::Distribution;
    let mut stream = SeededRng::new(seed, "selfcheck/jl").stream();
    let normal = rand_distr::StandardNormal;
    let vectors = Array2::from_shape_fn((100, 300), |_| {
        <rand_distr::StandardNormal as Distribution<f64>>::sample(&normal, &mut stream)
    });
    let stats = match jl_distortion(vectors.view(), 4096, seed, 0.05) {
        Ok(s) => s,
        Err(e) => return CheckReport::new("jl-projection", false, e.to_string()),
    };
    CheckReport::new(
        "jl-projection",
        stats.fraction_within_eps >= 0.95,
        format!(
            "{:.1}% of pairs within 0.05 cosine distortion (mean {:.4})",
            100.0 * stats.fraction_within_eps,
            stats.mean_abs_cosine
        ),
    )
}

fn check_padded_pooling(seed: u64) -> CheckReport {
    let params = SyntheticParams {
        examples: 120,
        ..SyntheticParams::default_for(SyntheticKind::LengthBins)
    };
    let task = match gen_synthetic(SyntheticKind::LengthBins, &params, seed) {
        Ok(t) => t,
        Err(e) => return CheckReport::new("padded-pooling", false, e.to_string()),
    };
    let encoder = build_encoder(&EncoderConfig {
        family: EncoderFamily::Borep {
            activation: Activation::None,
        },
        output_dim: 24,
        input_dim: 16,
        init: InitScheme::Heuristic,
        pooling: PoolingSpec::length(PoolKind::Max),
        seed,
    })
    .unwrap();
    let sentences: Vec<Vec<String>> = task
        .dataset
        .examples
        .iter()
        .map(|e| e.tokens.clone())
        .collect();
    let length_a = encode_batch(
        &encoder,
        &task.table,
        &sentences,
        7,
        SortMode::AsGiven,
        PadMode::Length,
    )
    .unwrap();
    let length_b = encode_batch(
        &encoder,
        &task.table,
        &sentences,
        64,
        SortMode::SortedByLength,
        PadMode::Length,
    )
    .unwrap();
    if length_a != length_b {
        return CheckReport::new(
            "padded-pooling",
            false,
            "length mode depended on batching".into(),
        );
    }
    let padded = encode_batch(
        &encoder,
        &task.table,
        &sentences,
        16,
        SortMode::AsGiven,
        PadMode::Padded,
    )
    .unwrap();
    // padded max pooling never exceeds the length-mode value and only lifts
    // all-negative coordinates to zero
    for i in 0..sentences.len() {
        for j in 0..24 {
            let l = length_a[[i, j]];
            let p = padded[[i, j]];
            let ok = if p == l { true } else { p == 0.0 && l < 0.0 };
            if !ok {
                return CheckReport::new(
                    "padded-pooling",
                    false,
                    format!("row {i} coord {j}: length {l} padded {p}"),
                );
            }
        }
    }
    CheckReport::new(
        "padded-pooling",
        true,
        "length mode batching-invariant; padded max only zeroes negative coordinates".into(),
    )
}

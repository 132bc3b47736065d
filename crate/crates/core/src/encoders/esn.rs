//! Bidirectional echo state network encoder.
//!
//! Each direction holds a frozen input matrix `W_in` (uniform on
//! `[-input_scale, input_scale]`, no bias) and a reservoir `W_res` built as
//! initialize → sparsify → estimate radius → scale, so the delivered reservoir
//! sits at the target spectral radius after sparsification. The state update
//! is `h_i = (1 - leak) h_{i-1} + leak * act(W_in e_i + W_res h_{i-1})` from a
//! zero initial state.

use ndarray::{Array1, Array2};
use rand::distr::{Distribution, Uniform};

use super::lstm::Direction;
use super::{Activation, EncoderConfig, EncoderFamily, PoolingSpec};
use crate::embeddings::TokenMatrix;
use crate::numerics::{
    estimate_spectral_radius, init_matrix, sparsify, SeededRng, SPECTRAL_MAX_ITERS, SPECTRAL_TOL,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub(super) struct EsnDirection {
    pub(super) w_in: Array2<f64>,  // R x d
    pub(super) w_res: Array2<f64>, // R x R
}

#[derive(Debug, Clone)]
pub struct EsnParams {
    pub(super) fwd: EsnDirection,
    pub(super) bwd: EsnDirection,
    pub(super) reservoir: usize,
    pub(super) input_dim: usize,
    pub(super) leak: f64,
    pub(super) activation: Activation,
    pub(super) pooling: PoolingSpec,
    pub(super) spectral_radius: f64,
}

pub(super) fn build(config: &EncoderConfig, rng: &SeededRng) -> Result<EsnParams> {
    let EncoderFamily::Esn {
        spectral_radius,
        input_scale,
        sparsity,
        leak_rate,
        activation,
    } = config.family
    else {
        unreachable!("esn::build called with a non-ESN family");
    };
    if spectral_radius <= 0.0 {
        return Err(Error::BadConfig(format!(
            "spectral radius must be positive, got {spectral_radius}"
        )));
    }
    if input_scale <= 0.0 {
        return Err(Error::BadConfig(format!(
            "input scale must be positive, got {input_scale}"
        )));
    }
    if !(leak_rate > 0.0 && leak_rate <= 1.0) {
        return Err(Error::BadConfig(format!(
            "leak rate must lie in (0, 1], got {leak_rate}"
        )));
    }
    let reservoir = config.output_dim / 2;
    let d = config.input_dim;
    let direction = |name: &str| -> Result<EsnDirection> {
        let dir_rng = rng.labeled(&format!("esn/{name}"));
        let mut w_res = reservoir_matrix(&dir_rng, reservoir, config, sparsity, spectral_radius)?;
        if w_res.is_none() {
            // measure-zero: a fresh draw gets one retry before giving up
            w_res = reservoir_matrix(
                &dir_rng.labeled("retry"),
                reservoir,
                config,
                sparsity,
                spectral_radius,
            )?;
        }
        let w_res = w_res.ok_or(Error::ZeroSpectralRadius {
            target: spectral_radius,
        })?;

        let mut w_in = Array2::zeros((reservoir, d));
        let dist = Uniform::new_inclusive(-input_scale, input_scale).expect("valid bounds");
        let mut stream = dir_rng.labeled("Wi").stream();
        for v in w_in.iter_mut() {
            *v = dist.sample(&mut stream);
        }
        Ok(EsnDirection { w_in, w_res })
    };
    Ok(EsnParams {
        fwd: direction("fwd")?,
        bwd: direction("bwd")?,
        reservoir,
        input_dim: d,
        leak: leak_rate,
        activation,
        pooling: config.pooling,
        spectral_radius,
    })
}

fn reservoir_matrix(
    dir_rng: &SeededRng,
    reservoir: usize,
    config: &EncoderConfig,
    sparsity: f64,
    target: f64,
) -> Result<Option<Array2<f64>>> {
    let raw = init_matrix(reservoir, reservoir, config.init, &dir_rng.labeled("Wh"));
    let sparse = sparsify(&raw, sparsity, &dir_rng.labeled("sparsify"))?;
    let est = estimate_spectral_radius(&sparse, SPECTRAL_TOL, SPECTRAL_MAX_ITERS)?;
    if est.radius <= 0.0 {
        return Ok(None);
    }
    let factor = target / est.radius;
    Ok(Some(sparse.mapv(|v| v * factor)))
}

impl EsnParams {
    pub fn output_dim(&self) -> usize {
        2 * self.reservoir
    }

    pub fn reservoir_size(&self) -> usize {
        self.reservoir
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn pooling(&self) -> PoolingSpec {
        self.pooling
    }

    pub fn target_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn reservoir_weights(&self, direction: Direction) -> &Array2<f64> {
        &self.dir(direction).w_res
    }

    fn dir(&self, direction: Direction) -> &EsnDirection {
        match direction {
            Direction::Forward => &self.fwd,
            Direction::Backward => &self.bwd,
        }
    }

    /// One leaky reservoir update.
    pub fn step(&self, direction: Direction, x: &Array1<f64>, h_prev: &Array1<f64>) -> Array1<f64> {
        let p = self.dir(direction);
        let mut pre = p.w_in.dot(x) + p.w_res.dot(h_prev);
        pre.mapv_inplace(|v| self.activation.apply(v));
        h_prev * (1.0 - self.leak) + pre * self.leak
    }

    /// Per-position concatenated `[h_fwd ; h_bwd]` states over the sentence.
    pub fn run(&self, tokens: &TokenMatrix) -> Array2<f64> {
        let n = tokens.len();
        let mut out = Array2::zeros((n, 2 * self.reservoir));
        if n == 0 {
            return out;
        }
        for (direction, offset) in [(Direction::Forward, 0), (Direction::Backward, self.reservoir)]
        {
            let p = self.dir(direction);
            let proj = tokens.rows().dot(&p.w_in.t());
            let mut h = Array1::zeros(self.reservoir);
            let positions: Vec<usize> = match direction {
                Direction::Forward => (0..n).collect(),
                Direction::Backward => (0..n).rev().collect(),
            };
            for t in positions {
                let mut pre = &proj.row(t) + &p.w_res.dot(&h);
                pre.mapv_inplace(|v| self.activation.apply(v));
                h = &h * (1.0 - self.leak) + &pre * self.leak;
                out.row_mut(t)
                    .slice_mut(ndarray::s![offset..offset + self.reservoir])
                    .assign(&h);
            }
        }
        out
    }

    /// Diagnostic: run one direction from an arbitrary initial state and
    /// return the per-step reservoir states. Used to measure how fast two
    /// trajectories driven by the same input forget their starting points.
    pub fn run_direction_from(
        &self,
        direction: Direction,
        tokens: &TokenMatrix,
        initial: &Array1<f64>,
    ) -> Array2<f64> {
        let n = tokens.len();
        let mut out = Array2::zeros((n, self.reservoir));
        let mut h = initial.clone();
        for t in 0..n {
            let x = tokens.row(t).to_owned();
            h = self.step(direction, &x, &h);
            out.row_mut(t).assign(&h);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use crate::embeddings::EmbeddingTable;
    use crate::encoders::{build_encoder, Encoder, PoolKind};
    use crate::numerics::InitScheme;
    use crate::oracle;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn identity_params(leak: f64, pooling: PoolKind) -> EsnParams {
        let dir = || EsnDirection {
            w_in: Array2::eye(2),
            w_res: Array2::zeros((2, 2)),
        };
        EsnParams {
            fwd: dir(),
            bwd: dir(),
            reservoir: 2,
            input_dim: 2,
            leak,
            activation: Activation::None,
            pooling: PoolingSpec::length(pooling),
            spectral_radius: 1.0,
        }
    }

    fn esn_config(dim: usize, d: usize, rho: f64, seed: u64) -> EncoderConfig {
        EncoderConfig {
            family: EncoderFamily::Esn {
                spectral_radius: rho,
                input_scale: 0.1,
                sparsity: 0.5,
                leak_rate: 1.0,
                activation: Activation::None,
            },
            output_dim: dim,
            input_dim: d,
            init: InitScheme::Heuristic,
            pooling: PoolingSpec::length(PoolKind::Max),
            seed,
        }
    }

    #[test]
    fn identity_configuration_passes_input_through() {
        let params = identity_params(1.0, PoolKind::Max);
        let x = array![0.7, -0.3];
        let h = params.step(Direction::Forward, &x, &Array1::zeros(2));
        assert_eq!(h, x);
    }

    #[test]
    fn leak_interpolates_toward_candidate() {
        let params = identity_params(0.5, PoolKind::Max);
        let x = array![0.8, -0.4];
        let h = params.step(Direction::Forward, &x, &Array1::zeros(2));
        assert_eq!(h, array![0.4, -0.2]);
    }

    #[test]
    fn step_matches_formula_oracle() {
        let config = esn_config(12, 4, 0.8, 31);
        let params = match build_encoder(&config).unwrap() {
            Encoder::Esn(p) => p,
            _ => unreachable!(),
        };
        let mut stream = SeededRng::new(3, "probe").stream();
        use rand::Rng;
        let x = Array1::from_iter((0..4).map(|_| stream.random_range(-1.0..1.0)));
        let h = Array1::from_iter((0..6).map(|_| stream.random_range(-1.0..1.0)));
        let got = params.step(Direction::Forward, &x, &h);
        let want = oracle::esn_step_reference(
            &params.fwd.w_in,
            &params.fwd.w_res,
            params.leak,
            |v| v,
            &x,
            &h,
        );
        for (a, b) in got.iter().zip(want.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn identity_bidirectional_encode_hand_evaluates() {
        let params = identity_params(1.0, PoolKind::Max);
        let table = {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.txt");
            std::fs::write(&path, "a 1 0\nb 0 1\n").unwrap();
            crate::embeddings::load_embeddings(&path, None).unwrap()
        };
        let tokens = table.embed_sentence(&["a", "b"]);
        let v = Encoder::Esn(params).encode(&tokens).unwrap();
        assert_eq!(v, array![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn single_token_pooling_is_the_state() {
        let config = esn_config(8, 3, 0.6, 9);
        let encoder = build_encoder(&config).unwrap();
        let vocab: Vec<String> = (0..4).map(|i| format!("w{i}")).collect();
        let table = EmbeddingTable::generate_random(&vocab, 3, InitScheme::Normal, 2).unwrap();
        let tokens = table.embed_sentence(&["w1"]);
        let states = encoder.states(&tokens).unwrap();
        let v = encoder.encode(&tokens).unwrap();
        assert_eq!(v, states.row(0).to_owned());
    }

    #[test]
    fn built_reservoirs_sit_at_the_target_radius() {
        for rho in [0.4, 1.0] {
            let config = esn_config(96, 4, rho, 13);
            let params = match build_encoder(&config).unwrap() {
                Encoder::Esn(p) => p,
                _ => unreachable!(),
            };
            for direction in [Direction::Forward, Direction::Backward] {
                let measured = oracle::dense_spectral_radius(params.reservoir_weights(direction));
                assert!(
                    (measured - rho).abs() <= 1e-3 * rho,
                    "target {rho}, oracle {measured}"
                );
            }
        }
    }

    #[test]
    fn directions_use_independent_draws() {
        let config = esn_config(16, 4, 0.8, 21);
        let params = match build_encoder(&config).unwrap() {
            Encoder::Esn(p) => p,
            _ => unreachable!(),
        };
        assert_ne!(params.fwd.w_in, params.bwd.w_in);
        assert_ne!(params.fwd.w_res, params.bwd.w_res);
    }

    #[test]
    fn trajectories_forget_their_initial_state() {
        let config = esn_config(64, 4, 0.6, 55);
        let params = match build_encoder(&config).unwrap() {
            Encoder::Esn(p) => p,
            _ => unreachable!(),
        };
        let vocab: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
        let table = EmbeddingTable::generate_random(&vocab, 4, InitScheme::Normal, 4).unwrap();
        let sentence: Vec<String> = (0..100).map(|i| format!("w{}", i % 8)).collect();
        let tokens = table.embed_sentence(&sentence);

        let mut stream = SeededRng::new(6, "esp").stream();
        use rand::Rng;
        let h0a = Array1::from_iter((0..32).map(|_| stream.random_range(-1.0..1.0)));
        let h0b = Array1::from_iter((0..32).map(|_| stream.random_range(-1.0..1.0)));
        let run_a = params.run_direction_from(Direction::Forward, &tokens, &h0a);
        let run_b = params.run_direction_from(Direction::Forward, &tokens, &h0b);
        let initial = (&h0a - &h0b).mapv(f64::abs).sum();
        let last = run_a.nrows() - 1;
        let final_diff = (&run_a.row(last) - &run_b.row(last)).mapv(f64::abs).sum();
        assert!(
            final_diff <= 1e-3 * initial,
            "final {final_diff} vs initial {initial}"
        );
    }

}

//! Random bidirectional LSTM encoder.
//!
//! Standard forget-gate cell, gate blocks stacked in (input, forget, cell,
//! output) order. Every parameter tensor of both directions is drawn from the
//! configured scheme with the fan terms keyed to the hidden size, which for
//! the heuristic default gives the uniform `[-1/sqrt(h), 1/sqrt(h)]` band.
//! Initial hidden and cell states are zero.

use ndarray::{Array1, Array2};

use super::{EncoderConfig, PoolingSpec};
use crate::embeddings::TokenMatrix;
use crate::numerics::{init_matrix_with_fan, SeededRng};
use crate::Result;

/// Which recurrence direction to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone)]
pub(super) struct LstmDirection {
    pub(super) w_ih: Array2<f64>, // 4h x d
    pub(super) w_hh: Array2<f64>, // 4h x h
    pub(super) b_ih: Array1<f64>, // 4h
    pub(super) b_hh: Array1<f64>, // 4h
}

#[derive(Debug, Clone)]
pub struct LstmParams {
    pub(super) fwd: LstmDirection,
    pub(super) bwd: LstmDirection,
    pub(super) hidden: usize,
    pub(super) input_dim: usize,
    pub(super) pooling: PoolingSpec,
}

pub(super) fn build(config: &EncoderConfig, rng: &SeededRng) -> Result<LstmParams> {
    let hidden = config.output_dim / 2;
    let d = config.input_dim;
    let direction = |name: &str| -> LstmDirection {
        let draw = |tensor: &str, rows: usize, cols: usize| {
            init_matrix_with_fan(
                rows,
                cols,
                config.init,
                hidden,
                4 * hidden,
                &rng.labeled(&format!("lstm/{name}/{tensor}")),
            )
        };
        let bias = |tensor: &str| {
            draw(tensor, 1, 4 * hidden)
                .into_shape_with_order(4 * hidden)
                .expect("row vector reshapes")
        };
        LstmDirection {
            w_ih: draw("W_ih", 4 * hidden, d),
            w_hh: draw("W_hh", 4 * hidden, hidden),
            b_ih: bias("b_ih"),
            b_hh: bias("b_hh"),
        }
    };
    Ok(LstmParams {
        fwd: direction("fwd"),
        bwd: direction("bwd"),
        hidden,
        input_dim: d,
        pooling: config.pooling,
    })
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn pooling(&self) -> PoolingSpec {
        self.pooling
    }

    fn dir(&self, direction: Direction) -> &LstmDirection {
        match direction {
            Direction::Forward => &self.fwd,
            Direction::Backward => &self.bwd,
        }
    }

    /// One cell update: gates `i, f, g, o` sliced from the stacked
    /// pre-activations, then `c' = f*c + i*g`, `h' = o * tanh(c')`.
    pub fn step(
        &self,
        direction: Direction,
        x: &Array1<f64>,
        h: &Array1<f64>,
        c: &Array1<f64>,
    ) -> (Array1<f64>, Array1<f64>) {
        let p = self.dir(direction);
        let z = p.w_ih.dot(x) + &p.b_ih + p.w_hh.dot(h) + &p.b_hh;
        gate_update(&z, c, self.hidden)
    }

    /// Per-position concatenated `[h_fwd ; h_bwd]` states over the sentence.
    pub fn run(&self, tokens: &TokenMatrix) -> Array2<f64> {
        let n = tokens.len();
        let mut out = Array2::zeros((n, 2 * self.hidden));
        if n == 0 {
            return out;
        }
        for (direction, offset) in [(Direction::Forward, 0), (Direction::Backward, self.hidden)] {
            let p = self.dir(direction);
            // input projections for the whole sentence in one pass
            let proj = tokens.rows().dot(&p.w_ih.t());
            let bias = &p.b_ih + &p.b_hh;
            let mut h = Array1::zeros(self.hidden);
            let mut c = Array1::zeros(self.hidden);
            let positions: Vec<usize> = match direction {
                Direction::Forward => (0..n).collect(),
                Direction::Backward => (0..n).rev().collect(),
            };
            for t in positions {
                let z = &proj.row(t) + &p.w_hh.dot(&h) + &bias;
                let (h_next, c_next) = gate_update(&z, &c, self.hidden);
                h = h_next;
                c = c_next;
                out.row_mut(t)
                    .slice_mut(ndarray::s![offset..offset + self.hidden])
                    .assign(&h);
            }
        }
        out
    }
}

fn gate_update(z: &Array1<f64>, c: &Array1<f64>, hidden: usize) -> (Array1<f64>, Array1<f64>) {
    let mut h_next = Array1::zeros(hidden);
    let mut c_next = Array1::zeros(hidden);
    for j in 0..hidden {
        let i_gate = sigmoid(z[j]);
        let f_gate = sigmoid(z[hidden + j]);
        let g_cell = z[2 * hidden + j].tanh();
        let o_gate = sigmoid(z[3 * hidden + j]);
        c_next[j] = f_gate * c[j] + i_gate * g_cell;
        h_next[j] = o_gate * c_next[j].tanh();
    }
    (h_next, c_next)
}

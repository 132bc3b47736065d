//! Reference implementations used to cross-check the main code paths.
//!
//! Everything here deliberately takes a different route from the production
//! implementation it verifies: the spectral radius comes from a dense Schur
//! eigendecomposition instead of norm-growth iteration, orthogonalization from
//! single-pass classical Gram-Schmidt, the recurrent steps from plain scalar
//! loops, and gradients from central finite differences.

use ndarray::{Array1, Array2};

/// Spectral radius via a dense eigendecomposition (nalgebra Schur).
pub fn dense_spectral_radius(m: &Array2<f64>) -> f64 {
    let (rows, cols) = m.dim();
    assert_eq!(rows, cols, "oracle needs a square matrix");
    let dm = nalgebra::DMatrix::from_fn(rows, cols, |i, j| m[[i, j]]);
    dm.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max)
}

/// Classical (single-pass) Gram-Schmidt over rows. Returns `None` when a
/// residual collapses.
pub fn gram_schmidt_rows(m: &Array2<f64>) -> Option<Array2<f64>> {
    let (rows, _cols) = m.dim();
    let mut q = m.to_owned();
    for i in 0..rows {
        for j in 0..i {
            let proj = q.row(i).dot(&q.row(j));
            let qj = q.row(j).to_owned();
            q.row_mut(i).scaled_add(-proj, &qj);
        }
        let norm = q.row(i).dot(&q.row(i)).sqrt();
        if norm < 1e-12 {
            return None;
        }
        q.row_mut(i).mapv_inplace(|v| v / norm);
    }
    Some(q)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar-loop LSTM cell: gate blocks sliced from the stacked parameters in
/// (input, forget, cell, output) order.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_reference(
    w_ih: &Array2<f64>,
    w_hh: &Array2<f64>,
    b_ih: &Array1<f64>,
    b_hh: &Array1<f64>,
    x: &Array1<f64>,
    h: &Array1<f64>,
    c: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let hidden = h.len();
    let mut z = vec![0.0f64; 4 * hidden];
    for (r, zr) in z.iter_mut().enumerate() {
        let mut acc = b_ih[r] + b_hh[r];
        for (k, xv) in x.iter().enumerate() {
            acc += w_ih[[r, k]] * xv;
        }
        for (k, hv) in h.iter().enumerate() {
            acc += w_hh[[r, k]] * hv;
        }
        *zr = acc;
    }
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

/// Scalar-loop leaky reservoir update: `h = (1-a) h_prev + a act(Wi x + Wh h_prev)`.
pub fn esn_step_reference(
    w_in: &Array2<f64>,
    w_res: &Array2<f64>,
    leak: f64,
    act: fn(f64) -> f64,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
) -> Array1<f64> {
    let reservoir = h_prev.len();
    let mut out = Array1::zeros(reservoir);
    for r in 0..reservoir {
        let mut acc = 0.0;
        for (k, xv) in x.iter().enumerate() {
            acc += w_in[[r, k]] * xv;
        }
        for (k, hv) in h_prev.iter().enumerate() {
            acc += w_res[[r, k]] * hv;
        }
        out[r] = (1.0 - leak) * h_prev[r] + leak * act(acc);
    }
    out
}

/// Central finite differences of `f` at `params`, one coordinate at a time.
pub fn finite_difference_gradient(
    f: impl Fn(&[f64]) -> f64,
    params: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let up = f(&work);
        work[i] = orig - step;
        let down = f(&work);
        work[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Textbook single-pass Pearson formula, kept separate from the two-pass
/// implementation in the harness.
pub fn pearson_reference(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

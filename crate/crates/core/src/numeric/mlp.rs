//! Three weight-layer ReLU perceptron with exact reverse-mode gradients.
//!
//! `out = W3·relu(W2·relu(W1·x + b1) + b2) + b3`. Weights are stored
//! `(fan_out × fan_in)`; batched entry points take one sample per row.

use super::matrix::{axpy, gemm, Matrix, Op};
use super::rng::RngStream;
use crate::error::{shape, Error, Result};

/// Tensor names in declaration order (the checkpoint order).
pub const TENSOR_NAMES: [&str; 6] = ["w1", "w2", "w3", "b1", "b2", "b3"];

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Matrix,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    z1: Matrix,
    h1: Matrix,
    z2: Matrix,
    h2: Matrix,
    pub output: Matrix,
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn add_bias_rows(m: &mut Matrix, bias: &[f64]) {
    for r in 0..m.rows() {
        axpy(1.0, bias, m.row_mut(r));
    }
}

fn col_sums(m: &Matrix) -> Vec<f64> {
    let mut s = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        axpy(1.0, m.row(r), &mut s);
    }
    s
}

impl MlpParams {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, in_dim),
            w2: Matrix::zeros(hidden, hidden),
            w3: Matrix::zeros(out_dim, hidden),
            b1: vec![0.0; hidden],
            b2: vec![0.0; hidden],
            b3: vec![0.0; out_dim],
        }
    }

    /// Uniform `±1/√fan_in` initialisation for weights and biases.
    pub fn init(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut RngStream) -> Self {
        let mut layer = |fan_out: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform(-bound, bound));
            let b: Vec<f64> = (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect();
            (w, b)
        };
        let (w1, b1) = layer(hidden, in_dim);
        let (w2, b2) = layer(hidden, hidden);
        let (w3, b3) = layer(out_dim, hidden);
        Self { w1, w2, w3, b1, b2, b3 }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.hidden_dim(), self.out_dim())
    }

    pub fn in_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w3.rows()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks that the layer shapes chain and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        if self.w2.rows() != h
            || self.w2.cols() != h
            || self.w3.cols() != h
            || self.b1.len() != h
            || self.b2.len() != h
            || self.b3.len() != self.out_dim()
        {
            return Err(shape("mlp layers do not chain"));
        }
        for (name, t) in TENSOR_NAMES.iter().zip(self.tensors()) {
            if !t.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter tensor {name}")));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            self.w2.as_slice(),
            self.w3.as_slice(),
            &self.b1,
            &self.b2,
            &self.b3,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.w3.as_mut_slice(),
            &mut self.b1,
            &mut self.b2,
            &mut self.b3,
        ]
    }

    /// `self += alpha · other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(alpha, src, dst);
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.in_dim() {
            return Err(shape(format!(
                "mlp expects input of length {}, got {len}",
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let h = self.hidden_dim();
        let mut h1 = vec![0.0; h];
        self.w1.matvec_into(x, &mut h1);
        for (v, b) in h1.iter_mut().zip(&self.b1) {
            *v = relu(*v + b);
        }
        let mut h2 = vec![0.0; h];
        self.w2.matvec_into(&h1, &mut h2);
        for (v, b) in h2.iter_mut().zip(&self.b2) {
            *v = relu(*v + b);
        }
        let mut out = vec![0.0; self.out_dim()];
        self.w3.matvec_into(&h2, &mut out);
        axpy(1.0, &self.b3, &mut out);
        Ok(out)
    }

    /// Gradients of `grad_out · forward(x)` with respect to every parameter
    /// and to `x`. The ReLU subgradient at exactly zero is zero.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(MlpParams, Vec<f64>)> {
        self.check_input(x.len())?;
        if grad_out.len() != self.out_dim() {
            return Err(shape(format!(
                "grad_out has length {}, mlp output is {}",
                grad_out.len(),
                self.out_dim()
            )));
        }
        let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let gm = Matrix::from_vec(1, grad_out.len(), grad_out.to_vec())?;
        let cache = self.forward_cached(&xm)?;
        let (grads, dx) = self.backward_batch(&xm, &cache, &gm, true)?;
        Ok((grads, dx.map(Matrix::into_vec).unwrap_or_default()))
    }

    /// Batched forward pass keeping intermediate activations.
    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        self.check_input(x.cols())?;
        let (n, h) = (x.rows(), self.hidden_dim());
        let mut z1 = Matrix::zeros(n, h);
        gemm(1.0, x, Op::N, &self.w1, Op::T, 0.0, &mut z1)?;
        add_bias_rows(&mut z1, &self.b1);
        let mut h1 = z1.clone();
        h1.as_mut_slice().iter_mut().for_each(|v| *v = relu(*v));

        let mut z2 = Matrix::zeros(n, h);
        gemm(1.0, &h1, Op::N, &self.w2, Op::T, 0.0, &mut z2)?;
        add_bias_rows(&mut z2, &self.b2);
        let mut h2 = z2.clone();
        h2.as_mut_slice().iter_mut().for_each(|v| *v = relu(*v));

        let mut output = Matrix::zeros(n, self.out_dim());
        gemm(1.0, &h2, Op::N, &self.w3, Op::T, 0.0, &mut output)?;
        add_bias_rows(&mut output, &self.b3);
        Ok(ForwardCache { z1, h1, z2, h2, output })
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Batched reverse pass. Parameter gradients are summed over the rows of
    /// `grad_out`; the input gradient (one row per sample) is produced only
    /// when `want_input_grad` is set.
    pub fn backward_batch(
        &self,
        x: &Matrix,
        cache: &ForwardCache,
        grad_out: &Matrix,
        want_input_grad: bool,
    ) -> Result<(MlpParams, Option<Matrix>)> {
        let n = x.rows();
        if grad_out.rows() != n || grad_out.cols() != self.out_dim() {
            return Err(shape(format!(
                "grad_out is {}x{}, expected {n}x{}",
                grad_out.rows(),
                grad_out.cols(),
                self.out_dim()
            )));
        }
        let h = self.hidden_dim();
        let mut g = self.zeros_like();

        gemm(1.0, grad_out, Op::T, &cache.h2, Op::N, 0.0, &mut g.w3)?;
        g.b3 = col_sums(grad_out);

        let mut dz2 = Matrix::zeros(n, h);
        gemm(1.0, grad_out, Op::N, &self.w3, Op::N, 0.0, &mut dz2)?;
        mask_inactive(&mut dz2, &cache.z2);
        gemm(1.0, &dz2, Op::T, &cache.h1, Op::N, 0.0, &mut g.w2)?;
        g.b2 = col_sums(&dz2);

        let mut dz1 = Matrix::zeros(n, h);
        gemm(1.0, &dz2, Op::N, &self.w2, Op::N, 0.0, &mut dz1)?;
        mask_inactive(&mut dz1, &cache.z1);
        gemm(1.0, &dz1, Op::T, x, Op::N, 0.0, &mut g.w1)?;
        g.b1 = col_sums(&dz1);

        let dx = if want_input_grad {
            let mut dx = Matrix::zeros(n, self.in_dim());
            gemm(1.0, &dz1, Op::N, &self.w1, Op::N, 0.0, &mut dx)?;
            Some(dx)
        } else {
            None
        };
        Ok((g, dx))
    }

    /// Scalar-output convenience: `(f(x), ∇ₓ f(x))` for a single sample.
    pub fn value_and_input_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.out_dim() != 1 {
            return Err(shape("value_and_input_grad needs a scalar-output mlp"));
        }
        self.check_input(x.len())?;
        let hd = self.hidden_dim();
        let mut z1 = vec![0.0; hd];
        self.w1.matvec_into(x, &mut z1);
        axpy(1.0, &self.b1, &mut z1);
        let h1: Vec<f64> = z1.iter().map(|&v| relu(v)).collect();
        let mut z2 = vec![0.0; hd];
        self.w2.matvec_into(&h1, &mut z2);
        axpy(1.0, &self.b2, &mut z2);
        let h2: Vec<f64> = z2.iter().map(|&v| relu(v)).collect();
        let w3 = self.w3.row(0);
        let value = super::matrix::dot(w3, &h2) + self.b3[0];

        let dz2: Vec<f64> = w3
            .iter()
            .zip(&z2)
            .map(|(&w, &z)| if z > 0.0 { w } else { 0.0 })
            .collect();
        let mut dh1 = vec![0.0; hd];
        self.w2.matvec_t_into(&dz2, &mut dh1);
        for (d, &z) in dh1.iter_mut().zip(&z1) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dx = vec![0.0; x.len()];
        self.w1.matvec_t_into(&dh1, &mut dx);
        Ok((value, dx))
    }
}

fn mask_inactive(grad: &mut Matrix, pre: &Matrix) {
    for (g, &z) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

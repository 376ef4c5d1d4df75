use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Fully connected layer `y = W x + b`.
///
/// Weights are row-major with shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Gaussian weights with standard deviation `sqrt(2 / fan_in)`, zero bias.
    pub fn kaiming<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let std = (2.0 / in_dim as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let weights = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument("layer dimensions must be positive".into()));
        }
        check_len("dense weights", in_dim * out_dim, weights.len())?;
        check_len("dense bias", out_dim, bias.len())?;
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense layer parameters".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weights and bias borrowed mutably at once.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense input", self.in_dim, x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    /// Backward pass for one sample.
    ///
    /// Accumulates `dL/dW` and `dL/db` into `grad_weights`/`grad_bias` when
    /// given, and returns `dL/dx`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        grad_out: &[f64],
        param_grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(grad_out.len(), self.out_dim);
        if let Some((gw, gb)) = param_grads {
            for (o, &g) in grad_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let row = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
                for (r, xi) in row.iter_mut().zip(x) {
                    *r += g * xi;
                }
            }
        }
        let mut grad_in = vec![0.0; self.in_dim];
        for (row, &g) in self.weights.chunks_exact(self.in_dim).zip(grad_out) {
            if g == 0.0 {
                continue;
            }
            for (gi, w) in grad_in.iter_mut().zip(row) {
                *gi += g * w;
            }
        }
        grad_in
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

/// Masks `grad` by the ReLU derivative at pre-activation `z` (zero at `z <= 0`).
pub fn relu_backward(z: &[f64], grad: &mut [f64]) {
    for (g, &zi) in grad.iter_mut().zip(z) {
        if zi <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_return_bias() {
        let layer = DenseLayer::from_parts(3, 2, vec![0.0; 6], vec![1.5, -2.0]).unwrap();
        assert_eq!(layer.forward(&[4.0, -1.0, 9.0]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn identity_weights_pass_through() {
        let layer = DenseLayer::from_parts(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], vec![0.0; 3]).unwrap();
        assert_eq!(layer.forward(&[0.25, -7.0, 3.0]).unwrap(), vec![0.25, -7.0, 3.0]);
    }

    #[test]
    fn hand_matrix_vector_product() {
        let layer = DenseLayer::from_parts(2, 2, vec![1., 2., 3., 4.], vec![0., 0.]).unwrap();
        assert_eq!(layer.forward(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn wrong_input_length_is_an_error() {
        let layer = DenseLayer::zeros(3, 2);
        assert!(matches!(layer.forward(&[1.0]), Err(Error::ShapeMismatch { expected: 3, actual: 1, .. })));
    }

    #[test]
    fn kaiming_is_seeded() {
        let a = DenseLayer::kaiming(8, 4, &mut ChaCha8Rng::seed_from_u64(3));
        let b = DenseLayer::kaiming(8, 4, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.bias().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_transpose_product() {
        let layer = DenseLayer::from_parts(2, 2, vec![1., 2., 3., 4.], vec![0., 0.]).unwrap();
        let mut gw = vec![0.0; 4];
        let mut gb = vec![0.0; 2];
        let gx = layer.backward(&[5.0, 6.0], &[1.0, -1.0], Some((&mut gw, &mut gb)));
        assert_eq!(gx, vec![-2.0, -2.0]);
        assert_eq!(gw, vec![5.0, 6.0, -5.0, -6.0]);
        assert_eq!(gb, vec![1.0, -1.0]);
    }
}

use crate::linalg::{gemm, Op};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::layer::{Dense, Layer};
use super::NnError;

/// `out[b] = W x[b] + bias` for a `[batch, in]` input.
pub(crate) fn forward_batch<T: Scalar>(layer: &Dense<T>, input: &[T], batch: usize) -> Vec<T> {
    let (n_in, n_out) = (layer.in_features, layer.out_features);
    let mut out = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        out.extend_from_slice(layer.bias.data());
    }
    gemm(Op::N, Op::T, batch, n_out, n_in, T::one(), input, layer.weights.data(), T::one(), &mut out);
    out
}

pub(crate) fn backward_batch<T: Scalar>(
    layer: &Dense<T>,
    input: &[T],
    grad_out: &[T],
    batch: usize,
    param_grads: Option<(&mut [T], &mut [T])>,
    need_input_grad: bool,
) -> Option<Vec<T>> {
    let (n_in, n_out) = (layer.in_features, layer.out_features);
    if let Some((dw, db)) = param_grads {
        gemm(Op::T, Op::N, n_out, n_in, batch, T::one(), grad_out, input, T::one(), dw);
        for row in grad_out.chunks_exact(n_out) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
    }
    need_input_grad.then(|| {
        let mut gi = vec![T::zero(); batch * n_in];
        gemm(Op::N, Op::N, batch, n_in, n_out, T::one(), grad_out, layer.weights.data(), T::zero(), &mut gi);
        gi
    })
}

/// Single-vector fully-connected layer: `W x + b`.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, layer: &Layer<T>) -> Result<Tensor<T>, NnError> {
    let Layer::Dense(dense) = layer else {
        return Err(NnError::Config(format!(
            "dense_forward given a {} layer",
            layer.kind().name()
        )));
    };
    let shape = layer.output_shape(0, input.shape())?;
    Ok(Tensor::new(shape, forward_batch(dense, input.data(), 1))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(w: &[f64], b: &[f64], n_in: usize) -> Layer<f64> {
        let mut d = Dense::new(n_in, b.len()).unwrap();
        d.weights = Tensor::from_f64(&[b.len(), n_in], w).unwrap();
        d.bias = Tensor::from_f64(&[b.len()], b).unwrap();
        Layer::Dense(d)
    }

    #[test]
    fn identity_weights() {
        let l = layer(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0.0; 3], 3);
        let x = Tensor::from_vec(vec![3.0, -1.0, 0.5]);
        assert_eq!(dense_forward(&x, &l).unwrap(), x);
    }

    #[test]
    fn hand_example() {
        let l = layer(&[1.0, 1.0, 0.0, 1.0], &[0.0, 1.0], 2);
        let out = dense_forward(&Tensor::from_vec(vec![1.0, 2.0]), &l).unwrap();
        assert_eq!(out.data(), &[3.0, 3.0]);
    }

    #[test]
    fn random_matches_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, m) = (13, 7);
        let w: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = dense_forward(&Tensor::from_vec(x.clone()), &layer(&w, &b, n)).unwrap();
        for j in 0..m {
            let want: f64 = b[j] + (0..n).map(|i| w[j * n + i] * x[i]).sum::<f64>();
            let got = out.data()[j];
            assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-12));
        }
    }

    #[test]
    fn mismatched_input_is_shape_error() {
        let l = layer(&[1.0, 1.0], &[0.0], 2);
        assert!(matches!(
            dense_forward(&Tensor::from_vec(vec![1.0, 2.0, 3.0]), &l),
            Err(NnError::Shape { .. })
        ));
    }
}

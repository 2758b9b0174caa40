use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::layer::{Layer, MaxPool2d};
use super::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    /// Flat input index of the winning element for every output cell.
    pub argmax: Vec<usize>,
}

/// Pools `planes` independent `h x w` planes laid out back to back.
/// Ties go to the first element in row-major window order.
pub(crate) fn forward_planes<T: Scalar>(
    size: usize,
    input: &[T],
    planes: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / size, w / size);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut idx = Vec::with_capacity(planes * oh * ow);
    for pl in 0..planes {
        let base = pl * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if input[i] > input[best] {
                            best = i;
                        }
                    }
                }
                out.push(input[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

pub(crate) fn backward_planes<T: Scalar>(grad_out: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut grad_in = vec![T::zero(); input_len];
    for (&g, &i) in grad_out.iter().zip(argmax) {
        grad_in[i] += g;
    }
    grad_in
}

/// 2x2 / stride 2 max pooling of one `[C, H, W]` image.
pub fn maxpool_forward<T: Scalar>(input: &Tensor<T>) -> Result<PoolOutput<T>, NnError> {
    let pool = MaxPool2d::default();
    let out_shape = Layer::<T>::MaxPool2d(pool).output_shape(0, input.shape())?;
    let s = input.shape();
    let (out, argmax) = forward_planes(pool.size, input.data(), s[0], s[1], s[2]);
    Ok(PoolOutput {
        output: Tensor::new(out_shape, out)?,
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_picks_max() {
        let t = Tensor::<f32>::from_f64(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = maxpool_forward(&t).unwrap();
        assert_eq!(out.output.data(), &[4.0]);
        assert_eq!(out.argmax, vec![3]);
    }

    #[test]
    fn constant_image_halves_resolution() {
        let t = Tensor::<f32>::full(&[2, 6, 4], 3.0);
        let out = maxpool_forward(&t).unwrap();
        assert_eq!(out.output.shape(), &[2, 3, 2]);
        assert!(out.output.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn random_matches_window_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
        let t = Tensor::<f64>::new(vec![1, 4, 4], data.clone()).unwrap();
        let out = maxpool_forward(&t).unwrap();
        for oy in 0..2 {
            for ox in 0..2 {
                let mut m = f64::NEG_INFINITY;
                for y in 2 * oy..2 * oy + 2 {
                    for x in 2 * ox..2 * ox + 2 {
                        m = m.max(data[y * 4 + x]);
                    }
                }
                assert_eq!(out.output.data()[oy * 2 + ox], m);
                assert_eq!(data[out.argmax[oy * 2 + ox]], m);
            }
        }
    }

    #[test]
    fn odd_dims_rejected() {
        let t = Tensor::<f32>::zeros(&[1, 3, 4]);
        assert!(matches!(maxpool_forward(&t), Err(NnError::Shape { .. })));
    }

    #[test]
    fn backward_routes_to_argmax() {
        let g = backward_planes(&[1.5f32, -2.0], &[3, 4], 8);
        assert_eq!(g, vec![0.0, 0.0, 0.0, 1.5, -2.0, 0.0, 0.0, 0.0]);
    }
}

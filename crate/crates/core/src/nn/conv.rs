use crate::linalg::{gemm, Op};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::layer::{Conv2d, Layer};
use super::NnError;

/// `floor((size + 2p - k) / s) + 1`, or `None` when the kernel does not fit.
pub fn conv_output_dim(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if kernel > padded || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Geometry of one convolution applied to a fixed input size.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub s: usize,
    pub p: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new<T: Scalar>(layer: &Conv2d<T>, h: usize, w: usize) -> Option<Self> {
        Some(ConvGeometry {
            c: layer.in_channels,
            h,
            w,
            k: layer.kernel,
            s: layer.stride,
            p: layer.padding,
            oh: conv_output_dim(h, layer.kernel, layer.stride, layer.padding)?,
            ow: conv_output_dim(w, layer.kernel, layer.stride, layer.padding)?,
        })
    }

    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one `[C, H, W]` image into a `[C*k*k, OH*OW]` patch matrix.
    pub fn im2col<T: Scalar>(&self, image: &[T], col: &mut [T]) {
        let n = self.cols();
        let mut row = 0;
        for ch in 0..self.c {
            let plane = &image[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let dst = &mut col[row * n..(row + 1) * n];
                    for oy in 0..self.oh {
                        let iy = (oy * self.s + ki) as isize - self.p as isize;
                        let out_row = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in out_row.iter_mut().enumerate() {
                            let ix = (ox * self.s + kj) as isize - self.p as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters patch gradients back
    /// onto the image, accumulating overlaps.
    pub fn col2im<T: Scalar>(&self, col: &[T], image: &mut [T]) {
        let n = self.cols();
        let mut row = 0;
        for ch in 0..self.c {
            let plane = &mut image[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let src = &col[row * n..(row + 1) * n];
                    for oy in 0..self.oh {
                        let iy = (oy * self.s + ki) as isize - self.p as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let ix = (ox * self.s + kj) as isize - self.p as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Batched forward pass. `input` holds `batch` images of shape `[C, H, W]`.
/// Returns the output and, if requested, the patch matrices for backward.
pub(crate) fn forward_batch<T: Scalar>(
    layer: &Conv2d<T>,
    geo: &ConvGeometry,
    input: &[T],
    batch: usize,
    keep_cols: bool,
) -> (Vec<T>, Option<Vec<T>>) {
    let (m, kk, n) = (layer.out_channels, geo.rows(), geo.cols());
    let in_len = geo.c * geo.h * geo.w;
    let mut out = vec![T::zero(); batch * m * n];
    let mut cols = if keep_cols {
        vec![T::zero(); batch * kk * n]
    } else {
        vec![T::zero(); kk * n]
    };
    for b in 0..batch {
        let col = if keep_cols {
            &mut cols[b * kk * n..(b + 1) * kk * n]
        } else {
            &mut cols[..]
        };
        geo.im2col(&input[b * in_len..(b + 1) * in_len], col);
        let dst = &mut out[b * m * n..(b + 1) * m * n];
        for (o, row) in dst.chunks_exact_mut(n).enumerate() {
            row.fill(layer.bias.data()[o]);
        }
        gemm(Op::N, Op::N, m, n, kk, T::one(), layer.weights.data(), col, T::one(), dst);
    }
    (out, keep_cols.then_some(cols))
}

/// Batched backward pass. Accumulates into `dw` / `db` when given and
/// returns the input gradient when `need_input_grad` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_batch<T: Scalar>(
    layer: &Conv2d<T>,
    geo: &ConvGeometry,
    cols: &[T],
    grad_out: &[T],
    batch: usize,
    mut param_grads: Option<(&mut [T], &mut [T])>,
    need_input_grad: bool,
) -> Option<Vec<T>> {
    let (m, kk, n) = (layer.out_channels, geo.rows(), geo.cols());
    let in_len = geo.c * geo.h * geo.w;
    let mut grad_in = need_input_grad.then(|| vec![T::zero(); batch * in_len]);
    let mut dcol = vec![T::zero(); if need_input_grad { kk * n } else { 0 }];
    for b in 0..batch {
        let dy = &grad_out[b * m * n..(b + 1) * m * n];
        let col = &cols[b * kk * n..(b + 1) * kk * n];
        if let Some((dw, db)) = param_grads.as_mut() {
            gemm(Op::N, Op::T, m, kk, n, T::one(), dy, col, T::one(), dw);
            for (o, row) in dy.chunks_exact(n).enumerate() {
                db[o] += row.iter().copied().sum::<T>();
            }
        }
        if let Some(gi) = grad_in.as_mut() {
            gemm(Op::T, Op::N, kk, n, m, T::one(), layer.weights.data(), dy, T::zero(), &mut dcol);
            geo.col2im(&dcol, &mut gi[b * in_len..(b + 1) * in_len]);
        }
    }
    grad_in
}

/// Single-image convolution: `[C, H, W] -> [C', H', W']`.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, layer: &Layer<T>) -> Result<Tensor<T>, NnError> {
    let Layer::Conv2d(conv) = layer else {
        return Err(NnError::Config(format!(
            "conv2d_forward given a {} layer",
            layer.kind().name()
        )));
    };
    let out_shape = layer.output_shape(0, input.shape())?;
    let geo = ConvGeometry::new(conv, input.shape()[1], input.shape()[2])
        .expect("geometry validated by output_shape");
    let (out, _) = forward_batch(conv, &geo, input.data(), 1, false);
    Ok(Tensor::new(out_shape, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution used as an oracle.
    fn brute_conv(input: &Tensor<f64>, conv: &Conv2d<f64>) -> Vec<f64> {
        let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (k, s, p) = (conv.kernel, conv.stride, conv.padding);
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (w + 2 * p - k) / s + 1;
        let x = |ch: usize, y: isize, xx: isize| -> f64 {
            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                0.0
            } else {
                input.data()[ch * h * w + y as usize * w + xx as usize]
            }
        };
        let wt = conv.weights.data();
        let mut out = Vec::new();
        for o in 0..conv.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias.data()[o];
                    for ch in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (oy * s + ki) as isize - p as isize;
                                let ix = (ox * s + kj) as isize - p as isize;
                                acc += wt[((o * c + ch) * k + ki) * k + kj] * x(ch, iy, ix);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_returns_input() {
        let mut conv = Conv2d::<f32>::new(1, 1, 1, 1, 0).unwrap();
        conv.weights.data_mut()[0] = 1.0;
        let input = Tensor::from_f64(&[1, 3, 4], &(0..12).map(|i| i as f64 * 1.5 - 4.0).collect::<Vec<_>>())
            .unwrap();
        let out = conv2d_forward(&input, &Layer::Conv2d(conv)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_kernel_on_constant_image_gives_nine_c() {
        let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 0).unwrap();
        conv.weights.data_mut().fill(1.0);
        let c = 2.5;
        let input = Tensor::full(&[1, 6, 5], c);
        let out = conv2d_forward(&input, &Layer::Conv2d(conv.clone())).unwrap();
        assert_eq!(out.shape(), &[1, 4, 3]);
        let brute = brute_conv(&input, &conv);
        for (a, b) in out.data().iter().zip(&brute) {
            assert_eq!(*a, 9.0 * c);
            assert_eq!(*b, 9.0 * c);
        }
    }

    #[test]
    fn random_padded_conv_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut conv = Conv2d::<f64>::new(1, 2, 3, 1, 1).unwrap();
        conv.weights.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        conv.bias.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let input = Tensor::new(vec![1, 8, 8], (0..64).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let out = conv2d_forward(&input, &Layer::Conv2d(conv.clone())).unwrap();
        assert_eq!(out.shape(), &[2, 8, 8]);
        for (a, b) in out.data().iter().zip(brute_conv(&input, &conv)) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn strided_multichannel_conv_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::<f64>::new(3, 4, 3, 2, 1).unwrap();
        conv.weights.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let input = Tensor::new(vec![3, 7, 9], (0..189).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let out = conv2d_forward(&input, &Layer::Conv2d(conv.clone())).unwrap();
        assert_eq!(out.shape(), &[4, 4, 5]);
        for (a, b) in out.data().iter().zip(brute_conv(&input, &conv)) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn channel_mismatch_names_layer() {
        let conv = Conv2d::<f32>::new(3, 2, 3, 1, 1).unwrap();
        let err = conv2d_forward(&Tensor::zeros(&[1, 4, 4]), &Layer::Conv2d(conv)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv2d") && msg.contains("channels"), "{msg}");
    }

    #[test]
    fn kernel_larger_than_input_is_shape_error() {
        let conv = Conv2d::<f32>::new(1, 1, 5, 1, 0).unwrap();
        assert!(matches!(
            conv2d_forward(&Tensor::zeros(&[1, 3, 3]), &Layer::Conv2d(conv)),
            Err(NnError::Shape { .. })
        ));
    }

    #[test]
    fn output_dim_formula() {
        assert_eq!(conv_output_dim(64, 3, 1, 1), Some(64));
        assert_eq!(conv_output_dim(7, 3, 2, 1), Some(4));
        assert_eq!(conv_output_dim(2, 3, 1, 0), None);
    }
}

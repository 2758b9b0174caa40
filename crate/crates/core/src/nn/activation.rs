use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Negative values become zero; NaN passes through.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(relu_value)
}

pub(crate) fn relu_value<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        T::zero()
    } else {
        x
    }
}

/// Softmax of a vector, computed after subtracting the maximum.
pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    softmax_rows(out.data_mut(), input.len().max(1));
    out
}

/// In-place row-wise softmax over consecutive rows of length `width`.
pub(crate) fn softmax_rows<T: Scalar>(data: &mut [T], width: usize) {
    for row in data.chunks_exact_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += v.to_f64_lossy();
        }
        let inv = T::from_f64_lossy(1.0 / sum);
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Vector-Jacobian product of softmax: `p * (g - <g, p>)` per row.
pub(crate) fn softmax_backward_rows<T: Scalar>(probs: &[T], grad: &[T], width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(grad.len());
    for (p, g) in probs.chunks_exact(width).zip(grad.chunks_exact(width)) {
        let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        out.extend(p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - dot)));
    }
    out
}

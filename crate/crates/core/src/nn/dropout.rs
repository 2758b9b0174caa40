use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::layer::check_rate;
use super::NnError;

/// Inverted-dropout multipliers: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub(crate) fn sample_mask<T: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

/// Applies dropout in training mode; identity otherwise.
pub fn dropout_forward<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Tensor<T>, NnError> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = sample_mask::<T, R>(input.len(), rate, rng);
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok(Tensor::new(input.shape().to_vec(), data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::<f32>::from_vec(vec![1.0, -2.0, 3.5]);
        assert_eq!(dropout_forward(&t, 0.0, true, &mut rng).unwrap(), t);
        assert_eq!(dropout_forward(&t, 0.0, false, &mut rng).unwrap(), t);
    }

    #[test]
    fn eval_mode_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::<f32>::from_vec(vec![1.0; 100]);
        assert_eq!(dropout_forward(&t, 0.9, false, &mut rng).unwrap(), t);
    }

    #[test]
    fn half_rate_drops_about_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let t = Tensor::<f32>::full(&[10_000], 1.0);
        let out = dropout_forward(&t, 0.5, true, &mut rng).unwrap();
        let zeroed = out.data().iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
        assert!((zeroed - 0.5).abs() <= 0.02, "zeroed fraction {zeroed}");
        assert!(out.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn invalid_rates_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::<f32>::zeros(&[3]);
        for rate in [1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                dropout_forward(&t, rate, true, &mut rng),
                Err(NnError::Config(_))
            ));
        }
    }
}

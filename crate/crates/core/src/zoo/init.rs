use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::Layer;
use crate::scalar::Scalar;

use super::build::Model;

/// Uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Redraws one layer's weights uniformly in `[-bound, bound]` and zeroes
/// its bias.
pub fn init_layer<T: Scalar, R: Rng + ?Sized>(layer: &mut Layer<T>, rng: &mut R) {
    let (fan_in, fan_out) = match layer {
        Layer::Conv2d(c) => (c.fan_in(), c.fan_out()),
        Layer::Dense(d) => (d.in_features, d.out_features),
        _ => return,
    };
    let bound = glorot_bound(fan_in, fan_out);
    let (w, b) = layer.params_mut().expect("weight layer");
    for v in w.data_mut() {
        *v = T::from_f64_lossy(rng.random_range(-bound..bound));
    }
    b.data_mut().fill(T::zero());
}

/// Initialises weight layers from `seed`. With `only_pending`, layers that
/// already carry weights (e.g. a pretrained backbone) are left alone.
pub fn init_random<T: Scalar>(model: &mut Model<T>, seed: u64, only_pending: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pending = model.pending_init().to_vec();
    let mut wi = 0;
    for layer in model.network.layers_mut() {
        if !layer.has_weights() {
            continue;
        }
        if !only_pending || pending[wi] {
            init_layer(layer, &mut rng);
        }
        wi += 1;
    }
    for i in 0..pending.len() {
        if !only_pending || pending[i] {
            model.clear_pending(i);
        }
    }
}

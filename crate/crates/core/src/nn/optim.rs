//! Adadelta: per-parameter step sizes from running averages of squared
//! gradients and squared updates, with no global learning rate.
//!
//! ```text
//! E[g^2]  <- rho E[g^2] + (1 - rho) g^2
//! dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//! E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//! x       <- x + dx
//! ```

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::network::{Network, ParamGrad};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: 0.95,
            epsilon: 1e-6,
        }
    }
}

impl AdadeltaConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.rho > 0.0 && self.rho < 1.0) || !(self.epsilon > 0.0) {
            return Err(NnError::Config(format!(
                "adadelta needs 0 < rho < 1 and epsilon > 0, got rho={} epsilon={}",
                self.rho, self.epsilon
            )));
        }
        Ok(())
    }
}

/// Running averages for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState<T = f32> {
    pub accum_grad_sq: Tensor<T>,
    pub accum_update_sq: Tensor<T>,
}

impl<T: Scalar> AdadeltaState<T> {
    pub fn for_param(param: &Tensor<T>) -> Self {
        AdadeltaState {
            accum_grad_sq: Tensor::zeros(param.shape()),
            accum_update_sq: Tensor::zeros(param.shape()),
        }
    }
}

/// One Adadelta update of a single parameter tensor.
pub fn adadelta_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdadeltaState<T>,
    config: &AdadeltaConfig,
) -> Result<(), NnError> {
    if param.shape() != grad.shape()
        || param.shape() != state.accum_grad_sq.shape()
        || param.shape() != state.accum_update_sq.shape()
    {
        return Err(NnError::shape(
            "adadelta",
            format!(
                "parameter {:?}, gradient {:?}, state {:?}",
                param.shape(),
                grad.shape(),
                state.accum_grad_sq.shape()
            ),
        ));
    }
    let rho = T::from_f64_lossy(config.rho);
    let one_minus_rho = T::from_f64_lossy(1.0 - config.rho);
    let eps = T::from_f64_lossy(config.epsilon);
    let eg = state.accum_grad_sq.data_mut();
    let edx = state.accum_update_sq.data_mut();
    for (((x, &g), eg), edx) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(eg.iter_mut())
        .zip(edx.iter_mut())
    {
        *eg = rho * *eg + one_minus_rho * g * g;
        let dx = -((*edx + eps).sqrt() / (*eg + eps).sqrt()) * g;
        *edx = rho * *edx + one_minus_rho * dx * dx;
        *x += dx;
    }
    Ok(())
}

/// Adadelta over every parameter of a network. Frozen layers are skipped
/// entirely so their values and accumulators never change.
#[derive(Debug, Clone)]
pub struct Adadelta<T = f32> {
    config: AdadeltaConfig,
    state: Vec<[AdadeltaState<T>; 2]>,
}

impl<T: Scalar> Adadelta<T> {
    pub fn new(network: &Network<T>, config: AdadeltaConfig) -> Result<Self, NnError> {
        config.validate()?;
        let state = network
            .layers()
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| [AdadeltaState::for_param(w), AdadeltaState::for_param(b)])
            .collect();
        Ok(Adadelta { config, state })
    }

    pub fn config(&self) -> &AdadeltaConfig {
        &self.config
    }

    pub fn state(&self) -> &[[AdadeltaState<T>; 2]] {
        &self.state
    }

    pub fn step(&mut self, network: &mut Network<T>, grads: &[ParamGrad<T>]) -> Result<(), NnError> {
        let layers = network.layers_mut().iter_mut().filter(|l| l.has_weights());
        let mut count = 0;
        for ((layer, grad), state) in layers.zip(grads).zip(self.state.iter_mut()) {
            count += 1;
            if layer.is_frozen() {
                continue;
            }
            let (w, b) = layer.params_mut().expect("weight layer");
            let [sw, sb] = state;
            adadelta_step(w, &grad.weights, sw, &self.config)?;
            adadelta_step(b, &grad.bias, sb, &self.config)?;
        }
        if count != grads.len() || count != self.state.len() {
            return Err(NnError::shape(
                "adadelta",
                format!(
                    "{} gradient sets for {count} weight layers ({} state sets)",
                    grads.len(),
                    self.state.len()
                ),
            ));
        }
        Ok(())
    }
}

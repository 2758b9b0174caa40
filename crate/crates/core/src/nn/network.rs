use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::activation::{relu_value, softmax_backward_rows, softmax_rows};
use super::conv::{self, ConvGeometry};
use super::layer::Layer;
use super::{dense, dropout, pool, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; activations cached for backward.
    Train,
    /// Dropout is the identity.
    Eval,
}

/// Gradient of one weight-bearing layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Conv { geo: ConvGeometry, cols: Vec<T> },
    Pool { argmax: Vec<usize>, input_len: usize },
    Dense { input: Vec<T> },
    Relu { output: Vec<T> },
    Dropout { mask: Option<Vec<T>> },
    Softmax { output: Vec<T> },
    Flatten,
}

#[derive(Debug, Clone)]
struct Trace<T> {
    batch: usize,
    caches: Vec<Cache<T>>,
}

/// An ordered stack of layers with a fixed per-sample input shape.
#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    shapes: Vec<Vec<usize>>,
    trace: Option<Trace<T>>,
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

impl<T: Scalar> Network<T> {
    /// Validates that every layer accepts the previous layer's output.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer<T>>) -> Result<Self, NnError> {
        let mut shapes = Vec::with_capacity(layers.len());
        let mut cur = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            cur = layer.output_shape(i, &cur)?;
            if cur.iter().any(|&d| d == 0) {
                return Err(NnError::shape(
                    format!("layer {i} ({})", layer.kind().name()),
                    format!("produces empty output {cur:?}"),
                ));
            }
            shapes.push(cur.clone());
        }
        Ok(Network {
            input_shape,
            layers,
            shapes,
            trace: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(Vec::as_slice).unwrap_or(&self.input_shape)
    }

    /// Per-sample output shape of each layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access for weight surgery. Layer kinds and sizes must not change.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.trace = None;
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer<T>> {
        self.layers
    }

    pub fn weight_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.has_weights()).count()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// One flag per weight-bearing layer, `true` = frozen.
    pub fn freeze_mask(&self) -> Vec<bool> {
        self.layers.iter().filter(|l| l.has_weights()).map(|l| l.is_frozen()).collect()
    }

    pub fn set_freeze_mask(&mut self, mask: &[bool]) -> Result<(), NnError> {
        let n = self.weight_layer_count();
        if mask.len() != n {
            return Err(NnError::Config(format!(
                "freeze mask has {} entries for {n} weight layers",
                mask.len()
            )));
        }
        for (layer, &f) in self.layers.iter_mut().filter(|l| l.has_weights()).zip(mask) {
            layer.set_frozen(f);
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize, NnError> {
        let shape = input.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(NnError::shape(
                "network input",
                format!(
                    "expected [batch, {}], got {shape:?}",
                    self.input_shape
                        .iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            ));
        }
        Ok(shape[0])
    }

    fn run<R: Rng + ?Sized>(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut R,
        keep: bool,
    ) -> Result<(Tensor<T>, Option<Trace<T>>), NnError> {
        let batch = self.check_input(input)?;
        let mut cur = input.data().to_vec();
        let mut cur_shape = self.input_shape.clone();
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        for (layer, out_shape) in self.layers.iter().zip(&self.shapes) {
            let (next, cache) = match layer {
                Layer::Conv2d(c) => {
                    let geo = ConvGeometry::new(c, cur_shape[1], cur_shape[2])
                        .expect("validated at build");
                    let (out, cols) = conv::forward_batch(c, &geo, &cur, batch, keep);
                    (out, cols.map(|cols| Cache::Conv { geo, cols }))
                }
                Layer::MaxPool2d(p) => {
                    let (out, argmax) = pool::forward_planes(
                        p.size,
                        &cur,
                        batch * cur_shape[0],
                        cur_shape[1],
                        cur_shape[2],
                    );
                    let input_len = cur.len();
                    (out, Some(Cache::Pool { argmax, input_len }))
                }
                Layer::Dense(d) => {
                    let out = dense::forward_batch(d, &cur, batch);
                    (out, Some(Cache::Dense { input: cur }))
                }
                Layer::Relu => {
                    let mut out = cur;
                    out.iter_mut().for_each(|v| *v = relu_value(*v));
                    let cache = keep.then(|| Cache::Relu { output: out.clone() });
                    (out, cache)
                }
                Layer::Dropout(d) => {
                    if mode == Mode::Train && d.rate() > 0.0 {
                        let mask = dropout::sample_mask::<T, R>(cur.len(), d.rate(), rng);
                        let out = cur.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
                        (out, Some(Cache::Dropout { mask: Some(mask) }))
                    } else {
                        (cur, Some(Cache::Dropout { mask: None }))
                    }
                }
                Layer::Flatten => (cur, Some(Cache::Flatten)),
                Layer::Softmax => {
                    let mut out = cur;
                    softmax_rows(&mut out, out_shape[0]);
                    let cache = keep.then(|| Cache::Softmax { output: out.clone() });
                    (out, cache)
                }
            };
            if keep {
                caches.push(cache.expect("cache requested"));
            }
            cur = next;
            cur_shape = out_shape.clone();
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&cur_shape);
        let out = Tensor::new(shape, cur)?;
        Ok((out, keep.then_some(Trace { batch, caches })))
    }

    /// Forward pass over a `[batch, ..input_shape]` tensor, caching what
    /// backward needs.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Tensor<T>, NnError> {
        self.trace = None;
        let (out, trace) = self.run(input, mode, rng, true)?;
        self.trace = trace;
        Ok(out)
    }

    /// Evaluation-mode forward pass that leaves the network untouched.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut no_rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        Ok(self.run(input, Mode::Eval, &mut no_rng, false)?.0)
    }

    /// Backpropagates `grad_out` (d loss / d output of the last forward
    /// pass). Frozen layers get all-zero gradients, and nothing is
    /// propagated below the lowest trainable layer.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Vec<ParamGrad<T>>, NnError> {
        let trace = self.trace.take().ok_or(NnError::NoForwardPass)?;
        let batch = trace.batch;
        let expected: usize = batch * self.output_shape().iter().product::<usize>();
        if grad_out.len() != expected {
            return Err(NnError::shape(
                "backward",
                format!("output gradient has {} values, expected {expected}", grad_out.len()),
            ));
        }
        let mut grads: Vec<ParamGrad<T>> = self
            .layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| ParamGrad {
                weights: Tensor::zeros(w.shape()),
                bias: Tensor::zeros(b.shape()),
            })
            .collect();
        let lowest = self
            .layers
            .iter()
            .position(|l| l.has_weights() && !l.is_frozen());
        let Some(lowest) = lowest else {
            return Ok(grads);
        };
        let mut weight_index = grads.len();
        let mut g = grad_out.data().to_vec();
        for i in (lowest..self.layers.len()).rev() {
            let need_input = i > lowest;
            let layer = &self.layers[i];
            if layer.has_weights() {
                weight_index -= 1;
            }
            let next = match (layer, &trace.caches[i]) {
                (Layer::Conv2d(c), Cache::Conv { geo, cols }) => {
                    let pg = &mut grads[weight_index];
                    let params = (!c.frozen)
                        .then(|| (pg.weights.data_mut(), pg.bias.data_mut()));
                    conv::backward_batch(c, geo, cols, &g, batch, params, need_input)
                }
                (Layer::Dense(d), Cache::Dense { input }) => {
                    let pg = &mut grads[weight_index];
                    let params = (!d.frozen)
                        .then(|| (pg.weights.data_mut(), pg.bias.data_mut()));
                    dense::backward_batch(d, input, &g, batch, params, need_input)
                }
                (Layer::MaxPool2d(_), Cache::Pool { argmax, input_len }) => {
                    Some(pool::backward_planes(&g, argmax, *input_len))
                }
                (Layer::Relu, Cache::Relu { output }) => Some(
                    g.iter()
                        .zip(output)
                        .map(|(&gi, &o)| if o > T::zero() { gi } else { T::zero() })
                        .collect(),
                ),
                (Layer::Dropout(_), Cache::Dropout { mask }) => Some(match mask {
                    Some(m) => g.iter().zip(m).map(|(&gi, &mi)| gi * mi).collect(),
                    None => g,
                }),
                (Layer::Softmax, Cache::Softmax { output }) => {
                    Some(softmax_backward_rows(output, &g, self.shapes[i][0]))
                }
                (Layer::Flatten, Cache::Flatten) => Some(g),
                _ => unreachable!("trace matches layer order"),
            };
            match next {
                Some(n) => g = n,
                None => break,
            }
        }
        Ok(grads)
    }
}

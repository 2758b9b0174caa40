use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2D,
    MaxPool2D,
    Dense,
    ReLU,
    Dropout,
    Flatten,
    Softmax,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2D => "conv2d",
            LayerKind::MaxPool2D => "maxpool2d",
            LayerKind::Dense => "dense",
            LayerKind::ReLU => "relu",
            LayerKind::Dropout => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Softmax => "softmax",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "conv2d" => LayerKind::Conv2D,
            "maxpool2d" => LayerKind::MaxPool2D,
            "dense" => LayerKind::Dense,
            "relu" => LayerKind::ReLU,
            "dropout" => LayerKind::Dropout,
            "flatten" => LayerKind::Flatten,
            "softmax" => LayerKind::Softmax,
            _ => return None,
        })
    }
}

/// 2-D convolution over `[C, H, W]` inputs with square kernels.
///
/// Weights are laid out `[out_channels, in_channels, kernel, kernel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub frozen: bool,
}

impl<T: Scalar> Conv2d<T> {
    /// Zero-initialised layer.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, NnError> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(NnError::Config(format!(
                "conv2d needs positive channels, kernel and stride \
                 (got in={in_channels} out={out_channels} k={kernel} s={stride})"
            )));
        }
        Ok(Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weights: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
            frozen: false,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_out(&self) -> usize {
        self.out_channels * self.kernel * self.kernel
    }
}

/// Fully-connected layer, weights `[out_features, in_features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f32> {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub frozen: bool,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self, NnError> {
        if in_features == 0 || out_features == 0 {
            return Err(NnError::Config(format!(
                "dense needs positive sizes (got {in_features} -> {out_features})"
            )));
        }
        Ok(Dense {
            in_features,
            out_features,
            weights: Tensor::zeros(&[out_features, in_features]),
            bias: Tensor::zeros(&[out_features]),
            frozen: false,
        })
    }
}

/// Non-overlapping max pooling; only the 2x2 / stride 2 case is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub size: usize,
}

impl Default for MaxPool2d {
    fn default() -> Self {
        MaxPool2d { size: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self, NnError> {
        check_rate(rate)?;
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<(), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::Config(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Conv2d(Conv2d<T>),
    MaxPool2d(MaxPool2d),
    Dense(Dense<T>),
    Relu,
    Dropout(Dropout),
    Flatten,
    Softmax,
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2D,
            Layer::MaxPool2d(_) => LayerKind::MaxPool2D,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Relu => LayerKind::ReLU,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Softmax => LayerKind::Softmax,
        }
    }

    pub fn has_weights(&self) -> bool {
        matches!(self, Layer::Conv2d(_) | Layer::Dense(_))
    }

    /// `(weights, bias)` for weight-bearing layers.
    pub fn params(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    pub fn is_frozen(&self) -> bool {
        match self {
            Layer::Conv2d(c) => c.frozen,
            Layer::Dense(d) => d.frozen,
            _ => false,
        }
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        match self {
            Layer::Conv2d(c) => c.frozen = frozen,
            Layer::Dense(d) => d.frozen = frozen,
            _ => {}
        }
    }

    /// Per-sample output shape, or a shape error naming this layer.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let name = || format!("layer {index} ({})", self.kind().name());
        match self {
            Layer::Conv2d(c) => {
                let [ch, h, w] = three_dims(input).ok_or_else(|| {
                    NnError::shape(name(), format!("expected [C, H, W] input, got {input:?}"))
                })?;
                if ch != c.in_channels {
                    return Err(NnError::shape(
                        name(),
                        format!("expected {} input channels, got {ch}", c.in_channels),
                    ));
                }
                let oh = super::conv_output_dim(h, c.kernel, c.stride, c.padding);
                let ow = super::conv_output_dim(w, c.kernel, c.stride, c.padding);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok(vec![c.out_channels, oh, ow]),
                    _ => Err(NnError::shape(
                        name(),
                        format!(
                            "kernel {} with padding {} does not fit {h}x{w} input",
                            c.kernel, c.padding
                        ),
                    )),
                }
            }
            Layer::MaxPool2d(p) => {
                let [ch, h, w] = three_dims(input).ok_or_else(|| {
                    NnError::shape(name(), format!("expected [C, H, W] input, got {input:?}"))
                })?;
                if h % p.size != 0 || w % p.size != 0 || h == 0 || w == 0 {
                    return Err(NnError::shape(
                        name(),
                        format!("spatial dims {h}x{w} not divisible by pool size {}", p.size),
                    ));
                }
                Ok(vec![ch, h / p.size, w / p.size])
            }
            Layer::Dense(d) => {
                if input.len() != 1 || input[0] != d.in_features {
                    return Err(NnError::shape(
                        name(),
                        format!("expected [{}] input, got {input:?}", d.in_features),
                    ));
                }
                Ok(vec![d.out_features])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Softmax => {
                if input.len() != 1 {
                    return Err(NnError::shape(name(), format!("expected a vector, got {input:?}")));
                }
                Ok(input.to_vec())
            }
            Layer::Relu | Layer::Dropout(_) => Ok(input.to_vec()),
        }
    }
}

fn three_dims(shape: &[usize]) -> Option<[usize; 3]> {
    match shape {
        &[c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

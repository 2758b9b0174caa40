use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoding::AGE_BINS;
use crate::nn::{Conv2d, Dense, Dropout, Layer, LayerKind, MaxPool2d, Network, NnError};
use crate::scalar::Scalar;

use super::ModelError;

/// Output head of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Two-way softmax: male, female.
    Gender,
    /// 81-way softmax over ages 5..=85.
    Age,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Gender => 2,
            Head::Age => AGE_BINS,
        }
    }
}

/// One convolutional stack: `convs` 3x3 same-padded convolutions with
/// `filters` channels each, every one followed by ReLU, then a 2x2 pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    pub filters: usize,
    pub convs: usize,
}

impl StackSpec {
    pub fn new(filters: usize, convs: usize) -> Self {
        StackSpec { filters, convs }
    }
}

/// Convolutional backbone ending in `Flatten`.
///
/// Each stack halves the spatial size, so height and width must both be
/// divisible by `2^stacks.len()`.
pub fn build_backbone<T: Scalar>(
    input_shape: [usize; 3],
    stacks: &[StackSpec],
) -> Result<Network<T>, ModelError> {
    if stacks.is_empty() {
        return Err(ModelError::Config("backbone needs at least one stack".into()));
    }
    let [mut channels, mut h, mut w] = input_shape;
    let mut layers = Vec::new();
    for (i, s) in stacks.iter().enumerate() {
        if s.filters == 0 || s.convs == 0 {
            return Err(ModelError::Config(format!(
                "stack {i} needs positive filters and conv count, got {s:?}"
            )));
        }
        for _ in 0..s.convs {
            layers.push(Layer::Conv2d(Conv2d::new(channels, s.filters, 3, 1, 1)?));
            layers.push(Layer::Relu);
            channels = s.filters;
        }
        if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
            return Err(ModelError::Depth(format!(
                "stack {i} would pool a {h}x{w} feature map; input {}x{} must be divisible by {}",
                input_shape[1],
                input_shape[2],
                1usize << stacks.len()
            )));
        }
        layers.push(Layer::MaxPool2d(MaxPool2d::default()));
        h /= 2;
        w /= 2;
    }
    layers.push(Layer::Flatten);
    Ok(Network::new(input_shape.to_vec(), layers)?)
}

/// A network plus its head, training provenance and the set of weight
/// layers still waiting for random initialisation.
#[derive(Debug, Clone)]
pub struct Model<T = f32> {
    pub network: Network<T>,
    pub head: Head,
    pub provenance: BTreeMap<String, String>,
    pending_init: Vec<bool>,
}

impl<T: Scalar> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.network == other.network
            && self.head == other.head
            && self.provenance == other.provenance
            && self.pending_init == other.pending_init
    }
}

impl<T: Scalar> Model<T> {
    pub fn from_parts(network: Network<T>, head: Head) -> Result<Self, ModelError> {
        if network.output_shape() != [head.outputs()] {
            return Err(ModelError::Config(format!(
                "network output {:?} does not match {head:?} head of {}",
                network.output_shape(),
                head.outputs()
            )));
        }
        let n = network.weight_layer_count();
        Ok(Model {
            network,
            head,
            provenance: BTreeMap::new(),
            pending_init: vec![false; n],
        })
    }

    pub fn freeze_mask(&self) -> Vec<bool> {
        self.network.freeze_mask()
    }

    pub fn set_freeze(&mut self, mask: &[bool]) -> Result<(), ModelError> {
        Ok(self.network.set_freeze_mask(mask)?)
    }

    /// Freezes every weight layer up to and including the last conv layer.
    pub fn freeze_backbone(&mut self) {
        let mask: Vec<bool> = self
            .network
            .layers()
            .iter()
            .filter(|l| l.has_weights())
            .map(|l| l.kind() == LayerKind::Conv2D)
            .collect();
        self.network.set_freeze_mask(&mask).expect("mask sized from network");
    }

    /// Weight layers added by [`replace_top`] and not yet initialised.
    pub fn pending_init(&self) -> &[bool] {
        &self.pending_init
    }

    pub(crate) fn clear_pending(&mut self, index: usize) {
        self.pending_init[index] = false;
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    /// Layers up to and including the `Flatten` that ends the backbone.
    pub fn backbone(&self) -> Network<T> {
        let layers = self.network.layers();
        let end = layers
            .iter()
            .rposition(|l| l.kind() == LayerKind::Flatten)
            .map(|i| i + 1)
            .unwrap_or(layers.len());
        Network::new(self.network.input_shape().to_vec(), layers[..end].to_vec())
            .expect("prefix of a valid network")
    }
}

/// Drops everything above the backbone's `Flatten` and appends
/// `Dense -> ReLU -> Dropout` per size, then `Dense(head) -> Softmax`.
/// New layers are trainable and marked for random initialisation; the
/// backbone keeps its weights and freeze flags.
pub fn replace_top<T: Scalar>(
    backbone: &Network<T>,
    dense_sizes: &[usize],
    dropout_rate: f64,
    head: Head,
) -> Result<Model<T>, ModelError> {
    if dense_sizes.is_empty() {
        return Err(ModelError::Config("top needs at least one dense layer".into()));
    }
    let dropout = Dropout::new(dropout_rate)?;
    let mut layers = backbone.layers().to_vec();
    match layers.iter().rposition(|l| l.kind() == LayerKind::Flatten) {
        Some(i) => layers.truncate(i + 1),
        None => layers.push(Layer::Flatten),
    }
    let kept = layers.iter().filter(|l| l.has_weights()).count();
    let mut width: usize = {
        let probe = Network::new(backbone.input_shape().to_vec(), layers.clone())?;
        probe.output_shape().iter().product()
    };
    for &size in dense_sizes {
        layers.push(Layer::Dense(Dense::new(width, size)?));
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout(dropout));
        width = size;
    }
    layers.push(Layer::Dense(Dense::new(width, head.outputs())?));
    layers.push(Layer::Softmax);
    let network = Network::new(backbone.input_shape().to_vec(), layers).map_err(|e: NnError| e)?;
    let mut model = Model::from_parts(network, head)?;
    for p in model.pending_init.iter_mut().skip(kept) {
        *p = true;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn two_stack() -> Network<f32> {
        build_backbone([1, 64, 64], &[StackSpec::new(8, 1), StackSpec::new(16, 1)]).unwrap()
    }

    #[test]
    fn two_stacks_on_64_flatten_to_4096() {
        let b = two_stack();
        assert_eq!(b.output_shape(), &[16 * 16 * 16]);
        assert_eq!(b.param_count(), (9 * 8 + 8) + (8 * 9 * 16 + 16));
    }

    #[test]
    fn single_tiny_stack_runs_forward() {
        let b: Network<f32> = build_backbone([1, 2, 2], &[StackSpec::new(1, 1)]).unwrap();
        let out = b.predict(&Tensor::zeros(&[1, 1, 2, 2])).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
    }

    #[test]
    fn five_stacks_on_200x240_is_depth_error() {
        let stacks = [64, 128, 256, 512, 512].map(|f| StackSpec::new(f, 2));
        let err = build_backbone::<f32>([3, 240, 200], &stacks).unwrap_err();
        assert!(matches!(err, ModelError::Depth(_)), "{err}");
        assert!(err.to_string().contains("divisible by 32"));
        let ok = build_backbone::<f32>([3, 224, 224], &stacks).unwrap();
        assert_eq!(ok.output_shape(), &[512 * 7 * 7]);
    }

    #[test]
    fn top_parameter_count() {
        let m = replace_top(&two_stack(), &[512, 512], 0.5, Head::Gender).unwrap();
        let top = 4096 * 512 + 512 + 512 * 512 + 512 + 512 * 2 + 2;
        assert_eq!(top, 2_361_346);
        assert_eq!(m.param_count(), two_stack().param_count() + top);
        assert_eq!(m.pending_init(), &[false, false, true, true, true]);
        assert_eq!(m.freeze_mask(), vec![false; 5]);
    }

    #[test]
    fn age_head_has_81_outputs() {
        let m = replace_top(&two_stack(), &[16, 16], 0.5, Head::Age).unwrap();
        assert_eq!(m.network.output_shape(), &[81]);
    }

    #[test]
    fn replace_top_strips_existing_top() {
        let g = replace_top(&two_stack(), &[32], 0.3, Head::Gender).unwrap();
        let a = replace_top(&g.network, &[64, 8], 0.0, Head::Age).unwrap();
        assert_eq!(a.network.weight_layer_count(), 2 + 3);
        assert_eq!(a.backbone(), two_stack());
    }

    #[test]
    fn bad_top_config() {
        assert!(replace_top(&two_stack(), &[], 0.5, Head::Gender).is_err());
        assert!(replace_top(&two_stack(), &[8], 1.0, Head::Gender).is_err());
    }

    #[test]
    fn freeze_backbone_marks_convs() {
        let mut m = replace_top(&two_stack(), &[8], 0.5, Head::Gender).unwrap();
        m.freeze_backbone();
        assert_eq!(m.freeze_mask(), vec![true, true, false, false]);
        assert!(m.set_freeze(&[true]).is_err());
    }
}

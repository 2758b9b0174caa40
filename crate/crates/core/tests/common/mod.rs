#![allow(dead_code)]

use agelab::nn::{batch_loss, Conv2d, Dense, Dropout, Layer, LossKind, MaxPool2d, Mode, Network};
use agelab::synth::{generate_samples, SyntheticSpec};
use agelab::train::DataSplits;
use agelab::zoo::init_layer;
use agelab::Tensor;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-3;
pub const PARAMS_PER_LAYER: usize = 20;
const DROPOUT_SEED: u64 = 77;

/// Worst relative error seen for one weight layer.
#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub network: &'static str,
    pub loss: LossKind,
    pub layer: usize,
    pub checked: usize,
    pub worst: f64,
}

fn conv(in_c: usize, out_c: usize, stride: usize, padding: usize) -> Layer<f64> {
    Layer::Conv2d(Conv2d::new(in_c, out_c, 3, stride, padding).unwrap())
}

fn dense(i: usize, o: usize) -> Layer<f64> {
    Layer::Dense(Dense::new(i, o).unwrap())
}

/// One small network per layer kind under test, each ending in softmax.
pub fn gradcheck_networks() -> Vec<(&'static str, Network<f64>)> {
    let nets = vec![
        (
            "conv2d_same",
            vec![3, 6, 6],
            vec![conv(3, 4, 1, 1), Layer::Flatten, dense(144, 5), Layer::Softmax],
        ),
        (
            "conv2d_strided",
            vec![2, 7, 7],
            vec![conv(2, 5, 2, 0), Layer::Flatten, dense(45, 4), Layer::Softmax],
        ),
        (
            "maxpool2d",
            vec![2, 6, 6],
            vec![
                conv(2, 4, 1, 1),
                Layer::MaxPool2d(MaxPool2d::default()),
                Layer::Flatten,
                dense(36, 3),
                Layer::Softmax,
            ],
        ),
        (
            "relu",
            vec![2, 5, 5],
            vec![conv(2, 3, 1, 1), Layer::Relu, Layer::Flatten, dense(75, 6), Layer::Relu, dense(6, 4), Layer::Softmax],
        ),
        (
            "dropout",
            vec![12],
            vec![dense(12, 10), Layer::Relu, Layer::Dropout(Dropout::new(0.4).unwrap()), dense(10, 5), Layer::Softmax],
        ),
        (
            "dense",
            vec![9],
            vec![dense(9, 7), Layer::Relu, dense(7, 6), Layer::Softmax],
        ),
    ];
    nets.into_iter()
        .enumerate()
        .map(|(i, (name, shape, layers))| {
            (name, init(Network::new(shape, layers).unwrap(), 100 + i as u64))
        })
        .collect()
}

/// Glorot weights plus small random biases so bias gradients are generic.
fn init(mut net: Network<f64>, seed: u64) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers_mut() {
        if layer.has_weights() {
            init_layer(layer, &mut rng);
            let (_, b) = layer.params_mut().unwrap();
            for v in b.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    net
}

fn batch_data(net: &Network<f64>, batch: usize, kind: LossKind, seed: u64) -> (Tensor<f64>, Tensor<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shape = vec![batch];
    shape.extend_from_slice(net.input_shape());
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let width = net.output_shape()[0];
    let mut t = Vec::with_capacity(batch * width);
    for _ in 0..batch {
        // One-hot targets keep every |p - t| far from the MAE kink, since
        // softmax outputs lie strictly inside (0, 1).
        let mut row: Vec<f64> = match kind {
            LossKind::BinaryCrossEntropy | LossKind::MeanAbsoluteError => {
                let mut r = vec![0.0; width];
                r[rng.random_range(0..width)] = 1.0;
                r
            }
            _ => (0..width).map(|_| rng.random_range(0.0..1.0)).collect(),
        };
        if kind == LossKind::CrossEntropy {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        t.extend(row);
    }
    (x, Tensor::new(vec![batch, width], t).unwrap())
}

fn loss_at(net: &mut Network<f64>, x: &Tensor<f64>, t: &Tensor<f64>, kind: LossKind) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(DROPOUT_SEED);
    let out = net.forward(x, Mode::Train, &mut rng).unwrap();
    batch_loss(&out, t, kind).unwrap().0
}

fn param(net: &mut Network<f64>, layer: usize, bias: bool, i: usize) -> &mut f64 {
    let (w, b) = net.layers_mut()[layer].params_mut().unwrap();
    if bias {
        &mut b.data_mut()[i]
    } else {
        &mut w.data_mut()[i]
    }
}

/// Central differences against backprop on sampled parameters of every
/// weight layer. Dropout masks replay because every forward pass reseeds.
pub fn check_network(name: &'static str, net: &Network<f64>, kind: LossKind, seed: u64) -> Vec<LayerCheck> {
    let mut net = net.clone();
    let (x, t) = batch_data(&net, 3, kind, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(DROPOUT_SEED);
    let out = net.forward(&x, Mode::Train, &mut rng).unwrap();
    let (_, grad) = batch_loss(&out, &t, kind).unwrap();
    let grads = net.backward(&grad).unwrap();
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let weight_layers: Vec<usize> = (0..net.layers().len()).filter(|&i| net.layers()[i].has_weights()).collect();
    let mut checks = Vec::new();
    for (wi, &li) in weight_layers.iter().enumerate() {
        let (w_len, b_len) = {
            let (w, b) = net.layers()[li].params().unwrap();
            (w.len(), b.len())
        };
        let n_bias = b_len.min(5);
        let n_weight = (PARAMS_PER_LAYER).min(w_len);
        let mut sites: Vec<(bool, usize)> = index::sample(&mut pick, w_len, n_weight)
            .into_iter()
            .map(|i| (false, i))
            .collect();
        sites.extend(index::sample(&mut pick, b_len, n_bias).into_iter().map(|i| (true, i)));
        let mut worst: f64 = 0.0;
        for &(bias, i) in &sites {
            let analytic = if bias {
                grads[wi].bias.data()[i]
            } else {
                grads[wi].weights.data()[i]
            };
            let orig = *param(&mut net, li, bias, i);
            *param(&mut net, li, bias, i) = orig + FD_STEP;
            let up = loss_at(&mut net, &x, &t, kind);
            *param(&mut net, li, bias, i) = orig - FD_STEP;
            let down = loss_at(&mut net, &x, &t, kind);
            *param(&mut net, li, bias, i) = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale == 0.0 { 0.0 } else { (analytic - numeric).abs() / scale };
            worst = worst.max(rel);
        }
        checks.push(LayerCheck {
            network: name,
            loss: kind,
            layer: li,
            checked: sites.len(),
            worst,
        });
    }
    checks
}

pub fn all_gradient_checks() -> Vec<LayerCheck> {
    let mut out = Vec::new();
    for (i, (name, net)) in gradcheck_networks().into_iter().enumerate() {
        for kind in [LossKind::BinaryCrossEntropy, LossKind::MeanAbsoluteError, LossKind::CrossEntropy] {
            out.extend(check_network(name, &net, kind, 1000 + i as u64));
        }
    }
    out
}

/// Synthetic train / validation-source / test splits from one generator run.
pub fn synthetic_splits(seed: u64, train: usize, val: usize, test: usize) -> DataSplits<f32> {
    let spec = SyntheticSpec {
        count: train + val + test,
        seed,
        ..SyntheticSpec::default()
    };
    let mut all = generate_samples::<f32>(&spec).unwrap();
    let test_set = all.split_off(train + val);
    let val_set = all.split_off(train);
    DataSplits {
        train: all,
        val_source: val_set,
        test: test_set,
    }
}

//! `.ckpt` files: a magic line, the manifest length, a TOML manifest, then
//! every weight and bias tensor as little-endian values concatenated in
//! layer order. The manifest records each blob's byte offset and length.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{Conv2d, Dense, Dropout, Layer, LayerKind, MaxPool2d, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::build::{Head, Model};
use super::ModelError;

const MAGIC: &str = "AGELAB-CKPT 1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    scalar: String,
    head: Head,
    input_shape: Vec<usize>,
    freeze_mask: Vec<bool>,
    blob_bytes: u64,
    provenance: BTreeMap<String, String>,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pool: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<BlobRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<BlobRef>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobRef {
    shape: Vec<usize>,
    offset: u64,
    bytes: u64,
}

fn push_blob<T: Scalar>(t: &Tensor<T>, blobs: &mut Vec<u8>) -> BlobRef {
    let offset = blobs.len() as u64;
    for &v in t.data() {
        v.write_le(blobs);
    }
    BlobRef {
        shape: t.shape().to_vec(),
        offset,
        bytes: blobs.len() as u64 - offset,
    }
}

pub fn encode_checkpoint<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut blobs = Vec::new();
    let layers = model
        .network
        .layers()
        .iter()
        .map(|layer| {
            let mut e = LayerEntry {
                kind: layer.kind().name().to_string(),
                ..Default::default()
            };
            match layer {
                Layer::Conv2d(c) => {
                    e.in_channels = Some(c.in_channels);
                    e.out_channels = Some(c.out_channels);
                    e.kernel = Some(c.kernel);
                    e.stride = Some(c.stride);
                    e.padding = Some(c.padding);
                }
                Layer::Dense(d) => {
                    e.in_features = Some(d.in_features);
                    e.out_features = Some(d.out_features);
                }
                Layer::MaxPool2d(p) => e.pool = Some(p.size),
                Layer::Dropout(d) => e.rate = Some(d.rate()),
                Layer::Relu | Layer::Flatten | Layer::Softmax => {}
            }
            if let Some((w, b)) = layer.params() {
                e.weights = Some(push_blob(w, &mut blobs));
                e.bias = Some(push_blob(b, &mut blobs));
            }
            e
        })
        .collect();
    let manifest = Manifest {
        scalar: T::NAME.to_string(),
        head: model.head,
        input_shape: model.network.input_shape().to_vec(),
        freeze_mask: model.freeze_mask(),
        blob_bytes: blobs.len() as u64,
        provenance: model.provenance.clone(),
        layers,
    };
    let text = toml::to_string(&manifest).expect("manifest serialises");
    let mut out = format!("{MAGIC}\n{}\n", text.len()).into_bytes();
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&blobs);
    out
}

fn read_blob<T: Scalar>(r: &BlobRef, blobs: &[u8], what: &str) -> Result<Tensor<T>, ModelError> {
    let count: usize = r.shape.iter().product();
    let want = (count * T::BYTES) as u64;
    if r.bytes != want {
        return Err(ModelError::Format(format!(
            "{what}: shape {:?} needs {want} bytes, manifest says {}",
            r.shape, r.bytes
        )));
    }
    let start = r.offset as usize;
    let end = start
        .checked_add(want as usize)
        .filter(|&e| e <= blobs.len())
        .ok_or_else(|| ModelError::Format(format!("{what}: blob runs past end of file")))?;
    let data = blobs[start..end].chunks_exact(T::BYTES).map(T::read_le).collect();
    Ok(Tensor::new(r.shape.clone(), data).expect("length checked"))
}

fn need<V>(v: Option<V>, what: &str, index: usize) -> Result<V, ModelError> {
    v.ok_or_else(|| ModelError::Format(format!("layer {index}: missing {what}")))
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Model<T>, ModelError> {
    let fmt = |m: &str| ModelError::Format(m.to_string());
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    if lines.next() != Some(MAGIC.as_bytes()) {
        return Err(fmt("missing checkpoint magic line"));
    }
    let len: usize = lines
        .next()
        .and_then(|l| std::str::from_utf8(l).ok())
        .and_then(|l| l.parse().ok())
        .ok_or_else(|| fmt("bad manifest length line"))?;
    let rest = lines.next().ok_or_else(|| fmt("truncated before manifest"))?;
    if rest.len() < len {
        return Err(fmt("truncated inside manifest"));
    }
    let text = std::str::from_utf8(&rest[..len]).map_err(|_| fmt("manifest is not UTF-8"))?;
    let manifest: Manifest = toml::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
    let blobs = &rest[len..];
    if manifest.scalar != T::NAME {
        return Err(ModelError::Format(format!(
            "checkpoint stores {} values, loader expects {}",
            manifest.scalar,
            T::NAME
        )));
    }
    if blobs.len() as u64 != manifest.blob_bytes {
        return Err(ModelError::Format(format!(
            "blob section has {} bytes, manifest declares {}",
            blobs.len(),
            manifest.blob_bytes
        )));
    }
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, e) in manifest.layers.iter().enumerate() {
        let kind = LayerKind::from_name(&e.kind)
            .ok_or_else(|| ModelError::Format(format!("layer {i}: unknown kind {:?}", e.kind)))?;
        let layer = match kind {
            LayerKind::Conv2D => {
                let mut c = Conv2d::new(
                    need(e.in_channels, "in_channels", i)?,
                    need(e.out_channels, "out_channels", i)?,
                    need(e.kernel, "kernel", i)?,
                    need(e.stride, "stride", i)?,
                    need(e.padding, "padding", i)?,
                )?;
                c.weights = read_blob(need(e.weights.as_ref(), "weights", i)?, blobs, &format!("layer {i} weights"))?;
                c.bias = read_blob(need(e.bias.as_ref(), "bias", i)?, blobs, &format!("layer {i} bias"))?;
                if c.weights.shape() != [c.out_channels, c.in_channels, c.kernel, c.kernel]
                    || c.bias.shape() != [c.out_channels]
                {
                    return Err(ModelError::Format(format!("layer {i}: blob shapes disagree with conv2d settings")));
                }
                Layer::Conv2d(c)
            }
            LayerKind::Dense => {
                let mut d = Dense::new(need(e.in_features, "in_features", i)?, need(e.out_features, "out_features", i)?)?;
                d.weights = read_blob(need(e.weights.as_ref(), "weights", i)?, blobs, &format!("layer {i} weights"))?;
                d.bias = read_blob(need(e.bias.as_ref(), "bias", i)?, blobs, &format!("layer {i} bias"))?;
                if d.weights.shape() != [d.out_features, d.in_features] || d.bias.shape() != [d.out_features] {
                    return Err(ModelError::Format(format!("layer {i}: blob shapes disagree with dense settings")));
                }
                Layer::Dense(d)
            }
            LayerKind::MaxPool2D => Layer::MaxPool2d(MaxPool2d {
                size: need(e.pool, "pool", i)?,
            }),
            LayerKind::Dropout => Layer::Dropout(Dropout::new(need(e.rate, "rate", i)?)?),
            LayerKind::ReLU => Layer::Relu,
            LayerKind::Flatten => Layer::Flatten,
            LayerKind::Softmax => Layer::Softmax,
        };
        layers.push(layer);
    }
    let mut network = Network::new(manifest.input_shape.clone(), layers)?;
    network.set_freeze_mask(&manifest.freeze_mask)?;
    let mut model = Model::from_parts(network, manifest.head)?;
    model.provenance = manifest.provenance;
    Ok(model)
}

/// Writes the whole file or nothing: data goes to a sibling temp file that
/// is renamed into place.
pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<(), ModelError> {
    let io = |e| ModelError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, encode_checkpoint(model)).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and checks it layer by layer against an expected
/// architecture, naming the first layer that differs.
pub fn load_checkpoint_into<T: Scalar>(path: &Path, expected: &Model<T>) -> Result<Model<T>, ModelError> {
    let loaded = load_checkpoint::<T>(path)?;
    let (a, b) = (expected.network.layers(), loaded.network.layers());
    if expected.network.input_shape() != loaded.network.input_shape() {
        return Err(ModelError::Mismatch {
            layer: "input".into(),
            detail: format!(
                "expected {:?}, checkpoint has {:?}",
                expected.network.input_shape(),
                loaded.network.input_shape()
            ),
        });
    }
    for i in 0..a.len().max(b.len()) {
        let name = |l: Option<&Layer<T>>| l.map(|l| l.kind().name()).unwrap_or("nothing");
        let (x, y) = (a.get(i), b.get(i));
        let same = match (x, y) {
            (Some(x), Some(y)) => {
                x.kind() == y.kind()
                    && x.params().map(|(w, b)| (w.shape(), b.shape()))
                        == y.params().map(|(w, b)| (w.shape(), b.shape()))
            }
            _ => false,
        };
        if !same {
            let shapes = |l: Option<&Layer<T>>| {
                l.and_then(|l| l.params()).map(|(w, _)| format!("{:?}", w.shape())).unwrap_or_default()
            };
            return Err(ModelError::Mismatch {
                layer: format!("layer {i} ({})", name(x)),
                detail: format!(
                    "expected {} {}, checkpoint has {} {}",
                    name(x),
                    shapes(x),
                    name(y),
                    shapes(y)
                ),
            });
        }
    }
    Ok(loaded)
}

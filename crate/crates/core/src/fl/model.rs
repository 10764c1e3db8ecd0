//! Model parameters as a flat vector with shape metadata, plus the two
//! desk-scale architectures (linear softmax and a one-hidden-layer MLP)
//! and the binary model file consumed by the CLI `verify` command.

use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::data::Dataset;

const MODEL_MAGIC: &[u8; 4] = b"FCM1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model file error: {0}")]
    FileFormat(String),
    #[error("watermark slice out of bounds: offset {offset} + len {len} > layer size {layer}")]
    SliceOutOfBounds { offset: usize, len: usize, layer: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerShape {
    pub name: String,
    pub dims: Vec<usize>,
}

impl LayerShape {
    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Flat parameter vector with shape metadata; the unit exchanged between
/// trainers and the aggregator.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub values: Vec<f64>,
    pub shapes: Vec<LayerShape>,
}

impl ModelParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.shapes == other.shapes && self.values.len() == other.values.len()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Byte offset of a named layer in the flat vector.
    pub fn layer_offset(&self, name: &str) -> Option<(usize, usize)> {
        let mut offset = 0;
        for shape in &self.shapes {
            let size = shape.size();
            if shape.name == name {
                return Some((offset, size));
            }
            offset += size;
        }
        None
    }

    /// The final linear layer's weight matrix; watermark slices default
    /// to its first `len` parameters.
    pub fn final_weight_layer(&self) -> &LayerShape {
        self.shapes
            .iter()
            .rev()
            .find(|s| s.dims.len() == 2)
            .expect("model has at least one weight matrix")
    }

    pub fn watermark_slice_range(
        &self,
        offset: usize,
        len: usize,
    ) -> Result<std::ops::Range<usize>, ModelError> {
        let layer = self.final_weight_layer().name.clone();
        let (start, size) = self.layer_offset(&layer).unwrap();
        if offset + len > size {
            return Err(ModelError::SliceOutOfBounds { offset, len, layer: size });
        }
        Ok(start + offset..start + offset + len)
    }

    /// Binary model file: magic, shape table, then flat little-endian
    /// IEEE-754 binary64 values.
    pub fn write_file(&self, path: &Path) -> Result<(), ModelError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&(self.shapes.len() as u32).to_le_bytes());
        for shape in &self.shapes {
            let name = shape.name.as_bytes();
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name);
            buf.extend_from_slice(&(shape.dims.len() as u32).to_le_bytes());
            for &d in &shape.dims {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| ModelError::FileFormat(e.to_string()))
    }

    pub fn read_file(path: &Path) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| ModelError::FileFormat(e.to_string()))?;
        let fail = |msg: &str| ModelError::FileFormat(msg.to_string());
        if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
            return Err(fail("bad magic"));
        }
        let mut pos = 4usize;
        let mut take = |n: usize| -> Result<&[u8], ModelError> {
            if pos + n > bytes.len() {
                return Err(ModelError::FileFormat("truncated".to_string()));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let n_shapes = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut shapes = Vec::with_capacity(n_shapes);
        for _ in 0..n_shapes {
            let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(name_len)?.to_vec())
                .map_err(|_| ModelError::FileFormat("bad layer name".to_string()))?;
            let ndim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
            }
            shapes.push(LayerShape { name, dims });
        }
        let n_values = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let expected: usize = shapes.iter().map(|s| s.size()).sum();
        if n_values != expected {
            return Err(fail("shape table does not match value count"));
        }
        let mut values = Vec::with_capacity(n_values);
        for _ in 0..n_values {
            values.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        if pos != bytes.len() {
            return Err(fail("trailing bytes"));
        }
        Ok(ModelParams { values, shapes })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Mlp1Hidden { hidden: usize },
}

impl ModelKind {
    pub fn parse(name: &str, hidden: usize) -> Result<Self, ModelError> {
        match name {
            "linear" => Ok(ModelKind::Linear),
            "mlp_1hidden" => Ok(ModelKind::Mlp1Hidden { hidden }),
            other => Err(ModelError::UnknownModel(other.to_string())),
        }
    }

    pub fn shapes(&self, n_features: usize, n_classes: usize) -> Vec<LayerShape> {
        match *self {
            ModelKind::Linear => vec![
                LayerShape { name: "weight".into(), dims: vec![n_features, n_classes] },
                LayerShape { name: "bias".into(), dims: vec![n_classes] },
            ],
            ModelKind::Mlp1Hidden { hidden } => vec![
                LayerShape { name: "w1".into(), dims: vec![n_features, hidden] },
                LayerShape { name: "b1".into(), dims: vec![hidden] },
                LayerShape { name: "w2".into(), dims: vec![hidden, n_classes] },
                LayerShape { name: "b2".into(), dims: vec![n_classes] },
            ],
        }
    }

    pub fn from_shapes(shapes: &[LayerShape]) -> Result<Self, ModelError> {
        match shapes.len() {
            2 => Ok(ModelKind::Linear),
            4 => Ok(ModelKind::Mlp1Hidden { hidden: shapes[0].dims[1] }),
            n => Err(ModelError::ShapeMismatch(format!("unexpected layer count {n}"))),
        }
    }
}

/// Seeded uniform init in [−0.1, 0.1]; deterministic per (kind, seed).
pub fn init_model(
    kind: ModelKind,
    n_features: usize,
    n_classes: usize,
    seed: u64,
) -> ModelParams {
    let shapes = kind.shapes(n_features, n_classes);
    let total: usize = shapes.iter().map(|s| s.size()).sum();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = (0..total).map(|_| rng.random_range(-0.1..0.1)).collect();
    ModelParams { values, shapes }
}

/// Per-sample class scores plus the cached hidden activations needed for
/// backprop.
pub struct Forward {
    pub logits: Vec<f64>,
    hidden: Vec<f64>,
}

/// Stable log-softmax cross-entropy for one logit row.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    log_sum - logits[label]
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

pub struct Network<'a> {
    pub kind: ModelKind,
    pub params: &'a ModelParams,
    pub n_features: usize,
    pub n_classes: usize,
}

impl<'a> Network<'a> {
    pub fn new(params: &'a ModelParams, data: &Dataset) -> Result<Self, ModelError> {
        let kind = ModelKind::from_shapes(&params.shapes)?;
        let expected = kind.shapes(data.n_features, data.n_classes);
        if expected != params.shapes {
            return Err(ModelError::ShapeMismatch(format!(
                "model shapes {:?} do not fit dataset ({} features, {} classes)",
                params.shapes, data.n_features, data.n_classes
            )));
        }
        Ok(Network { kind, params, n_features: data.n_features, n_classes: data.n_classes })
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        let v = &self.params.values;
        match self.kind {
            ModelKind::Linear => {
                let (w_off, _) = self.params.layer_offset("weight").unwrap();
                let (b_off, _) = self.params.layer_offset("bias").unwrap();
                let mut logits = vec![0.0; self.n_classes];
                for (c, logit) in logits.iter_mut().enumerate() {
                    let mut z = v[b_off + c];
                    for (j, &xj) in x.iter().enumerate() {
                        z += xj * v[w_off + j * self.n_classes + c];
                    }
                    *logit = z;
                }
                Forward { logits, hidden: Vec::new() }
            }
            ModelKind::Mlp1Hidden { hidden } => {
                let (w1, _) = self.params.layer_offset("w1").unwrap();
                let (b1, _) = self.params.layer_offset("b1").unwrap();
                let (w2, _) = self.params.layer_offset("w2").unwrap();
                let (b2, _) = self.params.layer_offset("b2").unwrap();
                let mut h = vec![0.0; hidden];
                for (k, hk) in h.iter_mut().enumerate() {
                    let mut z = v[b1 + k];
                    for (j, &xj) in x.iter().enumerate() {
                        z += xj * v[w1 + j * hidden + k];
                    }
                    *hk = z.max(0.0); // ReLU
                }
                let mut logits = vec![0.0; self.n_classes];
                for (c, logit) in logits.iter_mut().enumerate() {
                    let mut z = v[b2 + c];
                    for (k, &hk) in h.iter().enumerate() {
                        z += hk * v[w2 + k * self.n_classes + c];
                    }
                    *logit = z;
                }
                Forward { logits, hidden: h }
            }
        }
    }

    /// Accumulate d(mean CE over batch)/d(params) into `grad` and return
    /// the mean cross-entropy. `grad` must be zeroed by the caller.
    pub fn backward_batch(
        &self,
        data: &Dataset,
        batch: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        let v = &self.params.values;
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let x = data.row(i);
            let label = data.labels[i] as usize;
            let fwd = self.forward(x);
            loss += cross_entropy(&fwd.logits, label);
            let mut delta = softmax(&fwd.logits);
            delta[label] -= 1.0;
            match self.kind {
                ModelKind::Linear => {
                    let (w_off, _) = self.params.layer_offset("weight").unwrap();
                    let (b_off, _) = self.params.layer_offset("bias").unwrap();
                    for (c, &dc) in delta.iter().enumerate() {
                        grad[b_off + c] += scale * dc;
                        for (j, &xj) in x.iter().enumerate() {
                            grad[w_off + j * self.n_classes + c] += scale * dc * xj;
                        }
                    }
                }
                ModelKind::Mlp1Hidden { hidden } => {
                    let (w1, _) = self.params.layer_offset("w1").unwrap();
                    let (b1, _) = self.params.layer_offset("b1").unwrap();
                    let (w2, _) = self.params.layer_offset("w2").unwrap();
                    let (b2, _) = self.params.layer_offset("b2").unwrap();
                    for (c, &dc) in delta.iter().enumerate() {
                        grad[b2 + c] += scale * dc;
                        for (k, &hk) in fwd.hidden.iter().enumerate() {
                            grad[w2 + k * self.n_classes + c] += scale * dc * hk;
                        }
                    }
                    for (k, &hk) in fwd.hidden.iter().enumerate() {
                        if hk <= 0.0 {
                            continue; // ReLU gate
                        }
                        let mut dh = 0.0;
                        for (c, &dc) in delta.iter().enumerate() {
                            dh += dc * v[w2 + k * self.n_classes + c];
                        }
                        grad[b1 + k] += scale * dh;
                        for (j, &xj) in x.iter().enumerate() {
                            grad[w1 + j * hidden + k] += scale * dh * xj;
                        }
                    }
                }
            }
        }
        loss * scale
    }
}

//! Versioned JSON checkpoints of networks and optimizer state.
//!
//! Floats are written in shortest round-trip decimal form and parsed exactly,
//! so saving and loading reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdamConfig, AdamState, Dense, DenseNet, Gradients, LayerGrad, LayerSpec, NeuralError};
use crate::scalar::Scalar;

/// Layout version written into every checkpoint; loads of other versions fail.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint layout version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint has no entry `{0}`")]
    Missing(String),
    #[error("checkpoint entry `{name}` is malformed: {reason}")]
    Malformed { name: String, reason: String },
    #[error(transparent)]
    Network(#[from] NeuralError),
    #[error("checkpoint encoding error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LayerDoc<T> {
    #[serde(flatten)]
    pub spec: LayerSpec,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

fn layer_from_doc<T: Scalar>(doc: &LayerDoc<T>) -> Result<(Array2<T>, Array1<T>), NeuralError> {
    let s = doc.spec;
    let weight = Array2::from_shape_vec((s.out_dim, s.in_dim), doc.weight.clone())
        .map_err(|_| NeuralError::ShapeMismatch(format!("weight array of {} values for {}x{}", doc.weight.len(), s.out_dim, s.in_dim)))?;
    if doc.bias.len() != s.out_dim {
        return Err(NeuralError::ShapeMismatch(format!("bias of {} values for {} outputs", doc.bias.len(), s.out_dim)));
    }
    Ok((weight, Array1::from(doc.bias.clone())))
}

fn to_vec<T: Copy>(a: impl IntoIterator<Item = T>) -> Vec<T> {
    a.into_iter().collect()
}

/// Serializable form of a [`DenseNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct NetDoc<T> {
    pub layers: Vec<LayerDoc<T>>,
}

impl<T: Scalar> From<&DenseNet<T>> for NetDoc<T> {
    fn from(net: &DenseNet<T>) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerDoc { spec: l.spec, weight: to_vec(l.weight.iter().copied()), bias: to_vec(l.bias.iter().copied()) })
                .collect(),
        }
    }
}

impl<T: Scalar> TryFrom<&NetDoc<T>> for DenseNet<T> {
    type Error = NeuralError;

    fn try_from(doc: &NetDoc<T>) -> Result<Self, Self::Error> {
        let layers = doc
            .layers
            .iter()
            .map(|d| layer_from_doc(d).map(|(weight, bias)| Dense { spec: d.spec, weight, bias }))
            .collect::<Result<Vec<_>, _>>()?;
        DenseNet::from_layers(layers)
    }
}

impl<T: Scalar> Serialize for DenseNet<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        NetDoc::from(self).serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for DenseNet<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = NetDoc::<T>::deserialize(d)?;
        DenseNet::try_from(&doc).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct AdamDoc<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<LayerDoc<T>>,
    pub v: Vec<LayerDoc<T>>,
}

fn grads_to_docs<T: Scalar>(g: &Gradients<T>, specs: &[LayerSpec]) -> Vec<LayerDoc<T>> {
    g.layers
        .iter()
        .zip(specs)
        .map(|(l, &spec)| LayerDoc { spec, weight: to_vec(l.weight.iter().copied()), bias: to_vec(l.bias.iter().copied()) })
        .collect()
}

fn grads_from_docs<T: Scalar>(docs: &[LayerDoc<T>], net: &DenseNet<T>) -> Result<Gradients<T>, NeuralError> {
    if docs.len() != net.layers().len() {
        return Err(NeuralError::ShapeMismatch("optimizer moments do not match the network depth".into()));
    }
    let layers = docs
        .iter()
        .zip(net.layers())
        .map(|(d, l)| {
            if d.spec != l.spec {
                return Err(NeuralError::ShapeMismatch("optimizer moments do not match the network layers".into()));
            }
            layer_from_doc(d).map(|(weight, bias)| LayerGrad { weight, bias })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Gradients { layers })
}

/// A named collection of networks and optimizers plus a training step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Checkpoint<T> {
    pub version: u32,
    pub step: u64,
    pub nets: BTreeMap<String, NetDoc<T>>,
    pub optimizers: BTreeMap<String, AdamDoc<T>>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl<T: Scalar> Default for Checkpoint<T> {
    fn default() -> Self {
        Self { version: CHECKPOINT_VERSION, step: 0, nets: BTreeMap::new(), optimizers: BTreeMap::new(), meta: BTreeMap::new() }
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(step: u64) -> Self {
        Self { step, ..Self::default() }
    }

    pub fn insert_net(&mut self, name: &str, net: &DenseNet<T>) {
        self.nets.insert(name.to_string(), NetDoc::from(net));
    }

    pub fn net(&self, name: &str) -> Result<DenseNet<T>, CheckpointError> {
        let doc = self.nets.get(name).ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        DenseNet::try_from(doc).map_err(|e| CheckpointError::Malformed { name: name.to_string(), reason: e.to_string() })
    }

    pub fn insert_adam(&mut self, name: &str, state: &AdamState<T>, net: &DenseNet<T>) {
        let specs = net.specs();
        self.optimizers.insert(
            name.to_string(),
            AdamDoc { config: state.config, t: state.t, m: grads_to_docs(&state.m, &specs), v: grads_to_docs(&state.v, &specs) },
        );
    }

    /// Restores optimizer state for `net`; the moments must match its layers.
    pub fn adam(&self, name: &str, net: &DenseNet<T>) -> Result<AdamState<T>, CheckpointError> {
        let doc = self.optimizers.get(name).ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        let malformed = |e: NeuralError| CheckpointError::Malformed { name: name.to_string(), reason: e.to_string() };
        Ok(AdamState {
            config: doc.config,
            t: doc.t,
            m: grads_from_docs(&doc.m, net).map_err(malformed)?,
            v: grads_from_docs(&doc.v, net).map_err(malformed)?,
        })
    }

    pub fn to_json(&self) -> Result<String, CheckpointError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: header.version, expected: CHECKPOINT_VERSION });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{mlp_specs, Activation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(seed: u64) -> DenseNet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseNet::init(&mlp_specs(&[5, 7, 3], Activation::Relu, Activation::Sigmoid), 0.9, &mut rng).unwrap()
    }

    #[test]
    fn network_round_trip_is_bit_exact() {
        let net = random_net(11);
        let text = serde_json::to_string(&net).unwrap();
        let back: DenseNet<f64> = serde_json::from_str(&text).unwrap();
        let bits = |n: &DenseNet<f64>| n.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&net));
    }

    #[test]
    fn checkpoint_with_optimizer_round_trips() {
        let mut net = random_net(2);
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weight.fill(0.123);
        adam.step(&mut net, &g).unwrap();
        let mut ck = Checkpoint::new(42);
        ck.insert_net("actor", &net);
        ck.insert_adam("actor", &adam, &net);
        let back = Checkpoint::<f64>::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.net("actor").unwrap(), net);
        assert_eq!(back.adam("actor", &net).unwrap(), adam);
        assert!(matches!(back.net("critic"), Err(CheckpointError::Missing(_))));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut ck = Checkpoint::<f64>::new(0);
        ck.version = CHECKPOINT_VERSION + 1;
        let text = serde_json::to_string(&ck).unwrap();
        assert!(matches!(Checkpoint::<f64>::from_json(&text), Err(CheckpointError::Version { .. })));
    }

    #[test]
    fn malformed_arrays_are_rejected() {
        let mut ck = Checkpoint::<f64>::new(0);
        ck.insert_net("n", &random_net(1));
        ck.nets.get_mut("n").unwrap().layers[0].weight.pop();
        assert!(matches!(ck.net("n"), Err(CheckpointError::Malformed { .. })));
    }
}

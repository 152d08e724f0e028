//! Versioned JSON checkpoints for networks and optimizer state.
//!
//! Values are stored as `f64`, which represents both `f32` and `f64`
//! parameters exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::adam::{AdamHyper, AdamState};
use crate::neuralnet::mlp::{Activation, Gradients, Layer, Mlp};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub version: u32,
    pub output_activation: Activation,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerRecord {
    pub version: u32,
    pub step: u64,
    pub hyper: AdamHyper,
    pub first: Vec<LayerRecord>,
    pub second: Vec<LayerRecord>,
}

fn to_f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn from_f64s<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

impl NetworkRecord {
    pub fn from_mlp<T: Scalar>(net: &Mlp<T>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            output_activation: net.output_activation,
            layers: net
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: to_f64s(&l.weights),
                    bias: to_f64s(&l.bias),
                })
                .collect(),
        }
    }

    pub fn to_mlp<T: Scalar>(&self) -> Result<Mlp<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let layers = self
            .layers
            .iter()
            .map(|r| Layer {
                inputs: r.inputs,
                outputs: r.outputs,
                weights: from_f64s(&r.weights),
                bias: from_f64s(&r.bias),
            })
            .collect();
        Mlp::from_layers(layers, self.output_activation)
            .map_err(|e| Error::Checkpoint(format!("malformed network: {e}")))
    }
}

fn grads_records<T: Scalar>(g: &Gradients<T>) -> Vec<LayerRecord> {
    g.layers
        .iter()
        .map(|(w, b)| LayerRecord {
            inputs: 0,
            outputs: b.len(),
            weights: to_f64s(w),
            bias: to_f64s(b),
        })
        .collect()
}

fn grads_from_records<T: Scalar>(records: &[LayerRecord], like: &Mlp<T>) -> Result<Gradients<T>> {
    if records.len() != like.layers.len() {
        return Err(Error::Checkpoint("optimizer state has wrong layer count".into()));
    }
    let mut g = Gradients::zeros_like(like);
    for ((w, b), r) in g.layers.iter_mut().zip(records) {
        if r.weights.len() != w.len() || r.bias.len() != b.len() {
            return Err(Error::Checkpoint("optimizer state shaped for another network".into()));
        }
        *w = from_f64s(&r.weights);
        *b = from_f64s(&r.bias);
    }
    Ok(g)
}

impl OptimizerRecord {
    pub fn from_state<T: Scalar>(s: &AdamState<T>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            step: s.step,
            hyper: s.hyper,
            first: grads_records(&s.first),
            second: grads_records(&s.second),
        }
    }

    pub fn to_state<T: Scalar>(&self, like: &Mlp<T>) -> Result<AdamState<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        Ok(AdamState {
            first: grads_from_records(&self.first, like)?,
            second: grads_from_records(&self.second, like)?,
            step: self.step,
            hyper: self.hyper,
        })
    }
}

pub fn save_network<T: Scalar>(net: &Mlp<T>, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&NetworkRecord::from_mlp(net))?)?;
    Ok(())
}

pub fn load_network<T: Scalar>(path: &Path) -> Result<Mlp<T>> {
    let record: NetworkRecord = serde_json::from_str(&fs::read_to_string(path)?)?;
    record.to_mlp()
}

pub fn save_optimizer<T: Scalar>(state: &AdamState<T>, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&OptimizerRecord::from_state(state))?)?;
    Ok(())
}

pub fn load_optimizer<T: Scalar>(path: &Path, like: &Mlp<T>) -> Result<AdamState<T>> {
    let record: OptimizerRecord = serde_json::from_str(&fs::read_to_string(path)?)?;
    record.to_state(like)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn network_round_trip_is_lossless(seed in any::<u64>(), hidden in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::<f64>::new(&[3, hidden, 2], Activation::Sigmoid, &mut rng).unwrap();
            let text = serde_json::to_string(&NetworkRecord::from_mlp(&net)).unwrap();
            let back: Mlp<f64> = serde_json::from_str::<NetworkRecord>(&text).unwrap().to_mlp().unwrap();
            prop_assert_eq!(back, net);
        }
    }

    #[test]
    fn single_precision_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::<f32>::new(&[2, 3, 1], Activation::Relu, &mut rng).unwrap();
        let back: Mlp<f32> = NetworkRecord::from_mlp(&net).to_mlp().unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn files_round_trip_with_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::<f64>::new(&[2, 4, 1], Activation::Identity, &mut rng).unwrap();
        let mut adam = AdamState::new(&net);
        let (g, _) = net.backward(&[0.3, 0.4], &[1.0]).unwrap();
        adam.step(&mut net, &g, 0.01).unwrap();

        save_network(&net, &dir.path().join("net.json")).unwrap();
        save_optimizer(&adam, &dir.path().join("adam.json")).unwrap();
        let net2: Mlp<f64> = load_network(&dir.path().join("net.json")).unwrap();
        let adam2 = load_optimizer(&dir.path().join("adam.json"), &net2).unwrap();
        assert_eq!(net2, net);
        assert_eq!(adam2, adam);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::<f64>::new(&[2, 1], Activation::Identity, &mut rng).unwrap();
        let mut rec = NetworkRecord::from_mlp(&net);
        rec.version = 99;
        assert!(rec.to_mlp::<f64>().is_err());
    }
}

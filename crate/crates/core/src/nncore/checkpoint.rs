use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, Matrix, Mlp, NnError};

pub const CHECKPOINT_FORMAT: &str = "nncore-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub activation: Activation,
    pub outputs: usize,
    pub inputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Versioned JSON parameter document. Floats are written in shortest
/// round-trip form, so save → load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub layers: Vec<LayerRecord>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed,
            layers: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn push_layer(&mut self, name: &str, layer: &DenseLayer) {
        self.layers.push(LayerRecord {
            name: name.to_string(),
            activation: layer.activation,
            outputs: layer.outputs(),
            inputs: layer.inputs(),
            weights: layer.weights.as_slice().to_vec(),
            bias: layer.bias.clone(),
        });
    }

    pub fn from_mlp(mlp: &Mlp, seed: u64) -> Self {
        let mut ck = Self::new(seed);
        for (name, layer) in mlp.names().iter().zip(mlp.layers()) {
            ck.push_layer(name, layer);
        }
        ck
    }

    pub fn layer(&self, name: &str) -> Result<DenseLayer, NnError> {
        let rec = self
            .layers
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing layer `{name}`")))?;
        rec.to_dense()
    }

    pub fn to_mlp(&self) -> Result<Mlp, NnError> {
        let layers = self
            .layers
            .iter()
            .map(|rec| Ok((rec.name.clone(), rec.to_dense()?)))
            .collect::<Result<Vec<_>, NnError>>()?;
        Mlp::new(layers)
    }

    pub fn to_json(&self) -> Result<String, NnError> {
        self.check_finite()?;
        serde_json::to_string(self).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unexpected format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_json()?).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check_finite(&self) -> Result<(), NnError> {
        for l in &self.layers {
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(NnError::NonFinite(format!("layer `{}` in checkpoint", l.name)));
            }
        }
        Ok(())
    }
}

impl LayerRecord {
    fn to_dense(&self) -> Result<DenseLayer, NnError> {
        let weights = Matrix::from_vec(self.outputs, self.inputs, self.weights.clone())?;
        DenseLayer::new(weights, self.bias.clone(), self.activation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Rng;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(seed in any::<u64>(), scale in 1e-300f64..1e300) {
            let mut rng = Rng::new(seed);
            let mut mlp = Mlp::init(&[3, 5, 2], &[Activation::Relu, Activation::Sigmoid], &["a", "b"], &mut rng).unwrap();
            let scaled: Vec<f64> = mlp.flat_params().iter().map(|v| v * scale).collect();
            mlp.set_flat_params(&scaled).unwrap();
            let ck = Checkpoint::from_mlp(&mlp, seed);
            let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
            prop_assert_eq!(&back, &ck);
            let restored = back.to_mlp().unwrap();
            let bits: Vec<u64> = restored.flat_params().iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u64> = mlp.flat_params().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, orig);
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let mut ck = Checkpoint::new(1);
        ck.version = 99;
        let text = serde_json::to_string(&ck).unwrap();
        assert!(Checkpoint::from_json(&text).is_err());
    }

    #[test]
    fn non_finite_parameters_refused() {
        let mut ck = Checkpoint::new(1);
        let layer = DenseLayer::new(Matrix::from_rows(&[[f64::NAN]]).unwrap(), vec![0.0], Activation::Identity).unwrap();
        ck.push_layer("x", &layer);
        assert!(ck.to_json().is_err());
    }
}

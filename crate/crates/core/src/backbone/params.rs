use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window and layer sizes of the graph-temporal backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub t_in: usize,
    pub t_out: usize,
    pub feature_count: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            t_in: 12,
            t_out: 12,
            feature_count: 1,
            hidden1: 32,
            hidden2: 32,
        }
    }
}

impl ArchConfig {
    pub fn input_width(&self) -> usize {
        self.t_in * self.feature_count
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_in == 0 || self.t_out == 0 || self.feature_count == 0 {
            return Err(Error::InvalidArgument(
                "t_in, t_out and feature_count must be at least 1".into(),
            ));
        }
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::InvalidArgument("hidden sizes must be at least 1".into()));
        }
        Ok(())
    }

    /// Layer tensors in flattening order: W1, b1, W2, b2, W3, b3.
    pub fn layout(&self) -> Vec<LayerSpec> {
        let w = self.input_width();
        vec![
            LayerSpec::new("w1", &[w, self.hidden1]),
            LayerSpec::new("b1", &[self.hidden1]),
            LayerSpec::new("w2", &[self.hidden1, self.hidden2]),
            LayerSpec::new("b2", &[self.hidden2]),
            LayerSpec::new("w3", &[self.hidden2, self.t_out]),
            LayerSpec::new("b3", &[self.t_out]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(LayerSpec::len).sum()
    }

    /// `true` at entries of weight matrices, `false` at bias entries.
    pub fn weight_entries(&self) -> Vec<bool> {
        self.layout()
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.shape.len() == 2, l.len()))
            .collect()
    }

    pub fn layer_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.layout()
            .iter()
            .map(|l| {
                let r = start..start + l.len();
                start = r.end;
                r
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerSpec {
    fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All learnable backbone parameters, stored as one row-major flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    arch: ArchConfig,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: ArchConfig) -> Self {
        Self {
            values: vec![0.0; arch.param_count()],
            arch,
        }
    }

    /// Glorot-uniform weights and zero biases, reproducible from `seed`.
    pub fn init(arch: ArchConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(arch.param_count());
        for spec in arch.layout() {
            if spec.shape.len() == 2 {
                let bound = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
                values.extend((0..spec.len()).map(|_| rng.random_range(-bound..bound)));
            } else {
                values.extend(std::iter::repeat_n(0.0, spec.len()));
            }
        }
        Self { arch, values }
    }

    pub fn from_flat(arch: ArchConfig, values: Vec<f64>) -> Result<Self> {
        let expected = arch.param_count();
        if values.len() != expected {
            return Err(Error::shape(
                "ModelParams::from_flat",
                format!("got {} values, architecture needs {expected}", values.len()),
            ));
        }
        Ok(Self { arch, values })
    }

    pub fn from_layers(arch: ArchConfig, layers: &[Vec<f64>]) -> Result<Self> {
        let layout = arch.layout();
        if layers.len() != layout.len() {
            return Err(Error::shape(
                "ModelParams::from_layers",
                format!("got {} layers, expected {}", layers.len(), layout.len()),
            ));
        }
        let mut values = Vec::with_capacity(arch.param_count());
        for (spec, layer) in layout.iter().zip(layers) {
            if layer.len() != spec.len() {
                return Err(Error::shape(
                    format!("layer {}", spec.name),
                    format!("got {} values, expected {:?}", layer.len(), spec.shape),
                ));
            }
            values.extend_from_slice(layer);
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layers(&self) -> Vec<&[f64]> {
        self.arch
            .layer_ranges()
            .into_iter()
            .map(|r| &self.values[r])
            .collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            format: PARAMS_FORMAT.to_string(),
            version: PARAMS_VERSION,
            arch: self.arch,
            layout: self.arch.layout(),
            values: self.values.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(text)?;
        file.into_params()
    }
}

const PARAMS_FORMAT: &str = "synevo.params";
const PARAMS_VERSION: u32 = 1;

/// On-disk parameter vector with its layer-layout header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub arch: ArchConfig,
    pub layout: Vec<LayerSpec>,
    pub values: Vec<f64>,
}

impl ParamsFile {
    pub fn into_params(self) -> Result<ModelParams> {
        if self.format != PARAMS_FORMAT || self.version != PARAMS_VERSION {
            return Err(Error::Config(format!(
                "unsupported parameter file {} v{}",
                self.format, self.version
            )));
        }
        if self.layout != self.arch.layout() {
            return Err(Error::shape(
                "ParamsFile",
                "layer layout header does not match architecture",
            ));
        }
        ModelParams::from_flat(self.arch, self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arch(t_in: usize, t_out: usize, f: usize, h1: usize, h2: usize) -> ArchConfig {
        ArchConfig {
            t_in,
            t_out,
            feature_count: f,
            hidden1: h1,
            hidden2: h2,
        }
    }

    #[test]
    fn layout_order_and_count() {
        let a = arch(3, 2, 1, 4, 5);
        let names: Vec<_> = a.layout().into_iter().map(|l| l.name).collect();
        assert_eq!(names, ["w1", "b1", "w2", "b2", "w3", "b3"]);
        assert_eq!(a.param_count(), 3 * 4 + 4 + 4 * 5 + 5 + 5 * 2 + 2);
    }

    #[test]
    fn init_is_seeded() {
        let a = ArchConfig::default();
        assert_eq!(ModelParams::init(a, 7), ModelParams::init(a, 7));
        assert_ne!(ModelParams::init(a, 7), ModelParams::init(a, 8));
    }

    #[test]
    fn rejects_wrong_layer_length() {
        let a = arch(1, 1, 1, 1, 1);
        let err = ModelParams::from_layers(a, &[vec![0.0; 2], vec![], vec![], vec![], vec![], vec![]]);
        assert!(matches!(err, Err(Error::Shape { context, .. }) if context.contains("w1")));
    }

    proptest! {
        #[test]
        fn flatten_round_trip(t_in in 1usize..5, t_out in 1usize..4, f in 1usize..3,
                              h1 in 1usize..6, h2 in 1usize..6, seed in any::<u64>()) {
            let a = arch(t_in, t_out, f, h1, h2);
            let p = ModelParams::init(a, seed);
            let layers: Vec<Vec<f64>> = p.layers().into_iter().map(<[f64]>::to_vec).collect();
            let back = ModelParams::from_layers(a, &layers).unwrap();
            prop_assert_eq!(&back, &p);
            let json = p.to_json().unwrap();
            prop_assert_eq!(ModelParams::from_json(&json).unwrap(), p);
        }
    }
}

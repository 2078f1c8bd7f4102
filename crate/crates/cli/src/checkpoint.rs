//! Self-describing checkpoint files.
//!
//! A checkpoint is TOML holding the full model configuration (curve
//! coefficients included), the flat parameter vector and a small amount of
//! training metadata. Floats are written in shortest round-trip form, so
//! loading reproduces every parameter bit for bit.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hyperdisc::{ModelConfig, SurfaceModel};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// `init`, `adam` or `lbfgs`.
    pub phase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_loss: Option<f64>,
    pub init_seed: u64,
    pub train_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: Vec<f64>,
    pub meta: Metadata,
    pub model: ModelConfig,
}

impl Checkpoint {
    pub fn new(model: ModelConfig, params: Vec<f64>, meta: Metadata) -> Self {
        Self { format_version: FORMAT_VERSION, params, meta, model }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = toml::from_str(text).context("checkpoint has no format_version")?;
        if v.format_version != FORMAT_VERSION {
            bail!("checkpoint format version {} is not supported (expected {FORMAT_VERSION})", v.format_version);
        }
        let c: Self = toml::from_str(text)?;
        c.surface()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("loading {}", path.display()))
    }

    /// The model, after checking that the parameter count matches.
    pub fn surface(&self) -> Result<SurfaceModel> {
        let m = SurfaceModel::new(self.model.clone())?;
        if m.param_count() != self.params.len() {
            bail!("checkpoint has {} parameters, architecture needs {}", self.params.len(), m.param_count());
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hyperdisc::boundary::{perturb, torus_knot};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let curve = perturb(&torus_knot(3, 2, 2.0, 0.5).unwrap(), 0.1, 3, 1).unwrap();
        let model = ModelConfig::standard(curve, 8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = model.arch.param_count();
        let params = (0..n).map(|i| rng.random_range(-1.0..1.0) * 10f64.powi(i as i32 % 40 - 20)).collect();
        let meta = Metadata {
            phase: "lbfgs".into(),
            best_loss: Some(1.234e-7),
            init_seed: 0,
            train_seed: 3,
            termination: None,
        };
        Checkpoint::new(model, params, meta)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        for (a, b) in c.params.iter().zip(&back.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_other_versions_and_lengths() {
        let c = sample();
        let text = c.to_toml().unwrap().replace("format_version = 1", "format_version = 2");
        assert!(Checkpoint::from_toml(&text).unwrap_err().to_string().contains("version"));
        let mut short = c.clone();
        short.params.pop();
        assert!(Checkpoint::from_toml(&short.to_toml().unwrap()).is_err());
    }
}

//! Experiment configuration files (TOML).

use std::path::Path;

use anyhow::{bail, Context, Result};
use hyperdisc::boundary::{mirror_curve, perturb, preset_by_name, torus_knot, ExtensionKind, RhoKind};
use hyperdisc::intersections::{DEDUP_TOL, DEFAULT_EPSILON, DEFAULT_GRID, DEFAULT_TAU};
use hyperdisc::training::{DEFAULT_DEPTH, DESK_WIDTH, FULL_WIDTH};
use hyperdisc::{Activation, InitScheme, KnotCurve, MlpArchitecture, ModelConfig, SearchParams, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory, relative to the output root.
    pub out_dir: String,
    pub curve: CurveSpec,
    pub model: ModelSpec,
    pub train: TrainSpec,
    #[serde(default)]
    pub intersect: IntersectSpec,
    #[serde(default)]
    pub eval: EvalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    /// Preset name; exclusive with `torus`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knot: Option<String>,
    /// `(p, q)` torus knot on the torus with radii `torus_radii`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus: Option<[i64; 2]>,
    #[serde(default = "default_radii")]
    pub torus_radii: [f64; 2],
    #[serde(default)]
    pub mirror: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
}

fn default_radii() -> [f64; 2] {
    [2.0, 0.5]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub sigma: f64,
    pub modes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_rho")]
    pub rho: RhoKind,
    #[serde(default = "default_extension")]
    pub extension: ExtensionKind,
    #[serde(default = "default_k")]
    pub k: u32,
    /// Defaults to 32 for the desk profile and 64 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_init")]
    pub init: InitScheme,
    pub init_seed: u64,
}

fn default_rho() -> RhoKind {
    RhoKind::Stereographic
}

fn default_extension() -> ExtensionKind {
    ExtensionKind::Stereobiharmonic
}

fn default_k() -> u32 {
    2
}

fn default_depth() -> usize {
    DEFAULT_DEPTH
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_init() -> InitScheme {
    InitScheme::GlorotZeroHead
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Full,
    Desk,
    Custom,
}

/// A profile plus optional overrides of individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_data: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_lbfgs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lbfgs_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_theta: Option<f64>,
    pub seed: u64,
}

fn default_profile() -> Profile {
    Profile::Full
}

impl TrainSpec {
    pub fn resolve(&self) -> TrainConfig {
        let base = match self.profile {
            Profile::Desk => TrainConfig::desk(),
            Profile::Full | Profile::Custom => TrainConfig::full(),
        };
        TrainConfig {
            n_data: self.n_data.unwrap_or(base.n_data),
            batch: self.batch.unwrap_or(base.batch),
            adam_epochs: self.adam_epochs.unwrap_or(base.adam_epochs),
            eta0: self.eta0.unwrap_or(base.eta0),
            eta_min: self.eta_min.unwrap_or(base.eta_min),
            n_lbfgs: self.n_lbfgs.unwrap_or(base.n_lbfgs),
            lbfgs_iters: self.lbfgs_iters.unwrap_or(base.lbfgs_iters),
            history: self.history.unwrap_or(base.history),
            delta_g: self.delta_g.unwrap_or(base.delta_g),
            delta_theta: self.delta_theta.unwrap_or(base.delta_theta),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectSpec {
    pub grid: usize,
    pub epsilon: f64,
    pub tau: f64,
}

impl Default for IntersectSpec {
    fn default() -> Self {
        Self { grid: DEFAULT_GRID, epsilon: DEFAULT_EPSILON, tau: DEFAULT_TAU }
    }
}

impl IntersectSpec {
    pub fn search_params(&self) -> SearchParams {
        SearchParams { grid_res: self.grid, epsilon: self.epsilon, tau: self.tau, dedup_tol: DEDUP_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub samples: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { samples: 1000, size: 1 << 14, seed: 0 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.model_config()?;
        cfg.train.resolve().validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn curve(&self) -> Result<KnotCurve> {
        let c = &self.curve;
        let mut curve = match (&c.knot, c.torus) {
            (Some(name), None) => preset_by_name(name)?,
            (None, Some([p, q])) => torus_knot(p, q, c.torus_radii[0], c.torus_radii[1])?,
            _ => bail!("[curve] needs exactly one of `knot` and `torus`"),
        };
        if c.mirror {
            curve = mirror_curve(&curve);
        }
        if let Some(p) = c.perturbation {
            curve = perturb(&curve, p.sigma, p.modes, p.seed)?;
        }
        Ok(curve)
    }

    pub fn width(&self) -> usize {
        self.model.width.unwrap_or(if self.train.profile == Profile::Desk { DESK_WIDTH } else { FULL_WIDTH })
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let curve = self.curve()?;
        let m = &self.model;
        let arch = MlpArchitecture::uniform(curve.ambient_dim() + 1, self.width(), m.depth, m.activation)?;
        let cfg = ModelConfig { curve, rho_kind: m.rho, ext_kind: m.extension, k: m.k, arch };
        cfg.validate()?;
        Ok(cfg)
    }
}

//! The composite map `u_θ = (ρ·exp(NNˣ), ext(γ) + ρᵏ·NNʸ)` from the closed
//! disc into the half-space model of `H^{n+1}`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Jet2};
use crate::boundary::{rho, ExtensionField, ExtensionKind, KnotCurve, RhoKind};
use crate::error::{Error, Result};
use crate::network::{self, Activation, MlpArchitecture, MlpCache};

/// Slack allowed on `x² + y² ≤ 1`.
const DISC_SLACK: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub curve: KnotCurve,
    pub rho_kind: RhoKind,
    pub ext_kind: ExtensionKind,
    pub k: u32,
    pub arch: MlpArchitecture,
}

impl ModelConfig {
    /// `(ρ_st, stereobiharmonic, k = 2)` with `hidden` tanh layers of `width`.
    pub fn standard(curve: KnotCurve, width: usize, hidden: usize) -> Result<Self> {
        let arch = MlpArchitecture::uniform(curve.ambient_dim() + 1, width, hidden, Activation::Tanh)?;
        Ok(Self { curve, rho_kind: RhoKind::Stereographic, ext_kind: ExtensionKind::Stereobiharmonic, k: 2, arch })
    }

    pub fn ambient_dim(&self) -> usize {
        self.curve.ambient_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(1..=2).contains(&self.k) {
            return Err(Error::InvalidModel(format!("k must be 1 or 2, got {}", self.k)));
        }
        if self.k == 2 && self.ext_kind != ExtensionKind::Stereobiharmonic {
            return Err(Error::InvalidModel("k = 2 requires the stereobiharmonic extension".into()));
        }
        if self.ambient_dim() < 2 {
            return Err(Error::InvalidModel(format!(
                "ambient dimension must be at least 2, got {}",
                self.ambient_dim()
            )));
        }
        if self.arch.output_dim != self.ambient_dim() + 1 {
            return Err(Error::InvalidModel(format!(
                "network outputs {} components, model needs n + 1 = {}",
                self.arch.output_dim,
                self.ambient_dim() + 1
            )));
        }
        Ok(())
    }
}

/// A point `(X, Y)` of the closed half-space, `X ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpacePoint {
    pub x: f64,
    pub y: Vec<f64>,
}

/// Second-order jets of every component of `u` at one disc point.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceJet {
    pub x: Jet2,
    pub y: Vec<Jet2>,
}

/// Parameter-independent part of the model at a point: `ρ`, `ρᵏ`, `ext(γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseJets {
    pub rho: Jet2,
    pub rho_k: Jet2,
    pub ext: Vec<Jet2>,
}

#[derive(Debug, Clone)]
pub struct SurfaceModel {
    config: ModelConfig,
    ext: ExtensionField,
}

impl SurfaceModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let ext = ExtensionField::new(&config.curve, config.ext_kind);
        Ok(Self { config, ext })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.config.arch
    }

    pub fn extension(&self) -> &ExtensionField {
        &self.ext
    }

    pub fn ambient_dim(&self) -> usize {
        self.config.ambient_dim()
    }

    pub fn param_count(&self) -> usize {
        self.config.arch.param_count()
    }

    fn check_point(x: f64, y: f64) -> Result<()> {
        if !(x * x + y * y <= 1.0 + DISC_SLACK) {
            return Err(Error::OutsideDisc { x, y });
        }
        Ok(())
    }

    pub fn base(&self, x: Jet2, y: Jet2) -> BaseJets {
        let rho = rho(self.config.rho_kind, x, y);
        let rho_k = if self.config.k == 2 { rho * rho } else { rho };
        BaseJets { rho, rho_k, ext: self.ext.eval(x, y) }
    }

    /// Combines base jets with network output jets.
    pub fn assemble(base: &BaseJets, nn: &[Jet2]) -> SurfaceJet {
        SurfaceJet {
            x: base.rho * nn[0].exp(),
            y: base.ext.iter().zip(&nn[1..]).map(|(e, n)| *e + base.rho_k * *n).collect(),
        }
    }

    /// Jets of `u` with a caller-provided network cache (hot path).
    pub fn evaluate_jet_with(
        &self,
        params: &[f64],
        x: Jet2,
        y: Jet2,
        cache: &mut MlpCache,
        nn: &mut [Jet2],
    ) -> Result<(BaseJets, SurfaceJet)> {
        Self::check_point(x.value, y.value)?;
        network::forward_cached(&self.config.arch, params, x, y, cache, nn)?;
        let base = self.base(x, y);
        let jet = Self::assemble(&base, nn);
        if !jet.x.is_finite() || !jet.y.iter().all(Jet2::is_finite) {
            return Err(Error::NonFinite { op: "surface map", node: 0 });
        }
        Ok((base, jet))
    }

    pub fn evaluate_jet(&self, params: &[f64], x: Jet2, y: Jet2) -> Result<SurfaceJet> {
        let mut cache = MlpCache::new(&self.config.arch);
        let mut nn = vec![Jet2::ZERO; self.config.arch.output_dim];
        Ok(self.evaluate_jet_with(params, x, y, &mut cache, &mut nn)?.1)
    }

    /// Jets at the point `(x, y)` seeded as the independent variables.
    pub fn jet_at(&self, params: &[f64], x: f64, y: f64) -> Result<SurfaceJet> {
        self.evaluate_jet(params, Jet2::input(Axis::X, x), Jet2::input(Axis::Y, y))
    }

    pub fn evaluate(&self, params: &[f64], x: f64, y: f64) -> Result<HalfSpacePoint> {
        let j = self.evaluate_jet(params, Jet2::constant(x), Jet2::constant(y))?;
        Ok(HalfSpacePoint { x: j.x.value, y: j.y.iter().map(|c| c.value).collect() })
    }
}

/// Inverse stereographic map from the half-space to the unit ball:
/// `Φ(X, Y) = ((X² + |Y|² − 1), 2Y) / ((X + 1)² + |Y|²)`.
pub fn to_ball_model(p: &HalfSpacePoint) -> Vec<f64> {
    let y2: f64 = p.y.iter().map(|v| v * v).sum();
    let den = (p.x + 1.0) * (p.x + 1.0) + y2;
    let mut out = Vec::with_capacity(p.y.len() + 1);
    out.push((p.x * p.x + y2 - 1.0) / den);
    out.extend(p.y.iter().map(|v| 2.0 * v / den));
    out
}

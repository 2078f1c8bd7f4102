//! Collocation sampling, the two training phases and Monte Carlo evaluation.
//!
//! Training runs Adam over mini-batches of a fixed collocation pool with a
//! cosine-annealed learning rate, then refines with full-batch L-BFGS on a
//! fresh pool. Both phases keep the parameters with the lowest recorded loss.

mod adam;
mod lbfgs;

pub use adam::Adam;
pub use lbfgs::{minimize, minimize_with, strong_wolfe, LbfgsOptions, LbfgsOutcome, Termination};

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::residual;
use crate::surface::SurfaceModel;

const STREAM_ADAM_POOL: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_LBFGS_POOL: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_data: usize,
    pub batch: usize,
    pub adam_epochs: usize,
    pub eta0: f64,
    pub eta_min: f64,
    pub n_lbfgs: usize,
    pub lbfgs_iters: usize,
    pub history: usize,
    pub delta_g: f64,
    pub delta_theta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl TrainConfig {
    /// The reference hyperparameters; about an hour of CPU time with the
    /// default 4×64 network.
    pub fn full() -> Self {
        Self {
            n_data: 1 << 14,
            batch: 1 << 10,
            adam_epochs: 10_000,
            eta0: 1e-3,
            eta_min: 1e-5,
            n_lbfgs: 1 << 14,
            lbfgs_iters: 10_000,
            history: 100,
            delta_g: 1e-12,
            delta_theta: 1e-14,
            seed: 0,
        }
    }

    /// Reduced run for a few minutes on one core. Pair with a width-32
    /// network ([`DESK_WIDTH`]).
    pub fn desk() -> Self {
        Self { n_data: 1 << 12, adam_epochs: 2000, n_lbfgs: 1 << 12, lbfgs_iters: 500, ..Self::full() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTraining(m.into()));
        if self.n_data == 0 || self.n_lbfgs == 0 {
            return bad("collocation pools must be non-empty");
        }
        if self.batch == 0 {
            return bad("batch size must be positive");
        }
        if !(self.eta0 > 0.0 && self.eta_min >= 0.0 && self.eta_min <= self.eta0) {
            return bad("learning rates need 0 <= eta_min <= eta0, eta0 > 0");
        }
        if !(self.delta_g >= 0.0 && self.delta_theta >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        Ok(())
    }

    pub fn lbfgs_options(&self) -> LbfgsOptions {
        LbfgsOptions {
            history: self.history,
            max_iter: self.lbfgs_iters,
            delta_g: self.delta_g,
            delta_theta: self.delta_theta,
            ..LbfgsOptions::default()
        }
    }
}

/// Hidden width of the desk profile network.
pub const DESK_WIDTH: usize = 32;
/// Hidden layers of both profiles.
pub const DEFAULT_DEPTH: usize = 4;
/// Hidden width of the full profile network.
pub const FULL_WIDTH: usize = 64;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Draws `n` points from the uniform distribution on the open unit disc.
pub fn sample_disc_with(rng: &mut impl Rng, n: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let r = u.sqrt();
        let (s, c) = (2.0 * PI * v).sin_cos();
        let p = [r * c, r * s];
        if p[0] * p[0] + p[1] * p[1] < 1.0 {
            out.push(p);
        }
    }
    out
}

pub fn sample_disc(n: usize, seed: u64) -> Vec<[f64; 2]> {
    sample_disc_with(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

/// `η_t = η_min + ½(η₀ − η_min)(1 + cos(πt/T))`.
pub fn cosine_lr(t: usize, total: usize, eta0: f64, eta_min: f64) -> f64 {
    if total == 0 {
        return eta0;
    }
    if t >= total {
        return eta_min;
    }
    if 2 * t == total {
        return 0.5 * (eta0 + eta_min);
    }
    eta_min + 0.5 * (eta0 - eta_min) * (1.0 + (PI * t as f64 / total as f64).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    /// Loss on the phase's pool: after each Adam epoch, or at the start and
    /// after each accepted L-BFGS step.
    pub losses: Vec<f64>,
    pub best_index: Option<usize>,
    pub best_loss: Option<f64>,
}

impl PhaseReport {
    fn new() -> Self {
        Self { losses: Vec::new(), best_index: None, best_loss: None }
    }

    /// Records a loss, returning whether it is a new best.
    fn record(&mut self, loss: f64) -> bool {
        self.losses.push(loss);
        let better = self.best_loss.is_none_or(|b| loss < b);
        if better {
            self.best_loss = Some(loss);
            self.best_index = Some(self.losses.len() - 1);
        }
        better
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub adam: PhaseReport,
    pub lbfgs: PhaseReport,
    /// `None` when the L-BFGS phase did not run.
    pub termination: Option<Termination>,
    /// Set when Adam stopped on a non-finite or degenerate loss.
    pub aborted: Option<String>,
    /// Loss of the returned parameters on the pool of the last phase run.
    pub best_loss: f64,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// Equality ignoring wall time.
    pub fn same_run(&self, other: &Self) -> bool {
        Self { wall_time_s: 0.0, ..self.clone() } == Self { wall_time_s: 0.0, ..other.clone() }
    }
}

#[derive(Debug, Clone)]
pub enum Progress {
    Adam { epoch: usize, loss: f64, lr: f64 },
    Lbfgs { iteration: usize, loss: f64 },
}

/// Adam over mini-batches of `pool`, reshuffled every epoch. The learning
/// rate follows the cosine schedule per epoch. Returns the parameters with
/// the lowest end-of-epoch pool loss; an error from the loss aborts the
/// phase and is reported alongside the best parameters so far.
pub fn adam_phase(
    model: &SurfaceModel,
    init: &[f64],
    pool: &[[f64; 2]],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&Progress),
) -> Result<(Vec<f64>, PhaseReport, Option<String>)> {
    cfg.validate()?;
    let mut params = init.to_vec();
    let mut best = params.clone();
    let mut report = PhaseReport::new();
    let mut opt = Adam::new(params.len());
    let mut shuffle = rng(cfg.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch);
    for epoch in 0..cfg.adam_epochs {
        let lr = cosine_lr(epoch, cfg.adam_epochs, cfg.eta0, cfg.eta_min);
        order.shuffle(&mut shuffle);
        for idx in order.chunks(cfg.batch) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| pool[i]));
            match residual::loss_and_grad(model, &params, &batch) {
                Ok((_, g)) => opt.step(&mut params, &g, lr),
                Err(e) => return Ok((best, report, Some(format!("epoch {epoch}: {e}")))),
            }
        }
        let loss = match residual::loss(model, &params, pool) {
            Ok(l) => l,
            Err(e) => return Ok((best, report, Some(format!("epoch {epoch}: {e}")))),
        };
        if report.record(loss) {
            best.copy_from_slice(&params);
        }
        observer(&Progress::Adam { epoch, loss, lr });
    }
    Ok((best, report, None))
}

/// Full-batch L-BFGS on `pool`.
pub fn lbfgs_phase(
    model: &SurfaceModel,
    init: &[f64],
    pool: &[[f64; 2]],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&Progress),
) -> Result<(Vec<f64>, PhaseReport, Termination)> {
    cfg.validate()?;
    let mut report = PhaseReport::new();
    let out = minimize_with(
        |x| residual::loss_and_grad(model, x, pool),
        init,
        &cfg.lbfgs_options(),
        &mut |iteration, loss| {
            report.record(loss);
            observer(&Progress::Lbfgs { iteration, loss });
        },
    )?;
    // accepted iterates never increase the loss, so the last one is a best one
    Ok((out.x, report, out.termination))
}

/// Adam on a pool drawn from `cfg.seed`, then L-BFGS on a fresh pool.
pub fn train(
    model: &SurfaceModel,
    init: &[f64],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&Progress),
) -> Result<(Vec<f64>, TrainReport)> {
    cfg.validate()?;
    if init.len() != model.param_count() {
        return Err(Error::ParamLength { expected: model.param_count(), got: init.len() });
    }
    let start = Instant::now();
    let pool = sample_disc_with(&mut rng(cfg.seed, STREAM_ADAM_POOL), cfg.n_data);
    let (params, adam, aborted) = adam_phase(model, init, &pool, cfg, observer)?;
    if aborted.is_some() {
        let best_loss = adam.best_loss.unwrap_or(f64::NAN);
        let report = TrainReport {
            adam,
            lbfgs: PhaseReport::new(),
            termination: None,
            aborted,
            best_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        return Ok((params, report));
    }
    let pool = sample_disc_with(&mut rng(cfg.seed, STREAM_LBFGS_POOL), cfg.n_lbfgs);
    let (params, lbfgs, termination) = lbfgs_phase(model, &params, &pool, cfg, observer)?;
    let best_loss = lbfgs.best_loss.expect("L-BFGS records the start loss");
    let report = TrainReport {
        adam,
        lbfgs,
        termination: Some(termination),
        aborted: None,
        best_loss,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

/// The L-BFGS pool used by [`train`] for this configuration.
pub fn lbfgs_pool(cfg: &TrainConfig) -> Vec<[f64; 2]> {
    sample_disc_with(&mut rng(cfg.seed, STREAM_LBFGS_POOL), cfg.n_lbfgs)
}

/// The Adam pool used by [`train`] for this configuration.
pub fn adam_pool(cfg: &TrainConfig) -> Vec<[f64; 2]> {
    sample_disc_with(&mut rng(cfg.seed, STREAM_ADAM_POOL), cfg.n_data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub max: f64,
    pub losses: Vec<f64>,
}

/// Formats like `4.41e-07`.
pub fn sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.2e}");
    match s.split_once('e') {
        Some((m, e)) => {
            let exp: i32 = e.parse().expect("exponent");
            let sign = if exp < 0 { '-' } else { '+' };
            format!("{m}e{sign}{:02}", exp.abs())
        }
        None => s,
    }
}

impl fmt::Display for McStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {} ({})", sci(self.mean), sci(self.std), sci(self.max))
    }
}

/// Loss on `samples` independent uniform samples of `size` points each.
pub fn monte_carlo_eval(
    model: &SurfaceModel,
    params: &[f64],
    samples: usize,
    size: usize,
    seed: u64,
) -> Result<McStats> {
    if samples < 2 || size == 0 {
        return Err(Error::InvalidTraining(format!("Monte Carlo needs S >= 2 and N >= 1, got {samples}, {size}")));
    }
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::with_capacity(samples);
    for _ in 0..samples {
        let pts = sample_disc_with(&mut r, size);
        losses.push(residual::loss(model, params, &pts)?);
    }
    let s = samples as f64;
    let mean = losses.iter().sum::<f64>() / s;
    let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (s - 1.0);
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(McStats { mean, std: var.sqrt(), max, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::preset_curve;
    use crate::boundary::Preset;
    use crate::network::{init_params, InitScheme};
    use crate::surface::ModelConfig;

    #[test]
    fn table_defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.n_data, c.batch, c.adam_epochs), (16384, 1024, 10_000));
        assert_eq!((c.eta0, c.eta_min), (1e-3, 1e-5));
        assert_eq!((c.n_lbfgs, c.lbfgs_iters, c.history), (16384, 10_000, 100));
        assert_eq!((c.delta_g, c.delta_theta), (1e-12, 1e-14));
        let d = TrainConfig::desk();
        assert_eq!((d.n_data, d.adam_epochs, d.lbfgs_iters), (4096, 2000, 500));
    }

    #[test]
    fn disc_samples() {
        let a = sample_disc(1_000_000, 3);
        assert!(a.iter().all(|p| p[0] * p[0] + p[1] * p[1] < 1.0));
        let mean_r2 = a.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / a.len() as f64;
        assert!((mean_r2 - 0.5).abs() < 0.002, "{mean_r2}");
        let mean_x = a.iter().map(|p| p[0]).sum::<f64>() / a.len() as f64;
        assert!(mean_x.abs() < 0.003);
        assert_eq!(sample_disc(100, 9), sample_disc(100, 9));
        assert_ne!(sample_disc(100, 9), sample_disc(100, 10));
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-3, 1e-5), 1e-3);
        assert_eq!(cosine_lr(100, 100, 1e-3, 1e-5), 1e-5);
        assert_eq!(cosine_lr(50, 100, 1e-3, 1e-5), 0.5 * (1e-3 + 1e-5));
        let mut prev = f64::INFINITY;
        for t in 0..=100 {
            let l = cosine_lr(t, 100, 1e-3, 1e-5);
            assert!(l <= prev && l >= 1e-5);
            prev = l;
        }
    }

    #[test]
    fn adam_on_quadratic() {
        let mut opt = Adam::new(1);
        let mut th = [0.5];
        for _ in 0..2000 {
            let g = [2.0 * th[0]];
            opt.step(&mut th, &g, 1e-3);
        }
        assert!(th[0].abs() < 1e-4, "{}", th[0]);
    }

    #[test]
    fn formatting() {
        assert_eq!(sci(4.41e-7), "4.41e-07");
        assert_eq!(sci(6.16e-9), "6.16e-09");
        assert_eq!(sci(12.0), "1.20e+01");
        let s = McStats { mean: 4.41e-7, std: 6.16e-9, max: 4.61e-7, losses: vec![] };
        assert_eq!(s.to_string(), "4.41e-07 ± 6.16e-09 (4.61e-07)");
    }

    fn small_model() -> SurfaceModel {
        let cfg = ModelConfig::standard(preset_curve(Preset::Unknot), 4, 1).unwrap();
        SurfaceModel::new(cfg).unwrap()
    }

    #[test]
    fn exact_solution_monte_carlo() {
        let m = small_model();
        let p = vec![0.0; m.param_count()];
        let s = monte_carlo_eval(&m, &p, 4, 512, 1).unwrap();
        assert!(s.mean <= 1e-18 && s.std <= s.mean.max(1e-300));
        assert!(monte_carlo_eval(&m, &p, 1, 512, 1).is_err());
    }

    #[test]
    fn short_run_snapshots() {
        let m = small_model();
        let init = init_params(m.arch(), InitScheme::GlorotZeroHead, 5).0;
        let mut init = init;
        // push the head away from zero so there is something to learn
        let n = init.len();
        for v in &mut init[n - 20..] {
            *v = 0.05;
        }
        let cfg = TrainConfig {
            n_data: 256,
            batch: 64,
            adam_epochs: 5,
            n_lbfgs: 256,
            lbfgs_iters: 5,
            seed: 7,
            ..TrainConfig::full()
        };
        let mut seen = 0;
        let (params, rep) = train(&m, &init, &cfg, &mut |_| seen += 1).unwrap();
        assert_eq!(rep.adam.losses.len(), 5);
        assert_eq!(seen, 5 + rep.lbfgs.losses.len());
        let pool = lbfgs_pool(&cfg);
        assert_eq!(residual::loss(&m, &params, &pool).unwrap(), rep.best_loss);
        let min = rep.lbfgs.losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(min, rep.best_loss);
        assert!(rep.best_loss <= rep.lbfgs.losses[0]);
        let (params2, rep2) = train(&m, &init, &cfg, &mut |_| {}).unwrap();
        assert_eq!(params, params2);
        assert!(rep.same_run(&rep2));
    }

    #[test]
    fn zero_epochs_keep_initialisation() {
        let m = small_model();
        let init = init_params(m.arch(), InitScheme::GlorotZeroHead, 1).0;
        let cfg = TrainConfig { n_data: 64, n_lbfgs: 64, adam_epochs: 0, lbfgs_iters: 0, ..TrainConfig::desk() };
        let (p, rep) = train(&m, &init, &cfg, &mut |_| {}).unwrap();
        assert_eq!(p, init);
        assert!(rep.adam.losses.is_empty());
    }
}

//! Pull-back metric, Laplace–Beltrami operator and the tension field of a
//! map into the half-space model, plus the collocation loss and its
//! parameter gradient.
//!
//! The pointwise formulas are generic over [`Scalar`], so the same code runs
//! on plain `f64` (evaluation) and on recorded scalars (gradients).

use rayon::prelude::*;

use crate::autodiff::{Axis, Jet2, JetVar, Scalar, Tape};
use crate::error::{Error, Result};
use crate::network::{self, MlpCache};
use crate::surface::{SurfaceJet, SurfaceModel};

/// `det g` at or below this is treated as a failure to immerse.
pub const DEGENERACY_TOL: f64 = 1e-14;

/// Points per work unit. Fixed so that reductions do not depend on the
/// number of threads.
pub const CHUNK: usize = 64;

const HESS: [[usize; 2]; 2] = [[3, 4], [4, 5]];

/// Jet components `[value, ∂x, ∂y, ∂xx, ∂xy, ∂yy]`.
pub type Parts<S> = [S; 6];

#[derive(Debug, Clone, Copy)]
pub struct PullbackMetric<S> {
    pub g: [[S; 2]; 2],
    pub g_inv: [[S; 2]; 2],
    pub det_g: S,
    /// `dg[c][a][b] = ∂_c g_ab`
    pub dg: [[[S; 2]; 2]; 2],
    /// `dg_inv[c][a][b] = ∂_c g^{ab}`
    pub dg_inv: [[[S; 2]; 2]; 2],
    /// `∂_c log √det g`
    pub dlog_sqrt_det: [S; 2],
}

#[derive(Debug, Clone)]
pub struct TensionResidual<S> {
    pub tau_x: S,
    pub tau_y: Vec<S>,
    pub sq_norm: S,
}

fn degenerate() -> Error {
    Error::Degenerate { count: 1, indices: Vec::new() }
}

fn sum<S: Scalar>(mut it: impl Iterator<Item = S>) -> S {
    let first = it.next().expect("non-empty sum");
    it.fold(first, |a, b| a + b)
}

/// Metric `g = (dX² + |dY|²)/X²` pulled back by the map with components
/// `xp` (height) and `yp`.
pub fn pullback_metric_parts<S: Scalar>(xp: &Parts<S>, yp: &[Parts<S>]) -> Result<PullbackMetric<S>> {
    let x = xp[0];
    if !(x.value() > 0.0) {
        return Err(Error::Domain { op: "height", value: x.value() });
    }
    let inv_x = x.recip()?;
    let inv_x2 = inv_x * inv_x;
    let inv_x3 = inv_x2 * inv_x;
    let comps = || std::iter::once(xp).chain(yp.iter());

    let e = |a: usize, b: usize| sum(comps().map(|p| p[1 + a] * p[1 + b]));
    let de = |c: usize, a: usize, b: usize| sum(comps().map(|p| p[HESS[a][c]] * p[1 + b] + p[1 + a] * p[HESS[b][c]]));
    let (e00, e01, e11) = (e(0, 0), e(0, 1), e(1, 1));
    let big_e = [[e00, e01], [e01, e11]];
    let g = [[e00 * inv_x2, e01 * inv_x2], [e01 * inv_x2, e11 * inv_x2]];
    let dg: [[[S; 2]; 2]; 2] = std::array::from_fn(|c| {
        let two_xc = xp[1 + c] * 2.0 * inv_x3;
        let d00 = de(c, 0, 0) * inv_x2 - big_e[0][0] * two_xc;
        let d01 = de(c, 0, 1) * inv_x2 - big_e[0][1] * two_xc;
        let d11 = de(c, 1, 1) * inv_x2 - big_e[1][1] * two_xc;
        [[d00, d01], [d01, d11]]
    });

    let det_g = g[0][0] * g[1][1] - g[0][1] * g[0][1];
    if !(det_g.value() > DEGENERACY_TOL) {
        return Err(degenerate());
    }
    let inv_det = det_g.recip()?;
    let gi01 = -(g[0][1] * inv_det);
    let g_inv = [[g[1][1] * inv_det, gi01], [gi01, g[0][0] * inv_det]];

    let dg_inv: [[[S; 2]; 2]; 2] = std::array::from_fn(|c| {
        // −g⁻¹ (∂_c g) g⁻¹
        let m = dg[c];
        let t: [[S; 2]; 2] =
            std::array::from_fn(|a| std::array::from_fn(|b| g_inv[a][0] * m[0][b] + g_inv[a][1] * m[1][b]));
        std::array::from_fn(|a| std::array::from_fn(|b| -(t[a][0] * g_inv[0][b] + t[a][1] * g_inv[1][b])))
    });
    let dlog_sqrt_det: [S; 2] = std::array::from_fn(|c| {
        let m = dg[c];
        (g_inv[0][0] * m[0][0] + g_inv[1][1] * m[1][1] + g_inv[0][1] * m[0][1] * 2.0) * 0.5
    });
    Ok(PullbackMetric { g, g_inv, det_g, dg, dg_inv, dlog_sqrt_det })
}

/// `Δ_g f = g^{ab}∂²_{ab}f + (∂_a g^{ab})∂_b f + g^{ab}(∂_a log√det g)∂_b f`.
pub fn laplace_beltrami_parts<S: Scalar>(f: &Parts<S>, m: &PullbackMetric<S>) -> S {
    let gi = &m.g_inv;
    let second = gi[0][0] * f[3] + gi[0][1] * f[4] * 2.0 + gi[1][1] * f[5];
    let coef: [S; 2] = std::array::from_fn(|b| {
        m.dg_inv[0][0][b] + m.dg_inv[1][1][b] + gi[0][b] * m.dlog_sqrt_det[0] + gi[1][b] * m.dlog_sqrt_det[1]
    });
    second + coef[0] * f[1] + coef[1] * f[2]
}

/// `g^{ab} ∂_a φ ∂_b ψ`.
pub fn inner_parts<S: Scalar>(m: &PullbackMetric<S>, phi: &Parts<S>, psi: &Parts<S>) -> S {
    let gi = &m.g_inv;
    gi[0][0] * phi[1] * psi[1] + gi[0][1] * (phi[1] * psi[2] + phi[2] * psi[1]) + gi[1][1] * phi[2] * psi[2]
}

/// Orthonormal components of the tension field:
/// `τˣ = (1/X)[Δ_g X + (1/X)(Σ|dY_k|² − |dX|²)]`,
/// `τ^{Y_k} = (1/X)[Δ_g Y_k − (2/X)⟨dX, dY_k⟩]`.
pub fn tension_parts<S: Scalar>(xp: &Parts<S>, yp: &[Parts<S>]) -> Result<TensionResidual<S>> {
    let m = pullback_metric_parts(xp, yp)?;
    let inv_x = xp[0].recip()?;
    let dx2 = inner_parts(&m, xp, xp);
    let dy2 = sum(yp.iter().map(|y| inner_parts(&m, y, y)));
    let tau_x = inv_x * (laplace_beltrami_parts(xp, &m) + inv_x * (dy2 - dx2));
    let tau_y: Vec<S> =
        yp.iter().map(|y| inv_x * (laplace_beltrami_parts(y, &m) - inv_x * inner_parts(&m, xp, y) * 2.0)).collect();
    let sq_norm = tau_x * tau_x + sum(tau_y.iter().map(|t| *t * *t));
    Ok(TensionResidual { tau_x, tau_y, sq_norm })
}

fn jet_parts(j: &SurfaceJet) -> (Parts<f64>, Vec<Parts<f64>>) {
    (j.x.to_array(), j.y.iter().map(|c| c.to_array()).collect())
}

pub fn pullback_metric(jet: &SurfaceJet) -> Result<PullbackMetric<f64>> {
    let (xp, yp) = jet_parts(jet);
    pullback_metric_parts(&xp, &yp)
}

pub fn laplace_beltrami(f: &Jet2, metric: &PullbackMetric<f64>) -> f64 {
    laplace_beltrami_parts(&f.to_array(), metric)
}

pub fn tension(jet: &SurfaceJet) -> Result<TensionResidual<f64>> {
    let (xp, yp) = jet_parts(jet);
    tension_parts(&xp, &yp)
}

/// Reusable per-thread buffers for one chunk of points.
pub struct Workspace {
    tape: Tape,
    cache: MlpCache,
    inputs: Vec<(Jet2, Jet2)>,
    nn: Vec<Jet2>,
    adj: Vec<[f64; 6]>,
}

impl Workspace {
    pub fn new(model: &SurfaceModel) -> Self {
        Self {
            tape: Tape::new(),
            cache: MlpCache::new(model.arch()),
            inputs: Vec::with_capacity(CHUNK),
            nn: Vec::new(),
            adj: Vec::new(),
        }
    }

    /// Seeds the chunk and runs the network over it.
    fn forward(&mut self, model: &SurfaceModel, params: &[f64], chunk: &[[f64; 2]]) -> Result<()> {
        self.inputs.clear();
        for p in chunk {
            if !(p[0] * p[0] + p[1] * p[1] < 1.0) {
                return Err(Error::NotInterior { x: p[0], y: p[1] });
            }
            self.inputs.push((Jet2::input(Axis::X, p[0]), Jet2::input(Axis::Y, p[1])));
        }
        let d = model.arch().output_dim;
        self.nn.resize(chunk.len() * d, Jet2::ZERO);
        network::forward_batch(model.arch(), params, &self.inputs, &mut self.cache, &mut self.nn)
    }
}

/// Records `|τ|²` at one point on the tape from the network output jets and
/// writes `weight · ∂|τ|²/∂(outputs)` into `adj`.
fn point_adjoint(
    model: &SurfaceModel,
    tape: &mut Tape,
    input: (Jet2, Jet2),
    nn_out: &[Jet2],
    weight: f64,
    adj: &mut [[f64; 6]],
) -> Result<f64> {
    let base = model.base(input.0, input.1);
    tape.clear();
    let tape = &*tape;
    let nn: Vec<JetVar<'_>> = nn_out.iter().map(|j| tape.jet(*j)).collect();
    let height = tape.jet(base.rho) * nn[0].exp();
    let rho_k = tape.jet(base.rho_k);
    let ys: Vec<_> = base.ext.iter().zip(&nn[1..]).map(|(e, n)| (tape.jet(*e) + rho_k * *n).parts()).collect();
    let t = tension_parts(&height.parts(), &ys)?;
    tape.backward(t.sq_norm, weight, &mut [])?;
    for (a, n) in adj.iter_mut().zip(&nn) {
        *a = tape.adjoint(*n);
    }
    Ok(t.sq_norm.value())
}

fn point_value(model: &SurfaceModel, input: (Jet2, Jet2), nn_out: &[Jet2]) -> Result<f64> {
    let base = model.base(input.0, input.1);
    let jet = SurfaceModel::assemble(&base, nn_out);
    let v = tension(&jet)?.sq_norm;
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "tension", node: 0 });
    }
    Ok(v)
}

/// `|τ(u)|²` at each point of a chunk.
fn chunk_values(model: &SurfaceModel, params: &[f64], chunk: &[[f64; 2]], ws: &mut Workspace) -> Result<Vec<f64>> {
    ws.forward(model, params, chunk)?;
    let d = model.arch().output_dim;
    let mut out = Vec::with_capacity(chunk.len());
    let mut bad = Vec::new();
    for (i, input) in ws.inputs.iter().enumerate() {
        match point_value(model, *input, &ws.nn[i * d..(i + 1) * d]) {
            Ok(v) => out.push(v),
            Err(Error::Degenerate { .. }) => bad.push(i),
            Err(e) => return Err(e),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Degenerate { count: bad.len(), indices: bad });
    }
    Ok(out)
}

/// Sum of `|τ|²` over a chunk, adding `weight · ∂/∂θ` of it into `grad`.
fn chunk_grad(
    model: &SurfaceModel,
    params: &[f64],
    chunk: &[[f64; 2]],
    weight: f64,
    ws: &mut Workspace,
    grad: &mut [f64],
) -> Result<f64> {
    ws.forward(model, params, chunk)?;
    let d = model.arch().output_dim;
    ws.adj.clear();
    ws.adj.resize(chunk.len() * d, [0.0; 6]);
    let mut s = 0.0;
    let mut bad = Vec::new();
    for (i, input) in ws.inputs.iter().enumerate() {
        let r = point_adjoint(
            model,
            &mut ws.tape,
            *input,
            &ws.nn[i * d..(i + 1) * d],
            weight,
            &mut ws.adj[i * d..(i + 1) * d],
        );
        match r {
            Ok(v) => s += v,
            Err(Error::Degenerate { .. }) => bad.push(i),
            Err(e) => return Err(e),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Degenerate { count: bad.len(), indices: bad });
    }
    network::backward_batch(model.arch(), params, &mut ws.cache, &ws.adj, 1.0, grad);
    Ok(s)
}

/// `|τ(u)|²` at an interior point.
pub fn sq_norm_at(model: &SurfaceModel, params: &[f64], p: [f64; 2]) -> Result<f64> {
    let mut ws = Workspace::new(model);
    Ok(chunk_values(model, params, &[p], &mut ws)?[0])
}

/// `|τ(u)|²` at `p` and its gradient with respect to the parameters.
pub fn sq_norm_grad(model: &SurfaceModel, params: &[f64], p: [f64; 2]) -> Result<(f64, Vec<f64>)> {
    let mut ws = Workspace::new(model);
    let mut g = vec![0.0; params.len()];
    let v = chunk_grad(model, params, &[p], 1.0, &mut ws, &mut g)?;
    Ok((v, g))
}

/// Merges per-chunk failures: degenerate points are collected across the
/// whole sample, anything else is reported as the first failure in order.
fn merge_errors(errs: Vec<(usize, Error)>) -> Error {
    let mut indices = Vec::new();
    for (offset, e) in &errs {
        match e {
            Error::Degenerate { indices: idx, .. } => indices.extend(idx.iter().map(|i| i + offset)),
            other => return other.clone(),
        }
    }
    Error::Degenerate { count: indices.len(), indices }
}

/// `|τ|²` at every point, evaluated in parallel.
pub fn sq_norms(model: &SurfaceModel, params: &[f64], points: &[[f64; 2]]) -> Result<Vec<f64>> {
    let parts: Vec<Result<Vec<f64>>> = points
        .par_chunks(CHUNK)
        .map_init(|| Workspace::new(model), |ws, c| chunk_values(model, params, c, ws))
        .collect();
    let mut out = Vec::with_capacity(points.len());
    let mut errs = Vec::new();
    for (i, r) in parts.into_iter().enumerate() {
        match r {
            Ok(v) => out.extend(v),
            Err(e) => errs.push((i * CHUNK, e)),
        }
    }
    if !errs.is_empty() {
        return Err(merge_errors(errs));
    }
    Ok(out)
}

fn check_sample(points: &[[f64; 2]]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidTraining("empty collocation sample".into()));
    }
    Ok(())
}

/// Collocation loss `(1/N) Σ |τ(u)(p_i)|²`.
pub fn loss(model: &SurfaceModel, params: &[f64], points: &[[f64; 2]]) -> Result<f64> {
    check_sample(points)?;
    let parts: Vec<Result<f64>> = points
        .par_chunks(CHUNK)
        .map_init(|| Workspace::new(model), |ws, c| chunk_values(model, params, c, ws).map(|v| v.iter().sum()))
        .collect();
    let mut s = 0.0;
    let mut errs = Vec::new();
    for (i, r) in parts.into_iter().enumerate() {
        match r {
            Ok(v) => s += v,
            Err(e) => errs.push((i * CHUNK, e)),
        }
    }
    finish(s, errs, points.len())
}

/// Loss and its exact gradient with respect to all parameters.
pub fn loss_and_grad(model: &SurfaceModel, params: &[f64], points: &[[f64; 2]]) -> Result<(f64, Vec<f64>)> {
    check_sample(points)?;
    let w = 1.0 / points.len() as f64;
    let np = params.len();
    let parts: Vec<Result<(f64, Vec<f64>)>> = points
        .par_chunks(CHUNK)
        .map_init(
            || Workspace::new(model),
            |ws, chunk| {
                let mut g = vec![0.0; np];
                chunk_grad(model, params, chunk, w, ws, &mut g).map(|s| (s, g))
            },
        )
        .collect();
    let mut total = vec![0.0; np];
    let mut s = 0.0;
    let mut errs = Vec::new();
    for (i, r) in parts.into_iter().enumerate() {
        match r {
            Ok((v, g)) => {
                s += v;
                for (t, x) in total.iter_mut().zip(&g) {
                    *t += x;
                }
            }
            Err(e) => errs.push((i * CHUNK, e)),
        }
    }
    Ok((finish(s, errs, points.len())?, total))
}

fn finish(sum: f64, errs: Vec<(usize, Error)>, n: usize) -> Result<f64> {
    if !errs.is_empty() {
        return Err(merge_errors(errs));
    }
    let mean = sum / n as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite { op: "loss", node: 0 });
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::boundary::{perturb, preset_curve, torus_knot, Preset};
    use crate::surface::ModelConfig;

    fn jet_map(f: impl Fn(Jet2, Jet2) -> (Jet2, Vec<Jet2>), px: f64, py: f64) -> SurfaceJet {
        let (x, y) = Jet2::seed(px, py);
        let (h, v) = f(x, y);
        SurfaceJet { x: h, y: v }
    }

    fn random_disc_point(rng: &mut ChaCha8Rng, rmax: f64) -> [f64; 2] {
        let r = rmax * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..TAU);
        [r * a.cos(), r * a.sin()]
    }

    fn model(curve: crate::boundary::KnotCurve, width: usize) -> SurfaceModel {
        SurfaceModel::new(ModelConfig::standard(curve, width, 2).unwrap()).unwrap()
    }

    fn random_params(n: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
    }

    /// `u_H²` written out directly.
    fn geodesic_disc(x: Jet2, y: Jet2) -> (Jet2, Vec<Jet2>) {
        let r2 = x * x + y * y;
        let inv = (r2 + 1.0).recip().unwrap();
        ((-r2 + 1.0) * inv, vec![x * inv * 2.0, y * inv * 2.0, Jet2::ZERO])
    }

    #[test]
    fn hyperbolic_disc_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let [px, py] = random_disc_point(&mut rng, 0.99);
            let m = pullback_metric(&jet_map(geodesic_disc, px, py)).unwrap();
            let s = 1.0 - px * px - py * py;
            let expect = 4.0 / (s * s);
            assert!((m.g[0][0] - expect).abs() <= 1e-12 * expect);
            assert!((m.g[1][1] - expect).abs() <= 1e-12 * expect);
            assert!(m.g[0][1].abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn vertical_plane_metric() {
        // (x, y) ↦ (X = y + 1, Y = (x, 0, 0)): g = I/(y+1)², ∂_y g = −2 I/(y+1)³
        let f = |x: Jet2, y: Jet2| (y + 1.0, vec![x, Jet2::ZERO, Jet2::ZERO]);
        let m = pullback_metric(&jet_map(f, 0.2, 0.5)).unwrap();
        let h = 1.5f64;
        assert!((m.g[0][0] - 1.0 / (h * h)).abs() < 1e-15);
        assert!((m.g[1][1] - 1.0 / (h * h)).abs() < 1e-15);
        assert_eq!(m.g[0][1], 0.0);
        assert!((m.dg[1][0][0] + 2.0 / (h * h * h)).abs() < 1e-15);
        assert_eq!(m.dg[0][0][0], 0.0);
        // ∂_y g^{00} = 2(y+1)
        assert!((m.dg_inv[1][0][0] - 2.0 * h).abs() < 1e-14);
    }

    #[test]
    fn inverse_and_symmetry() {
        let md = model(preset_curve(Preset::Figure8), 6);
        let p = random_params(md.param_count(), 4, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let [px, py] = random_disc_point(&mut rng, 0.95);
            let m = pullback_metric(&md.jet_at(&p, px, py).unwrap()).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    let id: f64 = (0..2).map(|c| m.g_inv[a][c] * m.g[c][b]).sum();
                    let e = if a == b { 1.0 } else { 0.0 };
                    assert!((id - e).abs() <= 1e-12);
                }
            }
            for c in 0..2 {
                assert_eq!(m.dg[c][0][1], m.dg[c][1][0]);
            }
        }
    }

    #[test]
    fn laplace_beltrami_reductions() {
        // Euclidean metric from a flat map at unit height: X ≡ 1, Y = (x, y, 0)
        let flat = |x: Jet2, y: Jet2| (Jet2::constant(1.0), vec![x, y, Jet2::ZERO]);
        let m = pullback_metric(&jet_map(flat, 0.3, 0.1)).unwrap();
        let f = Jet2::new(0.7, [0.2, -0.4], [1.5, 0.3, -0.25]);
        assert!((laplace_beltrami(&f, &m) - 1.25).abs() < 1e-15);
        assert_eq!(laplace_beltrami(&Jet2::constant(3.0), &m), 0.0);
    }

    #[test]
    fn laplace_beltrami_on_hyperbolic_disc() {
        // for g = 4δ/(1−r²)²: Δ_g f = ((1−r²)²/4) Δf, conformal in dimension 2
        let (px, py) = (0.35, -0.2);
        let m = pullback_metric(&jet_map(geodesic_disc, px, py)).unwrap();
        let s = 1.0 - px * px - py * py;
        let f = Jet2::new(0.0, [1.0, 0.0], [0.0; 3]);
        assert!(laplace_beltrami(&f, &m).abs() < 1e-14);
        let f = Jet2::new(0.0, [0.3, 0.9], [2.0, -1.0, 0.5]);
        let expect = s * s / 4.0 * 2.5;
        assert!((laplace_beltrami(&f, &m) - expect).abs() < 1e-14);
    }

    #[test]
    fn geodesic_disc_is_harmonic() {
        let md = model(preset_curve(Preset::Unknot), 8);
        let p = vec![0.0; md.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..10_000).map(|_| random_disc_point(&mut rng, 1.0 - 1e-9)).collect();
        for v in sq_norms(&md, &p, &pts).unwrap() {
            assert!(v <= 1e-18, "{v:e}");
        }
        assert!(loss(&md, &p, &pts).unwrap() <= 1e-18);
    }

    #[test]
    fn vertical_half_plane_is_harmonic() {
        // any chart of the totally geodesic plane {Y₂ = c, Y₃ = 0} is an
        // isometric immersion for its pull-back metric, hence harmonic
        let f = |x: Jet2, y: Jet2| {
            let h = (y * 0.8).exp() * 0.5 + x * x * 0.1;
            let y1 = x * 0.3 + y * y * 0.2 + 0.1;
            (h, vec![y1, Jet2::constant(0.2), Jet2::ZERO])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let [px, py] = random_disc_point(&mut rng, 0.9);
            let t = tension(&jet_map(f, px, py)).unwrap();
            assert!(t.sq_norm < 1e-20, "{:e}", t.sq_norm);
        }
    }

    #[test]
    fn hyperbolic_isometries_preserve_residual() {
        let md = model(torus_knot(3, 2, 2.0, 0.5).unwrap(), 6);
        let p = random_params(md.param_count(), 6, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let [px, py] = random_disc_point(&mut rng, 0.9);
            let j = md.jet_at(&p, px, py).unwrap();
            let base = tension(&j).unwrap();
            let shifted =
                SurfaceJet { x: j.x, y: j.y.iter().enumerate().map(|(k, c)| *c + (k as f64 - 0.7)).collect() };
            let ts = tension(&shifted).unwrap();
            assert!((ts.sq_norm - base.sq_norm).abs() <= 1e-12 * base.sq_norm.max(1.0));
            let lam = 2.7;
            let scaled = SurfaceJet { x: j.x.scale(lam), y: j.y.iter().map(|c| c.scale(lam)).collect() };
            let tl = tension(&scaled).unwrap();
            assert!((tl.sq_norm - base.sq_norm).abs() <= 1e-10 * base.sq_norm.max(1.0));
        }
    }

    #[test]
    fn rotation_of_disc_preserves_residual() {
        // u ∘ R_φ at p equals u at R_φ p; compare pointwise norms
        let md = model(preset_curve(Preset::Stevedore), 6);
        let p = random_params(md.param_count(), 10, 0.6);
        let phi = 0.9f64;
        let (c, s) = (phi.cos(), phi.sin());
        let rotated = |x: Jet2, y: Jet2| {
            let (xr, yr) = (x * c - y * s, x * s + y * c);
            let j = md.evaluate_jet(&p, xr, yr).unwrap();
            (j.x, j.y)
        };
        for &(px, py) in &[(0.1, 0.2), (-0.5, 0.4), (0.7, -0.1)] {
            let a = tension(&jet_map(rotated, px, py)).unwrap().sq_norm;
            let b = sq_norm_at(&md, &p, [px * c - py * s, px * s + py * c]).unwrap();
            assert!((a - b).abs() <= 1e-10 * b.max(1.0));
        }
    }

    #[test]
    fn sq_norm_consistency() {
        let md = model(preset_curve(Preset::Square), 6);
        let p = random_params(md.param_count(), 12, 0.9);
        let j = md.jet_at(&p, 0.2, 0.3).unwrap();
        let t = tension(&j).unwrap();
        let s = t.tau_x * t.tau_x + t.tau_y.iter().map(|v| v * v).sum::<f64>();
        assert_eq!(s, t.sq_norm);
        assert!(t.sq_norm >= 0.0);
        assert_eq!(loss(&md, &p, &[[0.2, 0.3]]).unwrap(), t.sq_norm);
    }

    #[test]
    fn degenerate_and_boundary_points() {
        // constant map: metric vanishes
        let f = |_: Jet2, _: Jet2| (Jet2::constant(1.0), vec![Jet2::ZERO; 3]);
        assert!(matches!(tension(&jet_map(f, 0.1, 0.1)), Err(Error::Degenerate { .. })));
        let md = model(preset_curve(Preset::Unknot), 4);
        let p = vec![0.0; md.param_count()];
        assert!(matches!(loss(&md, &p, &[[1.0, 0.0]]), Err(Error::NotInterior { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let curve = perturb(&torus_knot(3, 2, 2.0, 0.5).unwrap(), 0.02, 2, 3).unwrap();
        let md = SurfaceModel::new(ModelConfig::standard(curve, 5, 2).unwrap()).unwrap();
        let p = random_params(md.param_count(), 31, 0.5);
        let pts = [[0.3, -0.2], [-0.5, 0.45], [0.05, 0.7]];
        let (l, g) = loss_and_grad(&md, &p, &pts).unwrap();
        assert_eq!(l, loss(&md, &p, &pts).unwrap());
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i] += h;
            let lp = loss(&md, &q, &pts).unwrap();
            q[i] -= 2.0 * h;
            let lm = loss(&md, &q, &pts).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let rel = (g[i] - fd).abs() / fd.abs().max(1e-3 * l.max(1e-12)).max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-6, "param {i}: {} vs {fd}", g[i]);
        }
        assert!(worst.is_finite());
    }

    #[test]
    fn chunked_gradient_is_thread_count_independent() {
        let md = model(preset_curve(Preset::Figure8), 6);
        let p = random_params(md.param_count(), 40, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pts: Vec<[f64; 2]> = (0..300).map(|_| random_disc_point(&mut rng, 0.99)).collect();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| loss_and_grad(&md, &p, &pts).unwrap())
        };
        let (l1, g1) = run(1);
        let (l3, g3) = run(3);
        assert_eq!(l1.to_bits(), l3.to_bits());
        assert!(g1.iter().zip(&g3).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

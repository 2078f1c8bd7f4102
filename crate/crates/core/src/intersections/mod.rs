//! Double points of a map `u: D² → R⁴`.
//!
//! Grid points whose images are closer than `τ` while their preimages are
//! farther apart than `ε` become candidate pairs. Each candidate is refined
//! by Newton's method on `F(p, p′) = u(p) − u(p′)`, refined pairs are
//! deduplicated, and each surviving double point is signed by the
//! orientation of the four image tangent vectors.

mod fixtures;

pub use fixtures::{cycloid_delta, Fixture, KnownCrossing};

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::SurfaceModel;

/// Grid points lie in `r ≤ 1 − GRID_MARGIN`.
pub const GRID_MARGIN: f64 = 1e-3;
pub const DEFAULT_GRID: usize = 256;
pub const DEFAULT_EPSILON: f64 = 0.2;
pub const DEFAULT_TAU: f64 = 0.05;
pub const CANDIDATE_CAP: usize = 100_000;
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
/// Floor on `|det|` of the Jacobian with unit-length columns.
pub const TRANSVERSALITY_FLOOR: f64 = 1e-6;
pub const DEDUP_TOL: f64 = 1e-8;
/// Newton iterates are kept within `r ≤ 1 − NEWTON_MARGIN`.
const NEWTON_MARGIN: f64 = 1e-9;
const MAX_HALVINGS: usize = 30;

/// A map from the closed unit disc to `R^d`.
pub trait DiscMap: Sync {
    fn image_dim(&self) -> usize;
    fn value(&self, p: [f64; 2]) -> Result<Vec<f64>>;
    /// Value and, per image component, `[∂x, ∂y]`.
    fn value_and_jacobian(&self, p: [f64; 2]) -> Result<(Vec<f64>, Vec<[f64; 2]>)>;
}

/// A trained surface seen as a map into `R^{n+1}` via half-space coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ModelMap<'a> {
    pub model: &'a SurfaceModel,
    pub params: &'a [f64],
}

impl<'a> ModelMap<'a> {
    pub fn new(model: &'a SurfaceModel, params: &'a [f64]) -> Self {
        Self { model, params }
    }
}

impl DiscMap for ModelMap<'_> {
    fn image_dim(&self) -> usize {
        self.model.ambient_dim() + 1
    }

    fn value(&self, p: [f64; 2]) -> Result<Vec<f64>> {
        let h = self.model.evaluate(self.params, p[0], p[1])?;
        let mut v = Vec::with_capacity(h.y.len() + 1);
        v.push(h.x);
        v.extend(h.y);
        Ok(v)
    }

    fn value_and_jacobian(&self, p: [f64; 2]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        let j = self.model.jet_at(self.params, p[0], p[1])?;
        let comps = std::iter::once(&j.x).chain(&j.y);
        Ok(comps.map(|c| (c.value, c.grad)).unzip())
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cartesian lattice `−1 + 2i/(G−1)` per axis, masked to `r ≤ 1 − GRID_MARGIN`.
pub fn disc_grid(grid_res: usize) -> Vec<[f64; 2]> {
    let lim = (1.0 - GRID_MARGIN) * (1.0 - GRID_MARGIN);
    let h = 2.0 / (grid_res - 1) as f64;
    let mut pts = Vec::new();
    for j in 0..grid_res {
        let y = -1.0 + j as f64 * h;
        for i in 0..grid_res {
            let x = -1.0 + i as f64 * h;
            if x * x + y * y <= lim {
                pts.push([x, y]);
            }
        }
    }
    pts
}

fn check_grid(grid_res: usize, epsilon: f64) -> Result<()> {
    if grid_res < 16 {
        return Err(Error::InvalidModel(format!("grid resolution must be at least 16, got {grid_res}")));
    }
    if !(epsilon > 0.0 && epsilon < 2.0) {
        return Err(Error::InvalidModel(format!("epsilon must lie in (0, 2), got {epsilon}")));
    }
    Ok(())
}

/// Images of the grid, in grid order.
pub fn grid_images(map: &dyn DiscMap, grid: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
    grid.par_iter().map(|p| map.value(*p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityField {
    pub grid: Vec<[f64; 2]>,
    pub epsilon: f64,
    /// `min ‖u(p) − u(p′)‖` over grid points `p′` with `‖p − p′‖ > ε`;
    /// infinite if there are none.
    pub values: Vec<f64>,
}

/// Grid-restricted self-proximity map.
pub fn self_proximity(map: &dyn DiscMap, grid_res: usize, epsilon: f64) -> Result<ProximityField> {
    check_grid(grid_res, epsilon)?;
    let grid = disc_grid(grid_res);
    let imgs = grid_images(map, &grid)?;
    let d = map.image_dim();
    let flat: Vec<f64> = imgs.iter().flatten().copied().collect();
    let eps2 = epsilon * epsilon;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid[i];
            let ui = &flat[i * d..(i + 1) * d];
            let mut best = f64::INFINITY;
            for (j, q) in grid.iter().enumerate() {
                let dp = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]);
                if dp > eps2 {
                    best = best.min(dist2(ui, &flat[j * d..(j + 1) * d]));
                }
            }
            best.sqrt()
        })
        .collect();
    Ok(ProximityField { grid, epsilon, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub i: usize,
    pub j: usize,
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub image_distance: f64,
}

/// All unordered grid pairs with `‖p − p′‖ > ε` and `‖u(p) − u(p′)‖ < τ`,
/// sorted by grid index.
pub fn generate_candidates(map: &dyn DiscMap, grid_res: usize, epsilon: f64, tau: f64) -> Result<Vec<Candidate>> {
    check_grid(grid_res, epsilon)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidModel(format!("tau must be positive, got {tau}")));
    }
    let grid = disc_grid(grid_res);
    let imgs = grid_images(map, &grid)?;
    candidates_from_images(&grid, &imgs, epsilon, tau)
}

fn candidates_from_images(grid: &[[f64; 2]], imgs: &[Vec<f64>], epsilon: f64, tau: f64) -> Result<Vec<Candidate>> {
    let cell = |u: &[f64]| -> Vec<i64> { u.iter().map(|v| (v / tau).floor() as i64).collect() };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, u) in imgs.iter().enumerate() {
        buckets.entry(cell(u)).or_default().push(i);
    }
    let d = imgs.first().map_or(0, Vec::len);
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as i64 - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .collect();
    let (eps2, tau2) = (epsilon * epsilon, tau * tau);
    let found = AtomicUsize::new(0);
    let per_point: Vec<Vec<Candidate>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if found.load(Ordering::Relaxed) > CANDIDATE_CAP {
                return Vec::new();
            }
            let c = cell(&imgs[i]);
            let mut out = Vec::new();
            for off in &offsets {
                let key: Vec<i64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
                let Some(js) = buckets.get(&key) else { continue };
                for &j in js.iter().filter(|&&j| j > i) {
                    let (p, q) = (grid[i], grid[j]);
                    let dp = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                    let du = dist2(&imgs[i], &imgs[j]);
                    if dp > eps2 && du < tau2 {
                        out.push(Candidate { i, j, p1: p, p2: q, image_distance: du.sqrt() });
                    }
                }
            }
            out.sort_by_key(|c| c.j);
            found.fetch_add(out.len(), Ordering::Relaxed);
            out
        })
        .collect();
    if found.into_inner() > CANDIDATE_CAP {
        return Err(Error::TooManyCandidates { cap: CANDIDATE_CAP });
    }
    Ok(per_point.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublePointRecord {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub image: [f64; 4],
    /// `‖u(p1) − u(p2)‖`
    pub residual: f64,
    /// `det[du(p1) | −du(p2)]`
    pub jac_det: f64,
    /// The same determinant with unit-length columns.
    pub normalized_det: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NewtonFailure {
    MaxIterations { residual: f64 },
    Singular,
    Diagonal { separation: f64 },
    Evaluation(Error),
}

struct Frame {
    f: Vector4<f64>,
    jac: Matrix4<f64>,
    u1: [f64; 4],
}

fn frame(map: &dyn DiscMap, p1: [f64; 2], p2: [f64; 2]) -> Result<Frame> {
    let (a, ja) = map.value_and_jacobian(p1)?;
    let (b, jb) = map.value_and_jacobian(p2)?;
    let f = Vector4::from_fn(|k, _| a[k] - b[k]);
    let jac = Matrix4::from_fn(|k, c| match c {
        0 | 1 => ja[k][c],
        _ => -jb[k][c - 2],
    });
    Ok(Frame { f, jac, u1: [a[0], a[1], a[2], a[3]] })
}

fn clamp_to_disc(p: [f64; 2]) -> [f64; 2] {
    let r = p[0].hypot(p[1]);
    let lim = 1.0 - NEWTON_MARGIN;
    if r > lim {
        [p[0] * lim / r, p[1] * lim / r]
    } else {
        p
    }
}

fn separation(p1: [f64; 2], p2: [f64; 2]) -> f64 {
    (p1[0] - p2[0]).hypot(p1[1] - p2[1])
}

fn normalized_det(jac: &Matrix4<f64>) -> f64 {
    let mut m = *jac;
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    m.determinant()
}

fn check_dim(map: &dyn DiscMap) -> Result<()> {
    if map.image_dim() != 4 {
        return Err(Error::Dimension { expected: 3, got: map.image_dim().saturating_sub(1) });
    }
    Ok(())
}

/// Damped Newton on `F(p1, p2) = u(p1) − u(p2)`, halving the step while the
/// residual does not decrease.
pub fn newton_refine(
    map: &dyn DiscMap,
    p1: [f64; 2],
    p2: [f64; 2],
    epsilon: f64,
) -> Result<std::result::Result<DoublePointRecord, NewtonFailure>> {
    check_dim(map)?;
    let (mut p1, mut p2) = (clamp_to_disc(p1), clamp_to_disc(p2));
    let eval = |a, b| frame(map, a, b);
    let mut fr = match eval(p1, p2) {
        Ok(f) => f,
        Err(e) => return Ok(Err(NewtonFailure::Evaluation(e))),
    };
    let mut iters = 0;
    loop {
        let res = fr.f.norm();
        if res <= NEWTON_TOL {
            let sep = separation(p1, p2);
            if sep <= epsilon {
                return Ok(Err(NewtonFailure::Diagonal { separation: sep }));
            }
            let (q1, q2) = if (p1[0], p1[1]) <= (p2[0], p2[1]) { (p1, p2) } else { (p2, p1) };
            return Ok(Ok(DoublePointRecord {
                p1: q1,
                p2: q2,
                image: fr.u1,
                residual: res,
                jac_det: fr.jac.determinant(),
                normalized_det: normalized_det(&fr.jac),
                newton_iters: iters,
            }));
        }
        if iters == NEWTON_MAX_ITER {
            return Ok(Err(NewtonFailure::MaxIterations { residual: res }));
        }
        let Some(step) = fr.jac.lu().solve(&(-fr.f)) else {
            return Ok(Err(NewtonFailure::Singular));
        };
        if !step.iter().all(|v| v.is_finite()) {
            return Ok(Err(NewtonFailure::Singular));
        }
        iters += 1;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let a = clamp_to_disc([p1[0] + t * step[0], p1[1] + t * step[1]]);
            let b = clamp_to_disc([p2[0] + t * step[2], p2[1] + t * step[3]]);
            if let Ok(f) = eval(a, b) {
                if f.f.norm() < res {
                    accepted = Some((a, b, f));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((a, b, f)) = accepted else {
            return Ok(Err(NewtonFailure::MaxIterations { residual: res }));
        };
        if separation(a, b) <= epsilon * 0.5 {
            return Ok(Err(NewtonFailure::Diagonal { separation: separation(a, b) }));
        }
        (p1, p2, fr) = (a, b, f);
    }
}

/// Sign of the Jacobian determinant of a transverse double point.
pub fn intersection_sign(r: &DoublePointRecord) -> Result<i32> {
    if !(r.normalized_det.abs() >= TRANSVERSALITY_FLOOR) {
        return Err(Error::NonTransverse { p1: r.p1, p2: r.p2, det: r.normalized_det });
    }
    Ok(if r.jac_det > 0.0 { 1 } else { -1 })
}

fn pair_distance(a: &DoublePointRecord, b: &DoublePointRecord) -> f64 {
    let d = |x: [f64; 2], y: [f64; 2]| (x[0] - y[0]).abs().max((x[1] - y[1]).abs());
    let same = d(a.p1, b.p1).max(d(a.p2, b.p2));
    let swapped = d(a.p1, b.p2).max(d(a.p2, b.p1));
    same.min(swapped)
}

/// Merges records whose unordered preimage pairs agree within `tol`
/// (max-norm), keeping the one with the smallest residual.
pub fn deduplicate(records: &[DoublePointRecord], tol: f64) -> Vec<DoublePointRecord> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| {
        a.residual.total_cmp(&b.residual).then(a.p1[0].total_cmp(&b.p1[0])).then(a.p1[1].total_cmp(&b.p1[1]))
    });
    let mut kept: Vec<DoublePointRecord> = Vec::new();
    for r in sorted {
        if kept.iter().all(|k| pair_distance(k, &r) > tol) {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| {
        (a.p1[0], a.p1[1], a.p2[0], a.p2[1]).partial_cmp(&(b.p1[0], b.p1[1], b.p2[0], b.p2[1])).expect("finite")
    });
    kept
}

pub fn self_intersection_number(records: &[DoublePointRecord]) -> Result<i32> {
    records.iter().map(intersection_sign).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub grid_res: usize,
    pub epsilon: f64,
    pub tau: f64,
    pub dedup_tol: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { grid_res: DEFAULT_GRID, epsilon: DEFAULT_EPSILON, tau: DEFAULT_TAU, dedup_tol: DEDUP_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionReport {
    pub candidates: Vec<Candidate>,
    /// Deduplicated transverse double points.
    pub records: Vec<DoublePointRecord>,
    /// Deduplicated refined pairs below the transversality floor.
    pub non_transverse: Vec<DoublePointRecord>,
    pub newton_failures: usize,
    pub self_intersection: i32,
}

/// Candidates, Newton refinement, deduplication and signs.
pub fn find_double_points(map: &dyn DiscMap, params: &SearchParams) -> Result<IntersectionReport> {
    check_dim(map)?;
    let candidates = generate_candidates(map, params.grid_res, params.epsilon, params.tau)?;
    let refined: Vec<std::result::Result<DoublePointRecord, NewtonFailure>> =
        candidates.par_iter().map(|c| newton_refine(map, c.p1, c.p2, params.epsilon)).collect::<Result<_>>()?;
    let newton_failures = refined.iter().filter(|r| r.is_err()).count();
    let ok: Vec<DoublePointRecord> = refined.into_iter().filter_map(|r| r.ok()).collect();
    let unique = deduplicate(&ok, params.dedup_tol);
    let (records, non_transverse): (Vec<_>, Vec<_>) =
        unique.into_iter().partition(|r| r.normalized_det.abs() >= TRANSVERSALITY_FLOOR);
    let self_intersection = self_intersection_number(&records)?;
    Ok(IntersectionReport { candidates, records, non_transverse, newton_failures, self_intersection })
}

//! Analytic immersions `D² → R⁴` with double points of known location and
//! sign.
//!
//! Each fixture has the form `(c(x), y, o·x·h(y))` where `c` is a plane
//! curve with transverse self-crossings, `h` picks out the heights at which
//! the two sheets over a crossing meet, and `o = ±1` sets the orientation.
//! At a crossing `c(x₁) = c(x₂)`, `h(y₀) = 0`, the Jacobian of
//! `F = u(p₁) − u(p₂)` splits into two 2×2 blocks and its determinant is
//! `−det[c′(x₁), c′(x₂)] · o·(x₂ h′(y₀) − x₁ h′(y₀))`.

use super::DiscMap;
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// `a` in the folded curve `(x² − a, κx(x² − a))`; crossing at `x = ±√a`.
const FOLD_A: f64 = 0.36;
const FOLD_KAPPA: f64 = 2.0;
/// Heights of the opposite pair, `h(y) = y² − b`.
const PAIR_B: f64 = 0.25;
/// Prolate cycloid `(t − 2 sin t, 1 − 2 cos t)/α` with `t = αx + π`.
const CYCLOID_ALPHA: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// `(0.1, x, y, 0)`.
    Injective,
    /// One double point; sign `+1`, or `−1` when flipped.
    OneCrossing { flipped: bool },
    /// Two double points of equal sign: `−1` each, `+1` when flipped.
    TwoCrossing { flipped: bool },
    /// Two double points of opposite sign.
    OppositePair,
}

/// A double point by construction: unordered preimages and sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownCrossing {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub sign: i32,
}

/// Root `δ ∈ (0, π)` of `2 sin δ = δ`.
pub fn cycloid_delta() -> f64 {
    let mut d: f64 = 1.9;
    for _ in 0..50 {
        let f = 2.0 * d.sin() - d;
        let df = 2.0 * d.cos() - 1.0;
        d -= f / df;
    }
    d
}

impl Fixture {
    pub const ALL: [Fixture; 6] = [
        Fixture::Injective,
        Fixture::OneCrossing { flipped: false },
        Fixture::OneCrossing { flipped: true },
        Fixture::TwoCrossing { flipped: false },
        Fixture::TwoCrossing { flipped: true },
        Fixture::OppositePair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Injective => "injective",
            Fixture::OneCrossing { flipped: false } => "one-crossing",
            Fixture::OneCrossing { flipped: true } => "one-crossing-flipped",
            Fixture::TwoCrossing { flipped: false } => "two-crossing",
            Fixture::TwoCrossing { flipped: true } => "two-crossing-flipped",
            Fixture::OppositePair => "opposite-pair",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }

    fn orientation(self) -> f64 {
        match self {
            Fixture::OneCrossing { flipped: true } | Fixture::TwoCrossing { flipped: true } => -1.0,
            _ => 1.0,
        }
    }

    /// Plane curve and its derivative.
    fn curve(self, x: f64) -> ([f64; 2], [f64; 2]) {
        match self {
            Fixture::TwoCrossing { .. } => {
                let t = CYCLOID_ALPHA * x + PI;
                let (s, c) = t.sin_cos();
                ([(t - 2.0 * s) / CYCLOID_ALPHA, (1.0 - 2.0 * c) / CYCLOID_ALPHA], [1.0 - 2.0 * c, 2.0 * s])
            }
            _ => {
                let q = x * x - FOLD_A;
                ([q, FOLD_KAPPA * x * q], [2.0 * x, FOLD_KAPPA * (3.0 * x * x - FOLD_A)])
            }
        }
    }

    fn height(self, y: f64) -> (f64, f64) {
        match self {
            Fixture::OppositePair => (y * y - PAIR_B, 2.0 * y),
            _ => (y, 1.0),
        }
    }

    pub fn crossings(self) -> Vec<KnownCrossing> {
        let s = FOLD_A.sqrt();
        match self {
            Fixture::Injective => Vec::new(),
            Fixture::OneCrossing { flipped } => {
                vec![KnownCrossing { p1: [-s, 0.0], p2: [s, 0.0], sign: if flipped { -1 } else { 1 } }]
            }
            Fixture::OppositePair => {
                let b = PAIR_B.sqrt();
                vec![
                    KnownCrossing { p1: [-s, -b], p2: [s, -b], sign: -1 },
                    KnownCrossing { p1: [-s, b], p2: [s, b], sign: 1 },
                ]
            }
            Fixture::TwoCrossing { flipped } => {
                let d = cycloid_delta();
                let sign = if flipped { 1 } else { -1 };
                (0..2)
                    .map(|k| {
                        let c = 2.0 * PI * k as f64 - PI;
                        KnownCrossing { p1: [(c - d) / CYCLOID_ALPHA, 0.0], p2: [(c + d) / CYCLOID_ALPHA, 0.0], sign }
                    })
                    .collect()
            }
        }
    }

    pub fn signed_count(self) -> i32 {
        self.crossings().iter().map(|c| c.sign).sum()
    }
}

impl DiscMap for Fixture {
    fn image_dim(&self) -> usize {
        4
    }

    fn value(&self, p: [f64; 2]) -> Result<Vec<f64>> {
        Ok(self.value_and_jacobian(p)?.0)
    }

    fn value_and_jacobian(&self, p: [f64; 2]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        let [x, y] = p;
        if *self == Fixture::Injective {
            return Ok((vec![0.1, x, y, 0.0], vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]));
        }
        let (c, dc) = self.curve(x);
        let (h, dh) = self.height(y);
        let o = self.orientation();
        Ok((vec![c[0], c[1], y, o * x * h], vec![[dc[0], 0.0], [dc[1], 0.0], [0.0, 1.0], [o * h, o * x * dh]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossings_are_double_points() {
        for f in Fixture::ALL {
            for c in f.crossings() {
                let a = f.value(c.p1).unwrap();
                let b = f.value(c.p2).unwrap();
                let gap: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
                assert!(gap < 1e-14, "{} {gap}", f.name());
                assert!(c.p1[0].hypot(c.p1[1]) < 1.0 && c.p2[0].hypot(c.p2[1]) < 1.0);
            }
        }
        assert_eq!(Fixture::TwoCrossing { flipped: false }.signed_count(), -2);
        assert_eq!(Fixture::OppositePair.signed_count(), 0);
    }

    #[test]
    fn jacobian_matches_differences() {
        let h = 1e-6;
        for f in Fixture::ALL {
            for p in [[0.3, -0.2], [-0.5, 0.4], [0.1, 0.7]] {
                let (_, j) = f.value_and_jacobian(p).unwrap();
                for axis in 0..2 {
                    let mut a = p;
                    let mut b = p;
                    a[axis] += h;
                    b[axis] -= h;
                    let (ua, ub) = (f.value(a).unwrap(), f.value(b).unwrap());
                    for k in 0..4 {
                        assert!(((ua[k] - ub[k]) / (2.0 * h) - j[k][axis]).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn delta_root() {
        let d = cycloid_delta();
        assert!((2.0 * d.sin() - d).abs() < 1e-15 && d > 1.8 && d < 2.0);
    }

    #[test]
    fn names_round_trip() {
        for f in Fixture::ALL {
            assert_eq!(Fixture::from_name(f.name()).unwrap(), f);
        }
        assert!(Fixture::from_name("nope").is_err());
    }
}

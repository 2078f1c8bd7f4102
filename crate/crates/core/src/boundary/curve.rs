use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples used by the embedding check.
pub const INJECTIVITY_SAMPLES: usize = 512;
/// Neighbouring samples (cyclically) excluded from the embedding check.
pub const INJECTIVITY_WINDOW: usize = 16;

/// A closed curve `γ: S¹ → Rⁿ` stored as a truncated complex Fourier series
/// per component: `γ_k(θ) = Σ_{|m|≤N} c_{k,m} e^{imθ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotCurve {
    pub label: String,
    max_mode: usize,
    /// `coeffs[k][m + N]`.
    coeffs: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Unknot,
    Figure8,
    ThreeTwist,
    Stevedore,
    Square,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Preset::Unknot, Preset::Figure8, Preset::ThreeTwist, Preset::Stevedore, Preset::Square];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Unknot => "unknot",
            Preset::Figure8 => "figure8",
            Preset::ThreeTwist => "three_twist",
            Preset::Stevedore => "stevedore",
            Preset::Square => "square",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

impl KnotCurve {
    /// The zero curve in `Rⁿ` with room for modes `|m| ≤ max_mode`.
    pub fn zero(ambient_dim: usize, max_mode: usize, label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            max_mode,
            coeffs: vec![vec![Complex64::new(0.0, 0.0); 2 * max_mode + 1]; ambient_dim],
        }
    }

    /// Builds a curve from explicit coefficients `coeffs[k][m + N]`.
    pub fn from_coefficients(label: impl Into<String>, coeffs: Vec<Vec<Complex64>>) -> Result<Self> {
        let len = coeffs.first().map_or(0, Vec::len);
        if coeffs.is_empty() || len.is_multiple_of(2) || coeffs.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidCurve("need at least one component and 2N+1 coefficients per component".into()));
        }
        Ok(Self { label: label.into(), max_mode: len / 2, coeffs })
    }

    pub fn ambient_dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// `c_{k,m}`, zero outside the stored band.
    pub fn coeff(&self, k: usize, m: i64) -> Complex64 {
        let n = self.max_mode as i64;
        if m.abs() > n {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[k][(m + n) as usize]
    }

    pub fn coefficients(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    fn grow(&mut self, max_mode: usize) {
        if max_mode <= self.max_mode {
            return;
        }
        let pad = max_mode - self.max_mode;
        for c in &mut self.coeffs {
            let mut v = vec![Complex64::new(0.0, 0.0); pad];
            v.append(c);
            v.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), pad));
            *c = v;
        }
        self.max_mode = max_mode;
    }

    fn add(&mut self, k: usize, m: i64, c: Complex64) {
        self.grow(m.unsigned_abs() as usize);
        let n = self.max_mode as i64;
        self.coeffs[k][(m + n) as usize] += c;
    }

    /// Adds `amp · cos(mθ + phase)` to component `k`.
    pub fn add_cos(&mut self, k: usize, m: i64, amp: f64, phase: f64) -> &mut Self {
        let (s, c) = if phase == 0.0 { (0.0, 1.0) } else { phase.sin_cos() };
        if m == 0 {
            self.add(k, 0, Complex64::new(amp * c, 0.0));
        } else {
            let h = 0.5 * amp;
            self.add(k, m, Complex64::new(h * c, h * s));
            self.add(k, -m, Complex64::new(h * c, -h * s));
        }
        self
    }

    /// Adds `amp · sin(mθ + phase)` to component `k`.
    pub fn add_sin(&mut self, k: usize, m: i64, amp: f64, phase: f64) -> &mut Self {
        let (s, c) = if phase == 0.0 { (0.0, 1.0) } else { phase.sin_cos() };
        if m == 0 {
            self.add(k, 0, Complex64::new(amp * s, 0.0));
        } else {
            let h = 0.5 * amp;
            self.add(k, m, Complex64::new(h * s, -h * c));
            self.add(k, -m, Complex64::new(h * s, h * c));
        }
        self
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        self.eval_derivative(theta, 0)
    }

    /// `d^order γ / dθ^order`.
    pub fn eval_derivative(&self, theta: f64, order: u32) -> Vec<f64> {
        let n = self.max_mode as i64;
        self.coeffs
            .iter()
            .map(|c| {
                let mut s = 0.0;
                for m in -n..=n {
                    let cm = c[(m + n) as usize];
                    if cm.re == 0.0 && cm.im == 0.0 {
                        continue;
                    }
                    let e = Complex64::from_polar(1.0, m as f64 * theta);
                    let f = Complex64::new(0.0, m as f64).powu(order);
                    s += (cm * f * e).re;
                }
                s
            })
            .collect()
    }

    /// Largest deviation from conjugate symmetry `c_{−m} = conj(c_m)`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.max_mode as i64;
        let mut worst: f64 = 0.0;
        for c in &self.coeffs {
            for m in 0..=n {
                let d = c[(n - m) as usize] - c[(n + m) as usize].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Minimum distance between samples that are more than the window apart
    /// on the circle.
    pub fn self_separation(&self) -> f64 {
        let ns = INJECTIVITY_SAMPLES;
        let pts: Vec<Vec<f64>> = (0..ns).map(|i| self.eval(TAU * i as f64 / ns as f64)).collect();
        let mut best = f64::INFINITY;
        for i in 0..ns {
            for j in i + 1..ns {
                let gap = (j - i).min(ns - (j - i));
                if gap <= INJECTIVITY_WINDOW {
                    continue;
                }
                let d2: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d2);
            }
        }
        best.sqrt()
    }

    pub fn diameter(&self) -> f64 {
        let ns = INJECTIVITY_SAMPLES;
        let pts: Vec<Vec<f64>> = (0..ns).map(|i| self.eval(TAU * i as f64 / ns as f64)).collect();
        let mut best: f64 = 0.0;
        for i in 0..ns {
            for j in i + 1..ns {
                let d2: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.max(d2);
            }
        }
        best.sqrt()
    }

    /// Numerical embedding check: the self-separation must exceed `1e-3`
    /// times the diameter.
    pub fn check_embedded(&self) -> Result<()> {
        let sep = self.self_separation();
        if !(sep > 1e-3 * self.diameter()) {
            return Err(Error::NotEmbedded { separation: sep });
        }
        Ok(())
    }

    /// Plain-text table: one row per mode `m`, then `Re Im` per component.
    pub fn to_table(&self) -> String {
        let n = self.max_mode as i64;
        let mut s = String::new();
        for m in -n..=n {
            let _ = write!(s, "{m}");
            for c in &self.coeffs {
                let v = c[(m + n) as usize];
                let _ = write!(s, " {:?} {:?}", v.re, v.im);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_table(label: impl Into<String>, table: &str) -> Result<Self> {
        let rows: Vec<Vec<&str>> = table
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.split_whitespace().collect())
            .collect();
        let bad = |msg: &str| Error::InvalidCurve(msg.to_string());
        let width = rows.first().ok_or_else(|| bad("empty coefficient table"))?.len();
        if width < 3 || width % 2 == 0 {
            return Err(bad("row must be `m` followed by Re/Im pairs"));
        }
        let dim = (width - 1) / 2;
        let mut entries = Vec::with_capacity(rows.len());
        for row in &rows {
            if row.len() != width {
                return Err(bad("ragged coefficient table"));
            }
            let m: i64 = row[0].parse().map_err(|_| bad("mode index is not an integer"))?;
            let vals: Vec<f64> = row[1..]
                .iter()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("coefficient is not a number"))?;
            entries.push((m, vals));
        }
        let max_mode = entries.iter().map(|(m, _)| m.unsigned_abs() as usize).max().unwrap_or(0);
        let mut curve = Self::zero(dim, max_mode, label);
        for (m, vals) in entries {
            for k in 0..dim {
                curve.add(k, m, Complex64::new(vals[2 * k], vals[2 * k + 1]));
            }
        }
        Ok(curve)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Conventional name of the `(p, q)` torus knot, mirrors marked with `*`.
pub fn torus_label(p: i64, q: i64) -> String {
    let (a, b) = (p.abs().max(q.abs()), p.abs().min(q.abs()));
    let base = match (a, b) {
        (_, 1) => return "unknot".to_string(),
        (3, 2) => "3_1".to_string(),
        (5, 2) => "5_1".to_string(),
        (4, 3) => "8_19".to_string(),
        (5, 3) => "10_124".to_string(),
        _ => format!("T({a},{b})"),
    };
    if (p < 0) != (q < 0) {
        base + "*"
    } else {
        base
    }
}

/// `γ_{p,q}(θ) = ((R + r cos qθ) cos pθ, (R + r cos qθ) sin pθ, r sin qθ)`.
pub fn torus_knot(p: i64, q: i64, big_r: f64, small_r: f64) -> Result<KnotCurve> {
    if p == 0 || q == 0 || gcd(p, q) != 1 {
        return Err(Error::NotAKnot { p, q });
    }
    if !(big_r > small_r && small_r > 0.0) {
        return Err(Error::InvalidCurve(format!("torus radii need R > r > 0, got R={big_r}, r={small_r}")));
    }
    let max_mode = (p.abs() + q.abs()) as usize;
    let mut c = KnotCurve::zero(3, max_mode, torus_label(p, q));
    let h = 0.5 * small_r;
    c.add_cos(0, p, big_r, 0.0).add_cos(0, p + q, h, 0.0).add_cos(0, p - q, h, 0.0);
    c.add_sin(1, p, big_r, 0.0).add_sin(1, p + q, h, 0.0).add_sin(1, p - q, h, 0.0);
    c.add_sin(2, q, small_r, 0.0);
    Ok(c)
}

/// Named curves: the round unknot and Lissajous-type parametrisations.
pub fn preset_curve(preset: Preset) -> KnotCurve {
    match preset {
        Preset::Unknot => {
            let mut c = KnotCurve::zero(3, 1, "unknot");
            c.add_cos(0, 1, 1.0, 0.0).add_sin(1, 1, 1.0, 0.0);
            c
        }
        Preset::Figure8 => {
            // (1 + ½cos2θ)cos3θ = cos3θ + ¼cos5θ + ¼cosθ, likewise for sin
            let mut c = KnotCurve::zero(3, 5, "4_1");
            c.add_cos(0, 3, 1.0, 0.0).add_cos(0, 5, 0.25, 0.0).add_cos(0, 1, 0.25, 0.0);
            c.add_sin(1, 3, 1.0, 0.0).add_sin(1, 5, 0.25, 0.0).add_sin(1, 1, 0.25, 0.0);
            c.add_sin(2, 4, 0.5, 0.0);
            c
        }
        Preset::ThreeTwist => {
            let mut c = KnotCurve::zero(3, 7, "5_2");
            c.add_cos(0, 3, -1.0, 0.7).add_cos(1, 2, -1.0, 0.2).add_cos(2, 7, -1.0, 0.0);
            c
        }
        Preset::Stevedore => {
            let mut c = KnotCurve::zero(3, 5, "6_1");
            c.add_cos(0, 3, -1.0, 1.5).add_cos(1, 2, -1.0, 0.2).add_cos(2, 5, -1.0, 0.0);
            c
        }
        Preset::Square => {
            let mut c = KnotCurve::zero(3, 7, "square");
            c.add_cos(0, 3, 1.0, 0.7).add_cos(1, 5, 1.0, 1.0).add_cos(2, 7, 1.0, 0.0);
            c
        }
    }
}

pub fn preset_by_name(name: &str) -> Result<KnotCurve> {
    Ok(preset_curve(name.parse()?))
}

/// Reflection in the last coordinate (`z ↦ −z` for space curves). The label
/// gains or loses a trailing `*`.
pub fn mirror_curve(curve: &KnotCurve) -> KnotCurve {
    let mut c = curve.clone();
    if let Some(last) = c.coeffs.last_mut() {
        for v in last {
            *v = -*v;
        }
    }
    c.label = match curve.label.strip_suffix('*') {
        Some(base) => base.to_string(),
        None if curve.label == "unknot" || curve.label == "square" => curve.label.clone(),
        None => format!("{}*", curve.label),
    };
    c
}

/// Adds `σ Σ_{m=1..K} (A_m cos mθ + B_m sin mθ)` with `A_m, B_m` uniform in
/// `[0,1]ⁿ`, drawn in the order `A_1, B_1, A_2, …` from a seeded generator,
/// then re-checks the embedding.
pub fn perturb(curve: &KnotCurve, sigma: f64, modes: usize, seed: u64) -> Result<KnotCurve> {
    if !(sigma >= 0.0) || modes == 0 {
        return Err(Error::InvalidCurve(format!("perturbation needs sigma >= 0 and K >= 1, got {sigma}, {modes}")));
    }
    let mut c = curve.clone();
    if sigma == 0.0 {
        return Ok(c);
    }
    let n = c.ambient_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in 1..=modes as i64 {
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        for k in 0..n {
            let h = 0.5 * sigma;
            c.add(k, m, Complex64::new(h * a[k], -h * b[k]));
            c.add(k, -m, Complex64::new(h * a[k], h * b[k]));
        }
    }
    c.check_embedded().map_err(|e| match e {
        Error::NotEmbedded { separation } => Error::InvalidCurve(format!(
            "perturbed curve is not embedded (separation {separation:e}); try a smaller sigma"
        )),
        other => other,
    })?;
    Ok(c)
}

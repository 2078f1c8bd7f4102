use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::curve::KnotCurve;
use crate::autodiff::{ComplexJet, Jet2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionKind {
    /// `2r/(1+r²) · γ(θ)`; only continuous at the origin.
    Stereographic,
    /// `2Γ/(1+r²)` with `Γ` the harmonic extension of `γ`.
    Stereoharmonic,
    /// `2Γ/(1+r²)` with `Γ` biharmonic, `Γ = γ` and `∂_rΓ = γ` on the circle.
    Stereobiharmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoKind {
    /// `(1 − r²)/(1 + r²)`
    Stereographic,
    /// `1 − r²`
    OneMinusR2,
}

/// Jet of `1 − x² − y²`, snapped to an exact zero on the unit circle.
fn one_minus_r2(x: Jet2, y: Jet2) -> (Jet2, Jet2) {
    let r2 = x * x + y * y;
    let mut num = -r2 + 1.0;
    if num.value.abs() <= 4.0 * f64::EPSILON {
        num.value = 0.0;
    }
    (num, r2)
}

/// Boundary defining function. Its value is exactly zero when `x² + y²`
/// rounds to 1.
pub fn rho(kind: RhoKind, x: Jet2, y: Jet2) -> Jet2 {
    let (num, r2) = one_minus_r2(x, y);
    match kind {
        RhoKind::OneMinusR2 => num,
        RhoKind::Stereographic => num * (r2 + 1.0).recip().expect("1 + r² is positive"),
    }
}

pub fn rho_st(x: Jet2, y: Jet2) -> Jet2 {
    rho(RhoKind::Stereographic, x, y)
}

/// Radial profile of each Fourier mode: `Γ_k = Σ_m (a_{k,m} + b_{k,m} r²) r^{|m|} e^{imθ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionField {
    pub kind: ExtensionKind,
    max_mode: usize,
    /// `a[k][m + N]`
    a: Vec<Vec<Complex64>>,
    b: Vec<Vec<Complex64>>,
}

/// Per-mode coefficients of the boundary-value solution.
pub fn mode_coefficients(kind: ExtensionKind, m: i64, c: Complex64) -> (Complex64, Complex64) {
    match kind {
        ExtensionKind::Stereographic | ExtensionKind::Stereoharmonic => (c, Complex64::new(0.0, 0.0)),
        ExtensionKind::Stereobiharmonic => {
            // a + b = c, |m|a + (|m|+2)b = c
            let b = c * ((1.0 - m.abs() as f64) / 2.0);
            (c - b, b)
        }
    }
}

pub fn build_extension(curve: &KnotCurve, kind: ExtensionKind, modes: usize) -> Result<ExtensionField> {
    if modes < curve.max_mode() {
        let top = (0..curve.ambient_dim())
            .flat_map(|k| (-(curve.max_mode() as i64)..=curve.max_mode() as i64).map(move |m| (k, m)))
            .filter(|&(k, m)| curve.coeff(k, m).norm() != 0.0)
            .map(|(_, m)| m.unsigned_abs() as usize)
            .max()
            .unwrap_or(0);
        if modes < top {
            return Err(Error::InvalidCurve(format!("curve has mode {top} beyond truncation {modes}")));
        }
    }
    let n = modes as i64;
    let mut a = vec![vec![Complex64::new(0.0, 0.0); 2 * modes + 1]; curve.ambient_dim()];
    let mut b = a.clone();
    for k in 0..curve.ambient_dim() {
        for m in -n..=n {
            let (am, bm) = mode_coefficients(kind, m, curve.coeff(k, m));
            a[k][(m + n) as usize] = am;
            b[k][(m + n) as usize] = bm;
        }
    }
    Ok(ExtensionField { kind, max_mode: modes, a, b })
}

impl ExtensionField {
    pub fn new(curve: &KnotCurve, kind: ExtensionKind) -> Self {
        build_extension(curve, kind, curve.max_mode()).expect("curve band fits its own truncation")
    }

    pub fn ambient_dim(&self) -> usize {
        self.a.len()
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    pub fn coefficients(&self, k: usize, m: i64) -> (Complex64, Complex64) {
        let n = self.max_mode as i64;
        if m.abs() > n {
            return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        }
        let i = (m + n) as usize;
        (self.a[k][i], self.b[k][i])
    }

    /// Real combination `Σ_m Re(c_m w^m)` with `w^{−m} = conj(w^m)`, given
    /// powers `pw[m] = w^m` for `m ≥ 0`.
    fn combine(coef: &[Complex64], pw: &[ComplexJet], n: usize) -> Jet2 {
        let mut acc = Jet2::constant(coef[n].re);
        for m in 1..=n {
            let (cp, cm) = (coef[n + m], coef[n - m]);
            let re = cp.re + cm.re;
            let im = cp.im - cm.im;
            if re != 0.0 {
                acc += pw[m].re.scale(re);
            }
            if im != 0.0 {
                acc += pw[m].im.scale(-im);
            }
        }
        acc
    }

    fn powers(w: ComplexJet, n: usize) -> Vec<ComplexJet> {
        let mut pw = Vec::with_capacity(n + 1);
        pw.push(ComplexJet::ONE);
        for m in 1..=n {
            let next = pw[m - 1] * w;
            pw.push(next);
        }
        pw
    }

    /// `Γ` without the stereographic factor. For the stereographic kind this
    /// is `r·γ(θ)`, returned as zero (with zero derivatives) at the origin.
    pub fn eval_gamma(&self, x: Jet2, y: Jet2) -> Vec<Jet2> {
        let n = self.max_mode;
        let r2 = x * x + y * y;
        match self.kind {
            ExtensionKind::Stereographic => {
                if r2.value == 0.0 {
                    return vec![Jet2::ZERO; self.ambient_dim()];
                }
                let r = r2.sqrt().expect("r² > 0");
                let inv = r.recip().expect("r > 0");
                let pw = Self::powers(ComplexJet::new(x * inv, y * inv), n);
                self.a.iter().map(|c| Self::combine(c, &pw, n) * r).collect()
            }
            ExtensionKind::Stereoharmonic | ExtensionKind::Stereobiharmonic => {
                let pw = Self::powers(ComplexJet::new(x, y), n);
                let harmonic = self.kind == ExtensionKind::Stereoharmonic;
                self.a
                    .iter()
                    .zip(&self.b)
                    .map(|(a, b)| {
                        let p = Self::combine(a, &pw, n);
                        if harmonic {
                            p
                        } else {
                            p + r2 * Self::combine(b, &pw, n)
                        }
                    })
                    .collect()
            }
        }
    }

    /// Jets of `ext(γ) = 2Γ/(1 + r²)` per component.
    pub fn eval(&self, x: Jet2, y: Jet2) -> Vec<Jet2> {
        let r2 = x * x + y * y;
        let factor = (r2 + 1.0).recip().expect("1 + r² is positive").scale(2.0);
        self.eval_gamma(x, y).into_iter().map(|g| g * factor).collect()
    }
}

pub fn eval_extension(ext: &ExtensionField, x: Jet2, y: Jet2) -> Vec<Jet2> {
    ext.eval(x, y)
}

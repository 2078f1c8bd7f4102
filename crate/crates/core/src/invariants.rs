//! HOMFLY polynomials of the tested knots and the disc counts they predict.
//!
//! A polynomial `Σ c_{g,d} z^{2g} a^{2(g+d)}` is stored by its `(g, d)`
//! coefficients. The `g = 0` slice `d ↦ c_{0,d}` lists the self-intersection
//! numbers for which minimal immersed discs are expected.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HomflyPolynomial {
    terms: BTreeMap<(u32, i32), i64>,
}

impl HomflyPolynomial {
    pub fn one() -> Self {
        Self::from_terms([(0, 0, 1)])
    }

    /// From `(g, d, c)` triples; zero coefficients are dropped and repeated
    /// indices add up.
    pub fn from_terms(terms: impl IntoIterator<Item = (u32, i32, i64)>) -> Self {
        let mut p = Self::default();
        for (g, d, c) in terms {
            *p.terms.entry((g, d)).or_insert(0) += c;
        }
        p.terms.retain(|_, c| *c != 0);
        p
    }

    /// From `(z exponent, a exponent, c)` monomials; both exponents must be even.
    pub fn from_monomials(monos: &[(u32, i32, i64)]) -> Self {
        Self::from_terms(monos.iter().map(|&(zp, ap, c)| {
            assert!(zp % 2 == 0 && ap % 2 == 0, "odd exponent in z^{zp} a^{ap}");
            let g = zp / 2;
            (g, ap / 2 - g as i32, c)
        }))
    }

    pub fn coeff(&self, g: u32, d: i32) -> i64 {
        self.terms.get(&(g, d)).copied().unwrap_or(0)
    }

    /// Nonzero `((g, d), c)` in increasing order.
    pub fn terms(&self) -> impl Iterator<Item = ((u32, i32), i64)> + '_ {
        self.terms.iter().map(|(k, c)| (*k, *c))
    }

    /// Nonzero `(z exponent, a exponent, c)`.
    pub fn monomials(&self) -> Vec<(u32, i32, i64)> {
        self.terms().map(|((g, d), c)| (2 * g, 2 * (g as i32 + d), c)).collect()
    }

    /// Value at numeric `(a, z)`.
    pub fn eval(&self, a: f64, z: f64) -> f64 {
        self.monomials().iter().map(|&(zp, ap, c)| c as f64 * z.powi(zp as i32) * a.powi(ap)).sum()
    }

    /// `P(K*)(a, z) = P(K)(a⁻¹, z)`, i.e. `d ↦ −d − 2g`.
    pub fn mirror(&self) -> Self {
        Self::from_terms(self.terms().map(|((g, d), c)| (g, -d - 2 * g as i32, c)))
    }

    /// The `g = 0` slice: `d ↦ c_{0,d}`, nonzero entries only.
    pub fn disc_predictions(&self) -> BTreeMap<i32, i64> {
        self.terms().filter(|((g, _), _)| *g == 0).map(|((_, d), c)| (d, c)).collect()
    }
}

pub fn mirror_poly(p: &HomflyPolynomial) -> HomflyPolynomial {
    p.mirror()
}

pub fn disc_predictions(p: &HomflyPolynomial) -> BTreeMap<i32, i64> {
    p.disc_predictions()
}

fn superscript(n: i32) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    let mut s = String::new();
    if n < 0 {
        s.push('⁻');
    }
    for ch in n.unsigned_abs().to_string().chars() {
        s.push(DIGITS[ch.to_digit(10).expect("digit") as usize]);
    }
    s
}

fn power(var: char, e: i32) -> String {
    match e {
        0 => String::new(),
        1 => var.to_string(),
        _ => format!("{var}{}", superscript(e)),
    }
}

/// `c·a^{ae}·z^{ze}` in the usual notation, e.g. `2a²`, `−a⁻⁶`, `5`.
pub fn format_monomial(c: i64, a_exp: i32, z_exp: u32) -> String {
    let vars = format!("{}{}", power('a', a_exp), power('z', z_exp as i32));
    let sign = if c < 0 { "−" } else { "" };
    let mag = c.unsigned_abs();
    if vars.is_empty() {
        format!("{sign}{mag}")
    } else if mag == 1 {
        format!("{sign}{vars}")
    } else {
        format!("{sign}{mag}{vars}")
    }
}

impl fmt::Display for HomflyPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let monos = self.monomials();
        if monos.is_empty() {
            return write!(f, "0");
        }
        for (k, &(zp, ap, c)) in monos.iter().enumerate() {
            let m = format_monomial(c.abs(), ap, zp);
            match (k, c < 0) {
                (0, false) => write!(f, "{m}")?,
                (0, true) => write!(f, "−{m}")?,
                (_, false) => write!(f, " + {m}")?,
                (_, true) => write!(f, " − {m}")?,
            }
        }
        Ok(())
    }
}

/// Names with a stored polynomial. Mirrors carry a trailing `*`.
pub const KNOWN_KNOTS: [&str; 16] = [
    "unknot", "3_1", "3_1*", "4_1", "4_1*", "5_1", "5_1*", "5_2", "5_2*", "6_1", "6_1*", "8_19", "8_19*", "10_124",
    "10_124*", "square",
];

fn base_table(name: &str) -> Option<HomflyPolynomial> {
    // (z exponent, a exponent, coefficient)
    let m: &[(u32, i32, i64)] = match name {
        "unknot" => &[(0, 0, 1)],
        "3_1" => &[(0, 2, 2), (0, 4, -1), (2, 2, 1)],
        "4_1" => &[(0, -2, 1), (0, 0, -1), (0, 2, 1), (2, 0, -1)],
        "5_1" => &[(0, 4, 3), (0, 6, -2), (2, 4, 4), (2, 6, -1), (4, 4, 1)],
        "5_2" => &[(0, 2, 1), (0, 4, 1), (0, 6, -1), (2, 2, 1), (2, 4, 1)],
        "6_1" => &[(0, -2, 1), (0, 2, -1), (0, 4, 1), (2, 0, -1), (2, 2, -1)],
        "8_19" => &[(0, 6, 5), (0, 8, -5), (0, 10, 1), (2, 6, 10), (2, 8, -5), (4, 6, 6), (4, 8, -1), (6, 6, 1)],
        "10_124" => &[
            (0, 8, 7),
            (0, 10, -8),
            (0, 12, 2),
            (2, 8, 21),
            (2, 10, -14),
            (2, 12, 1),
            (4, 8, 21),
            (4, 10, -7),
            (6, 8, 8),
            (6, 10, -1),
            (8, 8, 1),
        ],
        "square" => &[(0, -2, -2), (0, 0, 5), (0, 2, -2), (2, -2, -1), (2, 0, 4), (2, 2, -1), (4, 0, 1)],
        _ => return None,
    };
    Some(HomflyPolynomial::from_monomials(m))
}

/// Stored polynomial by knot name. `3_1#3_1*` is accepted for `square`.
pub fn homfly_table(name: &str) -> Result<HomflyPolynomial> {
    let name = name.trim();
    let name = if name == "3_1#3_1*" { "square" } else { name };
    if let Some(p) = base_table(name) {
        return Ok(p);
    }
    if let Some(base) = name.strip_suffix('*') {
        if let Some(p) = base_table(base) {
            return Ok(p.mirror());
        }
    }
    Err(Error::UnknownKnot(name.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `c_{0,d} ≠ 0`; carries the monomial, e.g. `2a²`.
    Consistent {
        coefficient: i64,
        monomial: String,
    },
    NotPredicted,
    /// The double points could not be resolved into a signed count.
    Indeterminate,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Consistent { monomial, .. } => write!(f, "CONSISTENT ({monomial})"),
            Verdict::NotPredicted => write!(f, "NOT PREDICTED"),
            Verdict::Indeterminate => write!(f, "INDETERMINATE"),
        }
    }
}

/// Whether a disc with self-intersection number `d` is predicted by `p`.
/// `None` stands for an unresolved count.
pub fn consistency_check(d: Option<i32>, p: &HomflyPolynomial) -> Verdict {
    let Some(d) = d else { return Verdict::Indeterminate };
    match p.coeff(0, d) {
        0 => Verdict::NotPredicted,
        c => Verdict::Consistent { coefficient: c, monomial: format_monomial(c, 2 * d, 0) },
    }
}

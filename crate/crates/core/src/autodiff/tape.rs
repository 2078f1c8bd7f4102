//! Reverse accumulation over a recorded computation whose nodes carry
//! [`Jet2`] payloads.
//!
//! Two handle types share one [`Tape`]: [`JetVar`] (a full jet) and [`SVar`]
//! (a plain scalar). Jet payloads may depend on parameters, so a scalar loss
//! built from jet Hessians differentiates correctly with respect to those
//! parameters. The tape is cleared and refilled per evaluation; buffers keep
//! their capacity.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use super::jet::Jet2;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
enum Node {
    Leaf,
    Param(u32),
    JAdd(u32, u32),
    JSub(u32, u32),
    JMul(u32, u32),
    JScale(u32, f64),
    JShift(u32),
    JUnary { a: u32, d1: f64, d2: f64, d3: f64 },
    JMulS(u32, u32),
    Lift(u32),
    Component(u32, u8),
    SAdd(u32, u32),
    SSub(u32, u32),
    SMul(u32, u32),
    SScale(u32, f64),
    SShift(u32),
    SUnary { a: u32, d1: f64 },
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    vals: Vec<[f64; 6]>,
    adj: Vec<[f64; 6]>,
    nonfinite: Option<(&'static str, usize)>,
}

impl Inner {
    #[inline]
    fn push(&mut self, node: Node, val: [f64; 6], op: &'static str) -> u32 {
        let idx = self.nodes.len();
        if self.nonfinite.is_none() && !val.iter().all(|v| v.is_finite()) {
            self.nonfinite = Some((op, idx));
        }
        self.nodes.push(node);
        self.vals.push(val);
        idx as u32
    }
}

/// A recording of one scalar computation.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Handle to a jet-valued node.
#[derive(Clone, Copy)]
pub struct JetVar<'t> {
    tape: &'t Tape,
    idx: u32,
}

/// Handle to a scalar-valued node. A recorded loss is an `SVar`.
#[derive(Clone, Copy)]
pub struct SVar<'t> {
    tape: &'t Tape,
    idx: u32,
}

#[inline]
fn scalar(v: f64) -> [f64; 6] {
    [v, 0.0, 0.0, 0.0, 0.0, 0.0]
}

#[derive(Clone, Copy)]
enum Unary {
    Exp,
    Ln,
    Sqrt,
    Recip,
    Tanh,
    Sin,
    Cos,
    Powi(i32),
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Exp => "exp",
            Unary::Ln => "ln",
            Unary::Sqrt => "sqrt",
            Unary::Recip => "recip",
            Unary::Tanh => "tanh",
            Unary::Sin => "sin",
            Unary::Cos => "cos",
            Unary::Powi(_) => "powi",
        }
    }

    /// `[f, f', f'', f''']` at `v`.
    fn derivs(self, v: f64) -> Result<[f64; 4]> {
        let bad = |op| Err(Error::Domain { op, value: v });
        if v.is_nan() {
            return bad(self.name());
        }
        Ok(match self {
            Unary::Exp => {
                let e = v.exp();
                [e, e, e, e]
            }
            Unary::Ln => {
                if v <= 0.0 {
                    return bad("ln");
                }
                let r = 1.0 / v;
                [v.ln(), r, -r * r, 2.0 * r * r * r]
            }
            Unary::Sqrt => {
                if v <= 0.0 {
                    return bad("sqrt");
                }
                let s = v.sqrt();
                let r = 1.0 / v;
                [s, 0.5 / s, -0.25 / s * r, 0.375 / s * r * r]
            }
            Unary::Recip => {
                if v == 0.0 {
                    return bad("recip");
                }
                let r = 1.0 / v;
                let r2 = r * r;
                [r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2]
            }
            Unary::Tanh => {
                let t = v.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
            Unary::Sin => {
                let (s, c) = v.sin_cos();
                [s, c, -s, -c]
            }
            Unary::Cos => {
                let (s, c) = v.sin_cos();
                [c, -s, -c, s]
            }
            Unary::Powi(n) => {
                if n < 0 && v == 0.0 {
                    return bad("powi");
                }
                let nf = n as f64;
                let p = |k: i32| if k == 0 { 1.0 } else { v.powi(k) };
                let f1 = if n == 0 { 0.0 } else { nf * p(n - 1) };
                let f2 = if n == 0 || n == 1 { 0.0 } else { nf * (nf - 1.0) * p(n - 2) };
                let f3 = if (0..=2).contains(&n) { 0.0 } else { nf * (nf - 1.0) * (nf - 2.0) * p(n - 3) };
                [p(n), f1, f2, f3]
            }
        })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all recorded nodes, keeping allocations.
    pub fn clear(&mut self) {
        let inner = self.inner.get_mut();
        inner.nodes.clear();
        inner.vals.clear();
        inner.nonfinite = None;
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Independent parameter `θ_index` with the given value.
    pub fn param(&self, index: usize, value: f64) -> SVar<'_> {
        let idx = self.inner.borrow_mut().push(Node::Param(index as u32), scalar(value), "param");
        SVar { tape: self, idx }
    }

    /// Scalar with no dependence on parameters.
    pub fn constant(&self, value: f64) -> SVar<'_> {
        let idx = self.inner.borrow_mut().push(Node::Leaf, scalar(value), "constant");
        SVar { tape: self, idx }
    }

    /// Jet leaf. Its adjoint is available after [`Tape::backward`] through
    /// [`Tape::adjoint`], which lets an externally differentiated producer
    /// (the network) be chained onto the recording.
    pub fn jet(&self, value: Jet2) -> JetVar<'_> {
        let idx = self.inner.borrow_mut().push(Node::Leaf, value.to_array(), "jet leaf");
        JetVar { tape: self, idx }
    }

    /// First non-finite intermediate, if any.
    pub fn check(&self) -> Result<()> {
        match self.inner.borrow().nonfinite {
            Some((op, node)) => Err(Error::NonFinite { op, node }),
            None => Ok(()),
        }
    }

    /// `∂loss/∂θ` for parameters `0..n_params`.
    pub fn gradient(&self, loss: SVar<'_>, n_params: usize) -> Result<Vec<f64>> {
        let mut g = vec![0.0; n_params];
        self.backward(loss, 1.0, &mut g)?;
        Ok(g)
    }

    /// Reverse sweep seeded with `seed · ∂loss`; parameter adjoints are added
    /// into `grad`. The recording stays intact and may be swept again.
    pub fn backward(&self, loss: SVar<'_>, seed: f64, grad: &mut [f64]) -> Result<()> {
        self.check()?;
        let v = loss.value();
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "loss", node: loss.idx as usize });
        }
        let mut guard = self.inner.borrow_mut();
        let inner = &mut *guard;
        let n = loss.idx as usize + 1;
        inner.adj.clear();
        inner.adj.resize(inner.nodes.len(), [0.0; 6]);
        inner.adj[loss.idx as usize][0] = seed;
        let vals = &inner.vals;
        let adj = &mut inner.adj;
        for i in (0..n).rev() {
            let g = adj[i];
            if g == [0.0; 6] {
                continue;
            }
            match inner.nodes[i] {
                Node::Leaf => {}
                Node::Param(p) => {
                    if let Some(slot) = grad.get_mut(p as usize) {
                        *slot += g[0];
                    }
                }
                Node::JAdd(a, b) => {
                    for k in 0..6 {
                        adj[a as usize][k] += g[k];
                        adj[b as usize][k] += g[k];
                    }
                }
                Node::JSub(a, b) => {
                    for k in 0..6 {
                        adj[a as usize][k] += g[k];
                        adj[b as usize][k] -= g[k];
                    }
                }
                Node::JScale(a, c) => {
                    for k in 0..6 {
                        adj[a as usize][k] += c * g[k];
                    }
                }
                Node::JShift(a) => {
                    for k in 0..6 {
                        adj[a as usize][k] += g[k];
                    }
                }
                Node::JMul(a, b) => {
                    let (av, bv) = (vals[a as usize], vals[b as usize]);
                    let da = mul_pullback(&g, &bv);
                    let db = mul_pullback(&g, &av);
                    for k in 0..6 {
                        adj[a as usize][k] += da[k];
                        adj[b as usize][k] += db[k];
                    }
                }
                Node::JUnary { a, d1, d2, d3 } => {
                    let x = vals[a as usize];
                    let t = &mut adj[a as usize];
                    t[0] += g[0] * d1
                        + d2 * (g[1] * x[1] + g[2] * x[2] + g[3] * x[3] + g[4] * x[4] + g[5] * x[5])
                        + d3 * (g[3] * x[1] * x[1] + g[4] * x[1] * x[2] + g[5] * x[2] * x[2]);
                    t[1] += d1 * g[1] + d2 * (2.0 * g[3] * x[1] + g[4] * x[2]);
                    t[2] += d1 * g[2] + d2 * (g[4] * x[1] + 2.0 * g[5] * x[2]);
                    t[3] += d1 * g[3];
                    t[4] += d1 * g[4];
                    t[5] += d1 * g[5];
                }
                Node::JMulS(j, s) => {
                    let (jv, sv) = (vals[j as usize], vals[s as usize][0]);
                    let mut ds = 0.0;
                    for k in 0..6 {
                        adj[j as usize][k] += g[k] * sv;
                        ds += g[k] * jv[k];
                    }
                    adj[s as usize][0] += ds;
                }
                Node::Lift(s) => adj[s as usize][0] += g[0],
                Node::Component(a, k) => adj[a as usize][k as usize] += g[0],
                Node::SAdd(a, b) => {
                    adj[a as usize][0] += g[0];
                    adj[b as usize][0] += g[0];
                }
                Node::SSub(a, b) => {
                    adj[a as usize][0] += g[0];
                    adj[b as usize][0] -= g[0];
                }
                Node::SMul(a, b) => {
                    let (av, bv) = (vals[a as usize][0], vals[b as usize][0]);
                    adj[a as usize][0] += g[0] * bv;
                    adj[b as usize][0] += g[0] * av;
                }
                Node::SScale(a, c) => adj[a as usize][0] += c * g[0],
                Node::SShift(a) => adj[a as usize][0] += g[0],
                Node::SUnary { a, d1 } => adj[a as usize][0] += d1 * g[0],
            }
        }
        Ok(())
    }

    /// Adjoint of a jet node from the last [`Tape::backward`].
    pub fn adjoint(&self, v: JetVar<'_>) -> [f64; 6] {
        self.inner.borrow().adj.get(v.idx as usize).copied().unwrap_or([0.0; 6])
    }

    fn push(&self, node: Node, val: [f64; 6], op: &'static str) -> u32 {
        self.inner.borrow_mut().push(node, val, op)
    }

    fn val(&self, idx: u32) -> [f64; 6] {
        self.inner.borrow().vals[idx as usize]
    }
}

/// Pullback of the jet product with respect to one factor, given the other.
#[inline]
fn mul_pullback(g: &[f64; 6], o: &[f64; 6]) -> [f64; 6] {
    [
        g[0] * o[0] + g[1] * o[1] + g[2] * o[2] + g[3] * o[3] + g[4] * o[4] + g[5] * o[5],
        g[1] * o[0] + 2.0 * g[3] * o[1] + g[4] * o[2],
        g[2] * o[0] + g[4] * o[1] + 2.0 * g[5] * o[2],
        g[3] * o[0],
        g[4] * o[0],
        g[5] * o[0],
    ]
}

impl<'t> JetVar<'t> {
    pub fn value(&self) -> Jet2 {
        Jet2::from_array(self.tape.val(self.idx))
    }

    fn wrap(&self, idx: u32) -> Self {
        Self { tape: self.tape, idx }
    }

    /// Component `k` of `[value, ∂x, ∂y, ∂xx, ∂xy, ∂yy]` as a scalar.
    pub fn component(&self, k: usize) -> SVar<'t> {
        assert!(k < 6, "jet component index {k} out of range");
        let v = self.tape.val(self.idx)[k];
        let idx = self.tape.push(Node::Component(self.idx, k as u8), scalar(v), "component");
        SVar { tape: self.tape, idx }
    }

    /// All six components as scalars.
    pub fn parts(&self) -> [SVar<'t>; 6] {
        std::array::from_fn(|k| self.component(k))
    }

    fn unary(&self, op: Unary) -> Result<Self> {
        let x = self.value();
        let [f0, d1, d2, d3] = op.derivs(x.value)?;
        let out = x.chain(f0, d1, d2);
        Ok(self.wrap(self.tape.push(Node::JUnary { a: self.idx, d1, d2, d3 }, out.to_array(), op.name())))
    }

    pub fn exp(&self) -> Self {
        self.unary(Unary::Exp).expect("exp has no domain restriction")
    }

    pub fn tanh(&self) -> Self {
        self.unary(Unary::Tanh).expect("tanh has no domain restriction")
    }

    pub fn sin(&self) -> Self {
        self.unary(Unary::Sin).expect("sin has no domain restriction")
    }

    pub fn cos(&self) -> Self {
        self.unary(Unary::Cos).expect("cos has no domain restriction")
    }

    pub fn ln(&self) -> Result<Self> {
        self.unary(Unary::Ln)
    }

    pub fn sqrt(&self) -> Result<Self> {
        self.unary(Unary::Sqrt)
    }

    pub fn recip(&self) -> Result<Self> {
        self.unary(Unary::Recip)
    }

    pub fn powi(&self, n: i32) -> Result<Self> {
        self.unary(Unary::Powi(n))
    }

    pub fn try_div(&self, rhs: JetVar<'t>) -> Result<Self> {
        Ok(*self * rhs.recip()?)
    }

    /// Product with a scalar node (the scalar is constant over the disc).
    pub fn mul_scalar(&self, s: SVar<'t>) -> Self {
        let jv = self.tape.val(self.idx);
        let sv = self.tape.val(s.idx)[0];
        let out = jv.map(|v| v * sv);
        self.wrap(self.tape.push(Node::JMulS(self.idx, s.idx), out, "mul"))
    }
}

impl<'t> SVar<'t> {
    pub fn value(&self) -> f64 {
        self.tape.val(self.idx)[0]
    }

    fn wrap(&self, idx: u32) -> Self {
        Self { tape: self.tape, idx }
    }

    /// Constant jet with this value and zero derivatives.
    pub fn lift(&self) -> JetVar<'t> {
        let idx = self.tape.push(Node::Lift(self.idx), scalar(self.value()), "lift");
        JetVar { tape: self.tape, idx }
    }

    fn unary(&self, op: Unary) -> Result<Self> {
        let [f0, d1, ..] = op.derivs(self.value())?;
        Ok(self.wrap(self.tape.push(Node::SUnary { a: self.idx, d1 }, scalar(f0), op.name())))
    }

    pub fn exp(&self) -> Self {
        self.unary(Unary::Exp).expect("exp has no domain restriction")
    }

    pub fn tanh(&self) -> Self {
        self.unary(Unary::Tanh).expect("tanh has no domain restriction")
    }

    pub fn sin(&self) -> Self {
        self.unary(Unary::Sin).expect("sin has no domain restriction")
    }

    pub fn cos(&self) -> Self {
        self.unary(Unary::Cos).expect("cos has no domain restriction")
    }

    pub fn ln(&self) -> Result<Self> {
        self.unary(Unary::Ln)
    }

    pub fn sqrt(&self) -> Result<Self> {
        self.unary(Unary::Sqrt)
    }

    pub fn recip(&self) -> Result<Self> {
        self.unary(Unary::Recip)
    }

    pub fn powi(&self, n: i32) -> Result<Self> {
        self.unary(Unary::Powi(n))
    }

    pub fn try_div(&self, rhs: SVar<'t>) -> Result<Self> {
        Ok(*self * rhs.recip()?)
    }
}

macro_rules! binary {
    ($ty:ident, $tr:ident, $m:ident, $node:ident, $name:literal, |$a:ident, $b:ident| $body:expr) => {
        impl<'t> $tr for $ty<'t> {
            type Output = $ty<'t>;
            #[inline]
            fn $m(self, rhs: $ty<'t>) -> $ty<'t> {
                let ($a, $b) = (self.tape.val(self.idx), self.tape.val(rhs.idx));
                let out: [f64; 6] = $body;
                self.wrap(self.tape.push(Node::$node(self.idx, rhs.idx), out, $name))
            }
        }
    };
}

binary!(JetVar, Add, add, JAdd, "add", |a, b| std::array::from_fn(|k| a[k] + b[k]));
binary!(JetVar, Sub, sub, JSub, "sub", |a, b| std::array::from_fn(|k| a[k] - b[k]));
binary!(JetVar, Mul, mul, JMul, "mul", |a, b| (Jet2::from_array(a) * Jet2::from_array(b)).to_array());
binary!(SVar, Add, add, SAdd, "add", |a, b| scalar(a[0] + b[0]));
binary!(SVar, Sub, sub, SSub, "sub", |a, b| scalar(a[0] - b[0]));
binary!(SVar, Mul, mul, SMul, "mul", |a, b| scalar(a[0] * b[0]));

macro_rules! with_f64 {
    ($ty:ident, $scale:ident, $shift:ident) => {
        impl<'t> Mul<f64> for $ty<'t> {
            type Output = $ty<'t>;
            fn mul(self, c: f64) -> $ty<'t> {
                let out = self.tape.val(self.idx).map(|v| v * c);
                self.wrap(self.tape.push(Node::$scale(self.idx, c), out, "scale"))
            }
        }

        impl<'t> Mul<$ty<'t>> for f64 {
            type Output = $ty<'t>;
            fn mul(self, v: $ty<'t>) -> $ty<'t> {
                v * self
            }
        }

        impl<'t> Add<f64> for $ty<'t> {
            type Output = $ty<'t>;
            fn add(self, c: f64) -> $ty<'t> {
                let mut out = self.tape.val(self.idx);
                out[0] += c;
                self.wrap(self.tape.push(Node::$shift(self.idx), out, "shift"))
            }
        }

        impl<'t> Add<$ty<'t>> for f64 {
            type Output = $ty<'t>;
            fn add(self, v: $ty<'t>) -> $ty<'t> {
                v + self
            }
        }

        impl<'t> Sub<f64> for $ty<'t> {
            type Output = $ty<'t>;
            fn sub(self, c: f64) -> $ty<'t> {
                self + (-c)
            }
        }

        impl<'t> Sub<$ty<'t>> for f64 {
            type Output = $ty<'t>;
            fn sub(self, v: $ty<'t>) -> $ty<'t> {
                -v + self
            }
        }

        impl<'t> Neg for $ty<'t> {
            type Output = $ty<'t>;
            fn neg(self) -> $ty<'t> {
                self * -1.0
            }
        }
    };
}

with_f64!(JetVar, JScale, JShift);
with_f64!(SVar, SScale, SShift);

/// Arithmetic shared by plain `f64` and recorded [`SVar`], so one routine
/// serves both the value path and the gradient path.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(&self) -> f64;
    fn recip(&self) -> Result<Self>;
    /// A constant of the same kind.
    fn constant(&self, c: f64) -> Self;
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }

    fn recip(&self) -> Result<Self> {
        if *self == 0.0 || self.is_nan() {
            return Err(Error::Domain { op: "recip", value: *self });
        }
        Ok(1.0 / *self)
    }

    fn constant(&self, c: f64) -> Self {
        c
    }
}

impl<'t> Scalar for SVar<'t> {
    fn value(&self) -> f64 {
        SVar::value(self)
    }

    fn recip(&self) -> Result<Self> {
        SVar::recip(self)
    }

    fn constant(&self, c: f64) -> Self {
        self.tape.constant(c)
    }
}

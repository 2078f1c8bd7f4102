//! The multilayer perceptron `R² → R^{n+1}` evaluated on second-order jets,
//! with a hand-written reverse sweep over its parameters.
//!
//! Parameters are stored flat, layer by layer: the weight matrix
//! `W_ℓ` (`d_{ℓ+1} × d_ℓ`, row-major) followed by the bias `b_ℓ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Jet2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    /// `[σ, σ', σ'', σ''']` at `z`.
    #[inline]
    pub fn derivs(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                let s1 = s * (1.0 - s);
                let s2 = s1 * (1.0 - 2.0 * s);
                let s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s);
                [z * s, s + z * s1, 2.0 * s1 + z * s2, 3.0 * s2 + z * s3]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

/// Offsets of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub d_in: usize,
    pub d_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl MlpArchitecture {
    pub fn new(output_dim: usize, hidden_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let arch = Self { input_dim: 2, output_dim, hidden_widths, activation };
        arch.validate()?;
        Ok(arch)
    }

    /// `hidden` layers of equal `width`.
    pub fn uniform(output_dim: usize, width: usize, hidden: usize, activation: Activation) -> Result<Self> {
        Self::new(output_dim, vec![width; hidden], activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != 2 {
            return Err(Error::InvalidArchitecture(format!("input_dim must be 2, got {}", self.input_dim)));
        }
        if self.output_dim < 3 {
            return Err(Error::InvalidArchitecture(format!("output_dim must be at least 3, got {}", self.output_dim)));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::InvalidArchitecture("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// `(d_0, …, d_L)`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_widths.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden_widths);
        d.push(self.output_dim);
        d
    }

    pub fn layout(&self) -> Vec<LayerLayout> {
        let dims = self.dims();
        let mut off = 0;
        dims.windows(2)
            .map(|w| {
                let (d_in, d_out) = (w[0], w[1]);
                let l = LayerLayout { d_in, d_out, weight_offset: off, bias_offset: off + d_in * d_out };
                off += d_in * d_out + d_out;
                l
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    pub fn widest(&self) -> usize {
        self.dims().into_iter().max().unwrap_or(0)
    }
}

/// `Σ_ℓ (d_ℓ·d_{ℓ+1} + d_{ℓ+1})`.
pub fn param_count(arch: &MlpArchitecture) -> usize {
    arch.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Zero,
    GlorotZeroHead,
}

/// Flat parameter vector θ.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

/// One layer's parameters in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_out × d_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn unpack(&self, arch: &MlpArchitecture) -> Result<Vec<LayerParams>> {
        check_len(arch, &self.0)?;
        Ok(arch
            .layout()
            .into_iter()
            .map(|l| LayerParams {
                d_in: l.d_in,
                d_out: l.d_out,
                weights: self.0[l.weight_offset..l.bias_offset].to_vec(),
                bias: self.0[l.bias_offset..l.bias_offset + l.d_out].to_vec(),
            })
            .collect())
    }

    pub fn pack(layers: &[LayerParams]) -> Self {
        let mut v = Vec::new();
        for l in layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        Self(v)
    }
}

fn check_len(arch: &MlpArchitecture, params: &[f64]) -> Result<()> {
    let expected = arch.param_count();
    if params.len() != expected {
        return Err(Error::ParamLength { expected, got: params.len() });
    }
    Ok(())
}

pub fn init_params(arch: &MlpArchitecture, scheme: InitScheme, seed: u64) -> ParameterVector {
    let mut v = vec![0.0; arch.param_count()];
    if scheme == InitScheme::GlorotZeroHead {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = arch.layout();
        for l in &layout[..layout.len() - 1] {
            let a = (6.0 / (l.d_in + l.d_out) as f64).sqrt();
            for w in &mut v[l.weight_offset..l.bias_offset] {
                *w = rng.random_range(-a..a);
            }
        }
    }
    ParameterVector(v)
}

/// Activations of a batch of points kept for the reverse sweep.
///
/// Each layer is a row-major `d × 6P` matrix: entry `(i, c·P + p)` is jet
/// component `c` of unit `i` at point `p`.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    points: usize,
    dims: Vec<usize>,
    /// Input of each layer.
    acts: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// `[σ', σ'', σ''']` per hidden unit and point.
    derivs: Vec<Vec<[f64; 3]>>,
    z_out: Vec<f64>,
    adj_a: Vec<f64>,
    adj_z: Vec<f64>,
}

impl MlpCache {
    pub fn new(arch: &MlpArchitecture) -> Self {
        let mut c = Self::default();
        c.resize(arch, 1);
        c
    }

    fn resize(&mut self, arch: &MlpArchitecture, points: usize) {
        let dims = arch.dims();
        if self.points == points && self.dims == dims {
            return;
        }
        let n_layers = dims.len() - 1;
        let w = 6 * points;
        self.acts = dims[..n_layers].iter().map(|&d| vec![0.0; d * w]).collect();
        self.pre = dims[1..n_layers].iter().map(|&d| vec![0.0; d * w]).collect();
        self.derivs = dims[1..n_layers].iter().map(|&d| vec![[0.0; 3]; d * points]).collect();
        self.z_out = vec![0.0; arch.output_dim * w];
        self.adj_a = vec![0.0; arch.widest() * w];
        self.adj_z = vec![0.0; arch.widest() * w];
        self.points = points;
        self.dims = dims;
    }

    pub fn points(&self) -> usize {
        self.points
    }
}

/// `C (m×n) = alpha·A (m×k) · B (k×n) + beta·C` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the asserts above keep every index the kernel touches in bounds,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Jets of all outputs for a batch of points whose coordinates carry the
/// jets `inputs[p] = (x, y)`. `out[p * d_out + k]` receives output `k` at
/// point `p`; activations are recorded in `cache`.
pub fn forward_batch(
    arch: &MlpArchitecture,
    params: &[f64],
    inputs: &[(Jet2, Jet2)],
    cache: &mut MlpCache,
    out: &mut [Jet2],
) -> Result<()> {
    check_len(arch, params)?;
    let np = inputs.len();
    let d_last = arch.output_dim;
    if out.len() < np * d_last {
        return Err(Error::InvalidArchitecture(format!(
            "output buffer holds {} jets, need {}",
            out.len(),
            np * d_last
        )));
    }
    if np == 0 {
        return Ok(());
    }
    cache.resize(arch, np);
    let w = 6 * np;
    let layout = arch.layout();
    let last = layout.len() - 1;
    for (p, (x, y)) in inputs.iter().enumerate() {
        let (xa, ya) = (x.to_array(), y.to_array());
        for c in 0..6 {
            cache.acts[0][c * np + p] = xa[c];
            cache.acts[0][w + c * np + p] = ya[c];
        }
    }
    for (ell, l) in layout.iter().enumerate() {
        let wts = &params[l.weight_offset..l.bias_offset];
        let bias = &params[l.bias_offset..l.bias_offset + l.d_out];
        let z: &mut Vec<f64> = if ell == last { &mut cache.z_out } else { &mut cache.pre[ell] };
        gemm(l.d_out, l.d_in, w, wts, (l.d_in, 1), &cache.acts[ell], (w, 1), 0.0, z, w);
        for (i, b) in bias.iter().enumerate() {
            for v in &mut z[i * w..i * w + np] {
                *v += b;
            }
        }
        if ell == last {
            break;
        }
        let z = &cache.pre[ell];
        let a = &mut cache.acts[ell + 1];
        let der = &mut cache.derivs[ell];
        for i in 0..l.d_out {
            let row = i * w;
            for p in 0..np {
                let zc: [f64; 6] = std::array::from_fn(|c| z[row + c * np + p]);
                let [s0, s1, s2, s3] = arch.activation.derivs(zc[0]);
                der[i * np + p] = [s1, s2, s3];
                a[row + p] = s0;
                a[row + np + p] = s1 * zc[1];
                a[row + 2 * np + p] = s1 * zc[2];
                a[row + 3 * np + p] = s1 * zc[3] + s2 * zc[1] * zc[1];
                a[row + 4 * np + p] = s1 * zc[4] + s2 * zc[1] * zc[2];
                a[row + 5 * np + p] = s1 * zc[5] + s2 * zc[2] * zc[2];
            }
        }
    }
    for p in 0..np {
        for k in 0..d_last {
            let j = Jet2::from_array(std::array::from_fn(|c| cache.z_out[k * w + c * np + p]));
            if !j.is_finite() {
                return Err(Error::NonFinite { op: "mlp output", node: k });
            }
            out[p * d_last + k] = j;
        }
    }
    Ok(())
}

/// Reverse sweep for the batch recorded by the last [`forward_batch`]:
/// `out_adj[p * d_out + k]` is the adjoint of output `k` at point `p`.
/// Adds `scale · ∂/∂θ` into `grad`.
pub fn backward_batch(
    arch: &MlpArchitecture,
    params: &[f64],
    cache: &mut MlpCache,
    out_adj: &[[f64; 6]],
    scale: f64,
    grad: &mut [f64],
) {
    let np = cache.points;
    let w = 6 * np;
    let layout = arch.layout();
    let d_last = arch.output_dim;
    let MlpCache { acts, pre, derivs, adj_a, adj_z, .. } = cache;
    for p in 0..np {
        for k in 0..d_last {
            for c in 0..6 {
                adj_z[k * w + c * np + p] = scale * out_adj[p * d_last + k][c];
            }
        }
    }
    for (ell, l) in layout.iter().enumerate().rev() {
        let (d_in, d_out) = (l.d_in, l.d_out);
        let (gw, gb) = grad[l.weight_offset..l.bias_offset + d_out].split_at_mut(d_in * d_out);
        // W̄ += Z̄ · Aᵀ
        gemm(d_out, w, d_in, adj_z, (w, 1), &acts[ell], (1, w), 1.0, gw, d_in);
        for (i, b) in gb.iter_mut().enumerate() {
            let mut s = 0.0;
            for v in &adj_z[i * w..i * w + np] {
                s += v;
            }
            *b += s;
        }
        if ell == 0 {
            break;
        }
        // Ā = Wᵀ · Z̄
        let wts = &params[l.weight_offset..l.bias_offset];
        gemm(d_in, d_out, w, wts, (1, d_in), adj_z, (w, 1), 0.0, adj_a, w);
        let z = &pre[ell - 1];
        let der = &derivs[ell - 1];
        for i in 0..d_in {
            let row = i * w;
            for p in 0..np {
                let [s1, s2, s3] = der[i * np + p];
                let g: [f64; 6] = std::array::from_fn(|c| adj_a[row + c * np + p]);
                let x: [f64; 6] = std::array::from_fn(|c| z[row + c * np + p]);
                adj_z[row + p] = g[0] * s1
                    + s2 * (g[1] * x[1] + g[2] * x[2] + g[3] * x[3] + g[4] * x[4] + g[5] * x[5])
                    + s3 * (g[3] * x[1] * x[1] + g[4] * x[1] * x[2] + g[5] * x[2] * x[2]);
                adj_z[row + np + p] = s1 * g[1] + s2 * (2.0 * g[3] * x[1] + g[4] * x[2]);
                adj_z[row + 2 * np + p] = s1 * g[2] + s2 * (g[4] * x[1] + 2.0 * g[5] * x[2]);
                adj_z[row + 3 * np + p] = s1 * g[3];
                adj_z[row + 4 * np + p] = s1 * g[4];
                adj_z[row + 5 * np + p] = s1 * g[5];
            }
        }
    }
}

/// Single-point [`forward_batch`].
pub fn forward_cached(
    arch: &MlpArchitecture,
    params: &[f64],
    x: Jet2,
    y: Jet2,
    cache: &mut MlpCache,
    out: &mut [Jet2],
) -> Result<()> {
    forward_batch(arch, params, &[(x, y)], cache, out)
}

/// Output jets of the network. Component 0 is `NNˣ`, the rest `NNʸ`.
pub fn forward(arch: &MlpArchitecture, params: &[f64], x: Jet2, y: Jet2) -> Result<Vec<Jet2>> {
    let mut cache = MlpCache::new(arch);
    let mut out = vec![Jet2::ZERO; arch.output_dim];
    forward_cached(arch, params, x, y, &mut cache, &mut out)?;
    Ok(out)
}

/// Single-point [`backward_batch`].
pub fn backward(
    arch: &MlpArchitecture,
    params: &[f64],
    cache: &mut MlpCache,
    out_adj: &[[f64; 6]],
    scale: f64,
    grad: &mut [f64],
) {
    backward_batch(arch, params, cache, out_adj, scale, grad)
}

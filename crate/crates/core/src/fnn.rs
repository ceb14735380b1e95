//! Fully-connected ReLU network `phi(x) = a^T h_{L-1}(...h_1(x))`,
//! `h_l(y) = relu(W_l y + b_l)`, with constant width `M`.
//!
//! All parameters live in one flat vector in the order
//! `W_1 (row-major, M x d), b_1, W_2 (M x M), b_2, ..., W_{L-1}, b_{L-1}, a`.
//! Gradients use the same layout, so optimizers work on plain slices.
//!
//! Two evaluation paths exist. [`Network::forward`] and
//! [`Network::forward_with_grad`] handle one point with plain loops and are
//! the reference. [`Network::forward_batch`] and
//! [`Network::accumulate_weighted_grad`] push many points through GEMM
//! kernels and compute `sum_p w_p grad phi(x_p)` in a single reverse pass.

use std::io::{self, Read, Write};
use std::ops::{Deref, DerefMut, Range};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Depth `L`: the network has `L - 1` hidden layers.
    pub depth: usize,
    /// Width `M` of every hidden layer.
    pub width: usize,
    /// Input dimension `d`.
    pub input_dim: usize,
}

impl Architecture {
    pub fn new(depth: usize, width: usize, input_dim: usize) -> Result<Self> {
        let arch = Architecture {
            depth,
            width,
            input_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(param(format!("depth must be at least 2, got {}", self.depth)));
        }
        if self.width == 0 || self.input_dim == 0 {
            return Err(param("width and input dimension must be positive"));
        }
        Ok(())
    }

    /// `(L - 2) M^2 + (L + d) M`.
    pub fn param_count(&self) -> usize {
        let (l, m, d) = (self.depth, self.width, self.input_dim);
        (l - 2) * m * m + (l + d) * m
    }

    pub fn hidden_layers(&self) -> usize {
        self.depth - 1
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.width
        }
    }

    /// Location of the weights and bias of hidden layer `layer` (0-based).
    fn slot(&self, layer: usize) -> (Range<usize>, Range<usize>) {
        let m = self.width;
        let start = if layer == 0 {
            0
        } else {
            m * self.input_dim + m + (layer - 1) * (m * m + m)
        };
        let w_len = m * self.layer_input(layer);
        (start..start + w_len, start + w_len..start + w_len + m)
    }

    fn output_slot(&self) -> Range<usize> {
        let end = self.param_count();
        end - self.width..end
    }
}

/// Initialization range for all parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScale {
    /// `U(-sqrt(M), sqrt(M))`. Blows up quickly for depth >= 3.
    PaperLiteral,
    /// `U(-1/sqrt(M), 1/sqrt(M))`.
    #[default]
    InverseSqrt,
}

impl InitScale {
    pub fn radius(self, width: usize) -> f64 {
        let s = (width as f64).sqrt();
        match self {
            InitScale::PaperLiteral => s,
            InitScale::InverseSqrt => 1.0 / s,
        }
    }
}

/// Gradient of a scalar with respect to every network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Gradient(vec![0.0; len])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

impl Deref for Gradient {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Gradient {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Network parameters together with the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<f64>,
}

impl Network {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Network {
            arch,
            params: vec![0.0; arch.param_count()],
        })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(param(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(param("parameters must be finite"));
        }
        Ok(Network { arch, params })
    }

    /// Draws every parameter independently from `U(-r, r)` with `r` given
    /// by `scale`. Deterministic in `seed`.
    pub fn init(arch: Architecture, scale: InitScale, seed: u64) -> Result<Self> {
        arch.validate()?;
        let r = scale.radius(arch.width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..arch.param_count())
            .map(|_| rng.gen_range(-r..=r))
            .collect();
        Ok(Network { arch, params })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.params[self.arch.slot(layer).0]
    }

    pub fn layer_weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.arch.slot(layer).0;
        &mut self.params[r]
    }

    pub fn layer_bias(&self, layer: usize) -> &[f64] {
        &self.params[self.arch.slot(layer).1]
    }

    pub fn layer_bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.arch.slot(layer).1;
        &mut self.params[r]
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.params[self.arch.output_slot()]
    }

    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        let r = self.arch.output_slot();
        &mut self.params[r]
    }

    /// Hidden activations `h_0 = x, h_1, ..., h_{L-1}`.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let m = self.arch.width;
        let mut acts = Vec::with_capacity(self.arch.depth);
        acts.push(x.to_vec());
        for layer in 0..self.arch.hidden_layers() {
            let input = &acts[layer];
            let k = input.len();
            let w = self.layer_weights(layer);
            let b = self.layer_bias(layer);
            let out: Vec<f64> = (0..m)
                .map(|i| {
                    let row = &w[i * k..(i + 1) * k];
                    let z = row.iter().zip(input).fold(b[i], |acc, (wij, xj)| acc + wij * xj);
                    relu(z)
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    /// Smallest `|W_l h_{l-1} + b_l|` over all hidden units at `x`: how far
    /// the point is from a ReLU kink.
    pub fn kink_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let acts = self.trace(x);
        let mut margin = f64::INFINITY;
        for layer in 0..self.arch.hidden_layers() {
            let input = &acts[layer];
            let k = input.len();
            let w = self.layer_weights(layer);
            let b = self.layer_bias(layer);
            for (i, bi) in b.iter().enumerate() {
                let z = w[i * k..(i + 1) * k]
                    .iter()
                    .zip(input)
                    .fold(*bi, |acc, (wij, xj)| acc + wij * xj);
                margin = margin.min(z.abs());
            }
        }
        Ok(margin)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(param(format!(
                "point has dimension {}, network expects {}",
                x.len(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    fn output(&self, last: &[f64]) -> Result<f64> {
        let v = self
            .output_weights()
            .iter()
            .zip(last)
            .fold(0.0, |acc, (a, h)| acc + a * h);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("network output is {v}")));
        }
        Ok(v)
    }

    /// `phi(x; theta)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let acts = self.trace(x);
        self.output(&acts[acts.len() - 1])
    }

    /// `phi(x; theta)` and its gradient with respect to every parameter.
    /// The ReLU derivative at 0 is taken as 0.
    pub fn forward_with_grad(&self, x: &[f64]) -> Result<(f64, Gradient)> {
        self.check_input(x)?;
        let acts = self.trace(x);
        let value = self.output(&acts[acts.len() - 1])?;
        let mut grad = Gradient::zeros(self.arch.param_count());

        let last = &acts[acts.len() - 1];
        grad[self.arch.output_slot()].copy_from_slice(last);
        let mut delta: Vec<f64> = self
            .output_weights()
            .iter()
            .zip(last)
            .map(|(a, h)| if *h > 0.0 { *a } else { 0.0 })
            .collect();

        for layer in (0..self.arch.hidden_layers()).rev() {
            let input = &acts[layer];
            let k = input.len();
            let (w_range, b_range) = self.arch.slot(layer);
            {
                let gw = &mut grad[w_range.clone()];
                for (i, di) in delta.iter().enumerate() {
                    for (g, xj) in gw[i * k..(i + 1) * k].iter_mut().zip(input) {
                        *g = di * xj;
                    }
                }
            }
            grad[b_range].copy_from_slice(&delta);
            if layer > 0 {
                let w = &self.params[w_range];
                let mut prev = vec![0.0; k];
                for (i, di) in delta.iter().enumerate() {
                    for (p, wij) in prev.iter_mut().zip(&w[i * k..(i + 1) * k]) {
                        *p += wij * di;
                    }
                }
                for (p, h) in prev.iter_mut().zip(input) {
                    if *h <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((value, grad))
    }

    /// `forward` applied to each point in order.
    pub fn batch_forward(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.iter().map(|x| self.forward(x)).collect()
    }

    /// Evaluates `phi` at `points.len() / d` points stored row-major, keeping
    /// the hidden activations in `ws` for a later
    /// [`accumulate_weighted_grad`](Self::accumulate_weighted_grad).
    pub fn forward_batch<'w>(&self, points: &[f64], ws: &'w mut BatchWorkspace) -> Result<&'w [f64]> {
        let d = self.arch.input_dim;
        if points.len() % d != 0 {
            return Err(param("point buffer length is not a multiple of the input dimension"));
        }
        let count = points.len() / d;
        let m = self.arch.width;
        ws.resize(self.arch, count);

        for layer in 0..self.arch.hidden_layers() {
            let k = self.arch.layer_input(layer);
            let (before, rest) = ws.acts.split_at_mut(layer);
            let out = &mut rest[0];
            let input: &[f64] = if layer == 0 { points } else { &before[layer - 1] };
            let b = self.layer_bias(layer);
            for row in out.chunks_exact_mut(m) {
                row.copy_from_slice(b);
            }
            if count > 0 {
                // out (count x m) += input (count x k) * W^T (k x m)
                unsafe {
                    matrixmultiply::dgemm(
                        count,
                        k,
                        m,
                        1.0,
                        input.as_ptr(),
                        k as isize,
                        1,
                        self.layer_weights(layer).as_ptr(),
                        1,
                        k as isize,
                        1.0,
                        out.as_mut_ptr(),
                        m as isize,
                        1,
                    );
                }
            }
            out.iter_mut().for_each(|z| *z = relu(*z));
        }

        let a = self.output_weights();
        let last = &ws.acts[self.arch.hidden_layers() - 1];
        for (v, h) in ws.values.iter_mut().zip(last.chunks_exact(m)) {
            *v = h.iter().zip(a).fold(0.0, |acc, (hi, ai)| acc + hi * ai);
        }
        if let Some(bad) = ws.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "network output is {} at batch point {bad}",
                ws.values[bad]
            )));
        }
        Ok(&ws.values)
    }

    /// Adds `sum_p weights[p] * grad phi(x_p)` to `grad`, where the points
    /// and activations are those of the preceding
    /// [`forward_batch`](Self::forward_batch) call on `ws`.
    pub fn accumulate_weighted_grad(
        &self,
        points: &[f64],
        weights: &[f64],
        ws: &mut BatchWorkspace,
        grad: &mut [f64],
    ) {
        let m = self.arch.width;
        let count = ws.values.len();
        assert_eq!(weights.len(), count, "one weight per evaluated point");
        assert_eq!(grad.len(), self.arch.param_count());
        if count == 0 {
            return;
        }
        let layers = self.arch.hidden_layers();
        let a = self.output_weights();

        {
            let last = &ws.acts[layers - 1];
            let ga = &mut grad[self.arch.output_slot()];
            for (h, w) in last.chunks_exact(m).zip(weights) {
                for (g, hi) in ga.iter_mut().zip(h) {
                    *g += w * hi;
                }
            }
            for ((delta, h), w) in ws.delta.chunks_exact_mut(m).zip(last.chunks_exact(m)).zip(weights) {
                for ((di, hi), ai) in delta.iter_mut().zip(h).zip(a) {
                    *di = if *hi > 0.0 { w * ai } else { 0.0 };
                }
            }
        }

        for layer in (0..layers).rev() {
            let k = self.arch.layer_input(layer);
            let input: &[f64] = if layer == 0 { points } else { &ws.acts[layer - 1] };
            let (w_range, b_range) = self.arch.slot(layer);
            // dW (m x k) += delta^T (m x count) * input (count x k)
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    count,
                    k,
                    1.0,
                    ws.delta.as_ptr(),
                    1,
                    m as isize,
                    input.as_ptr(),
                    k as isize,
                    1,
                    1.0,
                    grad[w_range.clone()].as_mut_ptr(),
                    k as isize,
                    1,
                );
            }
            let gb = &mut grad[b_range];
            for row in ws.delta.chunks_exact(m) {
                for (g, di) in gb.iter_mut().zip(row) {
                    *g += di;
                }
            }
            if layer > 0 {
                // prev (count x m) = delta (count x m) * W (m x m)
                unsafe {
                    matrixmultiply::dgemm(
                        count,
                        m,
                        m,
                        1.0,
                        ws.delta.as_ptr(),
                        m as isize,
                        1,
                        self.params[w_range].as_ptr(),
                        m as isize,
                        1,
                        0.0,
                        ws.scratch.as_mut_ptr(),
                        m as isize,
                        1,
                    );
                }
                for (p, h) in ws.scratch.iter_mut().zip(input) {
                    if *h <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.scratch);
            }
        }
    }

    /// Writes the checkpoint format documented in the README:
    /// magic `NLCKPT01`, then little-endian `u32` depth, width, input
    /// dimension, `u64` seed, `u64` parameter count, and the parameters as
    /// `f64` in layout order.
    pub fn write_checkpoint<W: Write>(&self, seed: u64, mut out: W) -> io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        for v in [self.arch.depth, self.arch.width, self.arch.input_dim] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        out.write_all(&seed.to_le_bytes())?;
        out.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        out.flush()
    }

    /// Reads a checkpoint written by [`write_checkpoint`](Self::write_checkpoint),
    /// returning the network and the seed stored in its header.
    pub fn read_checkpoint<R: Read>(mut input: R) -> io::Result<(Network, u64)> {
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a network checkpoint"));
        }
        let mut u32buf = [0u8; 4];
        let mut dims = [0usize; 3];
        for slot in &mut dims {
            input.read_exact(&mut u32buf)?;
            *slot = u32::from_le_bytes(u32buf) as usize;
        }
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        input.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        let arch = Architecture::new(dims[0], dims[1], dims[2]).map_err(|e| bad(&e.to_string()))?;
        if count != arch.param_count() {
            return Err(bad("parameter count does not match the header architecture"));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut u64buf)?;
            params.push(f64::from_le_bytes(u64buf));
        }
        let net = Network::from_params(arch, params).map_err(|e| bad(&e.to_string()))?;
        Ok((net, seed))
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"NLCKPT01";

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Scratch buffers for batched evaluation; reusable across calls.
#[derive(Debug, Default, Clone)]
pub struct BatchWorkspace {
    acts: Vec<Vec<f64>>,
    values: Vec<f64>,
    delta: Vec<f64>,
    scratch: Vec<f64>,
}

impl BatchWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn resize(&mut self, arch: Architecture, count: usize) {
        let len = count * arch.width;
        self.acts.resize_with(arch.hidden_layers(), Vec::new);
        for a in &mut self.acts {
            a.resize(len, 0.0);
        }
        self.values.resize(count, 0.0);
        self.delta.resize(len, 0.0);
        self.scratch.resize(len, 0.0);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

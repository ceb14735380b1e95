//! Residual losses, gradient assembly and the training loop.
//!
//! For a batch `S` of row indices the plain loss is
//! `L_S = |S|^{-1} sum_k (a_k^T Phi - b_k)^2` and its gradient is
//! `(2/|S|) sum_k (a_k^T Phi - b_k) * sum_j A_kj grad phi(x_j)`.
//!
//! [`batch_loss_and_grad_reference`] follows that formula literally: one
//! forward and backward pass per nonzero of every sampled row.
//! [`BatchAssembler`] computes the same quantity by collecting the distinct
//! grid points touched by the batch, evaluating the network on all of them
//! at once, folding the residuals into one weight per point and running a
//! single weighted backward pass. Both are exercised against each other and
//! against finite differences in the tests.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fnn::{Architecture, BatchWorkspace, Gradient, InitScale, Network};
use crate::grid::{sample_indices, GridSpec, MultiIndex, Shape};
use crate::operator::RowOracle;
use crate::problems::ProblemInstance;

/// Points per GEMM block. Fixed so results do not depend on thread count.
pub const CHUNK: usize = 4096;

/// Grids with at most this many points use a dense slot table.
const DENSE_SLOTS: usize = 1 << 22;

/// Which optimization problem is solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossSpec {
    /// `N^{-d} ||A Phi - b||^2`.
    Plain,
    /// Adds `(||Phi||_p - 1)^2 / epsilon`, with the norm estimated from the
    /// batch rows as `(N^d / |S| sum_k |phi(x_k)|^p)^{1/p}`.
    NormPenalty { p: f64, epsilon: f64 },
    /// Adds `(phi(x_index) - 1)^2 / epsilon`.
    PinComponent { index: MultiIndex, epsilon: f64 },
    /// Adds `(mean - 1)^2 / epsilon`, with the mean of `Phi` estimated on
    /// the batch rows.
    MeanPenalty { epsilon: f64 },
}

impl LossSpec {
    pub fn validate(&self, shape: Shape) -> Result<()> {
        let eps_ok = |e: f64| e > 0.0 && e.is_finite();
        match self {
            LossSpec::Plain => Ok(()),
            LossSpec::NormPenalty { p, epsilon } => {
                if !(*p >= 1.0 && p.is_finite()) || !eps_ok(*epsilon) {
                    return Err(param(format!("invalid norm penalty p={p}, epsilon={epsilon}")));
                }
                Ok(())
            }
            LossSpec::PinComponent { index, epsilon } => {
                if !eps_ok(*epsilon) {
                    return Err(param(format!("penalty epsilon must be positive, got {epsilon}")));
                }
                shape.check(index)
            }
            LossSpec::MeanPenalty { epsilon } => {
                if !eps_ok(*epsilon) {
                    return Err(param(format!("penalty epsilon must be positive, got {epsilon}")));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// `theta <- theta - tau g`.
    #[default]
    PlainSgd,
    /// Bias-corrected first and second moment scaling (Adam, beta = 0.9,
    /// 0.999, eps = 1e-8) with the same learning-rate schedule.
    AdaptiveMoment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_iters: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub eval_every: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub init_scale: InitScale,
    #[serde(default = "one")]
    pub threads: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10_000,
            max_iters: 50_000,
            lr_start: 1e-3,
            lr_end: 1e-5,
            seed: 0,
            eval_every: 1000,
            optimizer: OptimizerKind::PlainSgd,
            init_scale: InitScale::InverseSqrt,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(param("batch size must be at least 1"));
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start && self.lr_start.is_finite()) {
            return Err(param(format!(
                "learning rates must satisfy 0 < lr_end <= lr_start, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        if self.eval_every == 0 {
            return Err(param("eval_every must be at least 1"));
        }
        if self.threads == 0 {
            return Err(param("thread count must be at least 1"));
        }
        Ok(())
    }
}

/// Geometric decay `lr_start (lr_end / lr_start)^{i / max_iters}`.
pub fn lr_schedule(cfg: &TrainConfig, i: usize) -> f64 {
    if cfg.max_iters == 0 {
        return cfg.lr_start;
    }
    let frac = i.min(cfg.max_iters) as f64 / cfg.max_iters as f64;
    cfg.lr_start * (cfg.lr_end / cfg.lr_start).powf(frac)
}

/// `theta <- theta - tau * grad`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], tau: f64) {
    assert_eq!(params.len(), grad.len(), "gradient shape mismatch");
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= tau * g;
    }
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], tau: f64) {
        self.t = self.t.saturating_add(1);
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= tau * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Per-point penalty contributions shared by both gradient routes.
/// Returns the penalty value and `d penalty / d phi` for the pinned value
/// or for every batch row value.
enum PenaltyTerm {
    None,
    Pin { value: f64, slope: f64 },
    PerRow { value: f64, slopes: Vec<f64> },
}

fn penalty(loss: &LossSpec, shape: Shape, pin_value: Option<f64>, row_values: &[f64]) -> PenaltyTerm {
    let count = row_values.len() as f64;
    match loss {
        LossSpec::Plain => PenaltyTerm::None,
        LossSpec::PinComponent { epsilon, .. } => {
            let phi = pin_value.expect("pinned value evaluated");
            PenaltyTerm::Pin {
                value: (phi - 1.0).powi(2) / epsilon,
                slope: 2.0 * (phi - 1.0) / epsilon,
            }
        }
        LossSpec::MeanPenalty { epsilon } => {
            let mean = row_values.iter().sum::<f64>() / count;
            let s = 2.0 * (mean - 1.0) / epsilon / count;
            PenaltyTerm::PerRow {
                value: (mean - 1.0).powi(2) / epsilon,
                slopes: vec![s; row_values.len()],
            }
        }
        LossSpec::NormPenalty { p, epsilon } => {
            let scale = shape.total_f64() / count;
            let sum_p = scale * row_values.iter().map(|v| v.abs().powf(*p)).sum::<f64>();
            let norm = sum_p.powf(1.0 / p);
            let outer = 2.0 * (norm - 1.0) / epsilon;
            let slopes = row_values
                .iter()
                .map(|v| {
                    if norm == 0.0 || *v == 0.0 {
                        0.0
                    } else {
                        outer * norm.powf(1.0 - p) * scale * v.abs().powf(p - 1.0) * v.signum()
                    }
                })
                .collect();
            PenaltyTerm::PerRow {
                value: (norm - 1.0).powi(2) / epsilon,
                slopes,
            }
        }
    }
}

fn non_finite(k: &MultiIndex, what: &str, v: f64) -> Error {
    Error::Numeric(format!("{what} is {v} at row {k}"))
}

/// Batch loss and gradient computed row by row: for each `k`,
/// `s1 = sum_j A_kj phi(x_j)`, `s2 = sum_j A_kj grad phi(x_j)`,
/// `g += (s1 - b_k) s2`, and finally `grad = (2/|S|) g` plus penalties.
pub fn batch_loss_and_grad_reference(
    op: &dyn RowOracle,
    grid: &GridSpec,
    net: &Network,
    batch: &[MultiIndex],
    loss: &LossSpec,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(param("batch must be nonempty"));
    }
    let count = net.arch().param_count();
    let mut g = vec![0.0; count];
    let mut total = 0.0;
    let mut point = vec![0.0; grid.dim()];
    for k in batch {
        let row = op.row(k)?;
        let b = op.rhs(k)?;
        let mut s1 = 0.0;
        let mut s2 = vec![0.0; count];
        for (col, a) in row.iter() {
            grid.write_point(col, &mut point);
            let (phi, dphi) = net.forward_with_grad(&point)?;
            s1 += a * phi;
            for (s, d) in s2.iter_mut().zip(dphi.iter()) {
                *s += a * d;
            }
        }
        let r = s1 - b;
        if !r.is_finite() {
            return Err(non_finite(k, "residual", r));
        }
        total += r * r;
        for (gi, s) in g.iter_mut().zip(&s2) {
            *gi += r * s;
        }
    }
    let n = batch.len() as f64;
    let mut grad = Gradient(g.into_iter().map(|v| 2.0 / n * v).collect());
    let mut value = total / n;

    let pin_eval = match loss {
        LossSpec::PinComponent { index, .. } => Some(net.forward_with_grad(&grid.point_of(index)?)?),
        _ => None,
    };
    let row_evals = match loss {
        LossSpec::MeanPenalty { .. } | LossSpec::NormPenalty { .. } => batch
            .iter()
            .map(|k| net.forward_with_grad(&grid.point_of(k)?))
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let row_values: Vec<f64> = row_evals.iter().map(|(v, _)| *v).collect();
    match penalty(loss, grid.shape(), pin_eval.as_ref().map(|e| e.0), &row_values) {
        PenaltyTerm::None => {}
        PenaltyTerm::Pin { value: pv, slope } => {
            value += pv;
            let (_, dphi) = pin_eval.expect("pinned value evaluated");
            for (gi, d) in grad.iter_mut().zip(dphi.iter()) {
                *gi += slope * d;
            }
        }
        PenaltyTerm::PerRow { value: pv, slopes } => {
            value += pv;
            for ((_, dphi), s) in row_evals.iter().zip(&slopes) {
                for (gi, d) in grad.iter_mut().zip(dphi.iter()) {
                    *gi += s * d;
                }
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::Numeric(format!("batch loss is {value}")));
    }
    Ok((value, grad))
}

/// Reusable buffers for the batched gradient route.
#[derive(Debug, Default)]
pub struct BatchAssembler {
    slots: HashMap<MultiIndex, usize>,
    /// Slot per flat position when the grid is small enough; `usize::MAX` is empty.
    table: Vec<usize>,
    table_n: u32,
    points: Vec<MultiIndex>,
    coords: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    row_slots: Vec<usize>,
    values: Vec<f64>,
    weights: Vec<f64>,
    workspaces: Vec<BatchWorkspace>,
}

impl BatchAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&mut self, idx: &MultiIndex) -> usize {
        if !self.table.is_empty() {
            if let Some(flat) = self.flat(idx) {
                let s = self.table[flat];
                if s != usize::MAX {
                    return s;
                }
                let s = self.points.len();
                self.table[flat] = s;
                self.points.push(idx.clone());
                return s;
            }
        }
        if let Some(&s) = self.slots.get(idx) {
            return s;
        }
        let s = self.points.len();
        self.slots.insert(idx.clone(), s);
        self.points.push(idx.clone());
        s
    }

    fn flat(&self, idx: &MultiIndex) -> Option<usize> {
        let n = self.table_n as usize;
        let mut acc = 0usize;
        for &i in idx.entries() {
            let i = i as usize;
            if i < 1 || i > n {
                return None;
            }
            acc = acc * n + (i - 1);
        }
        (acc < self.table.len()).then_some(acc)
    }

    fn reset(&mut self, shape: Shape) {
        let total = shape.total().filter(|&t| t <= DENSE_SLOTS as u128);
        match total {
            Some(t) if t as usize == self.table.len() && shape.n == self.table_n => {
                for p in &self.points {
                    if let Some(f) = self.flat(p) {
                        self.table[f] = usize::MAX;
                    }
                }
            }
            Some(t) => {
                self.table = vec![usize::MAX; t as usize];
                self.table_n = shape.n;
            }
            None => {
                self.table = Vec::new();
            }
        }
        self.slots.clear();
        self.points.clear();
        self.row_ptr.clear();
        self.cols.clear();
        self.vals.clear();
        self.rhs.clear();
        self.row_slots.clear();
    }

    /// Evaluates `phi` at every registered point, in registration order.
    fn evaluate(&mut self, net: &Network, grid: &GridSpec) -> Result<()> {
        let d = grid.dim();
        self.coords.resize(self.points.len() * d, 0.0);
        for (p, c) in self.points.iter().zip(self.coords.chunks_exact_mut(d)) {
            grid.write_point(p, c);
        }
        let blocks = self.points.len().div_ceil(CHUNK);
        self.workspaces.resize_with(blocks.max(self.workspaces.len()), BatchWorkspace::new);
        self.workspaces[..blocks]
            .par_iter_mut()
            .zip(self.coords.par_chunks(CHUNK * d))
            .try_for_each(|(ws, c)| net.forward_batch(c, ws).map(|_| ()))?;
        self.values.clear();
        for ws in &self.workspaces[..blocks] {
            self.values.extend_from_slice(ws.values());
        }
        Ok(())
    }

    /// `sum_p weights[p] grad phi(x_p)` over the evaluated points.
    fn backward(&mut self, net: &Network, d: usize) -> Gradient {
        let blocks = self.points.len().div_ceil(CHUNK);
        let count = net.arch().param_count();
        let partial: Vec<Vec<f64>> = self.workspaces[..blocks]
            .par_iter_mut()
            .zip(self.coords.par_chunks(CHUNK * d))
            .zip(self.weights.par_chunks(CHUNK))
            .map(|((ws, c), w)| {
                let mut g = vec![0.0; count];
                net.accumulate_weighted_grad(c, w, ws, &mut g);
                g
            })
            .collect();
        let mut grad = Gradient::zeros(count);
        for g in &partial {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        grad
    }

    /// Batch loss and gradient; see the module documentation.
    pub fn loss_and_grad(
        &mut self,
        op: &dyn RowOracle,
        grid: &GridSpec,
        net: &Network,
        batch: &[MultiIndex],
        loss: &LossSpec,
    ) -> Result<(f64, Gradient)> {
        if batch.is_empty() {
            return Err(param("batch must be nonempty"));
        }
        self.reset(grid.shape());
        self.row_ptr.push(0);
        for k in batch {
            let row = op.row(k)?;
            self.rhs.push(op.rhs(k)?);
            for (col, a) in row.iter() {
                let s = self.slot(col);
                self.cols.push(s);
                self.vals.push(a);
            }
            self.row_ptr.push(self.cols.len());
        }
        let needs_rows = matches!(loss, LossSpec::MeanPenalty { .. } | LossSpec::NormPenalty { .. });
        if needs_rows {
            for k in batch {
                let s = self.slot(k);
                self.row_slots.push(s);
            }
        }
        let pin_slot = match loss {
            LossSpec::PinComponent { index, .. } => {
                grid.shape().check(index)?;
                Some(self.slot(index))
            }
            _ => None,
        };

        self.evaluate(net, grid)?;

        let n = batch.len() as f64;
        self.weights.clear();
        self.weights.resize(self.points.len(), 0.0);
        let mut total = 0.0;
        for (r, k) in batch.iter().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let s1 = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span.clone()])
                .fold(0.0, |acc, (&c, a)| acc + a * self.values[c]);
            let res = s1 - self.rhs[r];
            if !res.is_finite() {
                return Err(non_finite(k, "residual", res));
            }
            total += res * res;
            let scale = 2.0 / n * res;
            for (&c, a) in self.cols[span.clone()].iter().zip(&self.vals[span]) {
                self.weights[c] += scale * a;
            }
        }
        let mut value = total / n;

        let row_values: Vec<f64> = self.row_slots.iter().map(|&s| self.values[s]).collect();
        match penalty(loss, grid.shape(), pin_slot.map(|s| self.values[s]), &row_values) {
            PenaltyTerm::None => {}
            PenaltyTerm::Pin { value: pv, slope } => {
                value += pv;
                self.weights[pin_slot.expect("pin slot")] += slope;
            }
            PenaltyTerm::PerRow { value: pv, slopes } => {
                value += pv;
                for (&s, w) in self.row_slots.iter().zip(&slopes) {
                    self.weights[s] += w;
                }
            }
        }
        if !value.is_finite() {
            return Err(Error::Numeric(format!("batch loss is {value}")));
        }
        let grad = self.backward(net, grid.dim());
        Ok((value, grad))
    }

    /// Number of distinct grid points touched by the last batch.
    pub fn distinct_points(&self) -> usize {
        self.points.len()
    }
}

/// Batch loss and gradient through [`BatchAssembler`] with fresh buffers.
pub fn batch_loss_and_grad(
    op: &dyn RowOracle,
    grid: &GridSpec,
    net: &Network,
    batch: &[MultiIndex],
    loss: &LossSpec,
) -> Result<(f64, Gradient)> {
    BatchAssembler::new().loss_and_grad(op, grid, net, batch, loss)
}

/// `phi` at many grid indices, evaluated in GEMM blocks.
pub fn evaluate_indices(net: &Network, grid: &GridSpec, indices: &[MultiIndex]) -> Result<Vec<f64>> {
    let d = grid.dim();
    let mut out = Vec::with_capacity(indices.len());
    let mut coords = vec![0.0; CHUNK.min(indices.len()) * d];
    let mut ws = BatchWorkspace::new();
    for block in indices.chunks(CHUNK) {
        coords.resize(block.len() * d, 0.0);
        for (k, c) in block.iter().zip(coords.chunks_exact_mut(d)) {
            grid.shape().check(k)?;
            grid.write_point(k, c);
        }
        out.extend_from_slice(net.forward_batch(&coords, &mut ws)?);
    }
    Ok(out)
}

/// One logged point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub loss: f64,
    pub lr: f64,
    pub e_inf: Option<f64>,
    pub e_l2: Option<f64>,
    pub res_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
    pub wall_clock_secs: f64,
}

impl TrainHistory {
    /// Writes `iter,loss,lr,e_inf,e_l2,res_l2`; absent metrics are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        if self.records.is_empty() {
            w.write_record(["iter", "loss", "lr", "e_inf", "e_l2", "res_l2"])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, csv::Error> {
        let mut r = csv::Reader::from_reader(input);
        let records = r.deserialize().collect::<Result<Vec<HistoryRecord>, _>>()?;
        Ok(TrainHistory {
            records,
            wall_clock_secs: 0.0,
        })
    }
}

/// Hook called at every logged iteration, e.g. to attach test metrics or
/// write checkpoints.
pub trait TrainObserver: Send {
    fn on_log(&mut self, _net: &Network, _record: &mut HistoryRecord) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: TrainHistory,
}

/// A run that stopped early; carries everything computed up to the failure.
#[derive(Debug, Clone)]
pub struct TrainFailure {
    pub error: Error,
    /// 1-based iteration at which the failure occurred, 0 for setup errors.
    pub iteration: usize,
    pub network: Network,
    pub history: TrainHistory,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training stopped at iteration {}: {}", self.iteration, self.error)
    }
}

impl std::error::Error for TrainFailure {}

/// Initializes a network from `cfg` and trains it; see [`train_from`].
pub fn train(
    instance: &ProblemInstance,
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, Box<TrainFailure>> {
    let init = Network::init(arch, cfg.init_scale, cfg.seed).map_err(|e| {
        Box::new(TrainFailure {
            error: e,
            iteration: 0,
            network: Network::zeros(Architecture {
                depth: 2,
                width: 1,
                input_dim: 1,
            })
            .expect("trivial architecture"),
            history: TrainHistory::default(),
        })
    })?;
    train_from(instance, init, cfg, &mut NoObserver)
}

/// Runs `cfg.max_iters` iterations: sample a fresh batch uniformly with
/// replacement, compute the batch loss and gradient, step with
/// `lr_schedule(cfg, i)`. Logs after iteration `i` when `i` is a multiple
/// of `eval_every` and after the last iteration.
pub fn train_from(
    instance: &ProblemInstance,
    mut net: Network,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, Box<TrainFailure>> {
    let started = Instant::now();
    let mut history = TrainHistory::default();
    let fail = |error: Error, iteration: usize, net: &Network, history: &TrainHistory| {
        Box::new(TrainFailure {
            error,
            iteration,
            network: net.clone(),
            history: history.clone(),
        })
    };

    let shape = instance.shape();
    let setup = cfg
        .validate()
        .and_then(|_| instance.loss.validate(shape))
        .and_then(|_| {
            if net.arch().input_dim != shape.d {
                Err(param(format!(
                    "network input dimension {} does not match grid dimension {}",
                    net.arch().input_dim,
                    shape.d
                )))
            } else {
                Ok(())
            }
        });
    if let Err(e) = setup {
        return Err(fail(e, 0, &net, &history));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| fail(Error::Parameter(e.to_string()), 0, &net, &history))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut assembler = BatchAssembler::new();
    let mut adam = match cfg.optimizer {
        OptimizerKind::AdaptiveMoment => Some(AdamState::new(net.params().len())),
        OptimizerKind::PlainSgd => None,
    };

    for i in 0..cfg.max_iters {
        let iter = i + 1;
        let step = pool.install(|| -> Result<f64> {
            let batch = sample_indices(&mut rng, cfg.batch_size, shape.n, shape.d)?;
            let (loss, grad) =
                assembler.loss_and_grad(instance.oracle.as_ref(), &instance.grid, &net, &batch, &instance.loss)?;
            let tau = lr_schedule(cfg, i);
            match adam.as_mut() {
                Some(state) => state.step(net.params_mut(), &grad, tau),
                None => sgd_step(net.params_mut(), &grad, tau),
            }
            if net.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Numeric("parameters became non-finite".into()));
            }
            Ok(loss)
        });
        let loss = match step {
            Ok(l) => l,
            Err(e) => {
                history.wall_clock_secs = started.elapsed().as_secs_f64();
                return Err(fail(e, iter, &net, &history));
            }
        };
        if iter % cfg.eval_every == 0 || iter == cfg.max_iters {
            let mut record = HistoryRecord {
                iter,
                loss,
                lr: lr_schedule(cfg, i),
                e_inf: None,
                e_l2: None,
                res_l2: None,
            };
            if let Err(e) = pool.install(|| observer.on_log(&net, &mut record)) {
                history.wall_clock_secs = started.elapsed().as_secs_f64();
                return Err(fail(e, iter, &net, &history));
            }
            history.records.push(record);
        }
    }
    history.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        network: net,
        history,
    })
}

/// The trained solution as an index function `j -> phi(x_j)`.
#[derive(Debug, Clone, Copy)]
pub struct SolutionIndex<'a> {
    net: &'a Network,
    grid: &'a GridSpec,
}

pub fn solution_index_function<'a>(net: &'a Network, grid: &'a GridSpec) -> SolutionIndex<'a> {
    SolutionIndex { net, grid }
}

impl SolutionIndex<'_> {
    pub fn eval(&self, j: &MultiIndex) -> Result<f64> {
        self.net.forward(&self.grid.point_of(j)?)
    }
}

//! Matrix-free row access to structured matrices.
//!
//! A matrix of size `N^d x N^d` is never stored. Instead [`MatrixRows::row`]
//! returns the nonzeros of one row on demand, with columns addressed by
//! [`MultiIndex`]. A [`RowOracle`] additionally knows the right-hand side
//! entry of each row.
//!
//! The tensor-structured matrices are Kronecker sums
//! `sum_n I x ... x T^(n) x ... x I` of one-dimensional factors
//! ([`Factor1d`]); their rows are assembled by [`KronSum`] from the rows of
//! the factors.

use crate::error::{param, Error, Result};
use crate::grid::{unzeta, zeta, FlatIndex, GridSpec, MultiIndex, Shape};
use crate::problems::Truth;

/// Nonzeros of one matrix row. Columns are pairwise distinct and values are
/// finite and nonzero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    entries: Vec<(MultiIndex, f64)>,
}

impl SparseRow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a row from arbitrary `(column, value)` pairs, merging
    /// duplicate columns by summation in input order and dropping zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut row = SparseRow::new();
        for (col, v) in pairs {
            row.add(col, v);
        }
        row.finish()
    }

    /// Adds `value` to column `col`, appending the column if it is new.
    fn add(&mut self, col: MultiIndex, value: f64) {
        match self.entries.iter_mut().find(|(c, _)| *c == col) {
            Some((_, v)) => *v += value,
            None => self.entries.push((col, value)),
        }
    }

    /// Appends a column known not to be present yet.
    fn push_new(&mut self, col: MultiIndex, value: f64) {
        debug_assert!(self.entries.iter().all(|(c, _)| *c != col));
        self.entries.push((col, value));
    }

    fn finish(mut self) -> Result<Self> {
        self.entries.retain(|(_, v)| *v != 0.0);
        if let Some((c, v)) = self.entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("matrix entry at column {c} is {v}")));
        }
        Ok(self)
    }

    pub fn entries(&self) -> &[(MultiIndex, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.entries.iter().map(|(c, v)| (c, *v))
    }

    /// Value at `col`, zero if absent.
    pub fn get(&self, col: &MultiIndex) -> f64 {
        self.entries
            .iter()
            .find(|(c, _)| c == col)
            .map_or(0.0, |(_, v)| *v)
    }

    /// Entries sorted by column, for order-insensitive comparisons.
    pub fn sorted(&self) -> Vec<(MultiIndex, f64)> {
        let mut out = self.entries.clone();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

/// Row access to an `N^d x N^d` matrix.
pub trait MatrixRows: Send + Sync {
    fn shape(&self) -> Shape;

    /// Nonzeros of row `k`.
    fn row(&self, k: &MultiIndex) -> Result<SparseRow>;

    /// Upper bound on `row(k).len()` over all `k`.
    fn nnz_per_row_bound(&self) -> usize;
}

/// A matrix together with the right-hand side of the system `A u = b`.
pub trait RowOracle: MatrixRows {
    /// `b_k`.
    fn rhs(&self, k: &MultiIndex) -> Result<f64>;
}

impl<M: MatrixRows + ?Sized> MatrixRows for Box<M> {
    fn shape(&self) -> Shape {
        (**self).shape()
    }
    fn row(&self, k: &MultiIndex) -> Result<SparseRow> {
        (**self).row(k)
    }
    fn nnz_per_row_bound(&self) -> usize {
        (**self).nnz_per_row_bound()
    }
}

/// One-dimensional `N x N` factor given by a row generator.
pub trait Factor1d: Send + Sync {
    fn size(&self) -> u32;

    /// Appends the nonzeros `(j, T[i, j])` of row `i` (1-based) to `out`,
    /// in increasing `j`.
    fn row_into(&self, i: u32, out: &mut Vec<(u32, f64)>);

    fn max_row_nnz(&self) -> usize;

    /// `T[i, i]`.
    fn diagonal(&self, i: u32) -> f64 {
        let mut buf = Vec::new();
        self.row_into(i, &mut buf);
        buf.iter().find(|(j, _)| *j == i).map_or(0.0, |(_, v)| *v)
    }
}

/// Tridiagonal second-difference factor: `-2/h^2` on the diagonal and
/// `1/h^2` beside it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonFactor {
    n: u32,
    h: f64,
}

impl PoissonFactor {
    pub fn new(n: u32, h: f64) -> Result<Self> {
        if n == 0 {
            return Err(param("factor size must be at least 1"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(param(format!("grid spacing must be positive, got {h}")));
        }
        Ok(PoissonFactor { n, h })
    }
}

impl Factor1d for PoissonFactor {
    fn size(&self) -> u32 {
        self.n
    }

    fn row_into(&self, i: u32, out: &mut Vec<(u32, f64)>) {
        let off = 1.0 / (self.h * self.h);
        if i > 1 {
            out.push((i - 1, off));
        }
        out.push((i, self.diagonal(i)));
        if i < self.n {
            out.push((i + 1, off));
        }
    }

    fn max_row_nnz(&self) -> usize {
        3.min(self.n as usize)
    }

    fn diagonal(&self, _i: u32) -> f64 {
        -2.0 / (self.h * self.h)
    }
}

impl PoissonFactor {
    pub fn spacing(&self) -> f64 {
        self.h
    }
}

/// Dense symmetric Toeplitz factor of the shifted Grunwald discretization
/// of the Riesz derivative: `2 t_1` on the diagonal, `t_0 + t_2` on the
/// first off-diagonals and `t_{m+1}` at distance `m >= 2`, with
/// `t_0 = c / (2 cos(alpha pi / 2) h^alpha)` and
/// `t_i = (1 - (alpha + 1)/i) t_{i-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RieszFactor {
    n: u32,
    /// `t_0 ..= t_max(N, 2)`.
    coeffs: Vec<f64>,
}

impl RieszFactor {
    pub fn new(n: u32, h: f64, alpha: f64, c: f64) -> Result<Self> {
        if n == 0 {
            return Err(param("factor size must be at least 1"));
        }
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(param(format!("fractional order must lie in (1, 2), got {alpha}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(param(format!("diffusion coefficient must be positive, got {c}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(param(format!("grid spacing must be positive, got {h}")));
        }
        let t0 = c / (2.0 * (alpha * std::f64::consts::PI / 2.0).cos() * h.powf(alpha));
        let last = n.max(2) as usize;
        let mut coeffs = Vec::with_capacity(last + 1);
        coeffs.push(t0);
        for i in 1..=last {
            let prev = coeffs[i - 1];
            coeffs.push((1.0 - (alpha + 1.0) / i as f64) * prev);
        }
        Ok(RieszFactor { n, coeffs })
    }

    /// `t_i`.
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs[i]
    }

    /// Entry at distance `m = |i - j|`.
    pub fn band(&self, m: u32) -> f64 {
        match m {
            0 => 2.0 * self.coeffs[1],
            1 => self.coeffs[0] + self.coeffs[2],
            m => self.coeffs[m as usize + 1],
        }
    }
}

impl Factor1d for RieszFactor {
    fn size(&self) -> u32 {
        self.n
    }

    fn row_into(&self, i: u32, out: &mut Vec<(u32, f64)>) {
        out.extend((1..=self.n).map(|j| (j, self.band(i.abs_diff(j)))));
    }

    fn max_row_nnz(&self) -> usize {
        self.n as usize
    }

    fn diagonal(&self, _i: u32) -> f64 {
        self.band(0)
    }
}

/// Birth-death factor of one queue: arrivals at rate `lambda`, up to `s`
/// servers of rate `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueingFactor {
    n: u32,
    lambda: f64,
    servers: u32,
    mu: f64,
}

impl QueueingFactor {
    pub fn new(n: u32, lambda: f64, servers: u32, mu: f64) -> Result<Self> {
        if n < 2 {
            return Err(param("queue factor needs at least 2 states"));
        }
        if servers == 0 {
            return Err(param("server count must be at least 1"));
        }
        if !(lambda > 0.0 && lambda.is_finite() && mu > 0.0 && mu.is_finite()) {
            return Err(param(format!("rates must be positive, got lambda={lambda}, mu={mu}")));
        }
        Ok(QueueingFactor {
            n,
            lambda,
            servers,
            mu,
        })
    }

    /// Service rate `mu = (lambda + (N - 1)^(-alpha)) / s`.
    pub fn service_rate(n: u32, lambda: f64, servers: u32, alpha: f64) -> f64 {
        (lambda + (n as f64 - 1.0).powf(-alpha)) / servers as f64
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn busy(&self, i: u32) -> f64 {
        i.min(self.servers) as f64
    }
}

impl Factor1d for QueueingFactor {
    fn size(&self) -> u32 {
        self.n
    }

    fn row_into(&self, i: u32, out: &mut Vec<(u32, f64)>) {
        if i >= 2 {
            out.push((i - 1, -self.lambda));
        }
        let diag = if i < self.n {
            self.lambda + self.busy(i - 1) * self.mu
        } else {
            self.servers as f64 * self.mu
        };
        out.push((i, diag));
        if i < self.n {
            out.push((i + 1, -self.busy(i) * self.mu));
        }
    }

    fn max_row_nnz(&self) -> usize {
        3
    }
}

/// Kronecker sum `sum_n I x ... x T^(n) x ... x I` of `d` factors of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct KronSum<F> {
    factors: Vec<F>,
    shape: Shape,
}

impl<F: Factor1d> KronSum<F> {
    pub fn new(factors: Vec<F>) -> Result<Self> {
        let n = factors
            .first()
            .ok_or_else(|| param("a Kronecker sum needs at least one factor"))?
            .size();
        if factors.iter().any(|f| f.size() != n) {
            return Err(param("all factors must have the same size"));
        }
        let shape = Shape::new(n, factors.len())?;
        Ok(KronSum { factors, shape })
    }

    pub fn factors(&self) -> &[F] {
        &self.factors
    }

    /// Row `k` before zero-dropping; the diagonal comes first and holds
    /// `sum_n T^(n)[i_n, i_n]`.
    fn raw_row(&self, k: &MultiIndex) -> SparseRow {
        let mut row = SparseRow::new();
        let diag = self
            .factors
            .iter()
            .zip(k.entries())
            .fold(0.0, |acc, (f, &i)| acc + f.diagonal(i));
        row.push_new(k.clone(), diag);
        let mut buf = Vec::new();
        for (dim, (f, &i)) in self.factors.iter().zip(k.entries()).enumerate() {
            buf.clear();
            f.row_into(i, &mut buf);
            for &(j, v) in &buf {
                if j != i {
                    row.push_new(k.with(dim, j), v);
                }
            }
        }
        row
    }
}

impl<F: Factor1d> MatrixRows for KronSum<F> {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn row(&self, k: &MultiIndex) -> Result<SparseRow> {
        self.shape.check(k)?;
        self.raw_row(k).finish()
    }

    fn nnz_per_row_bound(&self) -> usize {
        1 + self
            .factors
            .iter()
            .map(|f| f.max_row_nnz().saturating_sub(1))
            .sum::<usize>()
    }
}

/// Overflow coupling `R = sum_{m != n} R_mn`,
/// `R_mn = kron_k (e_m e_m^T)^{delta_mk} R_m^{delta_nk}`, where `R_m` is
/// `lambda_m` times the lower bidiagonal matrix with diagonal
/// `(1, ..., 1, 0)` and subdiagonal `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverflowCoupling {
    lambdas: Vec<f64>,
    shape: Shape,
}

impl OverflowCoupling {
    pub fn new(n: u32, lambdas: Vec<f64>) -> Result<Self> {
        let d = lambdas.len();
        let shape = Shape::new(n, d)?;
        if d as u64 > n as u64 {
            return Err(Error::Construction(format!(
                "the coupling uses the unit vectors e_1..e_{d} of R^{n}, so d must not exceed N"
            )));
        }
        if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(param("arrival rates must be positive"));
        }
        Ok(OverflowCoupling { lambdas, shape })
    }

    /// Nonzeros `(j, R_m[i, j])` of row `i` of `R_m`, diagonal first.
    fn r_row(&self, m: usize, i: u32) -> [(u32, f64); 2] {
        let lambda = self.lambdas[m];
        let n = self.shape.n;
        let diag = if i < n { lambda } else { 0.0 };
        let sub = if i >= 2 { -lambda } else { 0.0 };
        [(i, diag), (i.saturating_sub(1), sub)]
    }

    /// Adds row `k` of `R` into `row`, term by term in `(m, n)` order.
    fn add_row(&self, k: &MultiIndex, row: &mut SparseRow) {
        let d = self.shape.d;
        for m in 0..d {
            // (e_m e_m^T) keeps only rows with i_m = m (1-based).
            if k.entries()[m] != m as u32 + 1 {
                continue;
            }
            for n in (0..d).filter(|&n| n != m) {
                for (j, v) in self.r_row(m, k.entries()[n]) {
                    if v != 0.0 {
                        row.add(k.with(n, j), v);
                    }
                }
            }
        }
    }
}

impl MatrixRows for OverflowCoupling {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn row(&self, k: &MultiIndex) -> Result<SparseRow> {
        self.shape.check(k)?;
        let mut row = SparseRow::new();
        self.add_row(k, &mut row);
        row.finish()
    }

    fn nnz_per_row_bound(&self) -> usize {
        let d = self.shape.d;
        2 * d * d.saturating_sub(1)
    }
}

/// The overflow queuing matrix `A + R`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueingOperator {
    local: KronSum<QueueingFactor>,
    coupling: OverflowCoupling,
}

impl QueueingOperator {
    pub fn new(local: KronSum<QueueingFactor>, coupling: OverflowCoupling) -> Result<Self> {
        if local.shape() != coupling.shape() {
            return Err(param("local and coupling parts have different shapes"));
        }
        Ok(QueueingOperator { local, coupling })
    }

    pub fn local(&self) -> &KronSum<QueueingFactor> {
        &self.local
    }

    pub fn coupling(&self) -> &OverflowCoupling {
        &self.coupling
    }
}

impl MatrixRows for QueueingOperator {
    fn shape(&self) -> Shape {
        self.local.shape()
    }

    fn row(&self, k: &MultiIndex) -> Result<SparseRow> {
        self.local.shape().check(k)?;
        let mut row = self.local.raw_row(k);
        self.coupling.add_row(k, &mut row);
        row.finish()
    }

    fn nnz_per_row_bound(&self) -> usize {
        let d = self.shape().d;
        2 * d + 1 + d * (d - 1)
    }
}

/// `I - T` for the column-normalized shifted Toeplitz transition matrix of
/// a probabilistic Boolean network with `2^d` states.
///
/// The unnormalized matrix has `t_ij = v_s` when `j = i + s` for a shift
/// `s` in the shift set. Column `j` is divided by
/// `sum {v_s : 1 <= j - s <= 2^d}`, evaluated analytically.
#[derive(Debug, Clone, PartialEq)]
pub struct PbnOperator {
    d: usize,
    states: u128,
    /// `(shift, value)` sorted by decreasing shift, i.e. increasing row.
    shifts: Vec<(i128, f64)>,
}

impl PbnOperator {
    pub fn new(d: usize, shifts: &[i64], values: &[f64]) -> Result<Self> {
        if d == 0 || d > 126 {
            return Err(param(format!("state dimension must lie in 1..=126, got {d}")));
        }
        if shifts.is_empty() || shifts.len() != values.len() {
            return Err(param("shift set and value set must be nonempty and of equal length"));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(param("shift values must be positive"));
        }
        let states = 1u128 << d;
        let mut pairs: Vec<(i128, f64)> = Vec::with_capacity(shifts.len());
        for (&s, &v) in shifts.iter().zip(values) {
            let s = s as i128;
            if s.unsigned_abs() >= states {
                return Err(Error::Construction(format!(
                    "shift {s} is out of range for {states} states"
                )));
            }
            if pairs.iter().any(|(p, _)| *p == s) {
                return Err(param(format!("shift {s} appears twice")));
            }
            pairs.push((s, v));
        }
        pairs.sort_by(|a, b| b.0.cmp(&a.0));
        let op = PbnOperator {
            d,
            states,
            shifts: pairs,
        };
        op.check_columns_covered()?;
        Ok(op)
    }

    /// Every column needs at least one valid shift, or normalization fails.
    /// Column `j` receives shift `s` iff `j` lies in `[1 + s, 2^d + s]`.
    fn check_columns_covered(&self) -> Result<()> {
        let n = self.states as i128;
        let mut spans: Vec<(i128, i128)> = self
            .shifts
            .iter()
            .map(|(s, _)| ((1 + s).max(1), (n + s).min(n)))
            .collect();
        spans.sort();
        let mut covered = 0i128;
        for (lo, hi) in spans {
            if lo > covered + 1 {
                break;
            }
            covered = covered.max(hi);
        }
        if covered < n {
            return Err(Error::Construction(format!(
                "column {} has no nonzero entries; the matrix cannot be column-normalized",
                covered + 1
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `sum {v_s : 1 <= j - s <= 2^d}`, summed in increasing row order.
    pub fn column_sum(&self, j: u128) -> f64 {
        let j = j as i128;
        let n = self.states as i128;
        self.shifts
            .iter()
            .filter(|(s, _)| (1..=n).contains(&(j - s)))
            .fold(0.0, |acc, (_, v)| acc + v)
    }

    /// Normalized transition probability `T[i, j]` for flat positions.
    pub fn transition(&self, i: u128, j: u128) -> f64 {
        let s = j as i128 - i as i128;
        match self.shifts.iter().find(|(p, _)| *p == s) {
            Some((_, v)) => v / self.column_sum(j),
            None => 0.0,
        }
    }
}

impl MatrixRows for PbnOperator {
    fn shape(&self) -> Shape {
        Shape { n: 2, d: self.d }
    }

    fn row(&self, k: &MultiIndex) -> Result<SparseRow> {
        let i = zeta(k, 2, self.d)?.0 as i128;
        let n = self.states as i128;
        let mut row = SparseRow::new();
        row.push_new(k.clone(), 1.0);
        for (s, v) in &self.shifts {
            let j = i + s;
            if !(1..=n).contains(&j) {
                continue;
            }
            let colsum = self.column_sum(j as u128);
            if colsum == 0.0 {
                return Err(Error::Construction(format!("column {j} sums to zero")));
            }
            let col = unzeta(FlatIndex(j as u128), 2, self.d)?;
            row.add(col, -(v / colsum));
        }
        row.finish()
    }

    fn nnz_per_row_bound(&self) -> usize {
        self.shifts.len() + 1
    }
}

/// `sum_j A_kj v(x_j)` over the nonzeros of row `k`: the right-hand side of
/// a system manufactured from the exact solution `v`.
pub fn manufactured_rhs<M, V>(matrix: &M, truth: V, grid: &GridSpec, k: &MultiIndex) -> Result<f64>
where
    M: MatrixRows + ?Sized,
    V: Fn(&[f64]) -> f64,
{
    let row = matrix.row(k)?;
    let mut point = vec![0.0; grid.dim()];
    let mut acc = 0.0;
    for (col, a) in row.iter() {
        grid.write_point(col, &mut point);
        acc += a * truth(&point);
    }
    Ok(acc)
}

/// Where the right-hand side of a [`System`] comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RhsSource {
    /// Homogeneous system.
    Zero,
    /// `b = A v` for a known exact solution `v` sampled on `grid`.
    Manufactured { grid: GridSpec, truth: Truth },
}

/// A structured matrix paired with its right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct System<M> {
    matrix: M,
    rhs: RhsSource,
}

impl<M: MatrixRows> System<M> {
    pub fn new(matrix: M, rhs: RhsSource) -> Result<Self> {
        if let RhsSource::Manufactured { grid, .. } = &rhs {
            if grid.shape() != matrix.shape() {
                return Err(param("grid and matrix shapes differ"));
            }
        }
        Ok(System { matrix, rhs })
    }

    pub fn matrix(&self) -> &M {
        &self.matrix
    }
}

impl<M: MatrixRows> MatrixRows for System<M> {
    fn shape(&self) -> Shape {
        self.matrix.shape()
    }
    fn row(&self, k: &MultiIndex) -> Result<SparseRow> {
        self.matrix.row(k)
    }
    fn nnz_per_row_bound(&self) -> usize {
        self.matrix.nnz_per_row_bound()
    }
}

impl<M: MatrixRows> RowOracle for System<M> {
    fn rhs(&self, k: &MultiIndex) -> Result<f64> {
        match &self.rhs {
            RhsSource::Zero => {
                self.matrix.shape().check(k)?;
                Ok(0.0)
            }
            RhsSource::Manufactured { grid, truth } => {
                manufactured_rhs(&self.matrix, |x| truth.eval(x), grid, k)
            }
        }
    }
}

/// Largest system the dense adapter and the dense oracles accept.
pub const DENSE_LIMIT: usize = 1 << 16;

/// Row oracle over an explicitly stored dense matrix and right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAdapter {
    shape: Shape,
    size: usize,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
}

impl DenseAdapter {
    /// `matrix` is row-major `N^d x N^d`; rows are addressed by their
    /// lexicographic position.
    pub fn new(matrix: Vec<f64>, rhs: Vec<f64>, n: u32, d: usize) -> Result<Self> {
        let shape = Shape::new(n, d)?;
        let size = match shape.total() {
            Some(t) if t <= DENSE_LIMIT as u128 => t as usize,
            _ => {
                return Err(Error::Construction(format!(
                    "{n}^{d} exceeds the dense size limit {DENSE_LIMIT}"
                )))
            }
        };
        if matrix.len() != size * size || rhs.len() != size {
            return Err(Error::Construction(format!(
                "expected a {size}x{size} matrix and {size} right-hand side entries"
            )));
        }
        Ok(DenseAdapter {
            shape,
            size,
            matrix,
            rhs,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn position(&self, k: &MultiIndex) -> Result<usize> {
        Ok((zeta(k, self.shape.n, self.shape.d)?.0 - 1) as usize)
    }
}

impl MatrixRows for DenseAdapter {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn row(&self, k: &MultiIndex) -> Result<SparseRow> {
        let r = self.position(k)?;
        let mut row = SparseRow::new();
        for (c, &v) in self.matrix[r * self.size..(r + 1) * self.size].iter().enumerate() {
            if v != 0.0 {
                let col = unzeta(FlatIndex(c as u128 + 1), self.shape.n, self.shape.d)?;
                row.push_new(col, v);
            }
        }
        row.finish()
    }

    fn nnz_per_row_bound(&self) -> usize {
        self.size
    }
}

impl RowOracle for DenseAdapter {
    fn rhs(&self, k: &MultiIndex) -> Result<f64> {
        Ok(self.rhs[self.position(k)?])
    }
}

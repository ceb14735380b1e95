//! Brute-force references for small instances.
//!
//! Everything here stores the full `N^d x N^d` matrix, so sizes are capped at
//! [`DENSE_LIMIT`]. The dense constructions are written from the defining
//! formulas with explicit Kronecker products and share no code with the row
//! generators in [`crate::operator`]; tests compare the two.

use nalgebra::{DMatrix, DVector};

use crate::error::{param, Error, Result};
use crate::grid::{all_indices, zeta, GridSpec, Shape};
use crate::operator::{DenseAdapter, MatrixRows, RowOracle, DENSE_LIMIT};

/// An explicitly stored system `A u = b` in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub n: usize,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl DenseSystem {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || rhs.len() != n {
            return Err(param(format!(
                "expected a square matrix and matching rhs, got {}x{} and {}",
                matrix.nrows(),
                matrix.ncols(),
                rhs.len()
            )));
        }
        guard(n)?;
        Ok(DenseSystem { n, matrix, rhs })
    }

    /// Wraps the system as a row oracle over the grid shape `(n, d)`.
    pub fn to_adapter(&self, n: u32, d: usize) -> Result<DenseAdapter> {
        let rowmajor: Vec<f64> = self.matrix.transpose().as_slice().to_vec();
        DenseAdapter::new(rowmajor, self.rhs.as_slice().to_vec(), n, d)
    }
}

fn guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::Construction(format!(
            "dense size {n} exceeds the limit {DENSE_LIMIT}"
        )));
    }
    Ok(())
}

fn dense_size(shape: Shape) -> Result<usize> {
    match shape.total() {
        Some(t) if t <= DENSE_LIMIT as u128 => Ok(t as usize),
        _ => Err(Error::Construction(format!(
            "{}^{} exceeds the dense size limit {DENSE_LIMIT}",
            shape.n, shape.d
        ))),
    }
}

/// Dense copy of a row-access matrix.
pub fn densify_matrix<M: MatrixRows + ?Sized>(op: &M) -> Result<DMatrix<f64>> {
    let shape = op.shape();
    let size = dense_size(shape)?;
    let mut a = DMatrix::zeros(size, size);
    for k in all_indices(shape) {
        let r = (zeta(&k, shape.n, shape.d)?.0 - 1) as usize;
        for (col, v) in op.row(&k)?.iter() {
            let c = (zeta(col, shape.n, shape.d)?.0 - 1) as usize;
            a[(r, c)] = v;
        }
    }
    Ok(a)
}

/// Dense copy of a system given by its row oracle.
pub fn densify<O: RowOracle + ?Sized>(op: &O) -> Result<DenseSystem> {
    let shape = op.shape();
    let matrix = densify_matrix(op)?;
    let rhs = DVector::from_iterator(
        matrix.nrows(),
        all_indices(shape).map(|k| op.rhs(&k)).collect::<Result<Vec<_>>>()?,
    );
    DenseSystem::new(matrix, rhs)
}

/// Solves `A x = b` by LU with partial pivoting, refusing matrices that are
/// singular to working precision (estimated 2-norm condition number at
/// least `1 / (n eps)`).
pub fn dense_solve(sys: &DenseSystem) -> Result<DVector<f64>> {
    let n = sys.n;
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let lu = sys.matrix.clone().lu();
    let cond = condition_estimate(&sys.matrix, &lu);
    let limit = 1.0 / (n as f64 * f64::EPSILON);
    if !(cond < limit) {
        return Err(Error::Singular(format!(
            "estimated condition number {cond:e} exceeds {limit:e}"
        )));
    }
    let x = lu
        .solve(&sys.rhs)
        .ok_or_else(|| Error::Singular("zero pivot".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("dense solve produced non-finite values".into()));
    }
    Ok(x)
}

/// `‖A‖_F` times an estimate of `‖A^{-1}‖_2` from a few steps of inverse
/// iteration on `A^T A`. Infinite when a solve breaks down.
fn condition_estimate(a: &DMatrix<f64>, lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let n = a.nrows();
    let lut = a.transpose().lu();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + i as f64 / n as f64);
    x /= x.norm();
    let mut inv_sq = 0.0;
    for _ in 0..6 {
        let Some(y) = lut.solve(&x) else { return f64::INFINITY };
        let Some(z) = lu.solve(&y) else { return f64::INFINITY };
        let norm = z.norm();
        if !norm.is_finite() || norm == 0.0 {
            return f64::INFINITY;
        }
        inv_sq = norm;
        x = z / norm;
    }
    a.norm() * inv_sq.sqrt()
}

/// `‖A x - b‖_∞`.
pub fn residual_inf(sys: &DenseSystem, x: &DVector<f64>) -> f64 {
    (&sys.matrix * x - &sys.rhs).amax()
}

/// Singular values in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    let mut s = a.clone().singular_values();
    s.as_mut_slice().sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank with threshold `sigma_max * max(m, n) * eps`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let s = singular_values(a);
    let tol = rank_tolerance(a, &s);
    s.iter().filter(|&&v| v > tol).count()
}

fn rank_tolerance(a: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
    let smax = s.iter().cloned().fold(0.0, f64::max);
    smax * a.nrows().max(a.ncols()) as f64 * f64::EPSILON
}

/// Unit-norm spanning vector of a one-dimensional null space, with its first
/// nonzero entry positive.
pub fn dense_nullvec(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(param("null vector needs a nonempty square matrix"));
    }
    guard(n)?;
    let svd = a.clone().svd(false, true);
    let vt = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numeric("SVD did not return right singular vectors".into()))?;
    let s = &svd.singular_values;
    let tol = rank_tolerance(a, s);
    let rank = s.iter().filter(|&&v| v > tol).count();
    if rank + 1 != n {
        return Err(Error::Numeric(format!(
            "expected numerical rank {}, found {rank}",
            n - 1
        )));
    }
    let (imin, _) = s
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("nonempty");
    let mut v: DVector<f64> = vt.row(imin).transpose();
    v /= v.norm();
    let cutoff = 1e-12;
    if let Some(first) = v.iter().find(|x| x.abs() > cutoff) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
    let bound = 1e-8 * a.norm();
    let res = (a * &v).norm();
    if res > bound {
        return Err(Error::Numeric(format!(
            "null vector residual {res:e} exceeds {bound:e}"
        )));
    }
    Ok(v)
}

/// Stationary vector of a column-stochastic matrix by power iteration from
/// the uniform vector, scaled to mean 1.
pub fn stationary_distribution(t: &DMatrix<f64>) -> Result<DVector<f64>> {
    const TOL: f64 = 1e-12;
    const CAP: usize = 1_000_000;
    let n = t.nrows();
    if t.ncols() != n || n == 0 {
        return Err(param("transition matrix must be square and nonempty"));
    }
    guard(n)?;
    for (j, col) in t.column_iter().enumerate() {
        let s: f64 = col.iter().sum();
        if (s - 1.0).abs() > 1e-10 || col.iter().any(|&v| v < 0.0) {
            return Err(param(format!("column {} is not stochastic (sum {s})", j + 1)));
        }
    }
    // Column-wise sparse copy: the transition matrices of interest are banded.
    let cols: Vec<Vec<(usize, f64)>> = t
        .column_iter()
        .map(|c| c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect())
        .collect();
    let mut u = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..CAP {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (j, col) in cols.iter().enumerate() {
            let uj = u[j];
            for &(i, v) in col {
                next[i] += v * uj;
            }
        }
        let l1: f64 = next.iter().map(|x| x.abs()).sum();
        next.iter_mut().for_each(|x| *x /= l1);
        let diff: f64 = u.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut u, &mut next);
        if diff <= TOL {
            let scale = n as f64;
            return Ok(DVector::from_iterator(n, u.into_iter().map(|x| x * scale)));
        }
    }
    Err(Error::NoConvergence(format!(
        "power iteration did not reach {TOL:e} in {CAP} steps"
    )))
}

/// `‖A^{-1}‖_2 = 1 / sigma_min`.
pub fn inverse_norm_2(a: &DMatrix<f64>) -> Result<f64> {
    let s = singular_values(a);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) {
        return Err(Error::Singular("smallest singular value is zero".into()));
    }
    Ok(1.0 / smin)
}

// ---- dense constructions from the defining formulas ----

pub fn poisson_factor_dense(n: usize, h: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0 / (h * h),
        1 => 1.0 / (h * h),
        _ => 0.0,
    })
}

pub fn riesz_factor_dense(n: usize, h: f64, alpha: f64, c: f64) -> DMatrix<f64> {
    let mut t = vec![c / (2.0 * (alpha * std::f64::consts::PI / 2.0).cos() * h.powf(alpha))];
    for i in 1..=n.max(2) {
        t.push((1.0 - (alpha + 1.0) / i as f64) * t[i - 1]);
    }
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * t[1],
        1 => t[0] + t[2],
        m => t[m + 1],
    })
}

/// Birth-death generator of one queue with `s` servers; rows and columns
/// are 0-based here, so state `i` holds `i` customers.
pub fn queueing_factor_dense(n: usize, lambda: f64, s: usize, mu: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if j + 1 == i {
            -lambda
        } else if i == j {
            if i + 1 < n {
                lambda + i.min(s) as f64 * mu
            } else {
                s as f64 * mu
            }
        } else if j == i + 1 {
            -((i + 1).min(s) as f64) * mu
        } else {
            0.0
        }
    })
}

/// `lambda` times the lower bidiagonal matrix with diagonal `(1, ..., 1, 0)`
/// and subdiagonal `-1`.
pub fn overflow_factor_dense(n: usize, lambda: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j && i + 1 < n {
            lambda
        } else if j + 1 == i {
            -lambda
        } else {
            0.0
        }
    })
}

/// `e_m e_m^T` in `R^{n x n}` (0-based `m`).
pub fn unit_projector(n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == m && j == m { 1.0 } else { 0.0 })
}

/// `F_1 x F_2 x ... x F_d`.
pub fn kron_chain(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// `sum_n I x ... x T_n x ... x I`, terms added in order `n = 1..d`.
pub fn kron_sum_dense(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d = factors.len();
    let sizes: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let total = sizes.iter().product();
    let mut out = DMatrix::zeros(total, total);
    for n in 0..d {
        let chain: Vec<DMatrix<f64>> = (0..d)
            .map(|k| if k == n { factors[k].clone() } else { DMatrix::identity(sizes[k], sizes[k]) })
            .collect();
        out += kron_chain(&chain);
    }
    out
}

pub fn poisson_dense(d: usize, n: usize) -> DMatrix<f64> {
    let h = 2.0 / (n as f64 + 1.0);
    kron_sum_dense(&vec![poisson_factor_dense(n, h); d])
}

pub fn riesz_dense(n: usize, c: &[f64], alpha: &[f64]) -> DMatrix<f64> {
    let h = 2.0 / (n as f64 + 1.0);
    let factors: Vec<_> = c
        .iter()
        .zip(alpha)
        .map(|(&cn, &an)| riesz_factor_dense(n, h, an, cn))
        .collect();
    kron_sum_dense(&factors)
}

/// `A + sum_{m != n} R_mn` for the overflow queuing model, with
/// `mu_n = (lambda_n + (N - 1)^(-alpha)) / s_n`.
pub fn queueing_dense(n: usize, alpha: f64, lambdas: &[f64], servers: &[usize]) -> DMatrix<f64> {
    let d = lambdas.len();
    let local: Vec<_> = lambdas
        .iter()
        .zip(servers)
        .map(|(&l, &s)| {
            let mu = (l + (n as f64 - 1.0).powf(-alpha)) / s as f64;
            queueing_factor_dense(n, l, s, mu)
        })
        .collect();
    let mut a = kron_sum_dense(&local);
    for m in 0..d {
        for k in (0..d).filter(|&k| k != m) {
            let chain: Vec<DMatrix<f64>> = (0..d)
                .map(|q| {
                    if q == m {
                        unit_projector(n, m)
                    } else if q == k {
                        overflow_factor_dense(n, lambdas[m])
                    } else {
                        DMatrix::identity(n, n)
                    }
                })
                .collect();
            a += kron_chain(&chain);
        }
    }
    a
}

/// Column-normalized shifted Toeplitz transition matrix on `2^d` states:
/// entry `(i, j)` is `v_s` when `j = i + s`, then each column is divided by
/// its sum.
pub fn pbn_transition_dense(d: usize, shifts: &[i64], values: &[f64]) -> Result<DMatrix<f64>> {
    if d >= usize::BITS as usize {
        return Err(Error::Construction(format!("2^{d} states do not fit in memory")));
    }
    let n = 1usize << d;
    guard(n)?;
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        for (&s, &v) in shifts.iter().zip(values) {
            let j = i as i64 + s;
            if (0..n as i64).contains(&j) {
                t[(i, j as usize)] = v;
            }
        }
    }
    for j in 0..n {
        let sum = (0..n).fold(0.0, |acc, i| acc + t[(i, j)]);
        if sum == 0.0 {
            return Err(Error::Construction(format!("column {} sums to zero", j + 1)));
        }
        for i in 0..n {
            t[(i, j)] = t[(i, j)] / sum;
        }
    }
    Ok(t)
}

pub fn pbn_dense(d: usize, shifts: &[i64], values: &[f64]) -> Result<DMatrix<f64>> {
    let t = pbn_transition_dense(d, shifts, values)?;
    let n = t.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - t[(i, j)]
    }))
}

/// Samples of `truth` on `grid` in lexicographic order.
pub fn sample_truth(grid: &GridSpec, truth: impl Fn(&[f64]) -> f64) -> Result<DVector<f64>> {
    let size = dense_size(grid.shape())?;
    let values = all_indices(grid.shape())
        .map(|k| grid.point_of(&k).map(|x| truth(&x)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_iterator(size, values))
}

//! Self-checks comparing the matrix-free machinery against the dense
//! references in [`crate::oracle`] and against finite differences.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{full_loss, residual_error_bound};
use crate::fnn::{Architecture, InitScale, Network};
use crate::grid::{all_indices, sample_indices, MultiIndex};
use crate::operator::{Factor1d, KronSum, MatrixRows, PoissonFactor, RowOracle};
use crate::oracle;
use crate::problems::{
    build_pbn, build_poisson, build_queueing, build_riesz, pbn_defaults, ProblemInstance,
    PENALTY_EPSILON,
};
use crate::solver::{
    batch_loss_and_grad, batch_loss_and_grad_reference, train, LossSpec, OptimizerKind,
    TrainConfig,
};

/// Relative tolerance of the gradient checks.
pub const GRAD_RTOL: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest measured deviation, in the units of `tolerance`.
    pub discrepancy: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, discrepancy: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: discrepancy <= tolerance,
            discrepancy,
            tolerance,
            detail: detail.into(),
        }
    }

    fn failed(name: impl Into<String>, err: &Error) -> Self {
        CheckResult {
            name: name.into(),
            passed: false,
            discrepancy: f64::INFINITY,
            tolerance: 0.0,
            detail: err.to_string(),
        }
    }
}

/// Deliberate corruption of the matrix-free path, for testing the checks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Adds the given amount to every diagonal entry of the Poisson factor.
    PoissonDiagonal(f64),
}

#[derive(Debug, Clone)]
struct Perturbed<F> {
    inner: F,
    shift: f64,
}

impl<F: Factor1d> Factor1d for Perturbed<F> {
    fn size(&self) -> u32 {
        self.inner.size()
    }

    fn row_into(&self, i: u32, out: &mut Vec<(u32, f64)>) {
        let start = out.len();
        self.inner.row_into(i, out);
        for e in &mut out[start..] {
            if e.0 == i {
                e.1 += self.shift;
            }
        }
    }

    fn max_row_nnz(&self) -> usize {
        self.inner.max_row_nnz()
    }

    fn diagonal(&self, i: u32) -> f64 {
        self.inner.diagonal(i) + self.shift
    }
}

/// Counts entries where `op` and `dense` differ in any bit of the value
/// (signed zeros aside) and reports the largest absolute difference.
pub fn row_mismatches<M: MatrixRows + ?Sized>(op: &M, dense: &DMatrix<f64>) -> Result<(usize, f64)> {
    let from_rows = oracle::densify_matrix(op)?;
    if from_rows.shape() != dense.shape() {
        return Err(Error::Contract(format!(
            "shapes differ: {:?} vs {:?}",
            from_rows.shape(),
            dense.shape()
        )));
    }
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for (a, b) in from_rows.iter().zip(dense.iter()) {
        if a != b {
            count += 1;
            worst = worst.max((a - b).abs());
        }
    }
    Ok((count, worst))
}

fn row_check<M: MatrixRows + ?Sized>(name: &str, op: &M, dense: Result<DMatrix<f64>>) -> CheckResult {
    match dense.and_then(|d| row_mismatches(op, &d)) {
        Ok((count, worst)) => CheckResult::new(
            name,
            count as f64,
            0.0,
            format!("{count} mismatched entries, largest difference {worst:e}"),
        ),
        Err(e) => CheckResult::failed(name, &e),
    }
}

/// Row equality for the four families at the reference sizes.
pub fn row_equality_checks(fault: Fault) -> Vec<CheckResult> {
    let mut out = Vec::new();

    let (d, n) = (2, 4);
    let h = 2.0 / (n as f64 + 1.0);
    let name = "rows/poisson d=2 N=4";
    let poisson = PoissonFactor::new(n, h).and_then(|f| {
        let shift = match fault {
            Fault::None => 0.0,
            Fault::PoissonDiagonal(s) => s,
        };
        KronSum::new(vec![Perturbed { inner: f, shift }; d])
    });
    out.push(match poisson {
        Ok(op) => row_check(name, &op, Ok(oracle::poisson_dense(d, n as usize))),
        Err(e) => CheckResult::failed(name, &e),
    });

    let (c, alpha) = ([1.0, 1.0], [1.5, 1.5]);
    let name = "rows/riesz d=2 N=6";
    out.push(match build_riesz(2, 6, &c, &alpha) {
        Ok(p) => row_check(name, p.oracle.as_ref(), Ok(oracle::riesz_dense(6, &c, &alpha))),
        Err(e) => CheckResult::failed(name, &e),
    });

    let lambdas = [0.01, 0.01];
    let name = "rows/queueing d=2 N=8";
    out.push(match build_queueing(2, 8, 1.0, &lambdas, &[2, 4]) {
        Ok(p) => row_check(name, p.oracle.as_ref(), Ok(oracle::queueing_dense(8, 1.0, &lambdas, &[2, 4]))),
        Err(e) => CheckResult::failed(name, &e),
    });

    let name = "rows/pbn d=10";
    out.push(match build_pbn(10, &pbn_defaults::SHIFTS, &pbn_defaults::VALUES) {
        Ok(p) => row_check(
            name,
            p.oracle.as_ref(),
            oracle::pbn_dense(10, &pbn_defaults::SHIFTS, &pbn_defaults::VALUES),
        ),
        Err(e) => CheckResult::failed(name, &e),
    });
    out
}

/// `|a - b| / max(|a|, |b|, GRAD_FLOOR)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

fn central_difference(params: &[f64], p: usize, f: &mut impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
    let mut theta = params.to_vec();
    theta[p] = params[p] + FD_STEP;
    let up = f(&theta)?;
    theta[p] = params[p] - FD_STEP;
    let down = f(&theta)?;
    Ok((up - down) / (2.0 * FD_STEP))
}

/// Largest [`relative_gap`] between `forward_with_grad` and central
/// differences at `x`, over all parameters.
pub fn network_gradient_gap(net: &Network, x: &[f64]) -> Result<f64> {
    let (_, grad) = net.forward_with_grad(x)?;
    let arch = net.arch();
    let mut eval = |theta: &[f64]| Network::from_params(arch, theta.to_vec())?.forward(x);
    let mut worst: f64 = 0.0;
    for (p, g) in grad.iter().enumerate() {
        let fd = central_difference(net.params(), p, &mut eval)?;
        worst = worst.max(relative_gap(*g, fd));
    }
    Ok(worst)
}

fn random_arch(rng: &mut ChaCha8Rng) -> Architecture {
    Architecture {
        depth: rng.gen_range(2..=4),
        width: rng.gen_range(2..=8),
        input_dim: rng.gen_range(1..=5),
    }
}

/// Draws a network whose preactivations stay at least [`KINK_MARGIN`] away
/// from zero at every point in `points`, so central differences do not
/// straddle a ReLU kink.
fn smooth_network(arch: Architecture, points: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Network> {
    for _ in 0..10_000 {
        let net = Network::init(arch, InitScale::InverseSqrt, rng.gen())?;
        let mut ok = true;
        for x in points {
            if net.kink_margin(x)? < KINK_MARGIN {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(net);
        }
    }
    Err(Error::NoConvergence("no network away from ReLU kinks found".into()))
}

/// `count` random `(theta, x)` pairs; the result holds the worst gap.
pub fn network_gradient_check(count: usize, seed: u64) -> CheckResult {
    let name = format!("gradient/network x{count}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let arch = random_arch(&mut rng);
        let x: Vec<f64> = (0..arch.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let net = match smooth_network(arch, std::slice::from_ref(&x), &mut rng) {
            Ok(n) => n,
            Err(e) => return CheckResult::failed(name, &e),
        };
        match network_gradient_gap(&net, &x) {
            Ok(g) => worst = worst.max(g),
            Err(e) => return CheckResult::failed(name, &e),
        }
    }
    CheckResult::new(name, worst, GRAD_RTOL, format!("worst relative gap {worst:e}"))
}

/// Small problems exercising each loss kind.
fn loss_fixtures() -> Result<Vec<ProblemInstance>> {
    let mut p = build_poisson(2, 5)?;
    p.loss = LossSpec::NormPenalty {
        p: 2.0,
        epsilon: PENALTY_EPSILON,
    };
    Ok(vec![
        build_poisson(2, 5)?,
        build_riesz(2, 4, &[1.0, 0.5], &[1.5, 1.3])?,
        build_queueing(2, 4, 1.0, &[0.3, 0.2], &[1, 2])?,
        build_pbn(5, &pbn_defaults::SHIFTS, &pbn_defaults::VALUES)?,
        p,
    ])
}

/// Largest gap between the two analytic batch-gradient routes and central
/// differences of the batch loss.
pub fn batch_gradient_gap(
    instance: &ProblemInstance,
    net: &Network,
    batch: &[MultiIndex],
) -> Result<f64> {
    let op = instance.oracle.as_ref();
    let (v_fast, g_fast) = batch_loss_and_grad(op, &instance.grid, net, batch, &instance.loss)?;
    let (v_ref, g_ref) = batch_loss_and_grad_reference(op, &instance.grid, net, batch, &instance.loss)?;
    let mut worst = relative_gap(v_fast, v_ref);
    let arch = net.arch();
    let mut eval = |theta: &[f64]| {
        let trial = Network::from_params(arch, theta.to_vec())?;
        Ok(batch_loss_and_grad_reference(op, &instance.grid, &trial, batch, &instance.loss)?.0)
    };
    for p in 0..g_fast.len() {
        let fd = central_difference(net.params(), p, &mut eval)?;
        worst = worst.max(relative_gap(g_fast[p], fd)).max(relative_gap(g_ref[p], fd));
    }
    Ok(worst)
}

/// `count` random batch-loss gradient checks cycling over the loss kinds.
pub fn batch_gradient_check(count: usize, seed: u64) -> CheckResult {
    let name = format!("gradient/batch-loss x{count}");
    let run = || -> Result<f64> {
        let fixtures = loss_fixtures()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for i in 0..count {
            let inst = &fixtures[i % fixtures.len()];
            let shape = inst.shape();
            let points: Vec<Vec<f64>> = all_indices(shape)
                .map(|k| inst.grid.point_of(&k))
                .collect::<Result<_>>()?;
            let arch = Architecture {
                depth: rng.gen_range(2..=3),
                width: rng.gen_range(3..=6),
                input_dim: shape.d,
            };
            let net = smooth_network(arch, &points, &mut rng)?;
            let size = rng.gen_range(1..=8);
            let batch = sample_indices(&mut rng, size, shape.n, shape.d)?;
            worst = worst.max(batch_gradient_gap(inst, &net, &batch)?);
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => CheckResult::new(name, w, GRAD_RTOL, format!("worst relative gap {w:e}")),
        Err(e) => CheckResult::failed(name, &e),
    }
}

fn truth_samples(inst: &ProblemInstance) -> Result<DVector<f64>> {
    let truth = inst
        .truth
        .ok_or_else(|| Error::Contract("instance has no exact solution".into()))?;
    oracle::sample_truth(&inst.grid, |x| truth.eval(x))
}

/// `‖A x - b‖_∞` with `A x` formed through the row oracle.
fn matrix_free_residual(op: &dyn RowOracle, x: &DVector<f64>) -> Result<f64> {
    let shape = op.shape();
    let mut worst: f64 = 0.0;
    for k in all_indices(shape) {
        let row = op.row(&k)?;
        let mut acc = 0.0;
        for (col, a) in row.iter() {
            let c = (crate::grid::zeta(col, shape.n, shape.d)?.0 - 1) as usize;
            acc += a * x[c];
        }
        worst = worst.max((acc - op.rhs(&k)?).abs());
    }
    Ok(worst)
}

/// Dense solves of the manufactured systems recover the exact solution, and
/// their residual measured through the row oracle is tiny.
pub fn dense_solve_checks() -> Vec<CheckResult> {
    let cases: Vec<(&str, Result<ProblemInstance>)> = vec![
        ("dense-solve/poisson d=2 N=4", build_poisson(2, 4)),
        ("dense-solve/riesz d=2 N=6", build_riesz(2, 6, &[1.0, 1.0], &[1.5, 1.5])),
    ];
    let mut out = Vec::new();
    for (name, inst) in cases {
        let run = || -> Result<(f64, f64, f64)> {
            let inst = inst?;
            let sys = oracle::densify(inst.oracle.as_ref())?;
            let x = oracle::dense_solve(&sys)?;
            let err = (&x - truth_samples(&inst)?).amax();
            let res = oracle::residual_inf(&sys, &x) / (1.0 + sys.rhs.amax());
            let mf = matrix_free_residual(inst.oracle.as_ref(), &x)?;
            Ok((err, res, mf))
        };
        out.push(match run() {
            Ok((err, res, mf)) => {
                let worst = (err / 1e-10).max(res / 1e-8).max(mf / 1e-10);
                CheckResult::new(
                    name,
                    worst,
                    1.0,
                    format!("solution error {err:e}, scaled residual {res:e}, matrix-free residual {mf:e}"),
                )
            }
            Err(e) => CheckResult::failed(name, &e),
        });
    }
    out
}

/// `‖Phi - u‖_2 < ‖A^{-1}‖_2 sqrt(N^d L_full)` after a short training run on
/// Poisson `d = 2`, `N = 4`. Returns the check and the two sides.
pub fn residual_bound_check(iters: usize) -> (CheckResult, f64, f64) {
    let name = "bound/poisson d=2 N=4";
    let run = || -> Result<(f64, f64)> {
        let inst = build_poisson(2, 4)?;
        let cfg = TrainConfig {
            batch_size: 16,
            max_iters: iters,
            lr_start: 1e-2,
            lr_end: 1e-4,
            seed: 7,
            eval_every: iters.max(1),
            optimizer: OptimizerKind::AdaptiveMoment,
            init_scale: InitScale::InverseSqrt,
            threads: 1,
        };
        let arch = Architecture::new(3, 20, 2)?;
        let outcome = train(&inst, arch, &cfg).map_err(|f| f.error)?;
        let sys = oracle::densify(inst.oracle.as_ref())?;
        let u = oracle::dense_solve(&sys)?;
        let all: Vec<MultiIndex> = all_indices(inst.shape()).collect();
        let phi = crate::solver::evaluate_indices(&outcome.network, &inst.grid, &all)?;
        let err = (DVector::from_vec(phi) - u).norm();
        let inv = oracle::inverse_norm_2(&sys.matrix)?;
        let bound = residual_error_bound(inv, sys.n as f64, full_loss(&outcome.network, &inst)?);
        Ok((err, bound))
    };
    match run() {
        Ok((err, bound)) => {
            let mut c = CheckResult::new(name, err / bound, 1.0, format!("error {err:e}, bound {bound:e}"));
            c.passed = err < bound;
            (c, err, bound)
        }
        Err(e) => (CheckResult::failed(name, &e), f64::NAN, f64::NAN),
    }
}

/// Columns of the normalized PBN transition matrix, recovered from the
/// matrix-free `I - T`, sum to 1.
pub fn pbn_column_sum_check() -> CheckResult {
    let name = "pbn/column sums d=10";
    let run = || -> Result<f64> {
        let p = build_pbn(10, &pbn_defaults::SHIFTS, &pbn_defaults::VALUES)?;
        let m = oracle::densify_matrix(p.oracle.as_ref())?;
        let n = m.nrows();
        let t = DMatrix::<f64>::identity(n, n) - m;
        Ok(t.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max))
    };
    match run() {
        Ok(w) => CheckResult::new(name, w, 1e-12, format!("largest deviation {w:e}")),
        Err(e) => CheckResult::failed(name, &e),
    }
}

/// The queuing matrix has numerical rank `N^d - 1` and a null vector.
pub fn queueing_rank_check() -> CheckResult {
    let name = "queueing/rank d=2 N=8";
    let run = || -> Result<(usize, usize, f64)> {
        let q = build_queueing(2, 8, 1.0, &[0.01, 0.01], &[2, 4])?;
        let a = oracle::densify_matrix(q.oracle.as_ref())?;
        let rank = oracle::numerical_rank(&a);
        let v = oracle::dense_nullvec(&a)?;
        Ok((rank, a.nrows(), (&a * v).norm() / a.norm()))
    };
    match run() {
        Ok((rank, n, rel)) => {
            let mut c = CheckResult::new(
                name,
                rel,
                1e-8,
                format!("rank {rank} of {n}, relative null residual {rel:e}"),
            );
            c.passed &= rank + 1 == n;
            c
        }
        Err(e) => CheckResult::failed(name, &e),
    }
}

/// The power-iteration stationary vector is a null vector of `I - T`.
pub fn stationary_check() -> CheckResult {
    let name = "pbn/stationary d=10";
    let run = || -> Result<f64> {
        let t = oracle::pbn_transition_dense(10, &pbn_defaults::SHIFTS, &pbn_defaults::VALUES)?;
        let u = oracle::stationary_distribution(&t)?;
        Ok((&t * &u - &u).amax() / u.amax())
    };
    match run() {
        Ok(w) => CheckResult::new(name, w, 1e-9, format!("relative fixed-point defect {w:e}")),
        Err(e) => CheckResult::failed(name, &e),
    }
}

/// The full suite.
pub fn run_all(fault: Fault) -> Vec<CheckResult> {
    let mut out = row_equality_checks(fault);
    out.push(network_gradient_check(100, 11));
    out.push(batch_gradient_check(20, 12));
    out.extend(dense_solve_checks());
    out.push(residual_bound_check(500).0);
    out.push(pbn_column_sum_check());
    out.push(queueing_rank_check());
    out.push(stationary_check());
    out
}

//! Test-set metrics, the residual error bound and solution slices.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fnn::{Architecture, Network};
use crate::grid::{all_indices, sample_indices, GridSpec, MultiIndex, Shape};
use crate::operator::RowOracle;
use crate::problems::ProblemInstance;
use crate::solver::{evaluate_indices, TrainConfig};

pub const DEFAULT_N_TEST: usize = 10_000;

/// Grids up to this many points are scanned exhaustively by [`argmax_scan`].
pub const EXHAUSTIVE_LIMIT: u128 = 1 << 20;

/// Indices at which errors and residuals are measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub indices: Vec<MultiIndex>,
}

impl TestSet {
    /// `n_test` indices drawn uniformly with replacement from a random
    /// stream separate from training, or every index once when the grid has
    /// fewer than `n_test` points.
    pub fn draw(shape: Shape, n_test: usize, seed: u64) -> Result<Self> {
        if n_test == 0 {
            return Err(param("test set size must be at least 1"));
        }
        if let Some(total) = shape.total() {
            if total < n_test as u128 {
                return Ok(TestSet {
                    indices: all_indices(shape).collect(),
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Ok(TestSet {
            indices: sample_indices(&mut rng, n_test, shape.n, shape.d)?,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn pointwise_errors(net: &Network, instance: &ProblemInstance, test: &TestSet) -> Result<Vec<f64>> {
    let truth = instance
        .truth
        .ok_or_else(|| Error::Contract(format!("{} has no exact solution", instance.label)))?;
    if test.is_empty() {
        return Err(param("empty test set"));
    }
    let phi = evaluate_indices(net, &instance.grid, &test.indices)?;
    let mut point = vec![0.0; instance.grid.dim()];
    Ok(test
        .indices
        .iter()
        .zip(phi)
        .map(|(k, v)| {
            instance.grid.write_point(k, &mut point);
            truth.eval(&point) - v
        })
        .collect())
}

/// `max_T |u(x) - phi(x)|`.
pub fn error_inf(net: &Network, instance: &ProblemInstance, test: &TestSet) -> Result<f64> {
    Ok(pointwise_errors(net, instance, test)?
        .into_iter()
        .fold(0.0, |m, e| m.max(e.abs())))
}

/// `(|T|^{-1} sum_T |u(x) - phi(x)|^2)^{1/2}`.
pub fn error_l2(net: &Network, instance: &ProblemInstance, test: &TestSet) -> Result<f64> {
    let errs = pointwise_errors(net, instance, test)?;
    Ok((errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt())
}

/// `b_k - a_k^T Phi` for each row, with `Phi` evaluated once per distinct
/// grid point touched by the rows.
pub fn residuals(
    net: &Network,
    oracle: &dyn RowOracle,
    grid: &GridSpec,
    rows: &[MultiIndex],
) -> Result<Vec<f64>> {
    let mut slots: HashMap<MultiIndex, usize> = HashMap::new();
    let mut points = Vec::new();
    let mut row_entries = Vec::with_capacity(rows.len());
    for k in rows {
        let row = oracle.row(k)?;
        let b = oracle.rhs(k)?;
        let entries: Vec<(usize, f64)> = row
            .iter()
            .map(|(col, a)| {
                let s = *slots.entry(col.clone()).or_insert_with(|| {
                    points.push(col.clone());
                    points.len() - 1
                });
                (s, a)
            })
            .collect();
        row_entries.push((b, entries));
    }
    let phi = evaluate_indices(net, grid, &points)?;
    Ok(row_entries
        .into_iter()
        .map(|(b, entries)| b - entries.iter().fold(0.0, |acc, (s, a)| acc + a * phi[*s]))
        .collect())
}

/// `(|T|^{-1} sum_{k in T} |b_k - a_k^T Phi|^2)^{1/2}`.
pub fn residual_l2(net: &Network, instance: &ProblemInstance, test: &TestSet) -> Result<f64> {
    if test.is_empty() {
        return Err(param("empty test set"));
    }
    let r = residuals(net, instance.oracle.as_ref(), &instance.grid, &test.indices)?;
    Ok((r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt())
}

/// The plain loss `N^{-d} ||A Phi - b||^2` over every row. Only for grids
/// small enough to enumerate.
pub fn full_loss(net: &Network, instance: &ProblemInstance) -> Result<f64> {
    let shape = instance.shape();
    match shape.total() {
        Some(t) if t <= EXHAUSTIVE_LIMIT => {}
        _ => return Err(param("the full loss is only available on enumerable grids")),
    }
    let rows: Vec<MultiIndex> = all_indices(shape).collect();
    let r = residuals(net, instance.oracle.as_ref(), &instance.grid, &rows)?;
    Ok(r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64)
}

/// `||A^{-1}||_2 sqrt(N^d L)`, an upper bound on `||Phi - u||_2`.
pub fn residual_error_bound(inv_norm: f64, system_size: f64, full_loss: f64) -> f64 {
    inv_norm * (system_size * full_loss).sqrt()
}

/// `phi` on the plane through `fixed` spanned by dimensions `p` and `q`
/// (0-based). Entry `[i][j]` has `i_p = i + 1` and `i_q = j + 1`.
pub fn slice_2d(
    net: &Network,
    grid: &GridSpec,
    fixed: &MultiIndex,
    free_dims: (usize, usize),
) -> Result<Vec<Vec<f64>>> {
    let shape = grid.shape();
    shape.check(fixed)?;
    let (p, q) = free_dims;
    if p == q || p >= shape.d || q >= shape.d {
        return Err(param(format!("invalid slice dimensions ({p}, {q}) for d={}", shape.d)));
    }
    let mut point = grid.point_of(fixed)?;
    (1..=shape.n)
        .map(|i| {
            point[p] = grid.coords(p)[i as usize - 1];
            (1..=shape.n)
                .map(|j| {
                    point[q] = grid.coords(q)[j as usize - 1];
                    net.forward(&point)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArgmaxStrategy {
    /// Best of `samples` uniform draws, refined by coordinate ascent.
    Sampled { samples: usize, seed: u64 },
    /// Exhaustive when the grid has at most [`EXHAUSTIVE_LIMIT`] points,
    /// otherwise as `Sampled`.
    ExhaustiveIfSmall { samples: usize, seed: u64 },
}

/// Location and value of the largest `phi` over the grid (exact for
/// exhaustive scans, a local maximum otherwise).
pub fn argmax_scan(net: &Network, grid: &GridSpec, strategy: ArgmaxStrategy) -> Result<(MultiIndex, f64)> {
    let shape = grid.shape();
    let (samples, seed) = match strategy {
        ArgmaxStrategy::ExhaustiveIfSmall { samples, seed } => {
            if matches!(shape.total(), Some(t) if t <= EXHAUSTIVE_LIMIT) {
                let all: Vec<MultiIndex> = all_indices(shape).collect();
                let values = evaluate_indices(net, grid, &all)?;
                return Ok(best_of(all, values));
            }
            (samples, seed)
        }
        ArgmaxStrategy::Sampled { samples, seed } => (samples, seed),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = sample_indices(&mut rng, samples.max(1), shape.n, shape.d)?;
    let values = evaluate_indices(net, grid, &draws)?;
    let (mut best, mut best_value) = best_of(draws, values);

    // Coordinate ascent: scan one dimension at a time, move while improving.
    loop {
        let mut improved = false;
        for dim in 0..shape.d {
            let line: Vec<MultiIndex> = (1..=shape.n).map(|i| best.with(dim, i)).collect();
            let values = evaluate_indices(net, grid, &line)?;
            let (cand, v) = best_of(line, values);
            if v > best_value {
                best = cand;
                best_value = v;
                improved = true;
            }
        }
        if !improved {
            return Ok((best, best_value));
        }
    }
}

fn best_of(indices: Vec<MultiIndex>, values: Vec<f64>) -> (MultiIndex, f64) {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    (indices[best].clone(), values[best])
}

/// Final metrics of a run, serialized as JSON by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub n_test: usize,
    pub e_inf: Option<f64>,
    pub e_l2: Option<f64>,
    pub res_l2: f64,
    pub architecture: Architecture,
    pub param_count: usize,
    pub config: TrainConfig,
}

impl EvalReport {
    pub fn compute(
        net: &Network,
        instance: &ProblemInstance,
        test: &TestSet,
        config: &TrainConfig,
    ) -> Result<Self> {
        let (e_inf, e_l2) = if instance.truth.is_some() {
            (
                Some(error_inf(net, instance, test)?),
                Some(error_l2(net, instance, test)?),
            )
        } else {
            (None, None)
        };
        Ok(EvalReport {
            label: instance.label.clone(),
            n_test: test.len(),
            e_inf,
            e_l2,
            res_l2: residual_l2(net, instance, test)?,
            architecture: net.arch(),
            param_count: net.arch().param_count(),
            config: config.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_poisson, build_queueing};

    /// phi(x) = c for every x: zero first layer, bias 1, output weight c.
    fn constant(d: usize, c: f64) -> Network {
        let arch = Architecture::new(2, 1, d).unwrap();
        let mut p = vec![0.0; arch.param_count()];
        p[d] = 1.0;
        p[d + 1] = c;
        Network::from_params(arch, p).unwrap()
    }

    #[test]
    fn test_set_draws() {
        let shape = Shape::new(100, 3).unwrap();
        let a = TestSet::draw(shape, 500, 4).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, TestSet::draw(shape, 500, 4).unwrap());
        let tiny = TestSet::draw(Shape::new(4, 2).unwrap(), 10_000, 4).unwrap();
        assert_eq!(tiny.len(), 16);
    }

    #[test]
    fn metrics_on_hand_built_sets() {
        let inst = build_poisson(1, 3).unwrap();
        // Truth at x = 0 is 0 and at x = 0.5 is 1.
        let test = TestSet {
            indices: vec![MultiIndex(vec![2]), MultiIndex(vec![3])],
        };
        let net = constant(1, 0.25);
        let e_inf = error_inf(&net, &inst, &test).unwrap();
        let e_l2 = error_l2(&net, &inst, &test).unwrap();
        assert!((e_inf - 0.75).abs() < 1e-15);
        assert!((e_l2 - ((0.0625 + 0.5625) / 2.0f64).sqrt()).abs() < 1e-15);
        assert!(e_l2 <= e_inf);
    }

    #[test]
    fn constant_offset() {
        // On the single-point grid truth is sin(0) = 0.
        let inst = build_poisson(2, 1).unwrap();
        let test = TestSet::draw(inst.shape(), 10, 0).unwrap();
        let net = constant(2, -0.3);
        assert!((error_inf(&net, &inst, &test).unwrap() - 0.3).abs() < 1e-15);
        assert!((error_l2(&net, &inst, &test).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn missing_truth_is_a_contract_error() {
        let inst = build_queueing(2, 4, 1.0, &[0.01; 2], &[1, 2]).unwrap();
        let test = TestSet::draw(inst.shape(), 5, 0).unwrap();
        let net = constant(2, 0.0);
        assert!(matches!(error_inf(&net, &inst, &test), Err(Error::Contract(_))));
        // The trivial solution has zero residual.
        assert_eq!(residual_l2(&net, &inst, &test).unwrap(), 0.0);
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(residual_error_bound(3.0, 100.0, 0.0), 0.0);
        assert!((residual_error_bound(2.0, 100.0, 1e-6) - 2e-2).abs() < 1e-15);
    }

    #[test]
    fn slices() {
        let grid = GridSpec::interior_uniform(3, 4, 0.0, 1.0).unwrap();
        let net = constant(3, 1.5);
        let s = slice_2d(&net, &grid, &MultiIndex(vec![1, 2, 3]), (0, 2)).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().flatten().all(|v| *v == 1.5));
        assert!(slice_2d(&net, &grid, &MultiIndex(vec![1, 2, 3]), (1, 1)).is_err());

        let arch = Architecture::new(3, 5, 3).unwrap();
        let net = Network::init(arch, crate::fnn::InitScale::InverseSqrt, 2).unwrap();
        let fixed = MultiIndex(vec![2, 3, 4]);
        let s = slice_2d(&net, &grid, &fixed, (2, 0)).unwrap();
        for i in 0..4u32 {
            for j in 0..4u32 {
                let idx = fixed.with(2, i + 1).with(0, j + 1);
                let v = net.forward(&grid.point_of(&idx).unwrap()).unwrap();
                assert!((s[i as usize][j as usize] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn argmax_single_point() {
        let grid = GridSpec::explicit(2, vec![vec![0.3], vec![0.7]]).unwrap();
        let net = constant(2, 2.0);
        let strategy = ArgmaxStrategy::Sampled { samples: 3, seed: 1 };
        let (idx, v) = argmax_scan(&net, &grid, strategy).unwrap();
        assert_eq!(idx, MultiIndex::ones(2));
        assert_eq!(v, 2.0);
    }
}

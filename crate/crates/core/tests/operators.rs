//! Row oracles against dense matrices built independently from the
//! defining formulas.

use nalgebra::DMatrix;
use neurolin::grid::{all_indices, MultiIndex};
use neurolin::operator::{MatrixRows, PbnOperator};
use neurolin::oracle;
use neurolin::problems::{build_pbn, build_poisson, build_queueing, build_riesz, pbn_defaults};
use neurolin::verify::{row_equality_checks, row_mismatches, Fault};
use proptest::prelude::*;

fn assert_rows_match<M: MatrixRows + ?Sized>(op: &M, dense: &DMatrix<f64>) {
    let (count, worst) = row_mismatches(op, dense).unwrap();
    assert_eq!(count, 0, "{count} entries differ, largest by {worst:e}");
}

fn rows_are_distinct_and_bounded<M: MatrixRows + ?Sized>(op: &M) {
    let bound = op.nnz_per_row_bound();
    for k in all_indices(op.shape()) {
        let row = op.row(&k).unwrap();
        assert!(row.len() <= bound, "row {k} has {} > {bound} entries", row.len());
        let mut cols: Vec<&MultiIndex> = row.entries().iter().map(|(c, _)| c).collect();
        cols.sort();
        cols.dedup();
        assert_eq!(cols.len(), row.len(), "duplicate column in row {k}");
    }
}

#[test]
fn reference_sizes_match_bit_exactly() {
    for check in row_equality_checks(Fault::None) {
        assert!(check.passed, "{}: {}", check.name, check.detail);
    }
}

#[test]
fn injected_fault_is_caught() {
    let checks = row_equality_checks(Fault::PoissonDiagonal(1e-9));
    assert!(!checks[0].passed);
    assert!(checks[1..].iter().all(|c| c.passed));
}

#[test]
fn poisson_d3_manufactured_rhs_equals_dense_product() {
    let p = build_poisson(3, 5).unwrap();
    let sys = oracle::densify(p.oracle.as_ref()).unwrap();
    let v = oracle::sample_truth(&p.grid, |x| p.truth.unwrap().eval(x)).unwrap();
    let gap = (&sys.matrix * &v - &sys.rhs).amax();
    assert!(gap <= 1e-12 * sys.rhs.amax(), "gap {gap:e}");
}

#[test]
fn pbn_d10_structure() {
    let p = build_pbn(10, &pbn_defaults::SHIFTS, &pbn_defaults::VALUES).unwrap();
    assert_eq!(p.oracle.nnz_per_row_bound(), 5);
    rows_are_distinct_and_bounded(p.oracle.as_ref());
    let t = oracle::pbn_transition_dense(10, &pbn_defaults::SHIFTS, &pbn_defaults::VALUES).unwrap();
    for (j, col) in t.column_iter().enumerate() {
        assert!((col.sum() - 1.0).abs() <= 1e-12, "column {j} sums to {}", col.sum());
    }
}

#[test]
fn pbn_shift_limits() {
    assert!(PbnOperator::new(3, &[8], &[1.0]).is_err());
    assert!(PbnOperator::new(3, &[7, -7], &[1.0, 1.0]).is_err());
    assert!(PbnOperator::new(3, &[0, 7], &[1.0, 1.0]).is_ok());
    assert!(build_pbn(3, &[0, 4], &[1.0, 1.0]).is_err());
    assert!(build_pbn(3, &[0, 3], &[1.0, 1.0]).is_ok());
}

fn alpha_strategy() -> impl Strategy<Value = f64> {
    (1.01f64..1.99).prop_map(|a| (a * 1000.0).round() / 1000.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn poisson_rows(d in 1usize..=3, n in 2u32..=6) {
        let p = build_poisson(d, n).unwrap();
        assert_rows_match(p.oracle.as_ref(), &oracle::poisson_dense(d, n as usize));
        rows_are_distinct_and_bounded(p.oracle.as_ref());
        prop_assert!(p.oracle.nnz_per_row_bound() <= 2 * d + 1);
    }

    #[test]
    fn riesz_rows(
        n in 2u32..=8,
        params in proptest::collection::vec((0.1f64..3.0, alpha_strategy()), 1..=2),
    ) {
        let (c, alpha): (Vec<f64>, Vec<f64>) = params.into_iter().unzip();
        let p = build_riesz(c.len(), n, &c, &alpha).unwrap();
        assert_rows_match(p.oracle.as_ref(), &oracle::riesz_dense(n as usize, &c, &alpha));
        rows_are_distinct_and_bounded(p.oracle.as_ref());
        prop_assert!(p.oracle.nnz_per_row_bound() <= c.len() * (n as usize - 1) + 1);
    }

    #[test]
    fn riesz_rhs_is_dense_product(n in 2u32..=7, alpha in alpha_strategy()) {
        let p = build_riesz(2, n, &[1.0, 0.5], &[alpha, 1.5]).unwrap();
        let sys = oracle::densify(p.oracle.as_ref()).unwrap();
        let v = oracle::sample_truth(&p.grid, |x| p.truth.unwrap().eval(x)).unwrap();
        let scale = sys.matrix.amax() * v.amax() * n as f64;
        prop_assert!((&sys.matrix * &v - &sys.rhs).amax() <= 1e-12 * scale);
    }

    #[test]
    fn queueing_rows_and_generator_columns(
        d in 1usize..=3,
        extra in 0u32..=3,
        alpha in 0.5f64..2.0,
        rates in proptest::collection::vec((0.001f64..0.5, 1u32..=6), 3),
    ) {
        let n = (d as u32).max(2) + extra;
        let lambdas: Vec<f64> = rates[..d].iter().map(|r| r.0).collect();
        // The saturated last row assumes s <= N - 1.
        let servers: Vec<u32> = rates[..d].iter().map(|r| r.1.min(n - 1)).collect();
        let p = build_queueing(d, n, alpha, &lambdas, &servers).unwrap();
        let s: Vec<usize> = servers.iter().map(|&s| s as usize).collect();
        let dense = oracle::queueing_dense(n as usize, alpha, &lambdas, &s);
        assert_rows_match(p.oracle.as_ref(), &dense);
        rows_are_distinct_and_bounded(p.oracle.as_ref());
        prop_assert!(p.oracle.nnz_per_row_bound() <= 2 * d + 1 + 2 * d * (d - 1));
        let scale = dense.amax();
        for col in dense.column_iter() {
            prop_assert!(col.sum().abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn pbn_rows_and_stochastic_columns(
        d in 3usize..=8,
        raw in proptest::collection::btree_map(-200i64..200, 0.1f64..5.0, 1..=5),
    ) {
        let half = 1i64 << (d - 1);
        let mut pairs: Vec<(i64, f64)> = raw.into_iter().map(|(s, v)| (s % half, v)).collect();
        pairs.sort_by_key(|p| p.0);
        pairs.dedup_by_key(|p| p.0);
        if !pairs.iter().any(|p| p.0 == 0) {
            pairs.push((0, 1.0));
        }
        let (shifts, values): (Vec<i64>, Vec<f64>) = pairs.into_iter().unzip();
        let p = build_pbn(d, &shifts, &values).unwrap();
        assert_rows_match(p.oracle.as_ref(), &oracle::pbn_dense(d, &shifts, &values).unwrap());
        rows_are_distinct_and_bounded(p.oracle.as_ref());
        let t = oracle::pbn_transition_dense(d, &shifts, &values).unwrap();
        for col in t.column_iter() {
            prop_assert!((col.sum() - 1.0).abs() <= 1e-12);
        }
    }
}

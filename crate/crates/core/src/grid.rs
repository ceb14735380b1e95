//! Cartesian tensor grids and index arithmetic.
//!
//! Grid points, matrix rows and vector entries are addressed by a
//! [`MultiIndex`] `(i_1, ..., i_d)` with 1-based entries. The lexicographic
//! position of a multi-index (its [`FlatIndex`]) can exceed 64 bits for the
//! systems this crate targets, so flat indices are `u128` and every
//! conversion is checked.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, range, Result};

/// Number of points per dimension and number of dimensions of a square
/// tensor grid with `n^d` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: u32,
    pub d: usize,
}

impl Shape {
    pub fn new(n: u32, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(param("points per dimension must be at least 1"));
        }
        if d == 0 {
            return Err(param("dimension must be at least 1"));
        }
        Ok(Shape { n, d })
    }

    /// Total number of points `n^d`, or `None` if it does not fit in `u128`.
    pub fn total(&self) -> Option<u128> {
        let mut acc: u128 = 1;
        for _ in 0..self.d {
            acc = acc.checked_mul(self.n as u128)?;
        }
        Some(acc)
    }

    /// `n^d` as an `f64`; always finite for realistic shapes.
    pub fn total_f64(&self) -> f64 {
        (self.n as f64).powi(self.d as i32)
    }

    /// Whether `idx` addresses a point of this shape.
    pub fn contains(&self, idx: &MultiIndex) -> bool {
        idx.len() == self.d && idx.0.iter().all(|&i| i >= 1 && i <= self.n)
    }

    pub fn check(&self, idx: &MultiIndex) -> Result<()> {
        if idx.len() != self.d {
            return Err(range(format!(
                "index has {} entries, grid dimension is {}",
                idx.len(),
                self.d
            )));
        }
        if let Some(pos) = idx.0.iter().position(|&i| i < 1 || i > self.n) {
            return Err(range(format!(
                "entry {} of {} is outside 1..={}",
                pos + 1,
                idx,
                self.n
            )));
        }
        Ok(())
    }
}

/// Position of a grid point, 1-based in every dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    /// The first point `(1, ..., 1)`.
    pub fn ones(d: usize) -> Self {
        MultiIndex(vec![1; d])
    }

    pub fn filled(d: usize, value: u32) -> Self {
        MultiIndex(vec![value; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// Copy of `self` with dimension `dim` (0-based) replaced by `value`.
    pub fn with(&self, dim: usize, value: u32) -> Self {
        let mut out = self.clone();
        out.0[dim] = value;
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// 1-based lexicographic position of a multi-index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlatIndex(pub u128);

impl fmt::Display for FlatIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Lexicographic position `sum_k (i_k - 1) n^(d-k) + 1`.
///
/// Fails with a range error if `idx` is invalid for `(n, d)` or if the
/// position does not fit in 128 bits.
pub fn zeta(idx: &MultiIndex, n: u32, d: usize) -> Result<FlatIndex> {
    let shape = Shape::new(n, d)?;
    shape.check(idx)?;
    let overflow = || range(format!("flat position of {idx} exceeds 128 bits"));
    let mut acc: u128 = 0;
    for &i in &idx.0 {
        acc = acc
            .checked_mul(n as u128)
            .and_then(|a| a.checked_add((i - 1) as u128))
            .ok_or_else(overflow)?;
    }
    acc.checked_add(1).map(FlatIndex).ok_or_else(overflow)
}

/// Inverse of [`zeta`].
pub fn unzeta(flat: FlatIndex, n: u32, d: usize) -> Result<MultiIndex> {
    Shape::new(n, d)?;
    if flat.0 == 0 {
        return Err(range("flat indices start at 1"));
    }
    let base = n as u128;
    let mut rest = flat.0 - 1;
    let mut entries = vec![0u32; d];
    for slot in entries.iter_mut().rev() {
        *slot = (rest % base) as u32 + 1;
        rest /= base;
    }
    if rest != 0 {
        return Err(range(format!("flat index {flat} exceeds {n}^{d}")));
    }
    Ok(MultiIndex(entries))
}

/// Draws `count` multi-indices with every entry independently uniform on
/// `1..=n` (sampling with replacement).
pub fn sample_indices<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    n: u32,
    d: usize,
) -> Result<Vec<MultiIndex>> {
    Shape::new(n, d)?;
    if count == 0 {
        return Err(param("sample count must be at least 1"));
    }
    Ok((0..count)
        .map(|_| MultiIndex((0..d).map(|_| rng.gen_range(1..=n)).collect()))
        .collect())
}

/// Iterates over every multi-index of `shape` in lexicographic order.
///
/// Only sensible for small grids; the caller is responsible for the size.
pub fn all_indices(shape: Shape) -> impl Iterator<Item = MultiIndex> {
    let Shape { n, d } = shape;
    let mut next = Some(MultiIndex::ones(d));
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut succ = current.clone();
        let mut k = d;
        while k > 0 {
            k -= 1;
            if succ.0[k] < n {
                succ.0[k] += 1;
                next = Some(succ);
                break;
            }
            succ.0[k] = 1;
        }
        Some(current)
    })
}

/// A tensor grid `x_{i_1} x ... x x_{i_d}` on a box, with the same number
/// of points in every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    coords: Vec<Vec<f64>>,
    bounds: Vec<(f64, f64)>,
}

impl GridSpec {
    /// Interior points `lo + i h`, `i = 1..=n`, with `h = (hi - lo)/(n + 1)`;
    /// the box endpoints are excluded.
    pub fn interior_uniform(d: usize, n: u32, lo: f64, hi: f64) -> Result<Self> {
        Shape::new(n, d)?;
        check_bounds(lo, hi)?;
        let h = (hi - lo) / (n as f64 + 1.0);
        let line: Vec<f64> = (1..=n).map(|i| lo + i as f64 * h).collect();
        Ok(GridSpec {
            coords: vec![line; d],
            bounds: vec![(lo, hi); d],
        })
    }

    /// Points `lo + (i - 1)(hi - lo)/(n - 1)`, `i = 1..=n`, endpoints included.
    pub fn endpoint_uniform(d: usize, n: u32, lo: f64, hi: f64) -> Result<Self> {
        Shape::new(n, d)?;
        check_bounds(lo, hi)?;
        if n < 2 {
            return Err(param("an endpoint-inclusive grid needs at least 2 points"));
        }
        let step = (hi - lo) / (n as f64 - 1.0);
        let line: Vec<f64> = (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
            .collect();
        Ok(GridSpec {
            coords: vec![line; d],
            bounds: vec![(lo, hi); d],
        })
    }

    /// Wraps explicitly given per-dimension coordinates. The bounds are the
    /// smallest box containing them.
    pub fn explicit(d: usize, per_dim: Vec<Vec<f64>>) -> Result<Self> {
        if d == 0 || per_dim.len() != d {
            return Err(param(format!(
                "expected {d} coordinate lists, got {}",
                per_dim.len()
            )));
        }
        let n = per_dim[0].len();
        if n == 0 || n > u32::MAX as usize {
            return Err(param("coordinate lists must be nonempty"));
        }
        let mut bounds = Vec::with_capacity(d);
        for (k, line) in per_dim.iter().enumerate() {
            if line.len() != n {
                return Err(param("every dimension must have the same number of points"));
            }
            if line.iter().any(|x| !x.is_finite()) {
                return Err(param(format!("non-finite coordinate in dimension {}", k + 1)));
            }
            if line.windows(2).any(|w| w[0] >= w[1]) {
                return Err(param(format!(
                    "coordinates of dimension {} are not strictly increasing",
                    k + 1
                )));
            }
            bounds.push((line[0], line[n - 1]));
        }
        Ok(GridSpec {
            coords: per_dim,
            bounds,
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn points_per_dim(&self) -> u32 {
        self.coords[0].len() as u32
    }

    pub fn shape(&self) -> Shape {
        Shape {
            n: self.points_per_dim(),
            d: self.dim(),
        }
    }

    pub fn coords(&self, dim: usize) -> &[f64] {
        &self.coords[dim]
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// The grid point `(x_{i_1}, ..., x_{i_d})`.
    pub fn point_of(&self, idx: &MultiIndex) -> Result<Vec<f64>> {
        self.shape().check(idx)?;
        let mut out = vec![0.0; self.dim()];
        self.write_point(idx, &mut out);
        Ok(out)
    }

    /// Writes the coordinates of a validated index into `out`.
    ///
    /// Panics if `idx` is out of range; hot paths validate once upstream.
    pub fn write_point(&self, idx: &MultiIndex, out: &mut [f64]) {
        for ((slot, line), &i) in out.iter_mut().zip(&self.coords).zip(&idx.0) {
            *slot = line[(i - 1) as usize];
        }
    }
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(param(format!("invalid bounds [{lo}, {hi}]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn interior_grid_examples() {
        let g = GridSpec::interior_uniform(1, 3, -1.0, 1.0).unwrap();
        assert_eq!(g.coords(0), &[-0.5, 0.0, 0.5]);

        let g = GridSpec::interior_uniform(2, 1, 0.0, 1.0).unwrap();
        assert_eq!(g.coords(0), &[0.5]);
        assert_eq!(g.coords(1), &[0.5]);

        let g = GridSpec::interior_uniform(1, 9, -1.0, 1.0).unwrap();
        assert!((g.coords(0)[0] + 0.8).abs() < 1e-15);
        assert!((g.coords(0)[1] - g.coords(0)[0] - 0.2).abs() < 1e-15);

        assert!(GridSpec::interior_uniform(1, 0, -1.0, 1.0).is_err());
        assert!(GridSpec::interior_uniform(1, 3, 1.0, 1.0).is_err());
    }

    #[test]
    fn endpoint_grid_covers_box() {
        let g = GridSpec::endpoint_uniform(2, 5, 0.0, 1.0).unwrap();
        assert_eq!(g.coords(1), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(GridSpec::endpoint_uniform(1, 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn explicit_grid() {
        let third = 1.0 / 3.0;
        let g = GridSpec::explicit(2, vec![vec![third, 2.0 * third]; 2]).unwrap();
        assert_eq!(g.point_of(&mi(&[1, 2])).unwrap(), vec![third, 2.0 * third]);

        let single = GridSpec::explicit(1, vec![vec![0.0]]).unwrap();
        assert_eq!(single.points_per_dim(), 1);

        assert!(GridSpec::explicit(1, vec![vec![0.5, 0.2]]).is_err());
        assert!(GridSpec::explicit(2, vec![vec![0.5]]).is_err());
    }

    #[test]
    fn point_lookup() {
        let g = GridSpec::interior_uniform(1, 3, -1.0, 1.0).unwrap();
        assert_eq!(g.point_of(&mi(&[2])).unwrap(), vec![0.0]);
        let g2 = GridSpec::interior_uniform(2, 3, -1.0, 1.0).unwrap();
        assert_eq!(g2.point_of(&mi(&[1, 1])).unwrap(), vec![-0.5, -0.5]);
        assert!(g2.point_of(&mi(&[0, 1])).is_err());
        assert!(g2.point_of(&mi(&[1, 4])).is_err());
        assert!(g2.point_of(&mi(&[1])).is_err());
    }

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta(&mi(&[1, 1, 1]), 7, 3).unwrap(), FlatIndex(1));
        assert_eq!(zeta(&mi(&[2, 3]), 3, 2).unwrap(), FlatIndex(6));
        assert_eq!(zeta(&mi(&[5, 5, 5, 5]), 5, 4).unwrap(), FlatIndex(625));
        assert_eq!(unzeta(FlatIndex(6), 3, 2).unwrap(), mi(&[2, 3]));
        assert_eq!(unzeta(FlatIndex(1), 4, 3).unwrap(), mi(&[1, 1, 1]));
        assert_eq!(unzeta(FlatIndex(64), 4, 3).unwrap(), mi(&[4, 4, 4]));
    }

    #[test]
    fn zeta_range_errors() {
        assert!(zeta(&mi(&[4, 1]), 3, 2).is_err());
        assert!(unzeta(FlatIndex(0), 3, 2).is_err());
        assert!(unzeta(FlatIndex(10), 3, 2).is_err());
        // 10^4^10 = 10^40 does not fit in 128 bits.
        let last = MultiIndex::filled(10, 10_000);
        assert!(matches!(zeta(&last, 10_000, 10), Err(crate::Error::Range(_))));
        // 2^128 does not either, but 2^127 does.
        assert!(zeta(&MultiIndex::filled(128, 2), 2, 128).is_err());
        assert_eq!(
            zeta(&MultiIndex::filled(127, 2), 2, 127).unwrap(),
            FlatIndex(1u128 << 127)
        );
    }

    #[test]
    fn large_positions_fit() {
        let last = MultiIndex::filled(6, 10_000);
        assert_eq!(zeta(&last, 10_000, 6).unwrap(), FlatIndex(10u128.pow(24)));
        let last = MultiIndex::filled(100, 2);
        assert_eq!(zeta(&last, 2, 100).unwrap(), FlatIndex(1u128 << 100));
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let shape = Shape::new(3, 2).unwrap();
        let all: Vec<_> = all_indices(shape).collect();
        assert_eq!(all.len(), 9);
        for (pos, idx) in all.iter().enumerate() {
            assert_eq!(zeta(idx, 3, 2).unwrap(), FlatIndex(pos as u128 + 1));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_indices(&mut ChaCha8Rng::seed_from_u64(7), 50, 10, 4).unwrap();
        let b = sample_indices(&mut ChaCha8Rng::seed_from_u64(7), 50, 10, 4).unwrap();
        assert_eq!(a, b);
        let ones = sample_indices(&mut ChaCha8Rng::seed_from_u64(1), 20, 1, 3).unwrap();
        assert!(ones.iter().all(|i| *i == MultiIndex::ones(3)));
        assert!(sample_indices(&mut ChaCha8Rng::seed_from_u64(1), 0, 3, 3).is_err());
    }

    #[test]
    fn sampling_frequency_two_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let s = sample_indices(&mut rng, 100_000, 2, 1).unwrap();
        let ones = s.iter().filter(|i| i.0[0] == 1).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.02, "frequency {ones}");
    }

    #[test]
    fn sampled_flat_positions_are_uniform() {
        // 27 cells, 27_000 draws: chi-square with 26 dof; 99.9% quantile is ~54.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = sample_indices(&mut rng, 27_000, 3, 3).unwrap();
        let mut counts = [0f64; 27];
        for idx in &s {
            counts[(zeta(idx, 3, 3).unwrap().0 - 1) as usize] += 1.0;
        }
        let chi2: f64 = counts.iter().map(|c| (c - 1000.0).powi(2) / 1000.0).sum();
        assert!(chi2 < 54.0, "chi-square {chi2}");
    }

    fn index_strategy(n: u32, d: usize) -> impl Strategy<Value = MultiIndex> {
        proptest::collection::vec(1..=n, d).prop_map(MultiIndex)
    }

    proptest! {
        #[test]
        fn round_trip_huge_grid(idx in index_strategy(10_000, 6)) {
            let flat = zeta(&idx, 10_000, 6).unwrap();
            prop_assert!(flat.0 <= 10u128.pow(24));
            prop_assert_eq!(unzeta(flat, 10_000, 6).unwrap(), idx);
        }

        #[test]
        fn round_trip_binary(idx in index_strategy(2, 100)) {
            let flat = zeta(&idx, 2, 100).unwrap();
            prop_assert_eq!(unzeta(flat, 2, 100).unwrap(), idx);
        }

        #[test]
        fn zeta_is_monotone(a in index_strategy(5, 4), b in index_strategy(5, 4)) {
            let (za, zb) = (zeta(&a, 5, 4).unwrap(), zeta(&b, 5, 4).unwrap());
            prop_assert_eq!(a.cmp(&b), za.cmp(&zb));
        }
    }
}

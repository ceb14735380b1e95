//! Constructors for the four experiment families.
//!
//! Each constructor binds a grid, a row oracle, the optimization problem to
//! solve, the exact solution when one is known, and the default batch size
//! and iteration budget of the experiment. Memory use is `O(d N)`
//! regardless of the system size `N^d`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{GridSpec, MultiIndex, Shape};
use crate::operator::{
    KronSum, OverflowCoupling, PbnOperator, PoissonFactor, QueueingFactor, QueueingOperator,
    RhsSource, RieszFactor, RowOracle, System,
};
use crate::solver::LossSpec;

/// Known exact solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    /// `prod_i sin(pi x_i)`.
    SinProduct,
    /// `sin(sum_i x_i)`.
    SinSum,
}

impl Truth {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Truth::SinProduct => x.iter().map(|xi| (PI * xi).sin()).product(),
            Truth::SinSum => x.iter().sum::<f64>().sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Poisson,
    Riesz,
    Queueing,
    Pbn,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Poisson => "poisson",
            Family::Riesz => "riesz",
            Family::Queueing => "queueing",
            Family::Pbn => "pbn",
        })
    }
}

/// Batch size and iteration budget used by an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub batch_size: usize,
    pub max_iters: usize,
}

/// Default parameters of the queuing experiment.
pub mod queueing_defaults {
    pub const N: u32 = 100;
    pub const ALPHA: f64 = 1.0;
    pub const LAMBDA: f64 = 0.01;
    /// `s_n = 8 n`.
    pub fn servers(d: usize) -> Vec<u32> {
        (1..=d as u32).map(|n| 8 * n).collect()
    }
}

/// Default shift set and values of the Boolean network experiment.
pub mod pbn_defaults {
    pub const SHIFTS: [i64; 4] = [-13, -5, 2, 6];
    pub const VALUES: [f64; 4] = [1.0, 4.0, 3.0, 2.0];
}

pub const PENALTY_EPSILON: f64 = 1.0;

pub struct ProblemInstance {
    pub family: Family,
    pub label: String,
    pub grid: GridSpec,
    pub oracle: Box<dyn RowOracle>,
    pub loss: LossSpec,
    pub truth: Option<Truth>,
    pub budget: Budget,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("family", &self.family)
            .field("label", &self.label)
            .field("shape", &self.grid.shape())
            .field("loss", &self.loss)
            .field("truth", &self.truth)
            .finish()
    }
}

impl ProblemInstance {
    pub fn shape(&self) -> Shape {
        self.grid.shape()
    }

    pub fn truth_at(&self, idx: &MultiIndex) -> Result<f64> {
        let truth = self
            .truth
            .ok_or_else(|| Error::Contract(format!("{} has no exact solution", self.label)))?;
        Ok(truth.eval(&self.grid.point_of(idx)?))
    }
}

/// Second-order finite differences for `-Laplace v = f` on `[-1, 1]^d`
/// with exact solution `prod sin(pi x_i)` and `b = A v`.
pub fn build_poisson(d: usize, n: u32) -> Result<ProblemInstance> {
    let grid = GridSpec::interior_uniform(d, n, -1.0, 1.0)?;
    let h = 2.0 / (n as f64 + 1.0);
    let factor = PoissonFactor::new(n, h)?;
    let matrix = KronSum::new(vec![factor; d])?;
    let truth = Truth::SinProduct;
    let oracle = System::new(
        matrix,
        RhsSource::Manufactured {
            grid: grid.clone(),
            truth,
        },
    )?;
    Ok(ProblemInstance {
        family: Family::Poisson,
        label: format!("poisson d={d} N={n}"),
        grid,
        oracle: Box::new(oracle),
        loss: LossSpec::Plain,
        truth: Some(truth),
        budget: Budget {
            batch_size: 10_000,
            max_iters: 50_000,
        },
    })
}

/// Riesz fractional diffusion on `[-1, 1]^d` with exact solution
/// `sin(sum x_n)` and `b = A v`.
pub fn build_riesz(d: usize, n: u32, c: &[f64], alpha: &[f64]) -> Result<ProblemInstance> {
    if c.len() != d || alpha.len() != d {
        return Err(param(format!(
            "expected {d} diffusion coefficients and orders, got {} and {}",
            c.len(),
            alpha.len()
        )));
    }
    let grid = GridSpec::interior_uniform(d, n, -1.0, 1.0)?;
    let h = 2.0 / (n as f64 + 1.0);
    let factors = c
        .iter()
        .zip(alpha)
        .map(|(&cn, &an)| RieszFactor::new(n, h, an, cn))
        .collect::<Result<Vec<_>>>()?;
    let truth = Truth::SinSum;
    let oracle = System::new(
        KronSum::new(factors)?,
        RhsSource::Manufactured {
            grid: grid.clone(),
            truth,
        },
    )?;
    Ok(ProblemInstance {
        family: Family::Riesz,
        label: format!("riesz d={d} N={n}"),
        grid,
        oracle: Box::new(oracle),
        loss: LossSpec::Plain,
        truth: Some(truth),
        budget: Budget {
            batch_size: 20_000,
            max_iters: 20_000,
        },
    })
}

/// Overflow queuing model `(A + R) u = 0` with the first component pinned
/// to 1, on the fictitious grid `[0, 1]^d` with endpoints.
pub fn build_queueing(
    d: usize,
    n: u32,
    alpha: f64,
    lambdas: &[f64],
    servers: &[u32],
) -> Result<ProblemInstance> {
    if lambdas.len() != d || servers.len() != d {
        return Err(param(format!(
            "expected {d} arrival rates and server counts, got {} and {}",
            lambdas.len(),
            servers.len()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(param(format!("alpha must be positive, got {alpha}")));
    }
    if d as u64 > n as u64 {
        return Err(Error::Construction(format!(
            "dimension {d} exceeds queue size {n}"
        )));
    }
    let grid = GridSpec::endpoint_uniform(d, n, 0.0, 1.0)?;
    let factors = lambdas
        .iter()
        .zip(servers)
        .map(|(&l, &s)| {
            if s == 0 {
                return Err(param("server counts must be at least 1"));
            }
            QueueingFactor::new(n, l, s, QueueingFactor::service_rate(n, l, s, alpha))
        })
        .collect::<Result<Vec<_>>>()?;
    let op = QueueingOperator::new(
        KronSum::new(factors)?,
        OverflowCoupling::new(n, lambdas.to_vec())?,
    )?;
    Ok(ProblemInstance {
        family: Family::Queueing,
        label: format!("queueing d={d} N={n}"),
        grid,
        oracle: Box::new(System::new(op, RhsSource::Zero)?),
        loss: LossSpec::PinComponent {
            index: MultiIndex::ones(d),
            epsilon: PENALTY_EPSILON,
        },
        truth: None,
        budget: Budget {
            batch_size: 20_000,
            max_iters: 20_000,
        },
    })
}

/// Steady state of a probabilistic Boolean network, `(I - T) u = 0` with
/// mean 1, on the two-point grid `{1/3, 2/3}^d`.
///
/// Every shift must be shorter than half the state count, so that each
/// shift is usable from the majority of states.
pub fn build_pbn(d: usize, shifts: &[i64], values: &[f64]) -> Result<ProblemInstance> {
    if let Some(s) = shifts
        .iter()
        .find(|s| d < 128 && s.unsigned_abs() as u128 >= 1u128 << d.saturating_sub(1))
    {
        return Err(Error::Construction(format!(
            "shift {s} is out of range for 2^{d} states"
        )));
    }
    let op = PbnOperator::new(d, shifts, values)?;
    let line = vec![1.0 / 3.0, 2.0 / 3.0];
    let grid = GridSpec::explicit(d, vec![line; d])?;
    Ok(ProblemInstance {
        family: Family::Pbn,
        label: format!("pbn d={d}"),
        grid,
        oracle: Box::new(System::new(op, RhsSource::Zero)?),
        loss: LossSpec::MeanPenalty {
            epsilon: PENALTY_EPSILON,
        },
        truth: None,
        budget: Budget {
            batch_size: 20_000,
            max_iters: 20_000,
        },
    })
}

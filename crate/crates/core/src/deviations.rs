//! The rate function `I = c - phi - psi` of the Gibbs family and its
//! empirical counterpart `-(1/beta) log pi_beta`.

use ndarray::{Array1, Array2};

use crate::annealing::{Trajectory, ZeroTempResult};
use crate::error::{Error, Result};
use crate::measure::log_sum_exp;
use crate::problem::Problem;

pub const DEFAULT_LDP_TOL: f64 = 5e-3;
/// Slack below zero that is treated as rounding and clamped.
pub const CLAMP_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RateFunction {
    table: Array2<f64>,
}

impl RateFunction {
    pub fn table(&self) -> &Array2<f64> {
        &self.table
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.table[[i, j]]
    }

    pub fn min_over(&self, cells: &[(usize, usize)]) -> f64 {
        cells.iter().map(|&(i, j)| self.table[[i, j]]).fold(f64::INFINITY, f64::min)
    }
}

/// `I(i, j) = c(i, j) - phi(i) - psi(j)` for a feasible pair whose slack touches zero.
pub fn rate_function(cost: &Array2<f64>, phi: &Array1<f64>, psi: &Array1<f64>) -> Result<RateFunction> {
    if cost.dim() != (phi.len(), psi.len()) {
        return Err(Error::Dimension {
            expected: cost.dim(),
            found: (phi.len(), psi.len()),
        });
    }
    let mut table = Array2::from_shape_fn(cost.dim(), |(i, j)| cost[[i, j]] - phi[i] - psi[j]);
    let min = table.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -CLAMP_TOL {
        return Err(Error::Invariant(format!("pair is infeasible: slack {min}")));
    }
    if min > CLAMP_TOL {
        return Err(Error::Invariant(format!("pair is not tight: smallest slack {min}")));
    }
    table.mapv_inplace(|v| v.max(0.0));
    Ok(RateFunction { table })
}

/// Rate function of a converged zero-temperature limit; refuses unconverged limits.
pub fn rate_from_limit(problem: &Problem, limit: &ZeroTempResult) -> Result<RateFunction> {
    if !limit.converged {
        return Err(Error::NotConverged(
            "the annealed limit did not settle; refusing to build a rate function".into(),
        ));
    }
    rate_function(problem.cost().cost(), &limit.phi, &limit.psi)
}

/// `(beta, -(1/beta) log pi_beta(i, j))` along the trajectory.
pub fn empirical_rate(trajectory: &Trajectory, i: usize, j: usize) -> Result<Vec<(f64, f64)>> {
    let (n, m) = trajectory.problem().shape();
    if i >= n || j >= m {
        return Err(Error::Argument(format!("cell ({i}, {j}) outside {n}x{m}")));
    }
    Ok(trajectory
        .records()
        .iter()
        .map(|r| (r.beta, -r.log_plan[[i, j]] / r.beta))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetRate {
    pub beta: f64,
    /// `-(1/beta) log pi_beta(S)` at the final temperature.
    pub estimate: f64,
    /// `min_S I`.
    pub rate: f64,
}

/// Final-temperature estimate of the rate of a set of cells next to `min_S I`.
pub fn set_rate(trajectory: &Trajectory, cells: &[(usize, usize)], rate: &RateFunction) -> Result<SetRate> {
    if cells.is_empty() {
        return Err(Error::Argument("set of cells is empty".into()));
    }
    let (n, m) = trajectory.problem().shape();
    if let Some(&(i, j)) = cells.iter().find(|&&(i, j)| i >= n || j >= m) {
        return Err(Error::Argument(format!("cell ({i}, {j}) outside {n}x{m}")));
    }
    let last = trajectory.last();
    let log_mass = log_sum_exp(cells.iter().map(|&(i, j)| last.log_plan[[i, j]]).collect::<Vec<_>>());
    Ok(SetRate {
        beta: last.beta,
        estimate: -log_mass / last.beta,
        rate: rate.min_over(cells),
    })
}

/// `max over cells of f - I`, which equals `sup [A + phi + psi + f]`.
pub fn gamma(rate: &RateFunction, f: &Array2<f64>) -> Result<f64> {
    if f.dim() != rate.table.dim() {
        return Err(Error::Dimension {
            expected: rate.table.dim(),
            found: f.dim(),
        });
    }
    Ok(f.iter().zip(rate.table.iter()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max))
}

/// Largest value over the trajectory of
/// `|-(1/beta) log pi + (1/beta) log(mu nu) + phi/beta + psi/beta + A|`,
/// with `log pi` taken from the stored plan entries (cells that underflow are skipped).
pub fn gibbs_identity_residual(trajectory: &Trajectory) -> f64 {
    let p = trajectory.problem();
    let (lmu, lnu) = (p.mu().log_weights(), p.nu().log_weights());
    let a = p.cost().payoff();
    let mut worst: f64 = 0.0;
    for r in trajectory.records() {
        for ((i, j), &v) in r.plan.table().indexed_iter() {
            if v < f64::MIN_POSITIVE {
                continue;
            }
            let b = r.beta;
            let e = -v.ln() / b + (lmu[i] + lnu[j]) / b + r.scaled_phi[i] + r.scaled_psi[j] + a[[i, j]];
            worst = worst.max(e.abs());
        }
    }
    worst
}

//! Kantorovich dual pairs, c-transforms and the Kantorovich–Rubinstein case.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{Marginal, TransportPlan};
use crate::potentials::lipschitz_constant;
use crate::problem::Problem;

/// Slack below which a pair counts as infeasible.
pub const DUAL_FEASIBILITY_TOL: f64 = 1e-9;
/// Tolerance of the conjugacy flag in a [`Certificate`].
pub const CONJUGACY_TOL: f64 = 1e-3;

/// A candidate pair with its slack table `c - phi - psi`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPair {
    phi: Array1<f64>,
    psi: Array1<f64>,
    slack: Array2<f64>,
    feasible: bool,
}

impl DualPair {
    pub fn new(phi: Array1<f64>, psi: Array1<f64>, cost: &Array2<f64>) -> Result<Self> {
        if cost.dim() != (phi.len(), psi.len()) {
            return Err(Error::Dimension {
                expected: cost.dim(),
                found: (phi.len(), psi.len()),
            });
        }
        let slack = Array2::from_shape_fn(cost.dim(), |(i, j)| cost[[i, j]] - phi[i] - psi[j]);
        let feasible = slack.iter().all(|&s| s >= -DUAL_FEASIBILITY_TOL);
        Ok(Self {
            phi,
            psi,
            slack,
            feasible,
        })
    }

    pub fn phi(&self) -> &Array1<f64> {
        &self.phi
    }

    pub fn psi(&self) -> &Array1<f64> {
        &self.psi
    }

    pub fn slack(&self) -> &Array2<f64> {
        &self.slack
    }

    pub fn feasible(&self) -> bool {
        self.feasible
    }

    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `int phi dmu + int psi dnu`.
    pub fn value(&self, mu: &Marginal, nu: &Marginal) -> f64 {
        mu.integrate(self.phi.view()) + nu.integrate(self.psi.view())
    }
}

/// `psi(j) = min_i [c(i, j) - phi(i)]`.
pub fn c_transform_to_y(phi: ArrayView1<'_, f64>, cost: &Array2<f64>) -> Array1<f64> {
    cost.columns()
        .into_iter()
        .map(|col| col.iter().zip(phi).map(|(c, p)| c - p).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `phi(i) = min_j [c(i, j) - psi(j)]`.
pub fn c_transform_to_x(psi: ArrayView1<'_, f64>, cost: &Array2<f64>) -> Array1<f64> {
    cost.rows()
        .into_iter()
        .map(|row| row.iter().zip(psi).map(|(c, p)| c - p).fold(f64::INFINITY, f64::min))
        .collect()
}

/// The c-conjugate pair generated by `phi`: `psi = phi^c`, then `phi' = psi^c`.
/// The result is feasible and its value is at least that of any feasible pair with first entry `phi`.
pub fn conjugate_pair(phi: ArrayView1<'_, f64>, cost: &Array2<f64>) -> Result<DualPair> {
    let psi = c_transform_to_y(phi, cost);
    let phi = c_transform_to_x(psi.view(), cost);
    DualPair::new(phi, psi, cost)
}

/// `int c dpi - (int phi dmu + int psi dnu)` for a feasible plan and a feasible pair.
pub fn duality_gap(plan: &TransportPlan, pair: &DualPair, cost: &Array2<f64>, mu: &Marginal, nu: &Marginal) -> Result<f64> {
    plan.ensure_feasible()?;
    if !pair.feasible {
        return Err(Error::Feasibility {
            row_residual: -pair.min_slack(),
            col_residual: -pair.min_slack(),
        });
    }
    if plan.shape() != cost.dim() || pair.slack.dim() != cost.dim() {
        return Err(Error::Dimension {
            expected: cost.dim(),
            found: plan.shape(),
        });
    }
    let primal: f64 = plan.table().iter().zip(cost.iter()).map(|(p, c)| p * c).sum();
    Ok(primal - pair.value(mu, nu))
}

/// `int phi d(mu - nu)` for a 1-Lipschitz `phi` on a distance-cost instance.
pub fn kr_value(problem: &Problem, phi: ArrayView1<'_, f64>) -> Result<f64> {
    problem.ensure_distance_cost()?;
    if phi.len() != problem.shape().0 {
        return Err(Error::Dimension {
            expected: (problem.shape().0, 1),
            found: (phi.len(), 1),
        });
    }
    let lip = lipschitz_constant(phi, problem.x().dist());
    if lip > 1.0 + 1e-9 {
        return Err(Error::Invariant(format!("phi has Lipschitz constant {lip} > 1")));
    }
    Ok(problem.mu().integrate(phi) - problem.nu().integrate(phi))
}

/// `|phi + psi|_inf <= tol`.
pub fn kr_antisymmetry_check(phi: ArrayView1<'_, f64>, psi: ArrayView1<'_, f64>, tol: f64) -> bool {
    phi.len() == psi.len() && phi.iter().zip(psi).all(|(a, b)| (a + b).abs() <= tol)
}

/// Largest deviation of a pair from being c-conjugate in both directions.
pub fn conjugacy_defect(phi: ArrayView1<'_, f64>, psi: ArrayView1<'_, f64>, cost: &Array2<f64>) -> f64 {
    let to_y = c_transform_to_y(phi, cost);
    let to_x = c_transform_to_x(psi, cost);
    let dy = to_y.iter().zip(psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dx = to_x.iter().zip(phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    dx.max(dy)
}

/// Primal/dual certificate for a plan and a candidate pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Certificate {
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub feasible: bool,
    pub conjugate: bool,
}

/// Certifies `plan` against the conjugate pair generated by `phi`; `conjugate`
/// records whether the raw `(phi, psi)` was already c-conjugate within [`CONJUGACY_TOL`].
pub fn certificate(problem: &Problem, plan: &TransportPlan, phi: ArrayView1<'_, f64>, psi: ArrayView1<'_, f64>) -> Result<Certificate> {
    let cost = problem.cost().cost();
    let pair = conjugate_pair(phi, cost)?;
    let gap = duality_gap(plan, &pair, cost, problem.mu(), problem.nu())?;
    let dual_value = pair.value(problem.mu(), problem.nu());
    Ok(Certificate {
        primal_value: dual_value + gap,
        dual_value,
        gap,
        feasible: pair.feasible && plan.is_feasible(),
        conjugate: conjugacy_defect(phi, psi, cost) <= CONJUGACY_TOL,
    })
}

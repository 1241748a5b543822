//! Finite metric spaces, marginals, costs and couplings.
//!
//! Every space is a finite sample `X = {x_0, .., x_{n-1}}` with a full
//! distance table. Marginals charge every point, so integrals become finite
//! sums and every coupling is absolutely continuous with respect to the
//! product of its marginals.

use std::fmt;
use std::ops::Neg;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Tolerance used when validating inputs (metric axioms, marginal mass, plan mass).
pub const CONSTRUCTION_TOL: f64 = 1e-12;

/// A plan is feasible when both marginal residuals are at most this value.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Whether to run the O(n^3) triangle-inequality check when building a [`MetricSample`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TriangleCheck {
    #[default]
    Enforce,
    Skip,
}

/// Extended real line, used for divergences that may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    NegInfinity,
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Maps the sentinels onto IEEE infinities.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInfinity => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;

    fn neg(self) -> ExtReal {
        match self {
            ExtReal::NegInfinity => ExtReal::PosInfinity,
            ExtReal::Finite(v) => ExtReal::Finite(-v),
            ExtReal::PosInfinity => ExtReal::NegInfinity,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInfinity => write!(f, "-inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInfinity => write!(f, "+inf"),
        }
    }
}

/// `log(sum(exp(x)))`, shifted by the maximum so large arguments do not overflow.
pub fn log_sum_exp<I>(xs: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let it = xs.into_iter();
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + it.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn scale_tol(v: f64) -> f64 {
    CONSTRUCTION_TOL * v.abs().max(1.0)
}

/// A finite metric space: point labels plus a symmetric distance table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSample {
    points: Vec<String>,
    dist: Array2<f64>,
}

impl MetricSample {
    pub fn new(points: Vec<String>, dist: Array2<f64>) -> Result<Self> {
        Self::with_check(points, dist, TriangleCheck::Enforce)
    }

    /// Builds a sample with points labelled `0..n`.
    pub fn from_dist(dist: Array2<f64>) -> Result<Self> {
        let points = (0..dist.nrows()).map(|i| i.to_string()).collect();
        Self::new(points, dist)
    }

    pub fn with_check(points: Vec<String>, dist: Array2<f64>, check: TriangleCheck) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Validation("metric space has no points".into()));
        }
        if dist.dim() != (n, n) {
            return Err(Error::Dimension {
                expected: (n, n),
                found: dist.dim(),
            });
        }
        for ((i, j), &d) in dist.indexed_iter() {
            if !d.is_finite() {
                return Err(Error::Validation(format!("dist[{i}][{j}] is not finite")));
            }
            if i == j {
                if d.abs() > CONSTRUCTION_TOL {
                    return Err(Error::Validation(format!("dist[{i}][{i}] = {d} is not zero")));
                }
            } else {
                if d <= 0.0 {
                    return Err(Error::Validation(format!(
                        "dist[{i}][{j}] = {d} must be positive for distinct points"
                    )));
                }
                let t = dist[[j, i]];
                if (d - t).abs() > scale_tol(d) {
                    return Err(Error::Validation(format!(
                        "dist is not symmetric at ({i}, {j}): {d} vs {t}"
                    )));
                }
            }
        }
        if check == TriangleCheck::Enforce {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let direct = dist[[i, k]];
                        let via = dist[[i, j]] + dist[[j, k]];
                        if direct > via + scale_tol(via) {
                            return Err(Error::Validation(format!(
                                "triangle inequality fails for ({i}, {j}, {k}): {direct} > {via}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self { points, dist })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn dist(&self) -> &Array2<f64> {
        &self.dist
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }
}

/// Strictly positive probability weights on a [`MetricSample`].
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    weights: Array1<f64>,
    log_weights: Array1<f64>,
}

impl Marginal {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("marginal has no weights".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Validation(format!(
                    "weight {i} = {w} must be finite and strictly positive"
                )));
            }
        }
        let sum = weights.sum();
        if (sum - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(Error::Validation(format!("weights sum to {sum}, expected 1")));
        }
        let log_weights = weights.mapv(f64::ln);
        Ok(Self {
            weights,
            log_weights,
        })
    }

    pub fn from_vec(weights: Vec<f64>) -> Result<Self> {
        Self::new(Array1::from(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(Array1::from_elem(n, 1.0 / n as f64))
    }

    /// Rescales positive raw weights to unit mass.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Validation(format!("cannot normalize weights with sum {sum}")));
        }
        Self::new(raw.iter().map(|w| w / sum).collect())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn log_weights(&self) -> &Array1<f64> {
        &self.log_weights
    }

    /// `sum_i f(i) w_i`.
    pub fn integrate(&self, f: ArrayView1<'_, f64>) -> f64 {
        f.dot(&self.weights)
    }

    /// True when all weights agree within the construction tolerance.
    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= CONSTRUCTION_TOL)
    }
}

/// Cost table `c`, payoff `A = -c` and the Lipschitz constant of `A` for the
/// sum metric `d_X + d_Y` on the product space.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    cost: Array2<f64>,
    payoff: Array2<f64>,
    lip_a: f64,
}

impl CostModel {
    pub fn new(cost: Array2<f64>, x: &MetricSample, y: &MetricSample) -> Result<Self> {
        let shape = (x.len(), y.len());
        if cost.dim() != shape {
            return Err(Error::Dimension {
                expected: shape,
                found: cost.dim(),
            });
        }
        if let Some(((i, j), _)) = cost.indexed_iter().find(|(_, c)| !c.is_finite()) {
            return Err(Error::Validation(format!("cost[{i}][{j}] is not finite")));
        }
        let payoff = cost.mapv(|c| -c);
        let lip_a = lipschitz_on_product(&payoff, x.dist(), y.dist());
        Ok(Self {
            cost,
            payoff,
            lip_a,
        })
    }

    pub fn cost(&self) -> &Array2<f64> {
        &self.cost
    }

    pub fn payoff(&self) -> &Array2<f64> {
        &self.payoff
    }

    pub fn lip_a(&self) -> f64 {
        self.lip_a
    }

    pub fn shape(&self) -> (usize, usize) {
        self.cost.dim()
    }

    pub fn max_payoff(&self) -> f64 {
        self.payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_payoff(&self) -> f64 {
        self.payoff.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Lipschitz constant of a table on `X x Y` for the metric `d_X + d_Y`.
///
/// Moving one coordinate at a time is enough: for the sum metric the
/// quotient over a general pair is a weighted mean of the two one-coordinate
/// quotients, so the supremum is `max(L_x, L_y)`.
fn lipschitz_on_product(a: &Array2<f64>, dx: &Array2<f64>, dy: &Array2<f64>) -> f64 {
    let (n, m) = a.dim();
    let mut lip: f64 = 0.0;
    for j in 0..m {
        for i in 0..n {
            for k in (i + 1)..n {
                lip = lip.max((a[[i, j]] - a[[k, j]]).abs() / dx[[i, k]]);
            }
        }
    }
    for i in 0..n {
        for j in 0..m {
            for l in (j + 1)..m {
                lip = lip.max((a[[i, j]] - a[[i, l]]).abs() / dy[[j, l]]);
            }
        }
    }
    lip
}

/// A coupling table together with its marginal residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    p: Array2<f64>,
    row_residual: f64,
    col_residual: f64,
}

impl TransportPlan {
    /// Wraps a nonnegative table with unit mass, recording its residuals against `mu` and `nu`.
    pub fn new(p: Array2<f64>, mu: &Marginal, nu: &Marginal) -> Result<Self> {
        let shape = (mu.len(), nu.len());
        if p.dim() != shape {
            return Err(Error::Dimension {
                expected: shape,
                found: p.dim(),
            });
        }
        if let Some(((i, j), v)) = p.indexed_iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!(
                "plan entry ({i}, {j}) = {v} must be finite and nonnegative"
            )));
        }
        let (row_residual, col_residual) = residuals(&p, mu, nu);
        let mass = p.sum();
        if (mass - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(Error::Feasibility {
                row_residual,
                col_residual,
            });
        }
        Ok(Self {
            p,
            row_residual,
            col_residual,
        })
    }

    /// Convex combination `sum_k w_k plans_k`; weights must be nonnegative and sum to one.
    pub fn mixture(plans: &[&TransportPlan], weights: &[f64], mu: &Marginal, nu: &Marginal) -> Result<Self> {
        if plans.is_empty() || plans.len() != weights.len() {
            return Err(Error::Argument("mixture needs one weight per plan".into()));
        }
        let mut p = Array2::zeros(plans[0].shape());
        for (plan, &w) in plans.iter().zip(weights) {
            if plan.shape() != p.dim() {
                return Err(Error::Dimension {
                    expected: p.dim(),
                    found: plan.shape(),
                });
            }
            p.scaled_add(w, &plan.p);
        }
        Self::new(p, mu, nu)
    }

    pub fn table(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn into_table(self) -> Array2<f64> {
        self.p
    }

    pub fn shape(&self) -> (usize, usize) {
        self.p.dim()
    }

    pub fn row_residual(&self) -> f64 {
        self.row_residual
    }

    pub fn col_residual(&self) -> f64 {
        self.col_residual
    }

    pub fn is_feasible(&self) -> bool {
        self.row_residual <= FEASIBILITY_TOL && self.col_residual <= FEASIBILITY_TOL
    }

    pub fn ensure_feasible(&self) -> Result<()> {
        if self.is_feasible() {
            Ok(())
        } else {
            Err(Error::Feasibility {
                row_residual: self.row_residual,
                col_residual: self.col_residual,
            })
        }
    }

    /// Number of entries above `threshold`.
    pub fn support_size(&self, threshold: f64) -> usize {
        self.p.iter().filter(|&&v| v > threshold).count()
    }

    /// Largest entrywise difference to another plan of the same shape.
    pub fn sup_distance(&self, other: &TransportPlan) -> f64 {
        self.p
            .iter()
            .zip(other.p.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `(max_i |row_i - mu_i|, max_j |col_j - nu_j|)`.
pub fn residuals(p: &Array2<f64>, mu: &Marginal, nu: &Marginal) -> (f64, f64) {
    let rows = p.sum_axis(Axis(1));
    let cols = p.sum_axis(Axis(0));
    let row = rows
        .iter()
        .zip(mu.weights())
        .map(|(r, m)| (r - m).abs())
        .fold(0.0, f64::max);
    let col = cols
        .iter()
        .zip(nu.weights())
        .map(|(c, n)| (c - n).abs())
        .fold(0.0, f64::max);
    (row, col)
}

/// `D_KL(eta | rho)` with `0 log 0 = 0`; `+inf` when `eta` charges a cell that `rho` does not.
pub fn kl_divergence(eta: &TransportPlan, rho: &TransportPlan) -> Result<ExtReal> {
    if eta.shape() != rho.shape() {
        return Err(Error::Dimension {
            expected: rho.shape(),
            found: eta.shape(),
        });
    }
    let mut acc = 0.0;
    for (&e, &r) in eta.p.iter().zip(rho.p.iter()) {
        if e == 0.0 {
            continue;
        }
        if r == 0.0 {
            return Ok(ExtReal::PosInfinity);
        }
        acc += e * (e / r).ln();
    }
    Ok(ExtReal::Finite(acc))
}

/// Relative entropy `H(pi) = -D_KL(pi | mu x nu)` of a feasible plan.
pub fn relative_entropy(pi: &TransportPlan, mu: &Marginal, nu: &Marginal) -> Result<ExtReal> {
    let shape = (mu.len(), nu.len());
    if pi.shape() != shape {
        return Err(Error::Dimension {
            expected: shape,
            found: pi.shape(),
        });
    }
    let (row_residual, col_residual) = residuals(&pi.p, mu, nu);
    if row_residual > FEASIBILITY_TOL || col_residual > FEASIBILITY_TOL {
        return Err(Error::Feasibility {
            row_residual,
            col_residual,
        });
    }
    Ok(-kl_divergence(pi, &product_plan(mu, nu))?)
}

/// The independent coupling `mu x nu`.
pub fn product_plan(mu: &Marginal, nu: &Marginal) -> TransportPlan {
    let p = Array2::from_shape_fn((mu.len(), nu.len()), |(i, j)| mu.weights()[i] * nu.weights()[j]);
    let (row_residual, col_residual) = residuals(&p, mu, nu);
    TransportPlan {
        p,
        row_residual,
        col_residual,
    }
}

/// Transport cost `sum c(i,j) p(i,j)`.
pub fn linear_cost(pi: &TransportPlan, cost: &CostModel) -> Result<f64> {
    if pi.shape() != cost.shape() {
        return Err(Error::Dimension {
            expected: cost.shape(),
            found: pi.shape(),
        });
    }
    Ok(pi.p.iter().zip(cost.cost().iter()).map(|(p, c)| p * c).sum())
}

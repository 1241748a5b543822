//! Schrödinger potentials and Gibbs plans at inverse temperature `beta`.
//!
//! For a payoff `A = -c` the potentials `(phi, psi)` solve the two
//! normalizations
//!
//! ```text
//! sum_i exp(beta A(i,j) + phi(i) + psi(j)) mu_i = 1   for every j
//! sum_j exp(beta A(i,j) + phi(i) + psi(j)) nu_j = 1   for every i
//! ```
//!
//! and are unique up to `(phi + d, psi - d)`. The Gibbs plan
//! `exp(beta A + phi + psi) mu nu` is the unique maximizer of
//! `int beta A dpi + H(pi)` over couplings, and the maximum (the pressure)
//! equals `-int phi dmu - int psi dnu`.
//!
//! Everything is computed in the log domain. The default solver alternates
//! full updates `phi <- T_nu(psi)`, `psi <- T_mu(phi)`; the damped maps
//! `T^s` with `s < 1` are strict contractions and [`fixed_point_s`] iterates
//! them directly as an independent cross-check.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{relative_entropy, TransportPlan};
use crate::problem::Problem;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;
pub const DEFAULT_NEWTON_AFTER: usize = 200;
const NEWTON_MAX_STEPS: usize = 200;
const GAUGE_REFINE_SWEEPS: usize = 8;

/// Largest pair residual accepted by [`gibbs_plan`].
pub const GIBBS_RESIDUAL_LIMIT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Gauge {
    /// `max phi = 0`, with the compensating constant carried by `psi`.
    MaxPhiZero,
}

/// Potentials at one inverse temperature, normalized so that `max phi = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialPair {
    phi: Array1<f64>,
    psi: Array1<f64>,
    beta: f64,
    gauge: Gauge,
    l: f64,
    residual: f64,
}

impl PotentialPair {
    /// Gauges an arbitrary pair of vectors and measures its residual.
    pub fn from_raw(problem: &Problem, phi: Array1<f64>, psi: Array1<f64>, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let (n, m) = problem.shape();
        if phi.len() != n || psi.len() != m {
            return Err(Error::Dimension {
                expected: (n, m),
                found: (phi.len(), psi.len()),
            });
        }
        let (phi, psi) = apply_gauge(phi, psi);
        let residual = schrodinger_residual(problem, beta, phi.view(), psi.view());
        let l = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            phi,
            psi,
            beta,
            gauge: Gauge::MaxPhiZero,
            l,
            residual,
        })
    }

    pub fn phi(&self) -> &Array1<f64> {
        &self.phi
    }

    pub fn psi(&self) -> &Array1<f64> {
        &self.psi
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    /// `max psi` under the `max phi = 0` gauge.
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// The pair rescaled to another inverse temperature, used as a warm start.
    pub fn rescaled(&self, beta: f64) -> PotentialPair {
        let r = beta / self.beta;
        PotentialPair {
            phi: &self.phi * r,
            psi: &self.psi * r,
            beta,
            gauge: self.gauge,
            l: self.l * r,
            residual: f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveReport {
    pub iterations: usize,
    /// Newton steps taken after the alternating sweeps stalled.
    pub newton_steps: usize,
    pub residual: f64,
    pub s_weight: f64,
    pub warm_started: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sweeps after which a stalled solve switches to Newton steps on the
    /// semi-dual; `None` keeps to alternating sweeps only.
    pub newton_after: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            newton_after: Some(DEFAULT_NEWTON_AFTER),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("beta must be positive and finite, got {beta}")))
    }
}

fn apply_gauge(mut phi: Array1<f64>, mut psi: Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    let shift = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    phi -= shift;
    psi += shift;
    (phi, psi)
}

/// `-log sum_k exp(row_k + w_k + lw_k)` evaluated with a max shift.
fn neg_lse(row: ArrayView1<'_, f64>, weight: f64, w: ArrayView1<'_, f64>, log_w: ArrayView1<'_, f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for ((a, f), l) in row.iter().zip(w).zip(log_w) {
        max = max.max(a + weight * f + l);
    }
    let mut sum = 0.0;
    for ((a, f), l) in row.iter().zip(w).zip(log_w) {
        sum += (a + weight * f + l - max).exp();
    }
    -(max + sum.ln())
}

/// `beta A` in both orientations so each half-sweep walks contiguous memory.
struct Kernel {
    by_row: Array2<f64>,
    by_col: Array2<f64>,
}

impl Kernel {
    fn new(problem: &Problem, beta: f64) -> Self {
        let by_row = problem.cost().payoff() * beta;
        let by_col = by_row.t().as_standard_layout().to_owned();
        Self { by_row, by_col }
    }

    /// `g(j) = -log sum_i exp(beta A(i,j) + s f(i)) mu_i`.
    fn t_mu(&self, problem: &Problem, s: f64, f: ArrayView1<'_, f64>) -> Array1<f64> {
        let lmu = problem.mu().log_weights().view();
        Array1::from_shape_fn(self.by_col.nrows(), |j| neg_lse(self.by_col.row(j), s, f, lmu))
    }

    /// `f(i) = -log sum_j exp(beta A(i,j) + s g(j)) nu_j`.
    fn t_nu(&self, problem: &Problem, s: f64, g: ArrayView1<'_, f64>) -> Array1<f64> {
        let lnu = problem.nu().log_weights().view();
        Array1::from_shape_fn(self.by_row.nrows(), |i| neg_lse(self.by_row.row(i), s, g, lnu))
    }
}

/// The map `f -> -log int exp(beta A(x, .) + s f(x)) dmu(x)` from functions on X to functions on Y.
pub fn t_mu(problem: &Problem, s: f64, f: ArrayView1<'_, f64>, beta: f64) -> Result<Array1<f64>> {
    check_beta(beta)?;
    check_s(s, true)?;
    if f.len() != problem.shape().0 {
        return Err(Error::Dimension {
            expected: (problem.shape().0, 1),
            found: (f.len(), 1),
        });
    }
    Ok(Kernel::new(problem, beta).t_mu(problem, s, f))
}

/// The map `g -> -log int exp(beta A(., y) + s g(y)) dnu(y)` from functions on Y to functions on X.
pub fn t_nu(problem: &Problem, s: f64, g: ArrayView1<'_, f64>, beta: f64) -> Result<Array1<f64>> {
    check_beta(beta)?;
    check_s(s, true)?;
    if g.len() != problem.shape().1 {
        return Err(Error::Dimension {
            expected: (problem.shape().1, 1),
            found: (g.len(), 1),
        });
    }
    Ok(Kernel::new(problem, beta).t_nu(problem, s, g))
}

fn check_s(s: f64, allow_one: bool) -> Result<()> {
    let ok = s > 0.0 && (s < 1.0 || (allow_one && s == 1.0));
    if ok {
        Ok(())
    } else {
        Err(Error::Argument(format!("s = {s} outside the admissible range")))
    }
}

/// Sup-norm deviation of both normalization families from 1, measured in logs.
pub fn schrodinger_residual(problem: &Problem, beta: f64, phi: ArrayView1<'_, f64>, psi: ArrayView1<'_, f64>) -> f64 {
    let kernel = Kernel::new(problem, beta);
    let col = kernel.t_mu(problem, 1.0, phi);
    let row = kernel.t_nu(problem, 1.0, psi);
    // t_mu(phi) = psi exactly when every column integral is 1.
    let col_res = col.iter().zip(psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let row_res = row.iter().zip(phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    col_res.max(row_res)
}

/// Solves the Schrödinger system at `beta` with the default sweep cap.
pub fn schrodinger_solve(
    problem: &Problem,
    beta: f64,
    tol: f64,
    warm_start: Option<&PotentialPair>,
) -> Result<(PotentialPair, SolveReport)> {
    schrodinger_solve_with(
        problem,
        beta,
        SolveOptions {
            tol,
            ..SolveOptions::default()
        },
        warm_start,
    )
}

pub fn schrodinger_solve_with(
    problem: &Problem,
    beta: f64,
    opts: SolveOptions,
    warm_start: Option<&PotentialPair>,
) -> Result<(PotentialPair, SolveReport)> {
    check_beta(beta)?;
    if !(opts.tol > 0.0) {
        return Err(Error::Argument(format!("tol must be positive, got {}", opts.tol)));
    }
    let (n, m) = problem.shape();
    let kernel = Kernel::new(problem, beta);
    let psi0 = match warm_start {
        Some(w) if w.psi.len() == m && w.phi.len() == n => w.psi.clone(),
        Some(_) => {
            return Err(Error::Argument("warm start has the wrong shape".into()));
        }
        None => Array1::zeros(m),
    };

    let mut phi = kernel.t_nu(problem, 1.0, psi0.view());
    let mut sweeps = 0;
    let mut newton_steps = 0;
    let mut row_res = f64::INFINITY;
    let mut psi = psi0;
    let mut next_newton = opts.newton_after;
    while sweeps < opts.max_sweeps {
        psi = kernel.t_mu(problem, 1.0, phi.view());
        let next = kernel.t_nu(problem, 1.0, psi.view());
        sweeps += 1;
        row_res = sup_diff(&next, &phi);
        if row_res <= opts.tol || !row_res.is_finite() {
            break;
        }
        phi = next;
        if let (Some(at), Some(every)) = (next_newton, opts.newton_after) {
            if sweeps >= at {
                next_newton = Some(sweeps + every.max(1));
                if let Some(polished) = newton_polish(problem, &kernel, phi.clone(), opts.tol) {
                    newton_steps += polished.steps;
                    if polished.residual < row_res {
                        phi = polished.phi;
                        psi = polished.psi;
                        row_res = polished.residual;
                    }
                    if row_res <= opts.tol {
                        break;
                    }
                }
            }
        }
    }
    if !(row_res <= opts.tol) {
        return Err(Error::Convergence {
            beta,
            iterations: sweeps + newton_steps,
            residual: row_res,
        });
    }

    let mut pair = PotentialPair::from_raw(problem, phi, psi, beta)?;
    // gauging moves the rounding; a few sweeps usually bring a tiny tol back in reach
    for _ in 0..GAUGE_REFINE_SWEEPS {
        if pair.residual <= opts.tol {
            break;
        }
        let psi = kernel.t_mu(problem, 1.0, pair.phi.view());
        let phi = kernel.t_nu(problem, 1.0, psi.view());
        sweeps += 1;
        pair = PotentialPair::from_raw(problem, phi, psi, beta)?;
    }
    if !(pair.residual <= opts.tol) {
        return Err(Error::Convergence {
            beta,
            iterations: sweeps + newton_steps,
            residual: pair.residual,
        });
    }
    check_gauge_constant(problem, &pair)?;
    let report = SolveReport {
        iterations: sweeps,
        newton_steps,
        residual: pair.residual,
        s_weight: 1.0,
        warm_started: warm_start.is_some(),
    };
    log::debug!(
        "beta={beta} sweeps={sweeps} newton={newton_steps} residual={:e} warm={}",
        pair.residual,
        report.warm_started
    );
    Ok((pair, report))
}

fn sup_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Polished {
    phi: Array1<f64>,
    psi: Array1<f64>,
    residual: f64,
    steps: usize,
}

/// Levenberg-Marquardt damped Newton on the convex semi-dual
/// `F(phi) = -int phi dmu - int T_mu(phi) dnu`, whose gradient is the row
/// mismatch of the plan with exact columns and whose minimum is the pressure.
/// Alternating sweeps slow to a crawl when the optimal support nearly splits;
/// Newton steps are insensitive to that. Far from the optimum the steps can
/// stall; the best iterate is returned and the caller resumes sweeping.
fn newton_polish(problem: &Problem, kernel: &Kernel, mut phi: Array1<f64>, tol: f64) -> Option<Polished> {
    let (n, m) = problem.shape();
    let mu = problem.mu().weights();
    let nu = problem.nu().weights();
    let objective = |phi: &Array1<f64>, psi: &Array1<f64>| -problem.mu().integrate(phi.view()) - problem.nu().integrate(psi.view());
    let mut psi = kernel.t_mu(problem, 1.0, phi.view());
    let mut residual = sup_diff(&kernel.t_nu(problem, 1.0, psi.view()), &phi);
    let mut value = objective(&phi, &psi);
    // drop the coordinate of largest mass to fix the additive constant
    let pivot = (0..n).max_by(|&a, &b| mu[a].total_cmp(&mu[b]))?;
    // Levenberg-Marquardt damping, relative to the diagonal of the Hessian
    let mut lambda: f64 = 0.0;
    let mut steps = 0;
    while steps < NEWTON_MAX_STEPS && residual > tol {
        steps += 1;
        let lmu = problem.mu().log_weights();
        let lnu = problem.nu().log_weights();
        let p = Array2::from_shape_fn((n, m), |(i, j)| (kernel.by_row[[i, j]] + phi[i] + psi[j] + lmu[i] + lnu[j]).exp());
        let rows = p.sum_axis(ndarray::Axis(1));
        let grad = &rows - mu;
        let keep: Vec<usize> = (0..n).filter(|&i| i != pivot).collect();
        let k = keep.len();
        let mut hess = nalgebra::DMatrix::<f64>::zeros(k, k);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &l) in keep.iter().enumerate() {
                let mut h = if i == l { rows[i] } else { 0.0 };
                for j in 0..m {
                    h -= p[[i, j]] * p[[l, j]] / nu[j];
                }
                hess[(a, b)] = h;
            }
        }
        let rhs = nalgebra::DVector::from_iterator(k, keep.iter().map(|&i| -grad[i]));
        let mut accepted = false;
        for _ in 0..60 {
            let mut damped = hess.clone();
            for (a, &i) in keep.iter().enumerate() {
                damped[(a, a)] += lambda * rows[i].max(mu[i]);
            }
            let dir = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => match damped.lu().solve(&rhs) {
                    Some(d) => d,
                    None => {
                        lambda = (lambda * 10.0).max(1e-12);
                        continue;
                    }
                },
            };
            let mut trial_phi = phi.clone();
            for (a, &i) in keep.iter().enumerate() {
                trial_phi[i] += dir[a];
            }
            if !trial_phi.iter().all(|v| v.is_finite()) {
                lambda = (lambda * 10.0).max(1e-12);
                continue;
            }
            let slope: f64 = keep.iter().enumerate().map(|(a, &i)| grad[i] * dir[a]).sum();
            let trial_psi = kernel.t_mu(problem, 1.0, trial_phi.view());
            let trial_value = objective(&trial_phi, &trial_psi);
            let trial_res = sup_diff(&kernel.t_nu(problem, 1.0, trial_psi.view()), &trial_phi);
            // near the optimum F is flat to rounding, so a halved residual also counts
            let decrease = trial_value < value && trial_value <= value + 1e-4 * slope;
            if trial_res.is_finite() && (decrease || trial_res <= 0.5 * residual) {
                phi = trial_phi;
                psi = trial_psi;
                value = trial_value;
                residual = trial_res;
                lambda = if lambda < 1e-12 { 0.0 } else { lambda / 10.0 };
                accepted = true;
                break;
            }
            lambda = (lambda * 10.0).max(1e-12);
        }
        log::trace!("newton step {steps}: residual {residual:e}, accepted {accepted}, lambda {lambda:e}");
        if !accepted {
            break;
        }
    }
    Some(Polished { phi, psi, residual, steps })
}

/// The additive constant `l = max psi` must satisfy
/// `-beta max(A) <= l <= beta (lip(A) diam(X) - min(A))`.
fn check_gauge_constant(problem: &Problem, pair: &PotentialPair) -> Result<()> {
    let cost = problem.cost();
    let b = pair.beta;
    let lower = -b * cost.max_payoff();
    let upper = b * (cost.lip_a() * problem.x().diameter() - cost.min_payoff());
    let slack = 1e-9 * (1.0 + lower.abs().max(upper.abs()));
    if pair.l < lower - slack || pair.l > upper + slack {
        return Err(Error::Invariant(format!(
            "gauge constant l = {} outside [{lower}, {upper}]",
            pair.l
        )));
    }
    Ok(())
}

/// Result of iterating the damped maps `T_nu^s o T_mu^s`.
#[derive(Clone, Debug)]
pub struct FixedPoint {
    pub phi: Array1<f64>,
    pub psi: Array1<f64>,
    pub report: SolveReport,
    /// `|phi_{k+1} - phi_k|_inf` for every sweep.
    pub sweep_deltas: Vec<f64>,
}

impl FixedPoint {
    /// The damped pair under the gauge of the undamped system:
    /// `phi - max phi` and `psi + s max phi`, so that `max psi` is the
    /// constant `max psi + s max phi` that tends to `l` as `s -> 1`.
    pub fn gauged(&self, problem: &Problem, beta: f64) -> Result<PotentialPair> {
        let top = self.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s = self.report.s_weight;
        PotentialPair::from_raw(problem, self.phi.clone(), &self.psi - (1.0 - s) * top, beta)
    }
}

/// Banach iteration of `phi -> T_nu^s(T_mu^s(phi))` from zero, for `0 < s < 1`.
///
/// The composite map is an `s^2` contraction and shifts constants by exactly
/// `s^2`, so the iterate is stored as a max-normalized profile plus a scalar
/// offset; differences are then taken between numbers of moderate size even
/// when the fixed point itself is of order `1 / (1 - s^2)`.
pub fn fixed_point_s(problem: &Problem, s: f64, beta: f64, tol: f64) -> Result<FixedPoint> {
    fixed_point_s_with(problem, s, beta, tol, DEFAULT_MAX_SWEEPS)
}

pub fn fixed_point_s_with(problem: &Problem, s: f64, beta: f64, tol: f64, max_sweeps: usize) -> Result<FixedPoint> {
    check_beta(beta)?;
    check_s(s, false)?;
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tol must be positive, got {tol}")));
    }
    let q = s * s;
    let kernel = Kernel::new(problem, beta);
    let composite = |f: ArrayView1<'_, f64>| kernel.t_nu(problem, s, kernel.t_mu(problem, s, f).view());

    // phi_k = profile_k + offset_k with max(profile_k) = 0, and F(p + c) = F(p) + q c.
    let n = problem.shape().0;
    let mut profile = Array1::<f64>::zeros(n);
    let mut offset = 0.0;
    let mut prev_top: Option<f64> = None;
    let mut step = 0.0;
    let mut deltas = Vec::new();
    loop {
        if deltas.len() >= max_sweeps {
            return Err(Error::Convergence {
                beta,
                iterations: deltas.len(),
                residual: deltas.last().copied().unwrap_or(f64::INFINITY),
            });
        }
        let image = composite(profile.view());
        let top = image.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let next_profile = image - top;
        // offset_{k+1} - offset_k = (top_k - top_{k-1}) + q (offset_k - offset_{k-1})
        step = match prev_top {
            None => top,
            Some(pt) => (top - pt) + q * step,
        };
        let delta = next_profile
            .iter()
            .zip(&profile)
            .map(|(a, b)| (a - b + step).abs())
            .fold(0.0, f64::max);
        deltas.push(delta);
        profile = next_profile;
        offset += step;
        prev_top = Some(top);
        if !delta.is_finite() {
            return Err(Error::Convergence {
                beta,
                iterations: deltas.len(),
                residual: delta,
            });
        }
        if delta <= tol * (1.0 - q) {
            break;
        }
    }
    let psi = kernel.t_mu(problem, s, profile.view()) - s * offset;
    let phi = profile + offset;
    let residual = q * deltas.last().copied().unwrap_or(0.0);
    Ok(FixedPoint {
        phi,
        psi,
        report: SolveReport {
            iterations: deltas.len(),
            newton_steps: 0,
            residual,
            s_weight: s,
            warm_started: false,
        },
        sweep_deltas: deltas,
    })
}

/// Log of the Gibbs plan entries, `beta A + phi + psi + log mu + log nu`.
pub fn log_gibbs(problem: &Problem, pair: &PotentialPair) -> Array2<f64> {
    let lmu = problem.mu().log_weights();
    let lnu = problem.nu().log_weights();
    let b = pair.beta;
    Array2::from_shape_fn(problem.shape(), |(i, j)| {
        b * problem.cost().payoff()[[i, j]] + pair.phi[i] + pair.psi[j] + lmu[i] + lnu[j]
    })
}

/// The Gibbs plan `exp(beta A + phi + psi) mu nu` of a converged pair.
pub fn gibbs_plan(problem: &Problem, pair: &PotentialPair) -> Result<TransportPlan> {
    let log_p = log_gibbs(problem, pair);
    if !(pair.residual <= GIBBS_RESIDUAL_LIMIT) {
        let (row_residual, col_residual) = crate::measure::residuals(&log_p.mapv(f64::exp), problem.mu(), problem.nu());
        return Err(Error::Feasibility {
            row_residual,
            col_residual,
        });
    }
    // At a solution every log entry is at most -log(mu_i) - log(nu_j) + residual,
    // so exponentiating directly cannot overflow. The total mass carries the
    // rounding of the cancellation in `beta A + phi + psi` and is divided out.
    let mut table = log_p.mapv(f64::exp);
    let mass = table.sum();
    table /= mass;
    let plan = TransportPlan::new(table, problem.mu(), problem.nu())?;
    let bound = 10.0 * pair.residual + 1e-13;
    if plan.row_residual() > bound || plan.col_residual() > bound {
        return Err(Error::Invariant(format!(
            "Gibbs plan residuals ({:e}, {:e}) exceed 10x pair residual {:e}",
            plan.row_residual(),
            plan.col_residual(),
            pair.residual
        )));
    }
    Ok(plan)
}

/// Both sides of the pressure identity for a converged pair:
/// `(-int phi dmu - int psi dnu, int beta A dpi + H(pi))`.
pub fn pressure_identity(problem: &Problem, pair: &PotentialPair) -> Result<(f64, f64)> {
    let plan = gibbs_plan(problem, pair)?;
    let dual = -problem.mu().integrate(pair.phi.view()) - problem.nu().integrate(pair.psi.view());
    let mean_payoff: f64 = plan
        .table()
        .iter()
        .zip(problem.cost().payoff().iter())
        .map(|(p, a)| p * a)
        .sum();
    let entropy = if plan.is_feasible() {
        relative_entropy(&plan, problem.mu(), problem.nu())?.to_f64()
    } else {
        table_entropy(plan.table(), problem)
    };
    Ok((dual, pair.beta * mean_payoff + entropy))
}

fn table_entropy(p: &Array2<f64>, problem: &Problem) -> f64 {
    let mu = problem.mu().weights();
    let nu = problem.nu().weights();
    let mut h = 0.0;
    for ((i, j), &v) in p.indexed_iter() {
        if v > 0.0 {
            h -= v * (v / (mu[i] * nu[j])).ln();
        }
    }
    h
}

fn oscillation(v: &Array1<f64>) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// The pressure `P(beta A) = -int phi dmu - int psi dnu`.
///
/// The value is cross-checked against `int beta A dpi + H(pi)` for the Gibbs
/// plan. The two sides differ by `sum (phi_i - k)(row_i - mu_i)` for any
/// constant `k`, so the allowance scales with the residual times the
/// oscillation of the potentials, plus a rounding floor proportional to
/// `beta |A|`.
pub fn pressure(problem: &Problem, pair: &PotentialPair) -> Result<f64> {
    let (dual, primal) = pressure_identity(problem, pair)?;
    let scale = pair.beta * problem.cost().max_payoff().abs().max(problem.cost().min_payoff().abs());
    let allowance =
        10.0 * (pair.residual * (1.0 + oscillation(&pair.phi) + oscillation(&pair.psi)) + 1e-14 * (1.0 + scale));
    if (dual - primal).abs() > allowance {
        return Err(Error::Invariant(format!(
            "pressure identity off by {:e} (allowance {allowance:e})",
            (dual - primal).abs()
        )));
    }
    Ok(dual)
}

/// `max_{i != j} |f(i) - f(j)| / dist(i, j)`; zero on a one-point space.
pub fn lipschitz_constant(f: ArrayView1<'_, f64>, dist: &Array2<f64>) -> f64 {
    let n = f.len();
    let mut lip: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            lip = lip.max((f[i] - f[j]).abs() / dist[[i, j]]);
        }
    }
    lip
}

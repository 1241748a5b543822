//! Annealing `beta` upward: schedules, warm-started solves, the pressure
//! excess `P(beta A) - beta m(A)` and extraction of the zero-temperature limit.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::duality::{conjugacy_defect, conjugate_pair};
use crate::error::{Error, Result};
use crate::measure::{linear_cost, relative_entropy, TransportPlan};
use crate::oracle;
use crate::potentials::{self, PotentialPair, SolveOptions};
use crate::problem::Problem;

pub const DEFAULT_BETA_MAX: f64 = 16384.0;
pub const DEFAULT_FACTOR: f64 = 2.0;
pub const DEFAULT_LIMIT_TOL: f64 = 1e-3;
/// Slack allowed on the monotone decrease of the excess.
pub const EXCESS_SLACK: f64 = 1e-9;
/// Agreement required between the final excess and the entropy of the final plan.
pub const ENTROPY_MATCH_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    betas: Vec<f64>,
}

impl Schedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Argument("schedule is empty".into()));
        }
        if betas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("schedule must be strictly increasing".into()));
        }
        if !(betas[0] >= 1e-6) || !(betas[betas.len() - 1] <= 1e7) {
            return Err(Error::Argument("schedule must stay within [1e-6, 1e7]".into()));
        }
        Ok(Self { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
}

/// `1, factor, factor^2, ...` below `beta_max`, then `beta_max` itself.
pub fn default_schedule(beta_max: f64, factor: f64) -> Result<Schedule> {
    if !(beta_max > 1.0) || !beta_max.is_finite() {
        return Err(Error::Argument(format!("beta-max must exceed 1, got {beta_max}")));
    }
    if !(factor > 1.0) || !factor.is_finite() {
        return Err(Error::Argument(format!("factor must exceed 1, got {factor}")));
    }
    let mut betas = Vec::new();
    let mut b = 1.0;
    while b < beta_max * (1.0 - 1e-12) {
        betas.push(b);
        b *= factor;
    }
    betas.push(beta_max);
    Schedule::new(betas)
}

#[derive(Clone, Debug)]
pub struct AnnealOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Passed to [`oracle::exact_ot`] when computing `m(A)`.
    pub oracle_cap: usize,
}

impl Default for AnnealOptions {
    fn default() -> Self {
        Self {
            tol: potentials::DEFAULT_TOL,
            max_sweeps: potentials::DEFAULT_MAX_SWEEPS,
            oracle_cap: oracle::DEFAULT_CAP,
        }
    }
}

/// Everything recorded at one inverse temperature.
#[derive(Clone, Debug)]
pub struct Record {
    pub beta: f64,
    pub pair: PotentialPair,
    pub scaled_phi: Array1<f64>,
    pub scaled_psi: Array1<f64>,
    pub plan: TransportPlan,
    /// `log pi_beta`, exact even where the plan entry underflows.
    pub log_plan: Array2<f64>,
    pub pressure: f64,
    pub excess: f64,
    pub entropy: f64,
    pub cost: f64,
    /// `|phi_beta / beta - phi_prev / beta_prev|_inf`; infinite for the first record.
    pub max_phi_delta: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    problem: Problem,
    records: Vec<Record>,
    m_a: f64,
    m_a_exact: bool,
}

impl Trajectory {
    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory is never empty")
    }

    /// `m(A) = -alpha(c)` used for the excess column.
    pub fn m_a(&self) -> f64 {
        self.m_a
    }

    /// False when `m(A)` was read off the largest-beta plan instead of the oracle.
    pub fn m_a_exact(&self) -> bool {
        self.m_a_exact
    }
}

/// Solves at every `beta` of the schedule, each solve warm-started from the
/// previous pair rescaled by the ratio of inverse temperatures.
pub fn anneal(problem: &Problem, schedule: &Schedule, tol: f64) -> Result<Trajectory> {
    anneal_with(
        problem,
        schedule,
        &AnnealOptions {
            tol,
            ..AnnealOptions::default()
        },
    )
}

pub fn anneal_with(problem: &Problem, schedule: &Schedule, opts: &AnnealOptions) -> Result<Trajectory> {
    let solve_opts = SolveOptions {
        tol: opts.tol,
        max_sweeps: opts.max_sweeps,
        ..SolveOptions::default()
    };
    let mut solved: Vec<(PotentialPair, TransportPlan, usize)> = Vec::with_capacity(schedule.betas.len());
    for &beta in &schedule.betas {
        let warm = solved.last().map(|(p, _, _)| p.rescaled(beta));
        let (pair, report) = potentials::schrodinger_solve_with(problem, beta, solve_opts, warm.as_ref())?;
        let plan = potentials::gibbs_plan(problem, &pair)?;
        log::info!("beta={beta} sweeps={} residual={:e}", report.iterations, report.residual);
        solved.push((pair, plan, report.iterations));
    }

    let (m_a, m_a_exact) = match oracle::exact_ot(problem.mu(), problem.nu(), problem.cost().cost(), opts.oracle_cap) {
        Ok(res) => (res.m_a, true),
        Err(Error::Capacity(msg)) => {
            log::warn!("m(A) approximated by the largest-beta plan: {msg}");
            let last = &solved.last().expect("schedule is never empty").1;
            (-linear_cost(last, problem.cost())?, false)
        }
        Err(e) => return Err(e),
    };

    let mut records: Vec<Record> = Vec::with_capacity(solved.len());
    for (pair, plan, iterations) in solved {
        let beta = pair.beta();
        let pressure = potentials::pressure(problem, &pair)?;
        let entropy = relative_entropy(&plan, problem.mu(), problem.nu())?.to_f64();
        let cost = linear_cost(&plan, problem.cost())?;
        let scaled_phi = pair.phi() / beta;
        let scaled_psi = pair.psi() / beta;
        let max_phi_delta = records.last().map_or(f64::INFINITY, |prev| sup_diff(&prev.scaled_phi, &scaled_phi));
        records.push(Record {
            beta,
            log_plan: potentials::log_gibbs(problem, &pair),
            scaled_phi,
            scaled_psi,
            plan,
            pressure,
            excess: pressure - beta * m_a,
            entropy,
            cost,
            max_phi_delta,
            iterations,
            pair,
        });
    }
    Ok(Trajectory {
        problem: problem.clone(),
        records,
        m_a,
        m_a_exact,
    })
}

fn sup_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The `(beta, excess)` column, checked to be non-increasing and bounded by `H(pi_beta)`.
pub fn pressure_excess(trajectory: &Trajectory) -> Result<Vec<(f64, f64)>> {
    let recs = &trajectory.records;
    for w in recs.windows(2) {
        if w[1].excess > w[0].excess + EXCESS_SLACK {
            return Err(Error::Invariant(format!(
                "excess rose from {} at beta = {} to {} at beta = {}",
                w[0].excess, w[0].beta, w[1].excess, w[1].beta
            )));
        }
    }
    if trajectory.m_a_exact {
        for r in recs {
            if r.excess > r.entropy + EXCESS_SLACK {
                return Err(Error::Invariant(format!(
                    "excess {} exceeds H(pi) = {} at beta = {}",
                    r.excess, r.entropy, r.beta
                )));
            }
        }
    }
    Ok(recs.iter().map(|r| (r.beta, r.excess)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitDeltas {
    pub phi: f64,
    pub psi: f64,
    pub plan: f64,
}

/// The zero-temperature limit read off the end of a trajectory.
#[derive(Clone, Debug)]
pub struct ZeroTempResult {
    /// c-conjugate pair generated by the last `phi_beta / beta`; feasible by construction.
    pub phi: Array1<f64>,
    pub psi: Array1<f64>,
    /// Last `phi_beta / beta` and `psi_beta / beta` as computed.
    pub raw_phi: Array1<f64>,
    pub raw_psi: Array1<f64>,
    pub plan: TransportPlan,
    pub h_max_estimate: f64,
    pub plan_entropy: f64,
    pub converged: bool,
    /// Largest of the last two successive changes, per quantity.
    pub deltas: LimitDeltas,
    /// `max |psi - phi^c|, |phi - psi^c|` of the raw pair.
    pub conjugacy_defect: f64,
    pub m_a_exact: bool,
}

/// Declares convergence when the last two successive changes of the scaled
/// potentials and of the plan are all at most `limit_tol`, and the final excess
/// agrees with the entropy of the final plan.
pub fn extract_limit(trajectory: &Trajectory, limit_tol: f64) -> Result<ZeroTempResult> {
    let recs = &trajectory.records;
    if recs.len() < 3 {
        return Err(Error::Argument(format!(
            "limit extraction needs at least 3 temperatures, got {}",
            recs.len()
        )));
    }
    if !(limit_tol > 0.0) {
        return Err(Error::Argument(format!("limit tolerance must be positive, got {limit_tol}")));
    }
    let k = recs.len();
    let mut deltas = LimitDeltas {
        phi: 0.0,
        psi: 0.0,
        plan: 0.0,
    };
    for w in recs[k - 3..].windows(2) {
        deltas.phi = deltas.phi.max(sup_diff(&w[0].scaled_phi, &w[1].scaled_phi));
        deltas.psi = deltas.psi.max(sup_diff(&w[0].scaled_psi, &w[1].scaled_psi));
        deltas.plan = deltas.plan.max(w[0].plan.sup_distance(&w[1].plan));
    }
    let last = &recs[k - 1];
    let cost = trajectory.problem.cost().cost();
    let pair = conjugate_pair(last.scaled_phi.view(), cost)?;
    let defect = conjugacy_defect(last.scaled_phi.view(), last.scaled_psi.view(), cost);
    let entropy_match = (last.excess - last.entropy).abs() <= ENTROPY_MATCH_TOL;
    let converged = deltas.phi <= limit_tol && deltas.psi <= limit_tol && deltas.plan <= limit_tol && entropy_match;
    if !converged {
        log::warn!(
            "limit not converged: deltas {:?}, excess {} vs H {}",
            deltas,
            last.excess,
            last.entropy
        );
    }
    Ok(ZeroTempResult {
        phi: pair.phi().clone(),
        psi: pair.psi().clone(),
        raw_phi: last.scaled_phi.clone(),
        raw_psi: last.scaled_psi.clone(),
        plan: last.plan.clone(),
        h_max_estimate: last.excess,
        plan_entropy: last.entropy,
        converged,
        deltas,
        conjugacy_defect: defect,
        m_a_exact: trajectory.m_a_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{product_plan, Marginal, MetricSample};
    use crate::potentials::lipschitz_constant;
    use crate::sampling;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> MetricSample {
        MetricSample::from_dist(Array2::from_shape_fn((n, n), |(i, j)| (i as f64 - j as f64).abs())).unwrap()
    }

    fn flip() -> Problem {
        let h = Marginal::uniform(2).unwrap();
        Problem::on_same_space(line(2), h.clone(), h, array![[0.0, 1.0], [1.0, 0.0]]).unwrap()
    }

    #[test]
    fn schedules() {
        assert_eq!(default_schedule(8.0, 2.0).unwrap().betas(), &[1.0, 2.0, 4.0, 8.0]);
        assert_eq!(default_schedule(10.0, 2.0).unwrap().betas(), &[1.0, 2.0, 4.0, 8.0, 10.0]);
        assert_eq!(
            default_schedule(1e4, 4.0).unwrap().betas(),
            &[1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0, 1e4]
        );
        assert_eq!(default_schedule(DEFAULT_BETA_MAX, DEFAULT_FACTOR).unwrap().betas().len(), 15);
        assert!(default_schedule(1.0, 2.0).is_err());
        assert!(default_schedule(8.0, 1.0).is_err());
        assert!(Schedule::new(vec![1.0, 1.0]).is_err());
        assert!(Schedule::new(vec![1e-7, 1.0]).is_err());
        assert!(Schedule::new(vec![1.0, 1e8]).is_err());
    }

    #[test]
    fn constant_cost_stays_at_the_product() {
        let mu = Marginal::from_vec(vec![0.2, 0.3, 0.5]).unwrap();
        let nu = Marginal::from_vec(vec![0.6, 0.4]).unwrap();
        let p = Problem::new(line(3), line(2), mu.clone(), nu.clone(), Array2::from_elem((3, 2), 3.0)).unwrap();
        let traj = anneal(&p, &default_schedule(1024.0, 4.0).unwrap(), 1e-10).unwrap();
        let prod = product_plan(&mu, &nu);
        for r in traj.records() {
            assert!(r.plan.sup_distance(&prod) <= 1e-12);
            assert!(r.excess.abs() <= 1e-9, "{}", r.excess);
        }
        assert!(pressure_excess(&traj).unwrap().iter().all(|(_, e)| e.abs() <= 1e-9));
        let lim = extract_limit(&traj, DEFAULT_LIMIT_TOL).unwrap();
        assert!(lim.converged);
        assert!(lim.raw_phi.iter().all(|v| v.abs() < 1e-12));
        assert!(lim.raw_psi.iter().all(|v| (v - 3.0).abs() < 1e-12));
        assert!(lim.h_max_estimate.abs() < 1e-9);
    }

    #[test]
    fn separable_cost_stays_at_the_product() {
        let mu = Marginal::from_vec(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let nu = Marginal::from_vec(vec![0.5, 0.25, 0.25]).unwrap();
        let (u, v) = ([0.3, 1.2, 0.0, 0.7], [0.9, 0.1, 0.4]);
        let c = Array2::from_shape_fn((4, 3), |(i, j)| u[i] + v[j]);
        let p = Problem::new(line(4), line(3), mu.clone(), nu.clone(), c).unwrap();
        let traj = anneal(&p, &default_schedule(4096.0, 4.0).unwrap(), 1e-10).unwrap();
        let prod = product_plan(&mu, &nu);
        for r in traj.records() {
            assert!(r.plan.sup_distance(&prod) <= 1e-10);
            assert!(r.excess.abs() <= 1e-8, "{} at {}", r.excess, r.beta);
        }
    }

    #[test]
    fn identity_cost_excess_falls_to_minus_log_two() {
        let traj = anneal(&flip(), &default_schedule(DEFAULT_BETA_MAX, DEFAULT_FACTOR).unwrap(), 1e-10).unwrap();
        assert!(traj.m_a_exact());
        let ex = pressure_excess(&traj).unwrap();
        assert!(ex[0].1 < 0.0);
        assert_abs_diff_eq!(ex.last().unwrap().1, -std::f64::consts::LN_2, epsilon = 1e-3);
        let lim = extract_limit(&traj, DEFAULT_LIMIT_TOL).unwrap();
        assert!(lim.converged);
        let diag = array![[0.5, 0.0], [0.0, 0.5]];
        assert!(lim.plan.table().iter().zip(diag.iter()).all(|(a, b)| (a - b).abs() < 1e-3));
        assert!(lim.conjugacy_defect < 1e-3);
    }

    #[test]
    fn scaled_potentials_are_equicontinuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = sampling::random_instance(&mut rng, 4, 4);
        let traj = anneal(&p, &default_schedule(1024.0, 2.0).unwrap(), 1e-10).unwrap();
        for r in traj.records() {
            assert!(lipschitz_constant(r.scaled_phi.view(), p.x().dist()) <= p.cost().lip_a() + 1e-9);
            assert!(lipschitz_constant(r.scaled_psi.view(), p.y().dist()) <= p.cost().lip_a() + 1e-9);
        }
        pressure_excess(&traj).unwrap();
    }

    #[test]
    fn short_trajectories_are_refused() {
        let traj = anneal(&flip(), &Schedule::new(vec![1.0, 2.0]).unwrap(), 1e-10).unwrap();
        assert!(matches!(extract_limit(&traj, 1e-3), Err(Error::Argument(_))));
    }

    #[test]
    fn unconverged_limit_is_flagged() {
        let traj = anneal(&flip(), &Schedule::new(vec![1.0, 2.0, 3.0]).unwrap(), 1e-10).unwrap();
        let lim = extract_limit(&traj, 1e-3).unwrap();
        assert!(!lim.converged);
    }

    #[test]
    fn oracle_cap_fallback_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sampling::random_instance(&mut rng, 3, 3);
        let opts = AnnealOptions {
            oracle_cap: 4,
            ..AnnealOptions::default()
        };
        let traj = anneal_with(&p, &default_schedule(64.0, 4.0).unwrap(), &opts).unwrap();
        assert!(!traj.m_a_exact());
    }
}

//! Exact optimal transport on desk-scale instances.
//!
//! Two independent exact paths: a scan over permutation plans for uniform
//! square instances, and enumeration of the basic feasible solutions of the
//! transportation polytope through spanning trees of the complete bipartite
//! graph. On top of the optimal vertex set, [`max_entropy_optimal`] finds the
//! optimal plan of largest relative entropy.

use itertools::Itertools;
use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{Marginal, TransportPlan};

/// Largest `n + m` handled by vertex enumeration.
pub const DEFAULT_CAP: usize = 10;
/// Largest `n = m` handled by the permutation scan.
pub const PERMUTATION_MAX: usize = 8;
/// Cost tolerance for collecting the argmin set.
pub const TIE_TOL: f64 = 1e-12;
/// Largest optimal face (in vertices) searched for the max-entropy plan.
pub const FACE_CAP: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Permutation,
    VertexEnum,
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub alpha: f64,
    pub m_a: f64,
    pub optimal_vertices: Vec<TransportPlan>,
    pub method: Method,
    cost: Array2<f64>,
}

impl OracleResult {
    pub fn cost(&self) -> &Array2<f64> {
        &self.cost
    }
}

fn check_shapes(mu: &Marginal, nu: &Marginal, cost: &Array2<f64>) -> Result<()> {
    if cost.dim() != (mu.len(), nu.len()) {
        return Err(Error::Dimension {
            expected: (mu.len(), nu.len()),
            found: cost.dim(),
        });
    }
    Ok(())
}

fn table_cost(p: &Array2<f64>, cost: &Array2<f64>) -> f64 {
    p.iter().zip(cost.iter()).map(|(a, b)| a * b).sum()
}

/// Picks the permutation scan when it applies, vertex enumeration when
/// `n + m <= cap`, and fails with a capacity error otherwise.
pub fn exact_ot(mu: &Marginal, nu: &Marginal, cost: &Array2<f64>, cap: usize) -> Result<OracleResult> {
    check_shapes(mu, nu, cost)?;
    let (n, m) = cost.dim();
    if n == m && n <= PERMUTATION_MAX && mu.is_uniform() && nu.is_uniform() {
        permutation_scan(mu, nu, cost)
    } else if n + m <= cap {
        vertex_enum(mu, nu, cost, cap)
    } else {
        Err(Error::Capacity(format!(
            "{n}x{m} instance exceeds the oracle cap n + m <= {cap}; use the large-beta plan instead"
        )))
    }
}

fn collect_argmin(candidates: Vec<Array2<f64>>, cost: &Array2<f64>, mu: &Marginal, nu: &Marginal, method: Method) -> Result<OracleResult> {
    let values: Vec<f64> = candidates.iter().map(|p| table_cost(p, cost)).collect();
    let alpha = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut optimal_vertices = Vec::new();
    for (p, v) in candidates.into_iter().zip(values) {
        if v <= alpha + TIE_TOL {
            optimal_vertices.push(TransportPlan::new(p, mu, nu)?);
        }
    }
    Ok(OracleResult {
        alpha,
        m_a: -alpha,
        optimal_vertices,
        method,
        cost: cost.clone(),
    })
}

/// Minimum over the `n!` permutation plans; requires uniform marginals with `n = m <= 8`.
pub fn permutation_scan(mu: &Marginal, nu: &Marginal, cost: &Array2<f64>) -> Result<OracleResult> {
    check_shapes(mu, nu, cost)?;
    let (n, m) = cost.dim();
    if n != m || !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::Argument("permutation scan needs uniform square marginals".into()));
    }
    if n > PERMUTATION_MAX {
        return Err(Error::Capacity(format!("permutation scan limited to n <= {PERMUTATION_MAX}")));
    }
    let w = 1.0 / n as f64;
    let plans = (0..n)
        .permutations(n)
        .map(|perm| {
            let mut p = Array2::zeros((n, n));
            for (i, &j) in perm.iter().enumerate() {
                p[[i, j]] = w;
            }
            p
        })
        .collect();
    collect_argmin(plans, cost, mu, nu, Method::Permutation)
}

/// Every distinct vertex of the transportation polytope of `(mu, nu)`.
pub fn enumerate_vertices(mu: &Marginal, nu: &Marginal, cap: usize) -> Result<Vec<Array2<f64>>> {
    let (n, m) = (mu.len(), nu.len());
    if n + m > cap {
        return Err(Error::Capacity(format!("vertex enumeration limited to n + m <= {cap}")));
    }
    let edges: Vec<(usize, usize)> = (0..n).cartesian_product(0..m).collect();
    let mut search = TreeSearch {
        n,
        m,
        mu: mu.weights().to_vec(),
        nu: nu.weights().to_vec(),
        edges,
        chosen: Vec::with_capacity(n + m - 1),
        vertices: Vec::new(),
    };
    let parent: Vec<usize> = (0..n + m).collect();
    search.extend(0, &parent);
    Ok(search.vertices)
}

/// Vertex enumeration followed by the argmin over the vertex costs.
pub fn vertex_enum(mu: &Marginal, nu: &Marginal, cost: &Array2<f64>, cap: usize) -> Result<OracleResult> {
    check_shapes(mu, nu, cost)?;
    let vertices = enumerate_vertices(mu, nu, cap)?;
    collect_argmin(vertices, cost, mu, nu, Method::VertexEnum)
}

struct TreeSearch {
    n: usize,
    m: usize,
    mu: Vec<f64>,
    nu: Vec<f64>,
    edges: Vec<(usize, usize)>,
    chosen: Vec<usize>,
    vertices: Vec<Array2<f64>>,
}

fn find(parent: &[usize], mut a: usize) -> usize {
    while parent[a] != a {
        a = parent[a];
    }
    a
}

impl TreeSearch {
    fn extend(&mut self, next: usize, parent: &[usize]) {
        let need = self.n + self.m - 1;
        if self.chosen.len() == need {
            if let Some(p) = self.solve_tree() {
                if !self
                    .vertices
                    .iter()
                    .any(|v| v.iter().zip(p.iter()).all(|(a, b)| (a - b).abs() <= TIE_TOL))
                {
                    self.vertices.push(p);
                }
            }
            return;
        }
        if self.edges.len() - next < need - self.chosen.len() {
            return;
        }
        for e in next..self.edges.len() {
            if self.edges.len() - e < need - self.chosen.len() {
                break;
            }
            let (i, j) = self.edges[e];
            let (a, b) = (find(parent, i), find(parent, self.n + j));
            if a == b {
                continue;
            }
            let mut merged = parent.to_vec();
            merged[a] = b;
            self.chosen.push(e);
            self.extend(e + 1, &merged);
            self.chosen.pop();
        }
    }

    /// Unique flow on the spanning tree, peeling leaves; `None` when some entry is negative.
    fn solve_tree(&self) -> Option<Array2<f64>> {
        let nodes = self.n + self.m;
        let mut supply: Vec<f64> = self.mu.iter().chain(self.nu.iter()).copied().collect();
        let mut degree = vec![0usize; nodes];
        let mut alive = vec![true; self.chosen.len()];
        for &e in &self.chosen {
            let (i, j) = self.edges[e];
            degree[i] += 1;
            degree[self.n + j] += 1;
        }
        let mut p = Array2::zeros((self.n, self.m));
        for _ in 0..self.chosen.len() {
            let (k, leaf) = self.chosen.iter().enumerate().find_map(|(k, &e)| {
                if !alive[k] {
                    return None;
                }
                let (i, j) = self.edges[e];
                if degree[i] == 1 {
                    Some((k, i))
                } else if degree[self.n + j] == 1 {
                    Some((k, self.n + j))
                } else {
                    None
                }
            })?;
            let (i, j) = self.edges[self.chosen[k]];
            let other = if leaf == i { self.n + j } else { i };
            let flow = supply[leaf];
            if flow < -TIE_TOL {
                return None;
            }
            let flow = flow.max(0.0);
            p[[i, j]] = flow;
            supply[leaf] = 0.0;
            supply[other] -= flow;
            degree[i] -= 1;
            degree[self.n + j] -= 1;
            alive[k] = false;
        }
        if supply.iter().any(|s| s.abs() > 1e-9) {
            return None;
        }
        Some(p)
    }
}

fn table_entropy(p: &Array2<f64>, mu: &Marginal, nu: &Marginal) -> f64 {
    let (w, v) = (mu.weights(), nu.weights());
    p.indexed_iter()
        .filter(|(_, &x)| x > 0.0)
        .map(|((i, j), &x)| -x * (x / (w[i] * v[j])).ln())
        .sum()
}

fn combine(vertices: &[&Array2<f64>], lambda: &[f64]) -> Array2<f64> {
    let mut p = Array2::zeros(vertices[0].dim());
    for (v, &l) in vertices.iter().zip(lambda) {
        p.scaled_add(l, *v);
    }
    p
}

/// Grid points of the `k`-simplex with spacing `1 / steps`.
fn simplex_grid(k: usize, steps: usize, f: &mut impl FnMut(&[f64])) {
    fn rec(k: usize, left: usize, steps: usize, acc: &mut Vec<f64>, f: &mut impl FnMut(&[f64])) {
        if acc.len() + 1 == k {
            acc.push(left as f64 / steps as f64);
            f(acc);
            acc.pop();
            return;
        }
        for t in 0..=left {
            acc.push(t as f64 / steps as f64);
            rec(k, left - t, steps, acc, f);
            acc.pop();
        }
    }
    rec(k, steps, steps, &mut Vec::with_capacity(k), f);
}

/// The optimal plan of largest relative entropy, searched over the convex hull
/// of the optimal vertices: grid search on barycentric coordinates, then
/// pairwise-exchange pattern search down to step `tol`.
pub fn max_entropy_optimal(result: &OracleResult, mu: &Marginal, nu: &Marginal, tol: f64) -> Result<TransportPlan> {
    let k = result.optimal_vertices.len();
    if k == 0 {
        return Err(Error::Invariant("oracle result lists no optimal vertex".into()));
    }
    if k > FACE_CAP {
        return Err(Error::Capacity(format!(
            "optimal face has {k} vertices, more than the {FACE_CAP} searched exhaustively"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tol must be positive, got {tol}")));
    }
    if k == 1 {
        return Ok(result.optimal_vertices[0].clone());
    }
    let vertices: Vec<&Array2<f64>> = result.optimal_vertices.iter().map(|v| v.table()).collect();
    let h = |lambda: &[f64]| table_entropy(&combine(&vertices, lambda), mu, nu);

    let steps = if k <= 3 { 1000 } else { 100 };
    let mut best = vec![1.0 / k as f64; k];
    let mut best_h = h(&best);
    simplex_grid(k, steps, &mut |lambda| {
        let v = h(lambda);
        if v > best_h {
            best_h = v;
            best.copy_from_slice(lambda);
        }
    });

    let mut step = 1.0 / steps as f64;
    while step >= tol {
        let mut improved = false;
        for a in 0..k {
            for b in 0..k {
                if a == b || best[b] < step {
                    continue;
                }
                let mut trial = best.clone();
                trial[a] += step;
                trial[b] -= step;
                let v = h(&trial);
                if v > best_h {
                    best_h = v;
                    best = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let mass: f64 = best.iter().sum();
    best.iter_mut().for_each(|l| *l /= mass);
    let plans: Vec<&TransportPlan> = result.optimal_vertices.iter().collect();
    TransportPlan::mixture(&plans, &best, mu, nu)
}

/// Feasible and within `tol` of the optimal cost.
pub fn is_optimal(plan: &TransportPlan, result: &OracleResult, tol: f64) -> bool {
    plan.shape() == result.cost.dim() && plan.is_feasible() && table_cost(plan.table(), &result.cost) <= result.alpha + tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::product_plan;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn half() -> Marginal {
        Marginal::uniform(2).unwrap()
    }

    #[test]
    fn identity_cost_has_one_optimal_vertex() {
        let c = array![[0.0, 1.0], [1.0, 0.0]];
        for res in [permutation_scan(&half(), &half(), &c).unwrap(), vertex_enum(&half(), &half(), &c, DEFAULT_CAP).unwrap()] {
            assert_eq!(res.alpha, 0.0);
            assert_eq!(res.optimal_vertices.len(), 1);
            assert_eq!(res.optimal_vertices[0].table(), &array![[0.5, 0.0], [0.0, 0.5]]);
        }
    }

    #[test]
    fn constant_cost_makes_every_vertex_optimal() {
        let mu = Marginal::from_vec(vec![0.2, 0.3, 0.5]).unwrap();
        let nu = Marginal::from_vec(vec![0.6, 0.4]).unwrap();
        let c = Array2::from_elem((3, 2), 2.5);
        let res = exact_ot(&mu, &nu, &c, DEFAULT_CAP).unwrap();
        assert_eq!(res.method, Method::VertexEnum);
        assert_abs_diff_eq!(res.alpha, 2.5, epsilon = 1e-14);
        assert_eq!(res.optimal_vertices.len(), enumerate_vertices(&mu, &nu, DEFAULT_CAP).unwrap().len());
        let perm = permutation_scan(&Marginal::uniform(3).unwrap(), &Marginal::uniform(3).unwrap(), &Array2::from_elem((3, 3), 2.5)).unwrap();
        assert_eq!(perm.optimal_vertices.len(), 6);
    }

    /// Plain loop over the six 3x3 permutations, kept separate from `permutation_scan`.
    fn six_permutations(c: &Array2<f64>) -> f64 {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        perms
            .iter()
            .map(|p| (0..3).map(|i| c[[i, p[i]]]).sum::<f64>() / 3.0)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn integer_costs_match_a_hand_written_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u = Marginal::uniform(3).unwrap();
        for _ in 0..20 {
            let c = Array2::from_shape_fn((3, 3), |_| rng.random_range(0..10) as f64);
            let expected = six_permutations(&c);
            assert_abs_diff_eq!(permutation_scan(&u, &u, &c).unwrap().alpha, expected, epsilon = 1e-14);
            assert_abs_diff_eq!(vertex_enum(&u, &u, &c, DEFAULT_CAP).unwrap().alpha, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn both_paths_agree_on_uniform_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 2..=5 {
            let u = Marginal::uniform(n).unwrap();
            for _ in 0..3 {
                let c = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
                let a = permutation_scan(&u, &u, &c).unwrap();
                let b = vertex_enum(&u, &u, &c, DEFAULT_CAP).unwrap();
                assert_abs_diff_eq!(a.alpha, b.alpha, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn vertices_are_sparse_couplings() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n, m) in [(2, 3), (3, 3), (4, 3), (2, 6)] {
            let mu = crate::sampling::random_marginal(&mut rng, n);
            let nu = crate::sampling::random_marginal(&mut rng, m);
            let vs = enumerate_vertices(&mu, &nu, DEFAULT_CAP).unwrap();
            assert!(!vs.is_empty());
            for v in vs {
                let plan = TransportPlan::new(v, &mu, &nu).unwrap();
                assert!(plan.is_feasible());
                assert!(plan.support_size(0.0) < n + m);
            }
        }
    }

    #[test]
    fn vertex_enumeration_beats_random_plans() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mu = crate::sampling::random_marginal(&mut rng, 3);
        let nu = crate::sampling::random_marginal(&mut rng, 4);
        let c = Array2::from_shape_fn((3, 4), |_| rng.random::<f64>());
        let res = exact_ot(&mu, &nu, &c, DEFAULT_CAP).unwrap();
        for _ in 0..200 {
            let p = crate::sampling::random_plan(&mu, &nu, &mut rng);
            assert!(table_cost(p.table(), &c) >= res.alpha - 1e-12);
        }
    }

    #[test]
    fn capacity_errors() {
        let mu = Marginal::uniform(6).unwrap();
        let nu = Marginal::normalized(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!(matches!(exact_ot(&mu, &nu, &Array2::zeros((6, 6)), DEFAULT_CAP), Err(Error::Capacity(_))));
        let u = Marginal::uniform(3).unwrap();
        let flat = exact_ot(&u, &u, &Array2::zeros((3, 3)), DEFAULT_CAP).unwrap();
        assert!(matches!(max_entropy_optimal(&flat, &u, &u, 1e-6), Err(Error::Capacity(_))));
    }

    #[test]
    fn zero_cost_face_maximizer_is_the_product() {
        let res = exact_ot(&half(), &half(), &Array2::zeros((2, 2)), DEFAULT_CAP).unwrap();
        assert_eq!(res.optimal_vertices.len(), 2);
        let best = max_entropy_optimal(&res, &half(), &half(), 1e-9).unwrap();
        assert!(best.sup_distance(&product_plan(&half(), &half())) < 1e-9);
        // every vertex scores -log 2 against P(0) = 0
        for v in &res.optimal_vertices {
            assert_abs_diff_eq!(table_entropy(v.table(), &half(), &half()), -std::f64::consts::LN_2, epsilon = 1e-15);
        }
    }

    #[test]
    fn segment_maximizer_matches_a_fine_scan() {
        // cost ties the two vertices of a 2x2 polytope with nonuniform marginals
        let mu = Marginal::from_vec(vec![0.3, 0.7]).unwrap();
        let nu = Marginal::from_vec(vec![0.6, 0.4]).unwrap();
        let c = array![[1.0, 2.0], [3.0, 4.0]];
        let res = exact_ot(&mu, &nu, &c, DEFAULT_CAP).unwrap();
        assert_eq!(res.optimal_vertices.len(), 2);
        let best = max_entropy_optimal(&res, &mu, &nu, 1e-10).unwrap();

        let (a, b) = (res.optimal_vertices[0].table(), res.optimal_vertices[1].table());
        let mut scan_best = (f64::NEG_INFINITY, 0.0);
        for k in 0..=100_000 {
            let t = k as f64 * 1e-5;
            let p = a * t + b * (1.0 - t);
            let v = table_entropy(&p, &mu, &nu);
            if v > scan_best.0 {
                scan_best = (v, t);
            }
        }
        let scanned = a * scan_best.1 + b * (1.0 - scan_best.1);
        assert!(best.table().iter().zip(scanned.iter()).all(|(x, y)| (x - y).abs() < 2e-5));
        // here the product plan is itself optimal since the cost is separable
        assert!(best.sup_distance(&product_plan(&mu, &nu)) < 1e-6);
    }

    #[test]
    fn optimality_predicate() {
        let id = array![[0.0, 1.0], [1.0, 0.0]];
        let res = exact_ot(&half(), &half(), &id, DEFAULT_CAP).unwrap();
        assert!(!is_optimal(&product_plan(&half(), &half()), &res, 1e-9));
        assert!(is_optimal(&res.optimal_vertices[0], &res, 1e-12));
        let flat = exact_ot(&half(), &half(), &Array2::from_elem((2, 2), 3.0), DEFAULT_CAP).unwrap();
        assert!(is_optimal(&product_plan(&half(), &half()), &flat, 1e-12));
    }
}

//! Random instances and couplings for tests, benchmarks and the CLI demo data.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::measure::{product_plan, Marginal, MetricSample, TransportPlan};
use crate::problem::Problem;

/// North-west corner vertex of the transport polytope for the given visiting orders.
pub fn north_west_corner(mu: &Marginal, nu: &Marginal, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    let mut p = Array2::zeros((mu.len(), nu.len()));
    let mut r: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let mut c: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    let (mut a, mut b) = (0, 0);
    while a < rows.len() && b < cols.len() {
        let t = r[a].min(c[b]);
        p[[rows[a], cols[b]]] += t;
        r[a] -= t;
        c[b] -= t;
        if a + 1 == rows.len() {
            b += 1;
        } else if b + 1 == cols.len() || r[a] <= c[b] {
            a += 1;
        } else {
            b += 1;
        }
    }
    // leftover rounding mass stays on the last cell visited
    let total: f64 = p.sum();
    p[[rows[rows.len() - 1], cols[cols.len() - 1]]] += 1.0 - total;
    p.mapv_inplace(|v: f64| v.max(0.0));
    p
}

/// A random coupling of `mu` and `nu`: a random convex combination of the
/// product plan and a few north-west corner vertices.
pub fn random_plan<R: Rng + ?Sized>(mu: &Marginal, nu: &Marginal, rng: &mut R) -> TransportPlan {
    let k = rng.random_range(1..=3);
    let mut tables = vec![product_plan(mu, nu).into_table()];
    for _ in 0..k {
        let mut rows: Vec<usize> = (0..mu.len()).collect();
        let mut cols: Vec<usize> = (0..nu.len()).collect();
        rows.shuffle(rng);
        cols.shuffle(rng);
        tables.push(north_west_corner(mu, nu, &rows, &cols));
    }
    let raw: Vec<f64> = (0..tables.len()).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut p = Array2::zeros((mu.len(), nu.len()));
    for (t, w) in tables.iter().zip(&raw) {
        p.scaled_add(w / total, t);
    }
    let mass = p.sum();
    p /= mass;
    TransportPlan::new(p, mu, nu).expect("mixture of couplings is a coupling")
}

/// Euclidean distances between `n` uniform points of the unit square.
pub fn random_metric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> MetricSample {
    loop {
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        let dist = Array2::from_shape_fn((n, n), |(i, j)| {
            let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
            (dx * dx + dy * dy).sqrt()
        });
        if let Ok(m) = MetricSample::from_dist(dist) {
            return m;
        }
    }
}

/// Weights drawn from `[0.5, 1.5]` and normalized.
pub fn random_marginal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Marginal {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    Marginal::normalized(&raw).expect("positive weights")
}

/// Random metrics, marginals and a cost with entries in `[0, 1)`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Problem {
    let x = random_metric(rng, n);
    let y = random_metric(rng, m);
    let mu = random_marginal(rng, n);
    let nu = random_marginal(rng, m);
    let cost = Array2::from_shape_fn((n, m), |_| rng.random::<f64>());
    Problem::new(x, y, mu, nu, cost).expect("random instance is valid")
}

/// Distance-cost instance on one random metric space.
pub fn random_distance_instance<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Problem {
    let x = random_metric(rng, n);
    let mu = random_marginal(rng, n);
    let nu = random_marginal(rng, n);
    let cost = x.dist().clone();
    Problem::on_same_space(x, mu, nu, cost).expect("random instance is valid")
}

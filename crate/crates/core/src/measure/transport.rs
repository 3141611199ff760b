//! Optimal transport between weighted point clouds with cost `|x - y|^theta`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::EmpiricalMeasure;

const MASS_EPS: f64 = 1e-15;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `int_0^1 |F^{-1}(u) - G^{-1}(u)|^theta du` for weighted samples on a line.
pub(crate) fn quantile_cost(a: &[(f64, f64)], b: &[(f64, f64)], theta: f64) -> f64 {
    // a, b: (position, weight) sorted by position
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        cost += m * (a[i].0 - b[j].0).abs().powf(theta);
        ra -= m;
        rb -= m;
        if ra <= MASS_EPS {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= MASS_EPS {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    cost
}

pub(crate) fn sorted_line(values: impl Iterator<Item = f64>, weights: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = values.zip(weights.iter().copied()).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    v
}

/// Exact transport cost by successive shortest paths on the bipartite
/// network `source -> supply -> demand -> sink`, with Dijkstra on reduced
/// costs. Returns `sum pi_ij |x_i - y_j|^theta` at the optimum.
pub(crate) fn exact_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, theta: f64) -> f64 {
    let n = mu.len();
    let m = nu.len();
    let mut cost = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            cost[i * m + j] = distance(mu.particle(i), nu.particle(j)).powf(theta);
        }
    }
    let mut supply: Vec<f64> = mu.weights().to_vec();
    let mut demand: Vec<f64> = nu.weights().to_vec();
    let mut flow = vec![0.0; n * m];
    // node layout: 0 = source, 1..=n supply, n+1..=n+m demand, n+m+1 sink
    let v = n + m + 2;
    let sink = v - 1;
    let mut pot = vec![0.0f64; v];
    let mut dist = vec![f64::INFINITY; v];
    let mut prev = vec![usize::MAX; v];
    let mut done = vec![false; v];
    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= 1e-14 || demand.iter().all(|d| *d <= MASS_EPS) {
            break;
        }
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        dist[0] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for k in 0..v {
                if !done[k] && dist[k] < best {
                    best = dist[k];
                    u = k;
                }
            }
            if u == usize::MAX || u == sink {
                break;
            }
            done[u] = true;
            let du = dist[u];
            let relax = |w: usize, c: f64, dist: &mut [f64], prev: &mut [usize]| {
                let nd = du + (c + pot[u] - pot[w]).max(0.0);
                if nd < dist[w] {
                    dist[w] = nd;
                    prev[w] = u;
                }
            };
            if u == 0 {
                for i in 0..n {
                    if supply[i] > MASS_EPS {
                        relax(1 + i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    relax(1 + n + j, cost[i * m + j], &mut dist, &mut prev);
                }
            } else {
                let j = u - 1 - n;
                for i in 0..n {
                    if flow[i * m + j] > MASS_EPS {
                        relax(1 + i, -cost[i * m + j], &mut dist, &mut prev);
                    }
                }
                if demand[j] > MASS_EPS {
                    relax(sink, 0.0, &mut dist, &mut prev);
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let cap = dist[sink];
        for k in 0..v {
            pot[k] += dist[k].min(cap);
        }
        // bottleneck along the path
        let mut amount = f64::INFINITY;
        let mut w = sink;
        while w != 0 {
            let u = prev[w];
            if u == 0 {
                amount = amount.min(supply[w - 1]);
            } else if w == sink {
                amount = amount.min(demand[u - 1 - n]);
            } else if u > n {
                // reverse edge demand -> supply
                amount = amount.min(flow[(w - 1) * m + (u - 1 - n)]);
            }
            w = u;
        }
        let mut w = sink;
        while w != 0 {
            let u = prev[w];
            if u == 0 {
                supply[w - 1] -= amount;
            } else if w == sink {
                demand[u - 1 - n] -= amount;
            } else if u <= n {
                flow[(u - 1) * m + (w - 1 - n)] += amount;
            } else {
                flow[(w - 1) * m + (u - 1 - n)] -= amount;
            }
            w = u;
        }
    }
    flow.iter().zip(&cost).map(|(f, c)| f.max(0.0) * c).sum()
}

/// Mean over random directions of the one-dimensional cost of the projections.
pub(crate) fn sliced_cost(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    theta: f64,
    projections: usize,
    seed: u64,
) -> f64 {
    let d = mu.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..projections {
        let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        dir.iter_mut().for_each(|v| *v /= norm);
        let project = |m: &EmpiricalMeasure| {
            sorted_line(
                (0..m.len()).map(|i| m.particle(i).iter().zip(&dir).map(|(a, b)| a * b).sum()),
                m.weights(),
            )
        };
        total += quantile_cost(&project(mu), &project(nu), theta);
    }
    total / projections as f64
}

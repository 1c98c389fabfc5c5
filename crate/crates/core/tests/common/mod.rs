//! Independent reference computations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tms_core::{ModelParams, TeamState};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Literal scalar loops of the two update laws, reading only time-t values.
pub fn scalar_step(m: &DMatrix<f64>, y: &DVector<f64>, lambda: &[f64], learning: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = y.len();
    let mut total = 0.0;
    for k in 0..n {
        total += y[k];
    }
    let mut m_next = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m_next[(i, j)] = (1.0 - lambda[i]) * m[(i, j)] + lambda[i] * y[j] / total;
        }
    }
    let mut y_next = DVector::zeros(n);
    for i in 0..n {
        let mut perceived = 0.0;
        for k in 0..n {
            perceived += m[(i, k)] * y[k];
        }
        let gap = perceived - y[i];
        y_next[i] = y[i] + learning[i] * if gap > 0.0 { gap } else { 0.0 };
    }
    (m_next, y_next)
}

/// `reach[u][v]`: a path of length >= 0 leads from `u` to `v`, with arc
/// `j -> i` whenever `m[(i, j)] != 0`. Boolean powers `I + A + ... + A^(n-1)`.
pub fn reachability(m: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = m.nrows();
    let arc = |u: usize, v: usize| m[(v, u)] != 0.0;
    let mut reach: Vec<Vec<bool>> = (0..n).map(|u| (0..n).map(|v| u == v).collect()).collect();
    let mut power = reach.clone();
    for _ in 1..n {
        let mut next = vec![vec![false; n]; n];
        for u in 0..n {
            for w in 0..n {
                if power[u][w] {
                    for v in 0..n {
                        if arc(w, v) {
                            next[u][v] = true;
                        }
                    }
                }
            }
        }
        for u in 0..n {
            for v in 0..n {
                reach[u][v] |= next[u][v];
            }
        }
        power = next;
    }
    reach
}

/// Irreducible iff every entry of `I + A + ... + A^(n-1)` is positive.
pub fn irreducible_by_powers(m: &DMatrix<f64>) -> bool {
    m.nrows() >= 2 && reachability(m).iter().all(|r| r.iter().all(|&b| b))
}

/// Mutual-reachability classes, sorted, ordered by smallest member.
pub fn brute_force_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let reach = reachability(m);
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for u in 0..n {
        if seen[u] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&v| reach[u][v] && reach[v][u]).collect();
        for &v in &comp {
            seen[v] = true;
        }
        out.push(comp);
    }
    out
}

/// Class `to` accessible from class `from`: some member path between them.
pub fn brute_force_access(m: &DMatrix<f64>, classes: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let reach = reachability(m);
    classes
        .iter()
        .map(|from| {
            classes
                .iter()
                .map(|to| from.iter().any(|&u| to.iter().any(|&v| reach[u][v])))
                .collect()
        })
        .collect()
}

/// Random row-stochastic matrix where each entry is zero with probability
/// `1 - density`; empty rows get a self-loop.
pub fn sparse_stochastic<R: Rng>(n: usize, density: f64, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < density {
                m[(i, j)] = rng.random::<f64>() + 0.01;
            }
        }
        let sum: f64 = m.row(i).sum();
        if sum == 0.0 {
            m[(i, i)] = 1.0;
        } else {
            for j in 0..n {
                m[(i, j)] /= sum;
            }
        }
    }
    m
}

/// Random sparse irreducible stochastic matrix: a shuffled directed cycle
/// through every node plus extra arcs with probability `density`.
pub fn sparse_irreducible<R: Rng>(n: usize, density: f64, rng: &mut R) -> DMatrix<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        let (from, to) = (order[a], order[(a + 1) % n]);
        m[(to, from)] = rng.random::<f64>() + 0.05;
    }
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < density {
                m[(i, j)] += rng.random::<f64>();
            }
        }
        let sum: f64 = m.row(i).sum();
        for j in 0..n {
            m[(i, j)] /= sum;
        }
    }
    m
}

/// Expertise uniform on (0.01, 1].
pub fn random_expertise<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 1.0 - 0.99 * rng.random::<f64>())
}

/// Coefficients mixing interior values with the endpoints 0 and 1.
pub fn random_lambda<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.random_range(0..6) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        })
        .collect()
}

pub fn random_learning<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| if rng.random_range(0..5) == 0 { 1.0 } else { 1.0 - rng.random::<f64>() }).collect()
}

/// Any admissible team: dense or sparse appraisals, arbitrary coefficients.
pub fn random_instance(n: usize, seed: u64) -> (TeamState, ModelParams) {
    let mut r = rng(seed);
    let m = if r.random_bool(0.5) {
        sparse_stochastic(n, 0.3, &mut r)
    } else {
        sparse_stochastic(n, 1.0, &mut r)
    };
    let y = random_expertise(n, &mut r);
    let params = ModelParams::new(random_lambda(n, &mut r), random_learning(n, &mut r));
    (TeamState::new(m, y), params)
}

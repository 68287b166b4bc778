//! Dense helpers for the small matrices of finite-state environments.

use crate::error::{Error, Result};

pub type Matrix = Vec<Vec<f64>>;

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Matrix, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Stationary distribution of a stochastic matrix, with its `|pi P - pi|_inf` residual.
pub fn stationary_distribution(p: &Matrix) -> Result<(Vec<f64>, f64)> {
    let n = p.len();
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[n - 1] = vec![1.0; n];
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let pi = solve(a, b).ok_or(Error::StationaryResidual {
        residual: f64::INFINITY,
    })?;
    let residual = (0..n)
        .map(|j| ((0..n).map(|i| pi[i] * p[i][j]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max);
    Ok((pi, residual))
}

fn reachable_from(p: &Matrix, start: usize) -> Vec<bool> {
    let n = p.len();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if p[u][v] > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Error naming an unreachable pair if the support graph is not strongly connected.
pub fn check_irreducible(p: &Matrix) -> Result<()> {
    for from in 0..p.len() {
        if let Some(unreachable) = reachable_from(p, from).iter().position(|&r| !r) {
            return Err(Error::Reducible { from, unreachable });
        }
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible chain (1 means aperiodic).
pub fn period(p: &Matrix) -> usize {
    let n = p.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p[u][v] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for u in 0..n {
        for v in 0..n {
            if p[u][v] > 0.0 && level[u] != usize::MAX && level[v] != usize::MAX {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g
}

/// Perron root with right and left eigenvectors of a primitive nonnegative matrix.
#[derive(Debug, Clone)]
pub struct Perron {
    pub root: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

fn power_iterate(m: &Matrix, transpose: bool, tol: f64) -> (f64, Vec<f64>) {
    let n = m.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut root = 0.0;
    let mut w = vec![0.0; n];
    for _ in 0..200_000 {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = if transpose {
                (0..n).map(|k| m[k][i] * v[k]).sum()
            } else {
                (0..n).map(|k| m[i][k] * v[k]).sum()
            };
        }
        let norm: f64 = w.iter().sum();
        let next_root = norm; // v sums to one
        let mut delta: f64 = 0.0;
        for (vi, wi) in v.iter_mut().zip(&w) {
            let nv = wi / norm;
            delta = delta.max((nv - *vi).abs());
            *vi = nv;
        }
        let converged = (next_root - root).abs() <= tol * next_root && delta <= tol;
        root = next_root;
        if converged {
            break;
        }
    }
    (root, v)
}

pub fn perron(m: &Matrix) -> Perron {
    let (root, right) = power_iterate(m, false, 1e-13);
    let (_, left) = power_iterate(m, true, 1e-13);
    Perron { root, right, left }
}

pub fn perron_root(m: &Matrix) -> f64 {
    power_iterate(m, false, 1e-13).0
}

/// Maximum mean weight over cycles of the support graph of `p`, where the
/// edge `i -> j` carries `weight[j]` (Karp's algorithm).
pub fn max_cycle_mean(p: &Matrix, weight: &[f64]) -> f64 {
    extreme_cycle_mean(p, weight, true)
}

pub fn min_cycle_mean(p: &Matrix, weight: &[f64]) -> f64 {
    extreme_cycle_mean(p, weight, false)
}

fn extreme_cycle_mean(p: &Matrix, weight: &[f64], maximize: bool) -> f64 {
    let n = p.len();
    let sgn = if maximize { 1.0 } else { -1.0 };
    // d[k][v]: best weight of a walk of exactly k edges ending in v
    let mut d = vec![vec![f64::NEG_INFINITY; n]; n + 1];
    d[0].iter_mut().for_each(|x| *x = 0.0);
    for k in 1..=n {
        for v in 0..n {
            let mut best = f64::NEG_INFINITY;
            for u in 0..n {
                if p[u][v] > 0.0 && d[k - 1][u] > f64::NEG_INFINITY {
                    best = best.max(d[k - 1][u] + sgn * weight[v]);
                }
            }
            d[k][v] = best;
        }
    }
    let mut best = f64::NEG_INFINITY;
    for v in 0..n {
        if d[n][v] == f64::NEG_INFINITY {
            continue;
        }
        let worst = (0..n)
            .filter(|&k| d[k][v] > f64::NEG_INFINITY)
            .map(|k| (d[n][v] - d[k][v]) / (n - k) as f64)
            .fold(f64::INFINITY, f64::min);
        best = best.max(worst);
    }
    sgn * best
}

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lmmk::lp::LpProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Oracle verdict for `min c.v  s.t.  A v >= b, v >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Optimal {
        objective: f64,
        /// Distinct optimal vertices found.
        optimal_vertices: Vec<Vec<f64>>,
    },
    Unbounded,
    Infeasible,
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// All vertices of `{x : G x >= h}` where `G` has `n` columns, found by
/// making every `n`-subset of rows tight.
fn vertices(g: &[Vec<f64>], h: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut found: Vec<Vec<f64>> = Vec::new();
    for subset in combinations(g.len(), n) {
        let a: Vec<Vec<f64>> = subset.iter().map(|&r| g[r].clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&r| h[r]).collect();
        let Some(x) = solve_square(a, b) else {
            continue;
        };
        let feasible = g
            .iter()
            .zip(h)
            .all(|(row, &hr)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() >= hr - 1e-9);
        if feasible
            && !found
                .iter()
                .any(|v| v.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-9))
        {
            found.push(x);
        }
    }
    found
}

/// Brute-force vertex enumeration over all constraint subsets.
pub fn vertex_oracle(p: &LpProblem) -> Oracle {
    let n = p.n_variables();
    let m = p.n_constraints();
    let a = p.matrix();
    let mut g: Vec<Vec<f64>> = (0..m).map(|r| a.row(r).to_vec()).collect();
    let mut h: Vec<f64> = p.rhs().to_vec();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        g.push(e);
        h.push(0.0);
    }
    let verts = vertices(&g, &h, n);
    if verts.is_empty() {
        // The region contains no line, so a non-empty region has a vertex.
        return Oracle::Infeasible;
    }
    // Recession cone {r >= 0, A r >= 0} cut by sum(r) = 1 (two inequalities).
    let mut gr: Vec<Vec<f64>> = (0..m).map(|r| a.row(r).to_vec()).collect();
    let mut hr = vec![0.0; m];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        gr.push(e);
        hr.push(0.0);
    }
    gr.push(vec![1.0; n]);
    hr.push(1.0);
    gr.push(vec![-1.0; n]);
    hr.push(-1.0);
    let rays = vertices(&gr, &hr, n);
    let cost = p.cost();
    let dot = |x: &[f64]| -> f64 { x.iter().zip(cost).map(|(a, b)| a * b).sum() };
    if rays.iter().any(|r| dot(r) < -1e-9) {
        return Oracle::Unbounded;
    }
    let best = verts.iter().map(|v| dot(v)).fold(f64::INFINITY, f64::min);
    let optimal_vertices = verts
        .into_iter()
        .filter(|v| dot(v) <= best + 1e-9)
        .collect();
    Oracle::Optimal {
        objective: best,
        optimal_vertices,
    }
}

/// Random LP with `V <= 5`, `M <= 8`, integer coefficients in `[-3, 3]`.
pub fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let v = rng.random_range(1..=5);
    let m = rng.random_range(0..=8);
    let mut int = || rng.random_range(-3..=3) as f64;
    let cost: Vec<f64> = (0..v).map(|_| int()).collect();
    let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..v).map(|_| int()).collect()).collect();
    let rhs: Vec<f64> = (0..m).map(|_| int()).collect();
    LpProblem::from_rows(cost, &rows, rhs).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

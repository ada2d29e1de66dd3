//! Shared oracles for the integration tests. Everything here uses dense LU
//! algebra and a direct construction of the joint covariance, independent of
//! the clique/separator code paths under test.
#![allow(dead_code)]

use ggm_ot::graph::DecomposableGraph;
use ggm_ot::model::GgmScenario;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Random perfect clique sequence with 1-based labels. Each clique attaches to
/// one earlier clique (the previous one when `chain`, a random one otherwise)
/// through a separator of 1..size-1 of that clique's nodes.
pub fn random_cliques<R: Rng>(rng: &mut R, k: usize, chain: bool) -> (Vec<Vec<usize>>, usize) {
    let mut cliques: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut next = 1;
    let first = rng.random_range(2..=6);
    cliques.push((next..next + first).collect());
    next += first;
    for j in 1..k {
        let parent = if chain { j - 1 } else { rng.random_range(0..j) };
        let size = rng.random_range(2..=6);
        let pnodes = &cliques[parent];
        let s_max = (size - 1).min(pnodes.len());
        let s = rng.random_range(1..=s_max);
        let mut pool = pnodes.clone();
        let mut clique = Vec::with_capacity(size);
        for _ in 0..s {
            let i = rng.random_range(0..pool.len());
            clique.push(pool.swap_remove(i));
        }
        for _ in s..size {
            clique.push(next);
            next += 1;
        }
        clique.sort_unstable();
        cliques.push(clique);
    }
    (cliques, next - 1)
}

/// Joint covariance built clique by clique: the block between the new nodes
/// `R = C_k \ S_k` and the older nodes `H \ S_k` is `Σ_RS Σ_S⁻¹ Σ_{S,H\S}`.
pub fn completed_covariance(graph: &DecomposableGraph, covs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = graph.n_nodes();
    let mut full = DMatrix::zeros(n, n);
    let mut seen: Vec<usize> = Vec::new();
    for k in 1..=graph.n_cliques() {
        let clique = graph.clique(k);
        let cov = &covs[k - 1];
        for (a, &i) in clique.iter().enumerate() {
            for (b, &j) in clique.iter().enumerate() {
                full[(i, j)] = cov[(a, b)];
            }
        }
        if k > 1 {
            let sep: Vec<usize> = clique.iter().copied().filter(|v| seen.contains(v)).collect();
            let rest: Vec<usize> = clique.iter().copied().filter(|v| !seen.contains(v)).collect();
            let older: Vec<usize> = seen.iter().copied().filter(|v| !sep.contains(v)).collect();
            if !sep.is_empty() && !older.is_empty() && !rest.is_empty() {
                let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |a, b| full[(rows[a], cols[b])]);
                let s_ss = pick(&sep, &sep);
                let s_rs = pick(&rest, &sep);
                let s_so = pick(&sep, &older);
                let solved = s_ss.lu().solve(&s_so).expect("separator block invertible");
                let cross = s_rs * solved;
                for (a, &i) in rest.iter().enumerate() {
                    for (b, &j) in older.iter().enumerate() {
                        full[(i, j)] = cross[(a, b)];
                        full[(j, i)] = cross[(a, b)];
                    }
                }
            }
        }
        for &v in clique {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
    }
    full
}

pub fn clique_covs(s: &GgmScenario) -> Vec<DMatrix<f64>> {
    (1..=s.n_cliques()).map(|k| s.clique_cov(k).matrix().clone()).collect()
}

pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

/// `log |det m|` from the LU diagonal.
pub fn dense_log_det(m: &DMatrix<f64>) -> f64 {
    let u = m.clone().lu().u();
    (0..u.nrows()).map(|i| u[(i, i)].abs().ln()).sum()
}

/// `2 log f1/f0`-type statistic `xᵀx − xᵀΣ⁻¹x − log det Σ` computed densely.
pub fn dense_statistic(cov: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let inv = dense_inverse(cov);
    x.dot(x) - x.dot(&(&inv * x)) - dense_log_det(cov)
}

pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
}

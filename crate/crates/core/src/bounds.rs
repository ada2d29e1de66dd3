//! Lower bounds on the average number of transmissions saved.
//!
//! With `c = ⌈K/2⌉ − 1`, `δ⁽¹⁾ = max{2τ, 0}` and `δ⁽⁰⁾ = min{2τ, 0}`:
//!
//! ```text
//!   K_s ≥ max{0, c·[π1 Σ_k P_D,k(δ⁽¹⁾) + π0 Σ_k (1 − P_f,k(δ⁽⁰⁾)) − (K − 1)]}
//! ```
//!
//! `P_D,k(δ) = Pr(L_k > δ | H1)` and `P_f,k(δ) = 1 − Pr(L_k ≤ δ | H0)` are
//! estimated by Monte Carlo. When every `P_D,k → 1` and `P_f,k → 0` the bound
//! becomes `c` itself.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{GgmScenario, Priors};
use crate::rng::{stream_rng, Stream};
use crate::statistic::{bayes_threshold, LocalStatisticSet};
use crate::Hypothesis;

/// `(δ⁽⁰⁾, δ⁽¹⁾) = (min{2τ, 0}, max{2τ, 0})`.
pub fn deltas(tau: f64) -> (f64, f64) {
    ((2.0 * tau).min(0.0), (2.0 * tau).max(0.0))
}

/// A Monte Carlo proportion and its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn proportion(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Estimate { value: p, stderr: (p * (1.0 - p) / n as f64).sqrt() }
    }
}

/// Per-cluster `P_D,k(δ⁽¹⁾)` and `P_f,k(δ⁽⁰⁾)` estimates.
///
/// `pd_sum` / `not_pf_sum` are the per-draw counts `Σ_k 1{L_k > δ⁽¹⁾}` under
/// H1 and `Σ_k 1{L_k ≤ δ⁽⁰⁾}` under H0; their sample standard errors carry the
/// correlation between clusters into the bound's uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdPfEstimate {
    pub pd: Vec<Estimate>,
    pub pf: Vec<Estimate>,
    pub pd_sum: Estimate,
    pub not_pf_sum: Estimate,
    pub n_samples: usize,
}

fn mean_and_stderr(counts: &[usize]) -> Estimate {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let var = if counts.len() > 1 {
        counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate { value: mean, stderr: (var / n).sqrt() }
}

/// Monte Carlo estimates from `n` draws under each hypothesis. Draw `i` under
/// H1 (H0) uses its own stream, so the result does not depend on the number
/// of worker threads.
pub fn estimate_pd_pf(set: &LocalStatisticSet, scenario: &GgmScenario, n: usize, seed: u64) -> Result<PdPfEstimate> {
    if n == 0 {
        return Err(Error::Config("bound estimator needs at least one sample".into()));
    }
    let k_total = set.n_cliques();
    let (delta0, delta1) = deltas(bayes_threshold(scenario.priors())?);

    let flags = |stream: Stream, hyp: Hypothesis| -> Vec<Vec<bool>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, stream, i);
                let x = scenario.draw(hyp, &mut rng);
                set.local_stats(&x)
                    .into_iter()
                    .map(|l| match hyp {
                        Hypothesis::H1 => l > delta1,
                        Hypothesis::H0 => l <= delta0,
                    })
                    .collect()
            })
            .collect()
    };
    let h1 = flags(Stream::BoundH1, Hypothesis::H1);
    let h0 = flags(Stream::BoundH0, Hypothesis::H0);

    let column_hits = |rows: &[Vec<bool>], k: usize| rows.iter().filter(|r| r[k]).count();
    let pd = (0..k_total).map(|k| Estimate::proportion(column_hits(&h1, k), n)).collect();
    let pf = (0..k_total)
        .map(|k| {
            let e = Estimate::proportion(column_hits(&h0, k), n);
            Estimate { value: 1.0 - e.value, stderr: e.stderr }
        })
        .collect();
    let count = |rows: &[Vec<bool>]| rows.iter().map(|r| r.iter().filter(|&&b| b).count()).collect::<Vec<_>>();

    Ok(PdPfEstimate {
        pd,
        pf,
        pd_sum: mean_and_stderr(&count(&h1)),
        not_pf_sum: mean_and_stderr(&count(&h0)),
        n_samples: n,
    })
}

/// `⌈K/2⌉ − 1` as an integer.
fn half_minus_one(k: usize) -> f64 {
    (k.div_ceil(2) - 1) as f64
}

/// The bound before clamping at zero.
///
/// Uses `π0 + π1 = 1` to write the bracket as
/// `1 − π1 Σ_k (1 − P_D,k) − π0 Σ_k P_f,k`, which is exactly 1 for perfect
/// probabilities.
fn theorem2_raw(pd_sum: f64, not_pf_sum: f64, k: usize, priors: Priors) -> f64 {
    let kf = k as f64;
    half_minus_one(k) * (1.0 - priors.pi1 * (kf - pd_sum) - priors.pi0 * (kf - not_pf_sum))
}

/// Lower bound on the average number of transmissions saved, clamped at zero.
pub fn theorem2_bound(pd: &[f64], pf: &[f64], k: usize, priors: Priors) -> Result<f64> {
    if k <= 1 {
        return Err(Error::BadK(k));
    }
    if pd.len() != k || pf.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "bound needs {k} detection and false-alarm probabilities, got {} and {}",
            pd.len(),
            pf.len()
        )));
    }
    priors.validate()?;
    let pd_sum: f64 = pd.iter().sum();
    let not_pf_sum: f64 = pf.iter().map(|p| 1.0 - p).sum();
    Ok(theorem2_raw(pd_sum, not_pf_sum, k, priors).max(0.0))
}

/// Limiting bound `⌈K/2⌉ − 1` for large clique eigenvalues.
pub fn theorem3_limit(k: usize) -> Result<f64> {
    if k <= 1 {
        return Err(Error::BadK(k));
    }
    Ok(half_minus_one(k))
}

/// Everything the bound needs, plus its Monte Carlo uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta0: f64,
    pub delta1: f64,
    pub pd: Vec<Estimate>,
    pub pf: Vec<Estimate>,
    /// Clamped bound; 0 for `K = 1`.
    pub ks_lower: f64,
    /// Unclamped value of the bound expression.
    pub ks_raw: f64,
    /// Standard error of `ks_raw` from the per-draw count variances.
    pub ks_stderr: f64,
    /// `⌈K/2⌉ − 1`; 0 for `K = 1`.
    pub ks_limit: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn bound_report(set: &LocalStatisticSet, scenario: &GgmScenario, n: usize, seed: u64) -> Result<BoundReport> {
    let k = set.n_cliques();
    let priors = scenario.priors();
    let (delta0, delta1) = deltas(bayes_threshold(priors)?);
    let est = estimate_pd_pf(set, scenario, n, seed)?;
    let (ks_raw, ks_stderr, ks_limit) = if k > 1 {
        let c = half_minus_one(k);
        let raw = theorem2_raw(est.pd_sum.value, est.not_pf_sum.value, k, priors);
        let se = c * ((priors.pi1 * est.pd_sum.stderr).powi(2) + (priors.pi0 * est.not_pf_sum.stderr).powi(2)).sqrt();
        (raw, se, c)
    } else {
        (0.0, 0.0, 0.0)
    };
    Ok(BoundReport {
        delta0,
        delta1,
        pd: est.pd,
        pf: est.pf,
        ks_lower: ks_raw.max(0.0),
        ks_raw,
        ks_stderr,
        ks_limit,
        n_samples: n,
        seed,
    })
}

/// `D_KL(f(x_Ck | H0) ‖ f(x_Ck | H1)) = ½[log det Σ_Ck + tr(Σ_Ck⁻¹) − M_k]`.
pub fn kl_per_clique(scenario: &GgmScenario) -> Result<Vec<f64>> {
    (1..=scenario.n_cliques())
        .map(|k| {
            let cov = scenario.clique_cov(k).matrix();
            let (inv, ld) = linalg::spd_inverse_logdet(cov, &format!("clique {k} covariance"))?;
            Ok(0.5 * (ld + inv.trace() - cov.nrows() as f64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JkSpectrum {
    pub min_eig: f64,
    pub max_eig: f64,
    pub positive_definite: bool,
}

/// Eigenvalue range of every `J_k`. Diagnostic only.
pub fn jk_spectrum_report(set: &LocalStatisticSet) -> Vec<JkSpectrum> {
    (1..=set.n_cliques())
        .map(|k| {
            let e = linalg::sorted_eigenvalues(set.j(k));
            let min_eig = e[0];
            JkSpectrum { min_eig, max_eig: e[e.len() - 1], positive_definite: min_eig > 0.0 }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::chain_graph;
    use crate::model::{identity_scenario, make_chain_scenario, make_tree_scenario};
    use crate::statistic::{build_local_set, default_gamma, gamma_schedule};
    use nalgebra::DMatrix;

    #[test]
    fn delta_values() {
        assert_eq!(deltas(0.0), (0.0, 0.0));
        assert_eq!(deltas(1.0), (0.0, 2.0));
        assert_eq!(deltas(-1.0), (-2.0, 0.0));
    }

    #[test]
    fn perfect_probabilities_recover_limit() {
        for k in 2..=64 {
            let b = theorem2_bound(&vec![1.0; k], &vec![0.0; k], k, Priors { pi0: 0.3, pi1: 0.7 }).unwrap();
            assert_eq!(b, theorem3_limit(k).unwrap());
        }
        assert_eq!(theorem3_limit(20).unwrap(), 9.0);
        assert_eq!(theorem3_limit(20).unwrap() / 20.0, 0.45);
        assert_eq!(theorem3_limit(2).unwrap(), 0.0);
        assert_eq!(theorem3_limit(7).unwrap(), 3.0);
    }

    #[test]
    fn clamp_and_boundary() {
        assert_eq!(theorem2_bound(&[0.0; 4], &[1.0; 4], 4, Priors::equal()).unwrap(), 0.0);
        // Σ pd = 19, Σ (1 − pf) = 19
        let mut pd = vec![1.0; 20];
        pd[0] = 0.0;
        let mut pf = vec![0.0; 20];
        pf[0] = 1.0;
        assert_eq!(theorem2_bound(&pd, &pf, 20, Priors::equal()).unwrap(), 0.0);
        assert_eq!(theorem2_bound(&[1.0], &[0.0], 1, Priors::equal()), Err(Error::BadK(1)));
        assert_eq!(theorem3_limit(1), Err(Error::BadK(1)));
    }

    #[test]
    fn identity_scenario_probabilities_are_zero() {
        let s = identity_scenario(chain_graph(3, 3, 1).unwrap(), Priors::equal()).unwrap();
        let set = build_local_set(&s, &gamma_schedule(3, 0.1).unwrap()).unwrap();
        let est = estimate_pd_pf(&set, &s, 200, 0).unwrap();
        assert!(est.pd.iter().all(|e| e.value == 0.0));
        assert!(est.pf.iter().all(|e| e.value == 0.0));
    }

    #[test]
    fn kl_values() {
        let s = identity_scenario(chain_graph(2, 2, 1).unwrap(), Priors::equal()).unwrap();
        assert!(kl_per_clique(&s).unwrap().iter().all(|v| v.abs() < 1e-15));

        let g = crate::graph::DecomposableGraph::from_labels(&[vec![1, 2]], 2).unwrap();
        let cov = crate::model::SpdMatrix::new(DMatrix::from_diagonal_element(2, 2, 2.0)).unwrap();
        let s = crate::model::assemble_global(g, vec![cov], Priors::equal()).unwrap();
        let kl = kl_per_clique(&s).unwrap();
        assert!((kl[0] - (2f64.ln() - 0.5)).abs() < 1e-12);
        assert!((kl[0] - 0.1931).abs() < 1e-4);
    }

    #[test]
    fn kl_grows_with_tree_scale() {
        let mut prev = f64::NEG_INFINITY;
        for x in [1.1, 1.2, 1.4, 1.6] {
            let kl = kl_per_clique(&make_tree_scenario(3, x, Priors::equal()).unwrap()).unwrap()[0];
            assert!(kl > prev);
            prev = kl;
        }
    }

    #[test]
    fn tree_probabilities_trend_with_scale() {
        let mut prev_pd = -1.0;
        let mut prev_pf = 2.0;
        for x in [1.1, 1.2, 1.4, 1.6] {
            let s = make_tree_scenario(3, x, Priors::equal()).unwrap();
            let set = build_local_set(&s, &gamma_schedule(3, default_gamma(3)).unwrap()).unwrap();
            let est = estimate_pd_pf(&set, &s, 4000, 1).unwrap();
            let pd = est.pd.iter().map(|e| e.value).sum::<f64>() / 3.0;
            let pf = est.pf.iter().map(|e| e.value).sum::<f64>() / 3.0;
            assert!(pd > prev_pd, "pd {pd} after {prev_pd}");
            assert!(pf < prev_pf, "pf {pf} after {prev_pf}");
            prev_pd = pd;
            prev_pf = pf;
        }
    }

    #[test]
    fn stderr_shrinks_with_samples() {
        let s = make_tree_scenario(3, 1.2, Priors::equal()).unwrap();
        let set = build_local_set(&s, &gamma_schedule(3, 0.1).unwrap()).unwrap();
        let a = bound_report(&set, &s, 4000, 3).unwrap();
        let b = bound_report(&set, &s, 8000, 3).unwrap();
        let ratio = b.ks_stderr / a.ks_stderr;
        assert!((ratio - 1.0 / 2f64.sqrt()).abs() < 0.1 / 2f64.sqrt(), "ratio {ratio}");
    }

    #[test]
    fn jk_spectra() {
        let s = identity_scenario(chain_graph(3, 3, 1).unwrap(), Priors::equal()).unwrap();
        let set = build_local_set(&s, &gamma_schedule(3, 0.1).unwrap()).unwrap();
        for r in jk_spectrum_report(&set) {
            assert_eq!((r.min_eig, r.max_eig), (0.0, 0.0));
        }

        let s = make_tree_scenario(7, 1.6, Priors::equal()).unwrap();
        let set = build_local_set(&s, &gamma_schedule(7, default_gamma(7)).unwrap()).unwrap();
        assert!(jk_spectrum_report(&set).iter().all(|r| r.max_eig <= 1.05));

        // at α = 199 the tail cliques, whose β_k is below 1/λ, are slightly
        // indefinite; definiteness sets in as the eigenvalues grow
        let coeffs = gamma_schedule(20, 0.5 / (2f64.powi(19) - 1.0)).unwrap();
        let s = make_chain_scenario(20, 5, 199.0, Priors::equal(), 0).unwrap();
        let set = build_local_set(&s, &coeffs).unwrap();
        assert!(jk_spectrum_report(&set)[..10].iter().all(|r| r.positive_definite));
        let s = make_chain_scenario(20, 5, 1e4, Priors::equal(), 0).unwrap();
        let set = build_local_set(&s, &coeffs).unwrap();
        assert!(jk_spectrum_report(&set).iter().all(|r| r.positive_definite));

        // large λ: eig J_k ∈ [1 − Σ_{j∈Q_k} β_j − α_k, 1]. In a chain S_k and
        // S_{k+1} are different nodes, so the minimum is min(β_k, 1 − β_{k+1}).
        let s = make_chain_scenario(20, 5, 1e7, Priors::equal(), 0).unwrap();
        let set = build_local_set(&s, &coeffs).unwrap();
        let report = jk_spectrum_report(&set);
        for k in 2..=20 {
            let next = if k < 20 { coeffs.beta(k + 1) } else { 0.0 };
            let floor = 1.0 - next - coeffs.alpha(k);
            let limit = coeffs.beta(k).min(1.0 - next);
            let r = report[k - 1];
            assert!(r.min_eig >= floor * (1.0 - 1e-3) && r.max_eig <= 1.0, "k = {k}");
            assert!((r.min_eig - limit).abs() < 1e-3 * limit, "k = {k}: {} vs {limit}", r.min_eig);
        }
    }
}

//! Local and centralized log-likelihood ratio statistics.
//!
//! The centralized statistic is
//!
//! ```text
//!   T(x) = xᵀx − xᵀΣ⁻¹x − log det Σ
//! ```
//!
//! and it splits exactly into per-clique terms `L_k(x_Ck) = x_Ckᵀ J_k x_Ck − e_k`
//! with
//!
//! ```text
//!   J_k = (I − Σ_Ck⁻¹) − Σ_{j∈Q_k} β_j [I − Σ_Sj⁻¹]^{C_k} − α_k [I − Σ_Sk⁻¹]^{C_k}
//!   e_k = log det Σ_Ck − Σ_{j∈Q_k} β_j log det Σ_Sj − α_k log det Σ_Sk
//! ```
//!
//! (no `α` term for `k = 1`) for any split coefficients with `α_k + β_k = 1`.
//! Each separator term is therefore shared between clique `k` (weight `α_k`)
//! and clique `q(k)` (weight `β_k`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::add_zero_filled;
use crate::linalg;
use crate::model::{GgmScenario, Priors};
use crate::Decision;

/// Split coefficients `(α_k, β_k)` for `k = 2..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCoefficients {
    // alpha[k-2], beta[k-2]
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Option<f64>,
}

/// Exclusive upper limit on `γ` for a `K`-clique schedule: `1 / (2^{K−1} − 1)`.
pub fn gamma_upper(k: usize) -> f64 {
    1.0 / (2f64.powi(k as i32 - 1) - 1.0)
}

/// Geometric schedule `α_k = 1 − 2^{K−k} γ`, `β_k = 2^{K−k} γ`.
pub fn gamma_schedule(k: usize, gamma: f64) -> Result<SplitCoefficients> {
    if k < 2 {
        return Err(Error::Config(format!("gamma schedule needs K ≥ 2, got K = {k}")));
    }
    let upper = gamma_upper(k);
    if !(gamma > 0.0 && gamma < upper) {
        return Err(Error::GammaOutOfRange { gamma, upper, k });
    }
    let beta: Vec<f64> = (2..=k).map(|j| 2f64.powi((k - j) as i32) * gamma).collect();
    let alpha = beta.iter().map(|b| 1.0 - b).collect();
    Ok(SplitCoefficients { alpha, beta, gamma: Some(gamma) })
}

/// The `γ = 0.5 / (2^K − 1)` choice used for the size sweeps.
pub fn default_gamma(k: usize) -> f64 {
    0.5 / (2f64.powi(k as i32) - 1.0)
}

impl SplitCoefficients {
    /// Explicit `α_2..α_K`; `β_k = 1 − α_k`.
    pub fn from_alpha(alpha: Vec<f64>) -> Result<Self> {
        if let Some(a) = alpha.iter().find(|a| !a.is_finite()) {
            return Err(Error::Config(format!("alpha coefficient {a} is not finite")));
        }
        let beta = alpha.iter().map(|a| 1.0 - a).collect();
        Ok(SplitCoefficients { alpha, beta, gamma: None })
    }

    /// No coefficients: the single-clique case.
    pub fn empty() -> Self {
        SplitCoefficients { alpha: Vec::new(), beta: Vec::new(), gamma: None }
    }

    /// Number of cliques this schedule is built for.
    pub fn n_cliques(&self) -> usize {
        self.alpha.len() + 1
    }

    /// `α_k`, `k ≥ 2`.
    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha[k - 2]
    }

    /// `β_k`, `k ≥ 2`.
    pub fn beta(&self, k: usize) -> f64 {
        self.beta[k - 2]
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }
}

/// `J_1..J_K` and `e_1..e_K` for one scenario and coefficient schedule.
#[derive(Debug, Clone)]
pub struct LocalStatisticSet {
    // j[k-1] in clique-k coordinates
    j: Vec<DMatrix<f64>>,
    e: Vec<f64>,
    coeffs: SplitCoefficients,
    cliques: Vec<Vec<usize>>,
    n_nodes: usize,
}

pub fn build_local_set(scenario: &GgmScenario, coeffs: &SplitCoefficients) -> Result<LocalStatisticSet> {
    let graph = scenario.graph();
    let k_total = graph.n_cliques();
    if coeffs.n_cliques() != k_total {
        return Err(Error::DimensionMismatch(format!(
            "coefficients cover {} cliques, scenario has {}",
            coeffs.n_cliques(),
            k_total
        )));
    }

    // [I − Σ_Sk⁻¹] and log det Σ_Sk for every separator
    let mut sep_terms = vec![(DMatrix::zeros(0, 0), 0.0)];
    for k in 2..=k_total {
        let s = scenario.sep_cov(k);
        let (inv, ld) = linalg::spd_inverse_logdet(s, &format!("separator {k} covariance"))?;
        let dim = s.nrows();
        sep_terms.push((DMatrix::identity(dim, dim) - inv, ld));
    }

    let mut js = Vec::with_capacity(k_total);
    let mut es = Vec::with_capacity(k_total);
    for k in 1..=k_total {
        let cov = scenario.clique_cov(k).matrix();
        let dim = cov.nrows();
        let (inv, ld) = linalg::spd_inverse_logdet(cov, &format!("clique {k} covariance"))?;
        let mut jk = DMatrix::identity(dim, dim) - inv;
        let mut ek = ld;
        for &j in graph.q_set(k) {
            let pos = graph.positions_in_clique(k, graph.separator(j));
            let (term, sld) = &sep_terms[j - 1];
            add_zero_filled(&mut jk, term, &pos, -coeffs.beta(j));
            ek -= coeffs.beta(j) * sld;
        }
        if k >= 2 {
            let pos = graph.positions_in_clique(k, graph.separator(k));
            let (term, sld) = &sep_terms[k - 1];
            add_zero_filled(&mut jk, term, &pos, -coeffs.alpha(k));
            ek -= coeffs.alpha(k) * sld;
        }
        js.push(linalg::symmetrize(&jk));
        es.push(ek);
    }

    Ok(LocalStatisticSet {
        j: js,
        e: es,
        coeffs: coeffs.clone(),
        cliques: (1..=k_total).map(|k| graph.clique(k).to_vec()).collect(),
        n_nodes: graph.n_nodes(),
    })
}

impl LocalStatisticSet {
    pub fn n_cliques(&self) -> usize {
        self.j.len()
    }

    /// `J_k` in clique-`k` coordinates.
    pub fn j(&self, k: usize) -> &DMatrix<f64> {
        &self.j[k - 1]
    }

    pub fn e(&self, k: usize) -> f64 {
        self.e[k - 1]
    }

    pub fn coeffs(&self) -> &SplitCoefficients {
        &self.coeffs
    }

    /// `Σ_k [J_k]^V`, which equals `I − Σ⁻¹`.
    pub fn assembled_j(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for (jk, clique) in self.j.iter().zip(&self.cliques) {
            add_zero_filled(&mut acc, jk, clique, 1.0);
        }
        acc
    }

    /// `Σ_k e_k`, which equals `log det Σ`.
    pub fn e_sum(&self) -> f64 {
        self.e.iter().sum()
    }

    /// `L_k(x_Ck)` for 1-based `k`; `x` is the full observation vector.
    pub fn local_stat(&self, k: usize, x: &DVector<f64>) -> f64 {
        let xc = linalg::subvector(x, &self.cliques[k - 1]);
        linalg::quad_form(&self.j[k - 1], &xc) - self.e[k - 1]
    }

    /// `L_1..L_K` for one observation.
    pub fn local_stats(&self, x: &DVector<f64>) -> Vec<f64> {
        (1..=self.n_cliques()).map(|k| self.local_stat(k, x)).collect()
    }
}

/// `T(x) = xᵀx − xᵀΣ⁻¹x − log det Σ`.
pub fn centralized_stat(scenario: &GgmScenario, x: &DVector<f64>) -> f64 {
    x.dot(x) - linalg::quad_form(scenario.global_precision(), x) - scenario.log_det()
}

/// `τ = ln(π0/π1)`; the test compares `T` against `2τ`.
pub fn bayes_threshold(priors: Priors) -> Result<f64> {
    priors.validate()?;
    Ok((priors.pi0 / priors.pi1).ln())
}

/// H1 iff `statistic ≥ 2τ`.
pub fn decide(statistic: f64, tau: f64) -> Decision {
    if statistic >= 2.0 * tau {
        Decision::H1
    } else {
        Decision::H0
    }
}

pub fn centralized_decide(scenario: &GgmScenario, x: &DVector<f64>) -> Result<Decision> {
    let tau = bayes_threshold(scenario.priors())?;
    Ok(decide(centralized_stat(scenario, x), tau))
}

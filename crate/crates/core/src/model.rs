//! Probabilistic model under the two hypotheses.
//!
//! A [`GgmScenario`] holds the per-clique covariances `Σ_Ck` under H1 and
//! everything derived from them. The global precision is assembled as
//!
//! ```text
//!   Σ⁻¹ = Σ_k [Σ_Ck⁻¹]^V − Σ_{k≥2} [Σ_Sk⁻¹]^V
//! ```
//!
//! and inverted once; the log-determinant comes from the clique/separator
//! factorization `log det Σ = Σ_k log det Σ_Ck − Σ_k log det Σ_Sk`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{add_zero_filled, binary_tree_graph, chain_graph, DecomposableGraph};
use crate::linalg::{self, PD_TOL};
use crate::rng::{stream_rng, Stream};
use crate::Hypothesis;

/// Relative tolerance for the symmetry check on input matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Tolerance on separator blocks that two cliques must agree on.
pub const SEPARATOR_TOL: f64 = 1e-8;
/// Retries allowed for the chain-scenario consistency projection.
pub const MAX_CHAIN_RETRIES: u64 = 32;

/// A symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    inner: DMatrix<f64>,
    min_eig: f64,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::named(m, "matrix")
    }

    /// Validates `m`, naming it `what` in errors.
    pub fn named(m: DMatrix<f64>, what: &str) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{what} is {}x{}, expected a non-empty square matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!("{what} has non-finite entries")));
        }
        let asym = linalg::max_abs(&(&m - m.transpose()));
        if asym > SYMMETRY_TOL * linalg::max_abs(&m).max(1.0) {
            return Err(Error::NotSpd { what: format!("{what} (asymmetric by {asym:.3e})"), min_eig: f64::NAN });
        }
        let inner = linalg::symmetrize(&m);
        let min_eig = linalg::min_eigenvalue(&inner);
        if min_eig <= PD_TOL {
            return Err(Error::NotSpd { what: what.to_string(), min_eig });
        }
        Ok(SpdMatrix { inner, min_eig })
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix { inner: DMatrix::identity(dim, dim), min_eig: 1.0 }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.inner
    }
}

/// Prior probabilities `(π0, π1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub pi0: f64,
    pub pi1: f64,
}

impl Priors {
    pub fn new(pi0: f64, pi1: f64) -> Result<Self> {
        let p = Priors { pi0, pi1 };
        p.validate()?;
        Ok(p)
    }

    pub fn equal() -> Self {
        Priors { pi0: 0.5, pi1: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.pi0 > 0.0 && self.pi1 > 0.0 && ((self.pi0 + self.pi1) - 1.0).abs() <= 1e-12;
        if ok {
            Ok(())
        } else {
            Err(Error::BadPriors { pi0: self.pi0, pi1: self.pi1 })
        }
    }
}

/// Graph, per-clique covariances and the derived global model.
#[derive(Debug, Clone)]
pub struct GgmScenario {
    graph: DecomposableGraph,
    clique_covs: Vec<SpdMatrix>,
    // sep_covs[k-1]; 0x0 for k = 1
    sep_covs: Vec<DMatrix<f64>>,
    global_cov: DMatrix<f64>,
    global_precision: DMatrix<f64>,
    cov_cholesky: DMatrix<f64>,
    log_det: f64,
    priors: Priors,
}

/// Validates clique covariances against the graph and assembles the global model.
pub fn assemble_global(
    graph: DecomposableGraph,
    clique_covs: Vec<SpdMatrix>,
    priors: Priors,
) -> Result<GgmScenario> {
    priors.validate()?;
    let k_total = graph.n_cliques();
    if clique_covs.len() != k_total {
        return Err(Error::DimensionMismatch(format!(
            "{} clique covariances given for {} cliques",
            clique_covs.len(),
            k_total
        )));
    }
    for (i, c) in clique_covs.iter().enumerate() {
        let want = graph.clique(i + 1).len();
        if c.dim() != want {
            return Err(Error::DimensionMismatch(format!(
                "covariance of clique {} is {}x{}, clique has {} nodes",
                i + 1,
                c.dim(),
                c.dim(),
                want
            )));
        }
    }

    let mut sep_covs = vec![DMatrix::zeros(0, 0)];
    for k in 2..=k_total {
        let sep = graph.separator(k);
        let own = linalg::submatrix(clique_covs[k - 1].matrix(), &graph.positions_in_clique(k, sep));
        let q = graph.q(k);
        let other = linalg::submatrix(clique_covs[q - 1].matrix(), &graph.positions_in_clique(q, sep));
        let max_dev = linalg::max_abs(&(&own - &other));
        let scale = linalg::max_abs(&own).max(1.0);
        if max_dev > SEPARATOR_TOL * scale {
            return Err(Error::InconsistentSeparator { k, q, max_dev });
        }
        sep_covs.push(own);
    }

    let n = graph.n_nodes();
    let mut precision = DMatrix::zeros(n, n);
    let mut log_det = 0.0;
    for k in 1..=k_total {
        let (inv, ld) = linalg::spd_inverse_logdet(clique_covs[k - 1].matrix(), &format!("clique {k} covariance"))?;
        add_zero_filled(&mut precision, &inv, graph.clique(k), 1.0);
        log_det += ld;
    }
    for k in 2..=k_total {
        let (inv, ld) = linalg::spd_inverse_logdet(&sep_covs[k - 1], &format!("separator {k} covariance"))?;
        add_zero_filled(&mut precision, &inv, graph.separator(k), -1.0);
        log_det -= ld;
    }
    let precision = linalg::symmetrize(&precision);
    let min_eig = linalg::min_eigenvalue(&precision);
    if min_eig <= PD_TOL {
        return Err(Error::NotSpd { what: "assembled global precision".into(), min_eig });
    }
    let (global_cov, _) = linalg::spd_inverse_logdet(&precision, "assembled global precision")?;
    let cov_cholesky = global_cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::CholeskyFailure("global covariance".into()))?
        .unpack();

    Ok(GgmScenario {
        graph,
        clique_covs,
        sep_covs,
        global_cov,
        global_precision: precision,
        cov_cholesky,
        log_det,
        priors,
    })
}

impl GgmScenario {
    pub fn graph(&self) -> &DecomposableGraph {
        &self.graph
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_cliques(&self) -> usize {
        self.graph.n_cliques()
    }

    /// `Σ_Ck` for 1-based `k`.
    pub fn clique_cov(&self, k: usize) -> &SpdMatrix {
        &self.clique_covs[k - 1]
    }

    /// `Σ_Sk` for `k ≥ 2` (canonical node order).
    pub fn sep_cov(&self, k: usize) -> &DMatrix<f64> {
        &self.sep_covs[k - 1]
    }

    pub fn global_cov(&self) -> &DMatrix<f64> {
        &self.global_cov
    }

    pub fn global_precision(&self) -> &DMatrix<f64> {
        &self.global_precision
    }

    /// Lower-triangular Cholesky factor of the global covariance.
    pub fn cov_cholesky(&self) -> &DMatrix<f64> {
        &self.cov_cholesky
    }

    /// `log det Σ` from the clique/separator factorization.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn priors(&self) -> Priors {
        self.priors
    }

    pub fn with_priors(mut self, priors: Priors) -> Result<Self> {
        priors.validate()?;
        self.priors = priors;
        Ok(self)
    }

    /// Smallest eigenvalue over all clique covariances.
    pub fn lambda_min(&self) -> f64 {
        self.clique_covs.iter().map(SpdMatrix::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// True when the H1 covariance is the identity, so both hypotheses coincide.
    pub fn is_degenerate(&self) -> bool {
        let n = self.n_nodes();
        linalg::max_abs(&(&self.global_cov - DMatrix::<f64>::identity(n, n))) < 1e-12
    }

    /// One observation vector under `hypothesis`.
    pub fn draw<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R) -> DVector<f64> {
        let n = self.n_nodes();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        match hypothesis {
            Hypothesis::H0 => z,
            Hypothesis::H1 => &self.cov_cholesky * z,
        }
    }
}

/// `n` observation vectors under `hypothesis`, deterministic in `seed`.
pub fn sample(scenario: &GgmScenario, hypothesis: Hypothesis, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = stream_rng(seed, Stream::Sample, 0);
    (0..n).map(|_| scenario.draw(hypothesis, &mut rng)).collect()
}

/// Random orthogonal matrix: Gram–Schmidt on the columns of a standard-normal
/// matrix. The implied triangular factor has a positive diagonal.
pub fn random_orthonormal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    gram_schmidt(&g)
}

// Modified Gram–Schmidt with one re-orthogonalization pass.
fn gram_schmidt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = a.clone();
    let n = a.ncols();
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    q
}

/// `Vᵀ Λ V` with `V` a seeded random orthogonal matrix.
pub fn random_spd_with_spectrum(dim: usize, eigenvalues: &[f64], seed: u64) -> Result<SpdMatrix> {
    let mut rng = stream_rng(seed, Stream::Scenario, 0);
    random_spd_with_spectrum_rng(dim, eigenvalues, &mut rng)
}

pub fn random_spd_with_spectrum_rng<R: Rng + ?Sized>(
    dim: usize,
    eigenvalues: &[f64],
    rng: &mut R,
) -> Result<SpdMatrix> {
    if dim == 0 {
        return Err(Error::DegenerateInput("dimension 0".into()));
    }
    if eigenvalues.len() != dim {
        return Err(Error::DegenerateInput(format!(
            "{} eigenvalues given for dimension {dim}",
            eigenvalues.len()
        )));
    }
    if let Some(bad) = eigenvalues.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::DegenerateInput(format!("eigenvalue {bad} is not positive")));
    }
    let v = random_orthonormal(dim, rng).transpose();
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    SpdMatrix::named(linalg::symmetrize(&(v.transpose() * lambda * v)), "generated covariance")
}

/// `dim` values evenly spaced on `[scale, 1.5·scale]`.
pub fn chain_spectrum(dim: usize, scale: f64) -> Vec<f64> {
    if dim == 1 {
        return vec![scale];
    }
    (0..dim).map(|i| scale * (1.0 + 0.5 * i as f64 / (dim - 1) as f64)).collect()
}

/// Chain of `k` cliques of `m` nodes with one-node separators and identical
/// clique covariances.
///
/// `Σ_C1` has the spectrum [`chain_spectrum`]`(m, alpha_scale)`. Because the
/// last node of one clique is the first of the next, its two corner diagonal
/// entries are replaced by their average before tiling.
pub fn make_chain_scenario(k: usize, m: usize, alpha_scale: f64, priors: Priors, seed: u64) -> Result<GgmScenario> {
    if m < 2 {
        return Err(Error::BadShape(format!("chain scenario needs M ≥ 2, got {m}")));
    }
    if !(alpha_scale > 0.0 && alpha_scale.is_finite()) {
        return Err(Error::DegenerateInput(format!("alpha_scale = {alpha_scale} must be positive")));
    }
    let graph = chain_graph(k, m, 1)?;
    let spectrum = chain_spectrum(m, alpha_scale);
    let mut last_err = None;
    for attempt in 0..=MAX_CHAIN_RETRIES {
        let mut rng = stream_rng(seed, Stream::Scenario, attempt);
        let base = random_spd_with_spectrum_rng(m, &spectrum, &mut rng)?.into_inner();
        let cov = if k > 1 { project_corners(base) } else { base };
        match SpdMatrix::named(cov, "projected clique covariance") {
            Ok(c) => return assemble_global(graph, vec![c; k], priors),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn project_corners(mut cov: DMatrix<f64>) -> DMatrix<f64> {
    let m = cov.nrows();
    let avg = 0.5 * (cov[(0, 0)] + cov[(m - 1, m - 1)]);
    cov[(0, 0)] = avg;
    cov[(m - 1, m - 1)] = avg;
    cov
}

/// The 4×4 tree-scenario clique covariance: `x²` on the diagonal, `x/10` off it.
pub fn tree_clique_cov(x: f64) -> Result<SpdMatrix> {
    let m = DMatrix::from_fn(4, 4, |i, j| if i == j { x * x } else { x / 10.0 });
    SpdMatrix::named(m, &format!("tree clique covariance for x = {x}"))
}

/// Smallest eigenvalue of [`tree_clique_cov`] in closed form, `x² − x/10`
/// (valid for `x > 0`).
pub fn tree_lambda_min(x: f64) -> f64 {
    x * x - x / 10.0
}

/// Binary tree of `k` four-node cliques with one-node separators.
pub fn make_tree_scenario(k: usize, x: f64, priors: Priors) -> Result<GgmScenario> {
    let graph = binary_tree_graph(k, 4, 1)?;
    let cov = tree_clique_cov(x)?;
    assemble_global(graph, vec![cov; k], priors)
}

/// Every clique covariance equal to the identity, so H1 coincides with H0.
pub fn identity_scenario(graph: DecomposableGraph, priors: Priors) -> Result<GgmScenario> {
    let covs = (1..=graph.n_cliques()).map(|k| SpdMatrix::identity(graph.clique(k).len())).collect();
    assemble_global(graph, covs, priors)
}

/// Random clique covariances that agree on every separator.
///
/// Cliques are filled in order. For clique `k` the separator block is copied
/// from clique `q(k)`; the remaining block is `W + A Σ_S Aᵀ` with cross term
/// `A Σ_S`, where `W` is a random SPD matrix with eigenvalues in
/// `[eig_lo, eig_hi]` and `A` a random regression matrix. The result is
/// positive definite by construction.
pub fn random_consistent_scenario(
    graph: DecomposableGraph,
    eig_lo: f64,
    eig_hi: f64,
    priors: Priors,
    seed: u64,
) -> Result<GgmScenario> {
    if !(eig_lo > 0.0 && eig_hi >= eig_lo) {
        return Err(Error::DegenerateInput(format!("eigenvalue range [{eig_lo}, {eig_hi}]")));
    }
    let mut rng = stream_rng(seed, Stream::Scenario, 0);
    let mut covs: Vec<DMatrix<f64>> = Vec::with_capacity(graph.n_cliques());
    for k in 1..=graph.n_cliques() {
        let clique = graph.clique(k);
        let sep: &[usize] = if k == 1 { &[] } else { graph.separator(k) };
        let rest: Vec<usize> = clique.iter().copied().filter(|n| !sep.contains(n)).collect();
        let sigma_s = if sep.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            let q = graph.q(k);
            linalg::submatrix(&covs[q - 1], &graph.positions_in_clique(q, sep))
        };
        let spectrum: Vec<f64> = (0..rest.len()).map(|_| rng.random_range(eig_lo..=eig_hi)).collect();
        let w = random_spd_with_spectrum_rng(rest.len(), &spectrum, &mut rng)?.into_inner();
        let a = DMatrix::from_fn(rest.len(), sep.len(), |_, _| rng.sample::<f64, _>(StandardNormal) * 0.5);
        let cross = &a * &sigma_s; // rest x sep
        let rest_block = w + &cross * a.transpose();

        let s_pos = graph.positions_in_clique(k, sep);
        let r_pos = graph.positions_in_clique(k, &rest);
        let mut cov = DMatrix::zeros(clique.len(), clique.len());
        for (i, &pi) in s_pos.iter().enumerate() {
            for (j, &pj) in s_pos.iter().enumerate() {
                cov[(pi, pj)] = sigma_s[(i, j)];
            }
        }
        for (i, &pi) in r_pos.iter().enumerate() {
            for (j, &pj) in r_pos.iter().enumerate() {
                cov[(pi, pj)] = rest_block[(i, j)];
            }
            for (j, &pj) in s_pos.iter().enumerate() {
                cov[(pi, pj)] = cross[(i, j)];
                cov[(pj, pi)] = cross[(i, j)];
            }
        }
        covs.push(cov);
    }
    let covs = covs
        .into_iter()
        .enumerate()
        .map(|(i, c)| SpdMatrix::named(c, &format!("random covariance of clique {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    assemble_global(graph, covs, priors)
}

//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "id": "chain20",
//!   "scenario": { "chain": { "k": 20, "m": 5, "alpha_scale": 199.0 } },
//!   "coefficients": { "gamma": 9.5367e-7 },
//!   "priors": { "pi0": 0.5, "pi1": 0.5 },
//!   "n_runs": 20000,
//!   "seed": 0
//! }
//! ```
//!
//! The machine-readable schema lives in `schema/config.schema.json`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{binary_tree_graph, chain_graph, DecomposableGraph, GraphOptions};
use crate::model::{
    assemble_global, identity_scenario, make_chain_scenario, make_tree_scenario, random_consistent_scenario,
    GgmScenario, Priors, SpdMatrix,
};
use crate::statistic::{default_gamma, gamma_schedule, SplitCoefficients};

pub const DEFAULT_N_RUNS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphShape {
    pub k: usize,
    pub m: usize,
    pub s: usize,
}

/// Graph given either as an explicit perfect sequence or by a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Cliques { n_nodes: usize, cliques: Vec<Vec<usize>> },
    Chain { chain: GraphShape },
    Tree { tree: GraphShape },
}

impl GraphSpec {
    pub fn build(&self, opts: GraphOptions) -> Result<DecomposableGraph> {
        match self {
            GraphSpec::Cliques { n_nodes, cliques } => DecomposableGraph::from_labels_with(cliques, *n_nodes, opts),
            GraphSpec::Chain { chain } => chain_graph(chain.k, chain.m, chain.s),
            GraphSpec::Tree { tree } => binary_tree_graph(tree.k, tree.m, tree.s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    /// Chain of `k` cliques of `m` nodes, one-node separators, clique spectrum
    /// evenly spaced on `[alpha_scale, 1.5·alpha_scale]`.
    Chain {
        k: usize,
        #[serde(default = "default_m")]
        m: usize,
        alpha_scale: f64,
    },
    /// Binary tree of four-node cliques with `x²` diagonal and `x/10` elsewhere.
    Tree { k: usize, x: f64 },
    /// Explicit clique covariances (rows of each matrix, canonical node order).
    Explicit { graph: GraphSpec, clique_covs: Vec<Vec<Vec<f64>>> },
    /// All clique covariances equal to the identity.
    Identity { graph: GraphSpec },
    /// Random separator-consistent clique covariances.
    Random {
        graph: GraphSpec,
        #[serde(default = "default_eig_lo")]
        eig_lo: f64,
        #[serde(default = "default_eig_hi")]
        eig_hi: f64,
    },
}

fn default_m() -> usize {
    5
}
fn default_eig_lo() -> f64 {
    0.5
}
fn default_eig_hi() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaValue {
    Value(f64),
    /// `"auto"`: `γ = 0.5 / (2^K − 1)`.
    Auto(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Gamma {
        gamma: GammaValue,
    },
    /// `α_2..α_K`; `β_k = 1 − α_k`.
    Alpha {
        alpha: Vec<f64>,
    },
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec::Gamma { gamma: GammaValue::Auto("auto".into()) }
    }
}

impl CoefficientSpec {
    pub fn build(&self, k: usize) -> Result<SplitCoefficients> {
        match self {
            CoefficientSpec::Gamma { .. } if k == 1 => Ok(SplitCoefficients::empty()),
            CoefficientSpec::Gamma { gamma: GammaValue::Value(g) } => gamma_schedule(k, *g),
            CoefficientSpec::Gamma { gamma: GammaValue::Auto(s) } if s == "auto" => gamma_schedule(k, default_gamma(k)),
            CoefficientSpec::Gamma { gamma: GammaValue::Auto(s) } => {
                Err(Error::Config(format!("coefficients.gamma must be a number or \"auto\", got {s:?}")))
            }
            CoefficientSpec::Alpha { alpha } => {
                if alpha.len() + 1 != k {
                    return Err(Error::Config(format!(
                        "coefficients.alpha has {} entries, K = {k} needs {}",
                        alpha.len(),
                        k - 1
                    )));
                }
                SplitCoefficients::from_alpha(alpha.clone())
            }
        }
    }

    pub fn is_gamma(&self) -> bool {
        matches!(self, CoefficientSpec::Gamma { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub k_values: Option<Vec<usize>>,
    #[serde(default)]
    pub scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default = "Priors::equal")]
    pub priors: Priors,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Assign exactly `round(π1·n_runs)` runs to H1 instead of drawing the
    /// hypothesis per run.
    #[serde(default)]
    pub stratified: bool,
    /// Draws per hypothesis for the bound estimator; defaults to `n_runs`.
    #[serde(default)]
    pub bound_samples: Option<usize>,
    #[serde(default)]
    pub graph_options: GraphOptions,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_n_runs() -> usize {
    DEFAULT_N_RUNS
}
fn default_eta() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSpec) -> Self {
        ExperimentConfig {
            id: None,
            scenario,
            coefficients: CoefficientSpec::default(),
            priors: Priors::equal(),
            n_runs: DEFAULT_N_RUNS,
            seed: 0,
            eta: 1.0,
            stratified: false,
            bound_samples: None,
            graph_options: GraphOptions::default(),
            sweep: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parameter checks that need no numerical work.
    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta = {} must be positive", self.eta)));
        }
        if self.bound_samples == Some(0) {
            return Err(Error::Config("bound_samples must be at least 1".into()));
        }
        self.priors.validate()?;
        match &self.scenario {
            ScenarioSpec::Chain { k, m, alpha_scale } => {
                if *k == 0 || *m < 2 {
                    return Err(Error::Config(format!("scenario.chain needs k ≥ 1 and m ≥ 2 (k = {k}, m = {m})")));
                }
                if !(*alpha_scale > 0.0 && alpha_scale.is_finite()) {
                    return Err(Error::Config(format!("scenario.chain.alpha_scale = {alpha_scale} must be positive")));
                }
            }
            ScenarioSpec::Tree { k, x } => {
                if *k == 0 {
                    return Err(Error::Config("scenario.tree.k must be at least 1".into()));
                }
                if !(*x > 0.0 && x.is_finite()) {
                    return Err(Error::Config(format!("scenario.tree.x = {x} must be positive")));
                }
            }
            ScenarioSpec::Random { eig_lo, eig_hi, .. } => {
                if !(*eig_lo > 0.0 && eig_hi >= eig_lo) {
                    return Err(Error::Config(format!("scenario.random eigenvalue range [{eig_lo}, {eig_hi}] is invalid")));
                }
            }
            ScenarioSpec::Explicit { .. } | ScenarioSpec::Identity { .. } => {}
        }
        if let Some(sweep) = &self.sweep {
            if let Some(ks) = &sweep.k_values {
                if ks.iter().any(|&k| k < 2) {
                    return Err(Error::Config("sweep.k_values entries must be at least 2".into()));
                }
            }
            if let Some(sc) = &sweep.scales {
                if sc.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(Error::Config("sweep.scales entries must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build_scenario(&self) -> Result<GgmScenario> {
        let seed = self.seed;
        match &self.scenario {
            ScenarioSpec::Chain { k, m, alpha_scale } => make_chain_scenario(*k, *m, *alpha_scale, self.priors, seed),
            ScenarioSpec::Tree { k, x } => make_tree_scenario(*k, *x, self.priors),
            ScenarioSpec::Explicit { graph, clique_covs } => {
                let graph = graph.build(self.graph_options)?;
                let covs = clique_covs
                    .iter()
                    .enumerate()
                    .map(|(i, rows)| {
                        let m = rows_to_matrix(rows, i + 1)?;
                        SpdMatrix::named(m, &format!("covariance of clique {}", i + 1))
                    })
                    .collect::<Result<Vec<_>>>()?;
                assemble_global(graph, covs, self.priors)
            }
            ScenarioSpec::Identity { graph } => identity_scenario(graph.build(self.graph_options)?, self.priors),
            ScenarioSpec::Random { graph, eig_lo, eig_hi } => random_consistent_scenario(
                graph.build(self.graph_options)?,
                *eig_lo,
                *eig_hi,
                self.priors,
                seed,
            ),
        }
    }

    pub fn build_coefficients(&self, k: usize) -> Result<SplitCoefficients> {
        self.coefficients.build(k)
    }

    /// Eigenvalue scale parameter for generated scenarios.
    pub fn scale(&self) -> Option<f64> {
        match &self.scenario {
            ScenarioSpec::Chain { alpha_scale, .. } => Some(*alpha_scale),
            ScenarioSpec::Tree { x, .. } => Some(*x),
            _ => None,
        }
    }

    pub fn config_id(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        match &self.scenario {
            ScenarioSpec::Chain { k, m, alpha_scale } => format!("chain-k{k}-m{m}-a{alpha_scale}"),
            ScenarioSpec::Tree { k, x } => format!("tree-k{k}-x{x}"),
            ScenarioSpec::Explicit { .. } => "explicit".into(),
            ScenarioSpec::Identity { .. } => "identity".into(),
            ScenarioSpec::Random { .. } => "random".into(),
        }
    }

    /// Same experiment with `k` cliques. A gamma schedule switches to
    /// `γ = 0.5 / (2^K − 1)`.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.scenario {
            ScenarioSpec::Chain { k: kk, .. } | ScenarioSpec::Tree { k: kk, .. } => *kk = k,
            _ => return Err(Error::Config("K sweeps need a chain or tree scenario".into())),
        }
        if out.coefficients.is_gamma() {
            out.coefficients = CoefficientSpec::default();
        }
        Ok(out)
    }

    /// Same experiment with a different eigenvalue scale (`alpha_scale` or `x`).
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.scenario {
            ScenarioSpec::Chain { alpha_scale, .. } => *alpha_scale = scale,
            ScenarioSpec::Tree { x, .. } => *x = scale,
            _ => return Err(Error::Config("eigenvalue sweeps need a chain or tree scenario".into())),
        }
        Ok(out)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], k: usize) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("clique_covs[{}] is not square", k - 1)));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_chain_config() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": {"chain": {"k": 20, "m": 5, "alpha_scale": 199}},
                "coefficients": {"gamma": 9.5367e-7}, "seed": 3}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_runs, DEFAULT_N_RUNS);
        assert_eq!(cfg.build_coefficients(20).unwrap().gamma(), Some(9.5367e-7));
        assert_eq!(cfg.config_id(), "chain-k20-m5-a199");
    }

    #[test]
    fn parses_graph_forms() {
        for g in [
            r#"{"n_nodes": 4, "cliques": [[1,2,3],[2,3,4]]}"#,
            r#"{"chain": {"k": 3, "m": 4, "s": 1}}"#,
            r#"{"tree": {"k": 3, "m": 4, "s": 1}}"#,
        ] {
            let text = format!(r#"{{"scenario": {{"identity": {{"graph": {g}}}}}}}"#);
            let cfg = ExperimentConfig::from_json(&text).unwrap();
            cfg.build_scenario().unwrap();
        }
    }

    #[test]
    fn coefficient_forms() {
        let auto = CoefficientSpec::default().build(4).unwrap();
        assert_eq!(auto.gamma(), Some(default_gamma(4)));
        let a: CoefficientSpec = serde_json::from_str(r#"{"alpha": [0.2, 0.4]}"#).unwrap();
        assert_eq!(a.build(3).unwrap().beta(3), 0.6);
        assert!(a.build(4).is_err());
        let bad: CoefficientSpec = serde_json::from_str(r#"{"gamma": "half"}"#).unwrap();
        assert!(bad.build(3).is_err());
        assert_eq!(CoefficientSpec::default().build(1).unwrap().n_cliques(), 1);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(ExperimentConfig::from_json(r#"{"scenario": {"tree": {"k": 3, "x": 1.2}}, "bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"scenario": {"tree": {"k": 3, "x": 1.2}}, "n_runs": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"scenario": {"tree": {"k": 3, "x": -1}}}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"scenario": {"tree": {"k": 3, "x": 1.2}}, "priors": {"pi0": 0.2, "pi1": 0.2}}"#
        )
        .is_err());
    }

    #[test]
    fn explicit_inconsistent_separator_is_numerical_error() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": {"explicit": {"graph": {"n_nodes": 3, "cliques": [[1,2],[2,3]]},
                "clique_covs": [[[2.0, 0.1], [0.1, 1.0]], [[1.5, 0.1], [0.1, 1.0]]]}}}"#,
        )
        .unwrap();
        let err = cfg.build_scenario().unwrap_err();
        assert!(matches!(err, Error::InconsistentSeparator { k: 2, .. }));
        assert_eq!(err.kind(), crate::ErrorKind::Numerical);
    }

    #[test]
    fn sweep_helpers() {
        let cfg = ExperimentConfig::new(ScenarioSpec::Tree { k: 3, x: 1.2 });
        let c7 = cfg.with_k(7).unwrap();
        assert_eq!(c7.scenario, ScenarioSpec::Tree { k: 7, x: 1.2 });
        assert_eq!(cfg.with_scale(1.6).unwrap().scale(), Some(1.6));
        let id = ExperimentConfig::new(ScenarioSpec::Identity {
            graph: GraphSpec::Chain { chain: GraphShape { k: 2, m: 2, s: 1 } },
        });
        assert!(id.with_k(3).is_err());
    }
}

//! Monte Carlo harness.
//!
//! Each run draws a hypothesis (by the priors, or stratified), samples one
//! observation vector, computes the local statistics, runs the ordered
//! protocol and checks its decision against the centralized test. Run `r`
//! uses its own random stream, and per-run outcomes are reduced in run order,
//! so results are bit-identical for any number of worker threads.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_report, BoundReport};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::protocol::{verify_equivalence, ProtocolTrace};
use crate::rng::{stream_rng, Stream};
use crate::statistic::build_local_set;
use crate::Hypothesis;

use rand::Rng;

/// Version tag written as the first line of every results CSV.
pub const RESULTS_SCHEMA: &str = "# ggm-ot results v1";
pub const RESULTS_HEADER: [&str; 11] = [
    "config_id",
    "K",
    "scale",
    "lambda_min",
    "n_runs",
    "avg_saved",
    "frac_saved",
    "bound",
    "bound_stderr",
    "error_rate",
    "seed",
];
pub const HISTOGRAM_SCHEMA: &str = "# ggm-ot stop-index histogram v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisBreakdown {
    pub runs: usize,
    pub avg_saved: f64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_id: String,
    pub k: usize,
    pub scale: Option<f64>,
    pub lambda_min: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub avg_saved: f64,
    /// Standard error of `avg_saved` over runs.
    pub saved_stderr: f64,
    pub frac_saved: f64,
    pub error_rate: f64,
    pub centralized_error_rate: f64,
    pub bound: BoundReport,
    pub h0: HypothesisBreakdown,
    pub h1: HypothesisBreakdown,
    /// `stop_histogram[t - 1]` = runs that stopped after `t` transmissions.
    pub stop_histogram: Vec<usize>,
    /// H1 covariance equals the identity; every local statistic is zero.
    pub degenerate: bool,
    pub wall_time_secs: f64,
}

impl ExperimentResult {
    /// `√(se(avg_saved)² + se(bound)²)`.
    pub fn combined_stderr(&self) -> f64 {
        (self.saved_stderr.powi(2) + self.bound.ks_stderr.powi(2)).sqrt()
    }

    /// Whether the simulated average respects the lower bound within 3σ.
    pub fn bound_holds(&self) -> bool {
        self.avg_saved >= self.bound.ks_lower - 3.0 * self.combined_stderr()
    }

    pub fn bound_frac(&self) -> f64 {
        self.bound.ks_lower / self.k as f64
    }
}

/// One run's trace, as written by `--dump-traces`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run: usize,
    pub hypothesis: Hypothesis,
    pub local_values: Vec<f64>,
    pub centralized: Hypothesis,
    pub trace: ProtocolTrace,
}

struct RunOutcome {
    hypothesis: Hypothesis,
    decision: Hypothesis,
    centralized: Hypothesis,
    stop_index: usize,
    saved: usize,
    record: Option<TraceRecord>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_traced(config, false).map(|(r, _)| r)
}

/// Like [`run_experiment`], optionally keeping every run's trace.
pub fn run_experiment_traced(config: &ExperimentConfig, keep_traces: bool) -> Result<(ExperimentResult, Vec<TraceRecord>)> {
    config.validate()?;
    let started = Instant::now();
    let scenario = config.build_scenario()?;
    let k = scenario.n_cliques();
    let coeffs = config.build_coefficients(k)?;
    let set = build_local_set(&scenario, &coeffs)?;
    let priors = scenario.priors();
    let n = config.n_runs;
    let n_h1_stratified = (priors.pi1 * n as f64).round() as usize;

    let outcomes: Vec<RunOutcome> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, Stream::Run, r as u64);
            let u: f64 = rng.random();
            let hypothesis = if config.stratified {
                if r < n_h1_stratified {
                    Hypothesis::H1
                } else {
                    Hypothesis::H0
                }
            } else if u < priors.pi1 {
                Hypothesis::H1
            } else {
                Hypothesis::H0
            };
            let x = scenario.draw(hypothesis, &mut rng);
            let (trace, centralized) = verify_equivalence(&scenario, &set, &x, config.eta)?;
            let record = keep_traces.then(|| TraceRecord {
                run: r,
                hypothesis,
                local_values: set.local_stats(&x),
                centralized,
                trace: trace.clone(),
            });
            Ok(RunOutcome {
                hypothesis,
                decision: trace.decision,
                centralized,
                stop_index: trace.stop_index,
                saved: trace.saved,
                record,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let bound_n = config.bound_samples.unwrap_or(n);
    let bound = bound_report(&set, &scenario, bound_n, config.seed)?;

    let mut histogram = vec![0usize; k];
    let mut saved_sum = 0.0;
    let mut saved_sq = 0.0;
    let mut errors = 0usize;
    let mut central_errors = 0usize;
    let mut per = [(0usize, 0.0f64, 0usize); 2]; // (runs, saved, errors) for H0, H1
    for o in &outcomes {
        histogram[o.stop_index - 1] += 1;
        let s = o.saved as f64;
        saved_sum += s;
        saved_sq += s * s;
        let wrong = o.decision != o.hypothesis;
        errors += wrong as usize;
        central_errors += (o.centralized != o.hypothesis) as usize;
        let slot = &mut per[(o.hypothesis == Hypothesis::H1) as usize];
        slot.0 += 1;
        slot.1 += s;
        slot.2 += wrong as usize;
    }
    let nf = n as f64;
    let avg_saved = saved_sum / nf;
    let var = if n > 1 { (saved_sq - nf * avg_saved * avg_saved).max(0.0) / (nf - 1.0) } else { 0.0 };
    let breakdown = |(runs, saved, errs): (usize, f64, usize)| HypothesisBreakdown {
        runs,
        avg_saved: if runs > 0 { saved / runs as f64 } else { 0.0 },
        error_rate: if runs > 0 { errs as f64 / runs as f64 } else { 0.0 },
    };

    let result = ExperimentResult {
        config_id: config.config_id(),
        k,
        scale: config.scale(),
        lambda_min: scenario.lambda_min(),
        n_runs: n,
        seed: config.seed,
        avg_saved,
        saved_stderr: (var / nf).sqrt(),
        frac_saved: avg_saved / k as f64,
        error_rate: errors as f64 / nf,
        centralized_error_rate: central_errors as f64 / nf,
        bound,
        h0: breakdown(per[0]),
        h1: breakdown(per[1]),
        stop_histogram: histogram,
        degenerate: scenario.is_degenerate(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let traces = outcomes.into_iter().filter_map(|o| o.record).collect();
    Ok((result, traces))
}

/// One experiment per `K`. Gamma schedules use `γ = 0.5 / (2^K − 1)`.
pub fn sweep_k(base: &ExperimentConfig, k_values: &[usize]) -> Result<Vec<ExperimentResult>> {
    if let Some(&bad) = k_values.iter().find(|&&k| k < 2) {
        return Err(Error::Config(format!("K sweep values must be at least 2, got {bad}")));
    }
    k_values.iter().map(|&k| run_experiment(&base.with_k(k)?)).collect()
}

/// One experiment per eigenvalue scale (`alpha_scale` for chains, `x` for trees).
pub fn sweep_eigenvalue(base: &ExperimentConfig, scales: &[f64]) -> Result<Vec<ExperimentResult>> {
    scales.iter().map(|&s| run_experiment(&base.with_scale(s)?)).collect()
}

/// Runs `f` on a dedicated pool of `workers` threads (`None`: rayon default).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::Config("workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Results CSV: schema line, header, one row per result.
pub fn write_results_csv<W: Write>(out: W, results: &[ExperimentResult]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{RESULTS_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record([
            r.config_id.clone(),
            r.k.to_string(),
            r.scale.map(|s| s.to_string()).unwrap_or_default(),
            r.lambda_min.to_string(),
            r.n_runs.to_string(),
            r.avg_saved.to_string(),
            r.frac_saved.to_string(),
            r.bound.ks_lower.to_string(),
            r.bound.ks_stderr.to_string(),
            r.error_rate.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Stop-index histogram CSV: `config_id,K,stop_index,count`.
pub fn write_histogram_csv<W: Write>(out: W, results: &[ExperimentResult]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{HISTOGRAM_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config_id", "K", "stop_index", "count"])?;
    for r in results {
        for (i, c) in r.stop_histogram.iter().enumerate() {
            w.write_record([r.config_id.clone(), r.k.to_string(), (i + 1).to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated data for plotting saved transmissions against `K`:
/// `K avg_saved limit bound`.
pub fn write_sweep_k_dat<W: Write>(mut out: W, results: &[ExperimentResult]) -> Result<()> {
    writeln!(out, "# K avg_saved ceil(K/2)-1 bound")?;
    for r in results {
        writeln!(out, "{} {} {} {}", r.k, r.avg_saved, r.bound.ks_limit, r.bound.ks_lower)?;
    }
    Ok(())
}

/// `scale lambda_min frac_saved bound_frac`.
pub fn write_sweep_eig_dat<W: Write>(mut out: W, results: &[ExperimentResult]) -> Result<()> {
    writeln!(out, "# scale lambda_min frac_saved bound_frac")?;
    for r in results {
        let scale = r.scale.map(|s| s.to_string()).unwrap_or_else(|| "nan".into());
        writeln!(out, "{} {} {} {}", scale, r.lambda_min, r.frac_saved, r.bound_frac())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{GraphShape, GraphSpec, ScenarioSpec};

    fn small(scenario: ScenarioSpec, n: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(scenario);
        c.n_runs = n;
        c.seed = 11;
        c
    }

    #[test]
    fn identity_scenario_always_stops_after_one() {
        let cfg = small(
            ScenarioSpec::Identity { graph: GraphSpec::Chain { chain: GraphShape { k: 5, m: 3, s: 1 } } },
            300,
        );
        let r = run_experiment(&cfg).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.stop_histogram[0], 300);
        assert_eq!(r.avg_saved, 4.0);
        assert_eq!(r.frac_saved, 4.0 / 5.0);
        assert_eq!(r.error_rate, r.centralized_error_rate);
    }

    #[test]
    fn two_cliques_respect_bound() {
        let r = run_experiment(&small(ScenarioSpec::Tree { k: 2, x: 1.4 }, 2000)).unwrap();
        assert!((0.0..=1.0).contains(&r.avg_saved));
        assert!(r.bound_holds());
    }

    #[test]
    fn stratified_counts_are_exact() {
        let mut cfg = small(ScenarioSpec::Tree { k: 3, x: 1.2 }, 101);
        cfg.stratified = true;
        cfg.priors = crate::model::Priors { pi0: 0.7, pi1: 0.3 };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.h1.runs, 30);
        assert_eq!(r.h0.runs, 71);
    }

    #[test]
    fn traces_are_kept_on_request() {
        let cfg = small(ScenarioSpec::Tree { k: 3, x: 1.2 }, 20);
        let (r, traces) = run_experiment_traced(&cfg, true).unwrap();
        assert_eq!(traces.len(), 20);
        let saved: usize = traces.iter().map(|t| t.trace.saved).sum();
        assert_eq!(saved as f64 / 20.0, r.avg_saved);
        assert!(traces.iter().all(|t| t.trace.decision == t.centralized));
    }

    #[test]
    fn single_point_sweep_matches_run() {
        let cfg = small(ScenarioSpec::Tree { k: 3, x: 1.6 }, 200);
        let sweep = sweep_k(&cfg, &[3]).unwrap();
        let mut direct = run_experiment(&cfg.with_k(3).unwrap()).unwrap();
        direct.wall_time_secs = sweep[0].wall_time_secs;
        assert_eq!(sweep[0], direct);
        assert!(sweep_k(&cfg, &[1]).is_err());
    }

    #[test]
    fn worker_count_does_not_change_csv() {
        let cfg = small(ScenarioSpec::Chain { k: 4, m: 3, alpha_scale: 2.0 }, 500);
        let csv_for = |w| {
            let r = with_workers(Some(w), || run_experiment(&cfg)).unwrap().unwrap();
            let mut buf = Vec::new();
            write_results_csv(&mut buf, &[r]).unwrap();
            buf
        };
        assert_eq!(csv_for(1), csv_for(3));
    }

    #[test]
    fn csv_layout() {
        let r = run_experiment(&small(ScenarioSpec::Tree { k: 3, x: 1.1 }, 50)).unwrap();
        let mut buf = Vec::new();
        write_results_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RESULTS_SCHEMA);
        assert_eq!(lines[1], RESULTS_HEADER.join(","));
        assert!(lines[2].starts_with("tree-k3-x1.1,3,1.1,"));

        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &[r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2 + 3);
    }
}

//! `ggm-ot`: command-line front end for the ordered-transmission simulator.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ggm_ot::bounds::{bound_report, jk_spectrum_report, kl_per_clique};
use ggm_ot::config::ExperimentConfig;
use ggm_ot::experiment::{
    run_experiment_traced, sweep_eigenvalue, sweep_k, with_workers, write_histogram_csv, write_results_csv,
    write_sweep_eig_dat, write_sweep_k_dat, ExperimentResult,
};
use ggm_ot::model::sample;
use ggm_ot::protocol::run_ordered;
use ggm_ot::statistic::{bayes_threshold, build_local_set, centralized_stat, decide};
use ggm_ot::{Error, ErrorKind, Hypothesis, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ggm-ot",
    version,
    about = "Ordered-transmission covariance testing in clustered Gaussian graphical models",
    after_help = "Exit codes: 0 success, 1 file IO error, 2 configuration error, \
                  3 numerical or model error, 4 ordered/centralized decision mismatch."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a configuration and build its scenario without simulating.
    Validate(Common),
    /// Run one Monte Carlo experiment; writes results.csv, stop_hist.csv and result.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write every run's protocol trace to traces.jsonl.
        #[arg(long)]
        dump_traces: bool,
    },
    /// Sweep the number of clusters; writes results.csv, stop_hist.csv and sweep_k.dat.
    SweepK {
        #[command(flatten)]
        common: Common,
        /// Comma-separated K values (overrides sweep.k_values in the config).
        #[arg(long, value_delimiter = ',')]
        k_values: Option<Vec<usize>>,
    },
    /// Sweep the eigenvalue scale; writes results.csv, stop_hist.csv and sweep_eig.dat.
    SweepEig {
        #[command(flatten)]
        common: Common,
        /// Comma-separated scales: alpha_scale for chains, x for trees
        /// (overrides sweep.scales in the config).
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
    },
    /// Estimate detection probabilities and the lower bound on saved transmissions; writes bound.json.
    Bound(Common),
    /// Print the local statistics of one sampled observation next to the centralized statistic.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Seed for the observation draw.
        #[arg(long, default_value_t = 0)]
        x_from_seed: u64,
        /// Hypothesis the observation is drawn under.
        #[arg(long, value_enum, default_value_t = HypArg::H1)]
        hypothesis: HypArg,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo runs.
    #[arg(long)]
    n_runs: Option<usize>,
    /// Override the timer scale of the ordered protocol.
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// More output; repeat for per-cluster detail.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HypArg {
    H0,
    H1,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.n_runs {
            cfg.n_runs = n;
        }
        if let Some(eta) = self.eta {
            cfg.eta = eta;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_file(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        fs::create_dir_all(&self.output_dir).map_err(|e| io_error(&self.output_dir, e))?;
        let path = self.output_dir.join(name);
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        Ok((path, BufWriter::new(file)))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Io => 1,
        ErrorKind::Config => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Internal => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(common) => validate(&common),
        Command::Simulate { common, dump_traces } => simulate(&common, dump_traces),
        Command::SweepK { common, k_values } => {
            let cfg = common.load()?;
            let ks = k_values
                .or_else(|| cfg.sweep.as_ref().and_then(|s| s.k_values.clone()))
                .ok_or_else(|| Error::Config("sweep-k needs --k-values or sweep.k_values".into()))?;
            print_seed(&cfg);
            let results = with_workers(common.workers, || sweep_k(&cfg, &ks))??;
            write_tables(&common, &results)?;
            write_with(&common, "sweep_k.dat", |w| write_sweep_k_dat(w, &results))?;
            print_summary(&results, common.verbose);
            Ok(())
        }
        Command::SweepEig { common, scales } => {
            let cfg = common.load()?;
            let scales = scales
                .or_else(|| cfg.sweep.as_ref().and_then(|s| s.scales.clone()))
                .ok_or_else(|| Error::Config("sweep-eig needs --scales or sweep.scales".into()))?;
            if let Some(bad) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
                return Err(Error::Config(format!("--scales entries must be positive, got {bad}")));
            }
            print_seed(&cfg);
            let results = with_workers(common.workers, || sweep_eigenvalue(&cfg, &scales))??;
            write_tables(&common, &results)?;
            write_with(&common, "sweep_eig.dat", |w| write_sweep_eig_dat(w, &results))?;
            print_summary(&results, common.verbose);
            Ok(())
        }
        Command::Bound(common) => bound(&common),
        Command::Decompose { common, x_from_seed, hypothesis } => decompose(&common, x_from_seed, hypothesis),
    }
}

fn print_seed(cfg: &ExperimentConfig) {
    println!("seed: {}", cfg.seed);
}

fn validate(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let scenario = cfg.build_scenario()?;
    let k = scenario.n_cliques();
    let coeffs = cfg.build_coefficients(k)?;
    build_local_set(&scenario, &coeffs)?;
    println!("config {} is valid", cfg.config_id());
    println!("seed: {}", cfg.seed);
    println!("nodes: {}  cliques: {}", scenario.n_nodes(), k);
    println!("lambda_min: {:.6}", scenario.lambda_min());
    println!("log det: {:.6}", scenario.log_det());
    match coeffs.gamma() {
        Some(g) => println!("gamma: {g:.6e}"),
        None => println!("alpha: {:?}", coeffs.alphas()),
    }
    if scenario.is_degenerate() {
        println!("warning: H1 covariance equals the identity; every local statistic is zero");
    }
    Ok(())
}

fn simulate(common: &Common, dump_traces: bool) -> Result<()> {
    let cfg = common.load()?;
    print_seed(&cfg);
    let (result, traces) = with_workers(common.workers, || run_experiment_traced(&cfg, dump_traces))??;
    let results = [result];
    write_tables(common, &results)?;
    write_with(common, "result.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &results[0])?;
        writeln!(w)?;
        Ok(())
    })?;
    if dump_traces {
        write_with(common, "traces.jsonl", |w| {
            for t in &traces {
                serde_json::to_writer(&mut *w, t)?;
                writeln!(w)?;
            }
            Ok(())
        })?;
    }
    print_summary(&results, common.verbose);
    Ok(())
}

fn bound(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    print_seed(&cfg);
    let scenario = cfg.build_scenario()?;
    let k = scenario.n_cliques();
    let set = build_local_set(&scenario, &cfg.build_coefficients(k)?)?;
    let n = cfg.bound_samples.unwrap_or(cfg.n_runs);
    let report = with_workers(common.workers, || bound_report(&set, &scenario, n, cfg.seed))??;
    let kl = kl_per_clique(&scenario)?;
    let spectra = jk_spectrum_report(&set);
    let doc = serde_json::json!({
        "config_id": cfg.config_id(),
        "k": k,
        "lambda_min": scenario.lambda_min(),
        "bound": report,
        "kl_per_clique": kl,
        "jk_spectra": spectra,
    });
    write_with(common, "bound.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        writeln!(w)?;
        Ok(())
    })?;
    println!("K: {k}  draws per hypothesis: {n}");
    println!("delta0: {:.6}  delta1: {:.6}", report.delta0, report.delta1);
    println!(
        "bound: {:.4} ± {:.4}  (bound/K {:.4}, limit {})",
        report.ks_lower,
        report.ks_stderr,
        report.ks_lower / k as f64,
        report.ks_limit
    );
    if common.verbose > 0 {
        println!("{:>4} {:>10} {:>10} {:>10} {:>12} {:>12}", "k", "P_D", "P_f", "KL", "min eig J", "max eig J");
        for i in 0..k {
            println!(
                "{:>4} {:>10.4} {:>10.4} {:>10.4} {:>12.4e} {:>12.4e}",
                i + 1,
                report.pd[i].value,
                report.pf[i].value,
                kl[i],
                spectra[i].min_eig,
                spectra[i].max_eig
            );
        }
    }
    Ok(())
}

fn decompose(common: &Common, seed: u64, hyp: HypArg) -> Result<()> {
    let cfg = common.load()?;
    let scenario = cfg.build_scenario()?;
    let k = scenario.n_cliques();
    let set = build_local_set(&scenario, &cfg.build_coefficients(k)?)?;
    let hypothesis = match hyp {
        HypArg::H0 => Hypothesis::H0,
        HypArg::H1 => Hypothesis::H1,
    };
    let x = sample(&scenario, hypothesis, 1, seed).remove(0);
    let values = set.local_stats(&x);
    let sum: f64 = values.iter().sum();
    let t = centralized_stat(&scenario, &x);
    let tau = bayes_threshold(scenario.priors())?;
    let matches = (t - sum).abs() <= 1e-8 * (1.0 + t.abs());
    let trace = run_ordered(&values, tau, cfg.eta);

    println!("x seed: {seed}  hypothesis: {hypothesis:?}");
    for (i, v) in values.iter().enumerate() {
        println!("L_{} = {:.12e}", i + 1, v);
    }
    println!("sum L_k = {sum:.12e}");
    println!("T(x)    = {t:.12e}");
    println!("match: {matches}  (|diff| = {:.3e})", (t - sum).abs());
    println!(
        "threshold 2tau = {:.6}  centralized: {:?}  ordered: {:?} after {} of {} transmissions",
        2.0 * tau,
        decide(t, tau),
        trace.decision,
        trace.stop_index,
        k
    );
    if !matches {
        return Err(Error::DegenerateInput(format!(
            "local statistics sum {sum} differs from T(x) = {t}"
        )));
    }
    Ok(())
}

fn write_with(common: &Common, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let (path, mut w) = common.out_file(name)?;
    f(&mut w)?;
    w.flush().map_err(|e| io_error(&path, e))?;
    if common.verbose > 0 {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn write_tables(common: &Common, results: &[ExperimentResult]) -> Result<()> {
    write_with(common, "results.csv", |w| write_results_csv(w, results))?;
    write_with(common, "stop_hist.csv", |w| write_histogram_csv(w, results))
}

fn print_summary(results: &[ExperimentResult], verbose: u8) {
    println!(
        "{:<24} {:>4} {:>10} {:>8} {:>10} {:>10} {:>10} {:>10} {:>6}",
        "config", "K", "lambda_min", "runs", "avg_saved", "frac_saved", "bound", "bound/K", "valid"
    );
    for r in results {
        println!(
            "{:<24} {:>4} {:>10.4} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>6}",
            r.config_id,
            r.k,
            r.lambda_min,
            r.n_runs,
            r.avg_saved,
            r.frac_saved,
            r.bound.ks_lower,
            r.bound_frac(),
            if r.bound_holds() { "yes" } else { "NO" }
        );
        if r.degenerate {
            println!("  degenerate scenario: all local statistics are zero");
        }
        if verbose > 0 {
            println!(
                "  error rate {:.4} (centralized {:.4}); H0 runs {} saved {:.3}; H1 runs {} saved {:.3}; {:.2}s",
                r.error_rate, r.centralized_error_rate, r.h0.runs, r.h0.avg_saved, r.h1.runs, r.h1.avg_saved, r.wall_time_secs
            );
        }
    }
}

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coarse_id::config::{EpsSource, ExperimentConfig, SystemSpec, LAPLACIAN_EXAMPLE};
use coarse_id::experiment::{
    estimate_with_radii, read_estimation, read_results, run_experiment, write_results, ESTIMATION_FILE, RESULTS_FILE,
};
use coarse_id::io::{
    read_json, read_rollouts, write_bootstrap_trials, write_fir_csv, write_json, write_rollouts, EstimateRecord, SynthesisRecord,
};
use coarse_id::report::write_report;
use coarse_id_core::bootstrap::{bootstrap_errors, BootstrapConfig};
use coarse_id_core::lti::{CostWeights, LinearSystem, NoiseSpec};
use coarse_id_core::synthesis::{certify_and_bound, cl_synthesis, controller_cost, fir_synthesis, Controller, GammaSearch};
use coarse_id_core::sysid::{ls_estimate, simulate_rollouts, ErrorSource, EstimateWithError, SampleMode};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "coarse-id", version, about = "System identification and robust LQR synthesis from rollouts")]
struct Cli {
    /// Overrides every seed given on the command line or in a config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

/// True system, cost and noise: the built-in example unless a config is given.
#[derive(Args)]
struct SystemArgs {
    /// Experiment config whose `system` and `noise` are used.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SystemArgs {
    fn load(&self) -> Result<(LinearSystem, CostWeights, NoiseSpec)> {
        match &self.config {
            Some(p) => {
                let cfg = ExperimentConfig::load(p)?;
                let (sys, cost) = cfg.system.build()?;
                Ok((sys, cost, cfg.noise.spec()?))
            }
            None => {
                let (sys, cost) = SystemSpec::Named(LAPLACIAN_EXAMPLE.into()).build()?;
                Ok((sys, cost, NoiseSpec::new(1.0, 1.0)?))
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Bootstrap,
    Theory,
    DataDependent,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Cl,
    Fir,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate rollouts of the true system under white-noise excitation.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        rollouts: usize,
        #[arg(long, default_value_t = 6)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        rng: u64,
        /// Output CSV; a JSON header is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Least-squares estimate with error radii.
    Estimate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Source::Bootstrap)]
        source: Source,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        bootstrap_trials: usize,
        #[arg(long, default_value_t = 0)]
        rng: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap radii of the least-squares estimate, with per-trial errors.
    Bootstrap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        rng: u64,
        /// Use residual-based noise levels instead of the recorded ones.
        #[arg(long)]
        plug_in_noise: bool,
        /// Estimate JSON.
        #[arg(long)]
        out: PathBuf,
        /// Per-trial CSV.
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// Robust controller synthesis from an estimate.
    Synthesize {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Cl)]
        method: Method,
        /// FIR horizon `L`.
        #[arg(long, default_value_t = 32)]
        horizon: usize,
        #[arg(long)]
        fixed_gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Long-format dump of the FIR coefficients.
        #[arg(long)]
        fir_csv: Option<PathBuf>,
    },
    /// Small-gain certificate of a synthesized controller, and its cost on the true system.
    Certify {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Full protocol over a grid of rollout counts.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads; defaults to COARSE_ID_THREADS, then all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// SVG plots of an experiment's output directory.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Comma-separated methods to plot.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    let seed = |s: u64| cli.seed.unwrap_or(s);
    match cli.cmd {
        Cmd::Simulate { system, rollouts, horizon, rng, out } => {
            let (sys, _, noise) = system.load()?;
            let data = simulate_rollouts(&sys, &noise, rollouts, horizon, seed(rng))?;
            write_rollouts(&out, &data)?;
            println!("wrote {} rollouts to {}", data.len(), out.display());
        }
        Cmd::Estimate { system, data, source, delta, bootstrap_trials, rng, out } => {
            let (truth, _, _) = system.load()?;
            let data = read_rollouts(&data)?;
            let source = match source {
                Source::Bootstrap => EpsSource::Bootstrap,
                Source::Theory => EpsSource::Theory,
                Source::DataDependent => EpsSource::DataDependent,
                Source::Oracle => EpsSource::Oracle,
            };
            let est = estimate_with_radii(&data, &truth, source, delta, bootstrap_trials, seed(rng))?;
            write_json(&out, &EstimateRecord::from_estimate(&est))?;
            println!("eps_A = {}  eps_B = {}  ({})", est.eps_a, est.eps_b, est.source.label());
        }
        Cmd::Bootstrap { data, delta, trials, rng, plug_in_noise, out, trials_out } => {
            let data = read_rollouts(&data)?;
            let (a, b) = ls_estimate(&data, SampleMode::Full)?;
            let mut cfg = BootstrapConfig::new(trials, delta, seed(rng), data.noise)?;
            cfg.plug_in_noise = plug_in_noise;
            let res = bootstrap_errors(&data, &a, &b, &cfg)?;
            let est = EstimateWithError::new(a, b, res.eps_a, res.eps_b, ErrorSource::Bootstrap)?;
            write_json(&out, &EstimateRecord::from_estimate(&est))?;
            if let Some(p) = trials_out {
                write_bootstrap_trials(&p, &res.trials)?;
            }
            println!("eps_A = {}  eps_B = {}", res.eps_a, res.eps_b);
        }
        Cmd::Synthesize { system, estimate, method, horizon, fixed_gamma, out, fir_csv } => {
            let (_, cost, _) = system.load()?;
            let est = read_json::<EstimateRecord>(&estimate)?.to_estimate()?;
            let search = fixed_gamma.map_or_else(GammaSearch::default, GammaSearch::fixed);
            let (label, r) = match method {
                Method::Cl => ("cl".to_string(), cl_synthesis(&est, &cost, &search)?),
                Method::Fir => (format!("fir{horizon}"), fir_synthesis(&est, &cost, horizon, &search)?),
            };
            write_json(&out, &SynthesisRecord::from_result(&label, &r))?;
            if let (Some(p), Some(Controller::Fir(resp))) = (fir_csv, &r.controller) {
                write_fir_csv(&p, resp)?;
            }
            println!(
                "{label}: {}  gamma = {}  alpha = {}  bound = {}",
                coarse_id::io::status_label(r.status),
                r.gamma_star,
                r.alpha,
                r.robust_upper_bound
            );
        }
        Cmd::Certify { system, estimate, controller, alpha } => {
            let (truth, cost, noise) = system.load()?;
            let est = read_json::<EstimateRecord>(&estimate)?.to_estimate()?;
            let rec: SynthesisRecord = read_json(&controller)?;
            let ctrl = rec.controller.context("result holds no controller")?.to_controller()?;
            let alpha = alpha.or(rec.alpha).unwrap_or(0.5);
            let c = certify_and_bound(&est, &ctrl, &cost, alpha, noise.sigma_w)?;
            println!("certified      {}", c.certified);
            println!("h              {}", c.h_value);
            println!("nominal cost   {}", c.nominal_cost);
            println!("cost bound     {}", c.cost_upper_bound);
            println!("true cost      {}", controller_cost(&truth, &ctrl, &cost, noise.sigma_w)?);
        }
        Cmd::Experiment { config, output_dir, threads } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let threads = threads.or_else(|| std::env::var("COARSE_ID_THREADS").ok().and_then(|v| v.parse().ok()));
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
            }
            std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
            let res = run_experiment(&cfg)?;
            let (r, e) = write_results(&cfg.output_dir, &res)?;
            write_json(&cfg.output_dir.join("config.json"), &cfg)?;
            println!("wrote {} and {}", r.display(), e.display());
            for err in &res.errors {
                eprintln!("N={} trial={} {}: {}", err.n_rollouts, err.trial, err.method.as_deref().unwrap_or("estimation"), err.message);
            }
            return Ok(res.errors.is_empty());
        }
        Cmd::Report { results, methods, out } => {
            let rows = read_results(&results.join(RESULTS_FILE))?;
            let est_path = results.join(ESTIMATION_FILE);
            let est = if est_path.exists() { read_estimation(&est_path)? } else { Vec::new() };
            let out = out.unwrap_or_else(|| results.clone());
            std::fs::create_dir_all(&out)?;
            for p in write_report(&out, &rows, &est, methods.as_deref())? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

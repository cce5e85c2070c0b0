//! Command-line experiment harness.
//!
//! Exit codes: 0 on success, 1 for configuration errors (bad flags, unknown
//! experiment or method names), 2 for runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use madmix::error::MadMixError;
use madmix::experiment::{
    pmf_table, run_and_write, timing_probe, write_pmf_json, Experiment, ExperimentConfig, Method,
};
use madmix::mad::ShiftParam;
use madmix::mixflow::{FactorizedReference, MadMixFlow, WeightedPair};
use madmix::models::ToyTarget;
use madmix::target::FullConditionalTarget;

#[derive(Parser)]
#[command(name = "madmix", about = "Discrete mixed-flow experiment harness", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Target: toy1d | toy2d | toy3d | ising | gmm | spikeslab
    #[arg(long)]
    experiment: String,
    /// Inference method: madmix | gibbs | meanfield
    #[arg(long, default_value = "madmix")]
    method: String,
    /// Flow length N (defaults depend on the experiment)
    #[arg(long)]
    n_flow: Option<usize>,
    /// Ergodic shift; defaults to pi/16
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo sample count (flow draws or Gibbs sweeps)
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Leapfrog steps per pass (mixed experiments)
    #[arg(long, default_value_t = 10)]
    leapfrog_steps: usize,
    /// Leapfrog step size (mixed experiments)
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    /// Ising chain length
    #[arg(long, default_value_t = 5)]
    ising_m: usize,
    /// Ising inverse temperature
    #[arg(long, default_value_t = 1.0)]
    ising_beta: f64,
    /// Dataset CSV (gmm: feature columns; spikeslab: features then response)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (falls back to $MADMIX_OUT, then the current dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment configuration and write metric records
    Run(CommonOpts),
    /// Median per-operation timings for a configuration
    Time(CommonOpts),
    /// Dump flow and exact marginal PMFs for an enumerable target
    Pmf(CommonOpts),
    /// Two-reference weighting demo on a bimodal toy target
    Weight {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gradient-descent iterations
        #[arg(long, default_value_t = 200)]
        iters: usize,
        /// Samples per component per iteration
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn build_config(opts: &CommonOpts) -> Result<ExperimentConfig, MadMixError> {
    let experiment: Experiment = opts.experiment.parse()?;
    let method: Method = opts.method.parse()?;
    let mut cfg = ExperimentConfig::new(experiment, method);
    cfg.seed = opts.seed;
    cfg.samples = opts.samples;
    cfg.leapfrog_steps = opts.leapfrog_steps;
    cfg.step_size = opts.step_size;
    cfg.ising_m = opts.ising_m;
    cfg.ising_beta = opts.ising_beta;
    cfg.n_flow = opts
        .n_flow
        .unwrap_or_else(|| ExperimentConfig::default_n_flow(experiment, opts.ising_m));
    if let Some(xi) = opts.xi {
        cfg.xi = xi;
    }
    cfg.data = opts.data.clone();
    cfg.out = opts.out.clone();
    cfg.validate()?;
    Ok(cfg)
}

/// A 10-atom target that is an equal mixture of two disjoint 5-atom
/// references pushed through length-1 flows; the optimal weight is 1/2.
fn weight_demo(seed: u64, iters: usize, samples: usize) -> Result<f64, MadMixError> {
    use rand::SeedableRng;
    let q0 = vec![0.35, 0.25, 0.2, 0.12, 0.08, 0.0, 0.0, 0.0, 0.0, 0.0];
    let q1 = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.15, 0.2, 0.25, 0.3];
    let pi: Vec<f64> = q0.iter().zip(&q1).map(|(a, b)| 0.5 * (a + b)).collect();
    let target = ToyTarget::from_probs(&[10], pi.clone())?;
    let xi = ShiftParam::default_shift();
    let flow0 = MadMixFlow::new(&target, FactorizedReference::new(vec![q0])?, 1, xi)?;
    let flow1 = MadMixFlow::new(&target, FactorizedReference::new(vec![q1])?, 1, xi)?;
    let pair = WeightedPair::new(flow0, flow1)?;
    let log_mass = |s: &madmix::state::AugmentedState<f64>| {
        target.unnormalized_log_mass(&s.x).unwrap()
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    pair.optimize_weight(0.2, 0.1, iters, samples, &log_mass, &mut rng)
}

fn execute(cli: Cli) -> Result<(), MadMixError> {
    match cli.command {
        Command::Run(opts) => {
            let cfg = build_config(&opts)?;
            let records = run_and_write(&cfg)?;
            for r in &records {
                println!(
                    "{}\t{}\t{}\t{:.6}\t{:.6}",
                    r.experiment, r.method, r.metric, r.value, r.se
                );
            }
            Ok(())
        }
        Command::Time(opts) => {
            let cfg = build_config(&opts)?;
            let records = timing_probe(&cfg)?;
            for r in &records {
                println!("{}\t{}\t{}\t{:.9}", r.experiment, r.method, r.metric, r.value);
            }
            Ok(())
        }
        Command::Pmf(opts) => {
            let cfg = build_config(&opts)?;
            let (flow_pmf, exact_pmf) = pmf_table(&cfg)?;
            let dir = cfg.out_dir();
            let stem = format!("{}_pmf_seed{}", cfg.experiment.as_str(), cfg.seed);
            write_pmf_json(&flow_pmf, &dir.join(format!("{stem}_flow.json")))?;
            write_pmf_json(&exact_pmf, &dir.join(format!("{stem}_exact.json")))?;
            println!("flow\t{flow_pmf:?}");
            println!("exact\t{exact_pmf:?}");
            Ok(())
        }
        Command::Weight {
            seed,
            iters,
            samples,
            out,
        } => {
            let alpha = weight_demo(seed, iters, samples)?;
            println!("alpha\t{alpha:.6}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join(format!("weight_seed{seed}.json")),
                    format!("{{\"alpha\": {alpha}}}\n"),
                )?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ MadMixError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

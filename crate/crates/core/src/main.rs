use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use survace::adjust::Backend;
use survace::estimators::EstimatorKind;
use survace::io::{self, GridSpec, InferenceMethod, Mode, RunConfig};
use survace::simulation::true_ace_with;

#[derive(Parser)]
#[command(name = "survace", version, about = "Covariate-adjusted survival-scale average causal effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate ACE curves on a cohort CSV (time,event,arm,x1..xp).
    Estimate {
        /// Cohort CSV; overrides `input` in the config.
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the Monte Carlo study over the configured settings.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Print the calibrated horizon t0 for the configured setting.
    #[command(name = "calibrate-t0")]
    CalibrateT0 {
        #[command(flatten)]
        common: Common,
    },
    /// Print t0, the true ACE at t0 and its Monte Carlo error.
    Truth {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (beats the SURVACE_OUT environment variable).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// `t0`, `t0:points` or a comma-separated list of times.
    #[arg(long)]
    grid: Option<String>,
    /// cox, lasso or srf.
    #[arg(long)]
    backend: Option<Backend>,
    /// Comma-separated subset of tau0,tau1,tau2,tau3.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorKind>>,
    /// Bootstrap resamples; switches inference to the percentile bootstrap.
    #[arg(long)]
    bootstrap: Option<usize>,
}

impl Common {
    fn resolve(&self, mode: Mode) -> survace::Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = cfg.mode {
            if m != mode {
                return Err(survace::Error::Config(format!("config mode is {m:?} but the command is {mode:?}")));
            }
        }
        cfg.mode = Some(mode);
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.reps {
            cfg.reps = reps;
        }
        if let Some(grid) = &self.grid {
            cfg.grid = GridSpec::parse(grid)?;
        }
        if let Some(b) = self.backend {
            cfg.backend = Some(b);
        }
        if let Some(k) = &self.estimators {
            cfg.estimators = k.clone();
        }
        if let Some(b) = self.bootstrap {
            cfg.inference.method = InferenceMethod::Bootstrap;
            cfg.inference.replicates = b;
        }
        let out = io::resolve_out(self.out.clone(), &cfg);
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> survace::Result<()> {
    match cli.command {
        Command::Estimate { input, common } => {
            let (mut cfg, out) = common.resolve(Mode::Estimate)?;
            if input.is_some() {
                cfg.input = input;
            }
            let outcome = io::run_estimate(&cfg, &out)?;
            for d in &outcome.diagnostics {
                eprintln!("warning: {d}");
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
        }
        Command::Simulate { common } => {
            let (cfg, out) = common.resolve(Mode::Simulate)?;
            let reports = io::run_simulate(&cfg, &out)?;
            for r in &reports {
                if r.failures > 0 {
                    eprintln!("warning: beta={} s1={}: {} failed replicates", r.setting.beta, r.setting.s1, r.failures);
                }
            }
            println!("{}", out.display());
        }
        Command::CalibrateT0 { common } => {
            let (cfg, _) = common.resolve(Mode::Simulate)?;
            println!("{}", io::fmt_num(io::run_calibrate(&cfg)?));
        }
        Command::Truth { common } => {
            let (cfg, _) = common.resolve(Mode::Simulate)?;
            let t0 = match cfg.grid.t0 {
                Some(t) => t,
                None => io::run_calibrate(&cfg)?,
            };
            let truth = true_ace_with(&cfg.setting, t0, cfg.truth_draws)?;
            println!("t0,truth,se");
            println!("{},{},{}", io::fmt_num(t0), io::fmt_num(truth.value), io::fmt_num(truth.se));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

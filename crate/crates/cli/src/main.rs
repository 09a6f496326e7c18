use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use solenoid_cli::{execute, Analysis, AnalysisConfig, CliError, Violation};

const FILES_HELP: &str = "\
Output files (written to --out):
  report.json   artifactVersion, subcommand, config (echo without outputDir),
                status (ok|error), results, warnings, errors, timings.
                Everything except `timings` is deterministic in config + seed.
  spectrum.csv  harmonic:   bin,lambdaLow,lambdaHigh,modeCount
                            (log-spaced histogram of nonzero λ)
                decompose:  degree,bin,lambdaLow,lambdaHigh,modeCount,energy
                            (energy = Σ|ω_m|² of the seeded form per bin)
                cohomology: shellNorm,maxAbsSolution
                            (dyadic-shell maxima of the decay-transfer solution)
  records.csv   classify:   m1..mn,norm,divisor,isRecord,isMinkowskiWitness
                witnesses:  index,m1..mn,norm,divisor,coefficient,
                            coefficientPartialSum,solutionPartialSum
                rs-current: form,spectral,quadrature,estimatedError,difference

Config (flat JSON, numbers as decimal strings, unknown keys rejected):
  frame (list of raw basis vectors; required), truncationRadius, seed,
  minimalityAsserted (bool, default true), outputDir, divisorFloor,
  residualTolerance, agreementTolerance, decay, witnessCount, boxCount,
  resolution, coordinateAxes (1-based), randomForms, maxFrequency.

Exit codes: 0 success, 2 invalid configuration, 3 computation error.";

#[derive(Debug, Parser)]
#[command(name = "solenoid", version, about = "Leafwise Hodge theory on Kronecker solenoids", after_long_help = FILES_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Analysis configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `outputDir` (default: solenoid-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for module-internal parallelism; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `truncationRadius` (decimal string).
    #[arg(long, global = true, allow_hyphen_values = true)]
    radius: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Harmonic dimensions per degree and the λ-spectrum histogram.
    Harmonic,
    /// Hodge decomposition of a seeded form per degree, with residuals.
    Decompose,
    /// Cohomological equation: round trip, witness divergence, decay transfer.
    Cohomology,
    /// Record divisors, exponent fit and continued-fraction cross-check.
    Classify,
    /// Witness sequence and the partial sums of its formal solution.
    Witnesses,
    /// Ruelle–Sullivan current: closed form against flow-box quadrature.
    RsCurrent,
}

impl From<Command> for Analysis {
    fn from(c: Command) -> Self {
        match c {
            Command::Harmonic => Analysis::Harmonic,
            Command::Decompose => Analysis::Decompose,
            Command::Cohomology => Analysis::Cohomology,
            Command::Classify => Analysis::Classify,
            Command::Witnesses => Analysis::Witnesses,
            Command::RsCurrent => Analysis::RsCurrent,
        }
    }
}

fn config_error(field: &str, message: String) -> ExitCode {
    let e = CliError::InvalidConfig(vec![Violation {
        field: field.into(),
        message,
    }]);
    eprintln!("{e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let Some(path) = &cli.config else {
        return config_error("--config", "a configuration file is required".into());
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return config_error("--config", format!("{}: {e}", path.display())),
    };
    let mut config = match AnalysisConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => return config_error("config", e.to_string()),
    };
    if let Some(seed) = cli.seed {
        config.seed = Some(seed.to_string());
    }
    if let Some(radius) = &cli.radius {
        config.truncation_radius = Some(radius.clone());
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return config_error("--threads", "must be at least 1".into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("solenoid-out"));

    match execute(cli.command.into(), &config, &out) {
        Ok(run) => {
            for e in &run.report.errors {
                eprintln!("error: {e}");
            }
            ExitCode::from(run.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

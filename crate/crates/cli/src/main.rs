use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use cdrl::experiments::{find_experiment, run_experiment, ExperimentConfig, OutputSpec, ReportFormat, REGISTRY};
use cdrl::mdp::{validate, MdpFile};

/// Exit status when the command ran but a verdict or validation failed.
const EXIT_FAILED: u8 = 1;
/// Exit status for usage, config and I/O errors.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "cdrl",
    version,
    about = "Categorical distributional RL verification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List registered experiments.
    List,
    /// Print an experiment's resolved default config as JSON.
    Defaults { experiment: String },
    /// Run an experiment and report its verdicts.
    Run {
        experiment: String,
        /// JSON config; unset fields take the experiment's defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of printing JSON to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<ReportFormat>,
    },
    /// Check an MDP JSON file and print every diagnostic.
    ValidateMdp { path: PathBuf },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: cdrl::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::List => {
            let width = REGISTRY.iter().map(|e| e.name.len()).max().unwrap_or(0);
            for e in REGISTRY {
                println!("{:width$}  {}", e.name, e.summary);
            }
            Ok(true)
        }
        Command::Defaults { experiment } => {
            println!("{}", find_experiment(&experiment)?.default_config().to_json()?);
            Ok(true)
        }
        Command::Run {
            experiment,
            config,
            seed,
            out,
            format,
        } => run(experiment, config, seed, out, format),
        Command::ValidateMdp { path } => {
            let doc = MdpFile::load(&path).with_context(|| format!("reading {}", path.display()))?;
            let diags = validate(&doc);
            if diags.is_empty() {
                println!(
                    "{}: valid ({} states, {} actions)",
                    path.display(),
                    doc.n_states,
                    doc.n_actions
                );
                return Ok(true);
            }
            for d in &diags {
                println!("{}: {d}", path.display());
            }
            Ok(false)
        }
    }
}

fn run(
    experiment: String,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<ReportFormat>,
) -> anyhow::Result<bool> {
    let mut cfg = match &config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(experiment.as_str()),
    };
    if cfg.experiment.is_empty() {
        cfg.experiment = experiment.clone();
    } else if cfg.experiment != experiment {
        bail!("config is for `{}`, not `{experiment}`", cfg.experiment);
    }
    if seed.is_some() {
        cfg.seed = seed;
    }
    match (out, &mut cfg.output) {
        (Some(path), _) => {
            cfg.output = Some(OutputSpec {
                path,
                format: format.unwrap_or_default(),
            })
        }
        (None, Some(spec)) => {
            if let Some(f) = format {
                spec.format = f;
            }
        }
        (None, None) => {
            if format == Some(ReportFormat::Csv) {
                bail!("--format csv needs --out");
            }
        }
    }

    let report = run_experiment(cfg)?;
    if report.config.output.is_none() {
        println!("{}", report.to_json()?);
    }
    for v in &report.verdicts {
        eprintln!(
            "{} {} measured={:e} threshold={:e}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.measured,
            v.threshold
        );
    }
    eprintln!("{}: {:.3}s", report.experiment, report.wall_clock_secs);
    Ok(report.passed())
}

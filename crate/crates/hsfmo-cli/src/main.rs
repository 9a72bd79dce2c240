use clap::{Parser, Subcommand};
use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use hsfmo_cli::cli_io::{
    export_rosettes, export_table, parse_config, run, run_sample_sets, write_bundle, CliError, ModelKind,
    ResultBundle, RunConfig, SampleSetsConfig,
};

#[derive(Parser)]
#[command(name = "hsfmo", version, about = "Free material optimization under realizability bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a configured problem and write bundle.json, fields.csv and convergence.csv.
    Solve {
        /// TOML run configuration.
        config: Option<PathBuf>,
        /// Start from a benchmark preset (cantilever or multiload) instead of a file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Model for --preset runs: zo, voigt, hs-fomo or laminate-am.
        #[arg(long, default_value = "hs-fomo")]
        model: String,
        /// Output directory; overrides output_dir from the configuration.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Sample envelopes, product-space layers and laminate clouds of the admissible sets.
    SampleSets {
        /// TOML settings; defaults are used when omitted.
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write per-element rosettes of a result bundle as CSV.
    ExportRosettes {
        bundle: PathBuf,
        #[arg(long, default_value_t = 72)]
        n_angles: usize,
        /// Output file; standard output when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Tabulate compliance and multiplier of several bundles.
    Table {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, CliError> {
    match s {
        "zo" => Ok(ModelKind::Zo),
        "voigt" => Ok(ModelKind::Voigt),
        "hs-fomo" => Ok(ModelKind::HsFomo),
        "laminate-am" => Ok(ModelKind::LaminateAm),
        other => Err(CliError::Parse(format!("unknown model '{other}'"))),
    }
}

fn write_to(out: Option<PathBuf>, f: impl FnOnce(Box<dyn io::Write>) -> Result<(), CliError>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = fs::File::create(&path).map_err(|source| CliError::Io { path, source })?;
            f(Box::new(file))
        }
        None => f(Box::new(io::stdout().lock())),
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Solve { config, preset, model, out } => {
            let cfg = match (config, preset) {
                (Some(path), _) => parse_config(&path)?,
                (None, Some(name)) => RunConfig::preset(&name, parse_model(&model)?)?,
                (None, None) => return Err(CliError::Parse("give a configuration file or --preset".into())),
            };
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("hsfmo-out"));
            let t = Instant::now();
            let bundle = run(&cfg)?;
            write_bundle(&bundle, &dir)?;
            eprintln!(
                "{} compliance {:.6} lambda {:.4} iterations {} converged {} ({:.1} s) -> {}",
                cfg.model.label(),
                bundle.total_compliance,
                bundle.lambda,
                bundle.meta.iterations,
                bundle.meta.converged,
                t.elapsed().as_secs_f64(),
                dir.display()
            );
            Ok(bundle.meta.converged)
        }
        Command::SampleSets { config, out } => {
            let cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path, source })?;
                    SampleSetsConfig::from_toml_str(&text)?
                }
                None => SampleSetsConfig::default(),
            };
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("hsfmo-sets"));
            let s = run_sample_sets(&cfg, &dir)?;
            eprintln!("{} strains, {} laminates -> {}", s.n_strains, s.cloud_size, dir.display());
            Ok(true)
        }
        Command::ExportRosettes { bundle, n_angles, out } => {
            let b = ResultBundle::load(&bundle)?;
            write_to(out, |w| export_rosettes(&b, n_angles, w))?;
            Ok(true)
        }
        Command::Table { bundles, out } => {
            let bs = bundles.iter().map(|p| ResultBundle::load(p)).collect::<Result<Vec<_>, _>>()?;
            write_to(out, |w| export_table(&bs, w))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: iteration limit reached before convergence");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

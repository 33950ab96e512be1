use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coopfuse::FpPenalties;
use coopfuse_bench::commands::{self, GenSpec};
use coopfuse_bench::config::Thresholds;
use coopfuse_bench::output::{self, Format};
use coopfuse_bench::{run_experiment, ExperimentConfig, Method, Result};

#[derive(Parser)]
#[command(name = "coopfuse", version, about = "Late collaborative 3D fusion benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the method x noise grid described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Format printed to stdout; all formats are written to the output directory.
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// Generate a pseudo-collaborative dataset from a scene spec (TOML or JSON).
    Gen {
        spec: PathBuf,
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fuse a generated dataset directory and write predictions as JSON lines.
    Fuse {
        dataset: PathBuf,
        #[arg(long, default_value = "wls_csba")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = coopfuse::association::DEFAULT_WINDOW)]
        window: f64,
    },
    /// Evaluate predictions against ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        /// False-positive translation penalty, meters.
        #[arg(long, default_value_t = 3.0)]
        fp_translation: f64,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
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

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out_dir, format } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            let resolved = cfg.resolve()?;
            let result = run_experiment(&resolved)?;
            let written = output::write_all(&result, &resolved.config.out_dir)?;
            print!("{}", output::render(&result, format));
            for p in written {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Gen { spec, out, seed } => {
            let mut spec: GenSpec = commands::read_structured(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let m = commands::generate(&spec, &out)?;
            eprintln!("wrote {} agents and {} into {}", m.agents.len(), m.gt_file, out.display());
        }
        Command::Fuse { dataset, method, out, window } => {
            let thresholds = Thresholds { window, ..Thresholds::default() };
            let preds = commands::fuse_dataset(&dataset, method, &thresholds)?;
            commands::write_predictions(&out, &preds)?;
            eprintln!("wrote {} fused objects to {}", preds.len(), out.display());
        }
        Command::Eval { pred, gt, fp_translation, format } => {
            let report = commands::evaluate_files(&pred, &gt, FpPenalties::new(fp_translation)?)?;
            print!("{}", commands::render_report(&report, "input", format));
        }
    }
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedaug_cli::{
    cmd_augment_preview, cmd_centralized, cmd_partition, cmd_report, cmd_run, load_config,
    CliResult, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "fedaug",
    version,
    about = "Deterministic federated-learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Federated training run.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long, env = "FEDAUG_OUTPUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Centralized baseline on the pooled training data.
    Centralized {
        config: PathBuf,
        #[arg(long, env = "FEDAUG_OUTPUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Partition only: assignment and per-client label counts.
    Partition {
        config: PathBuf,
        #[arg(long, env = "FEDAUG_OUTPUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Apply every transform to one example of a dataset file.
    AugmentPreview {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, env = "FEDAUG_OUTPUT_DIR", default_value = "preview")]
        out: PathBuf,
    },
    /// Plot metrics CSVs into one SVG.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Print the effective configuration, defaults included.
    PrintConfig { config: Option<PathBuf> },
}

fn out_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output_dir.clone())
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            cmd_run(&cfg, &dir)?;
            println!("wrote {}", dir.display());
        }
        Command::Centralized { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            cmd_centralized(&cfg, &dir)?;
            println!("wrote {}", dir.display());
        }
        Command::Partition { config, out } => {
            let cfg = load_config(&config)?;
            let stats = cmd_partition(&cfg, &out_dir(&cfg, out))?;
            print!("{stats}");
        }
        Command::AugmentPreview {
            dataset,
            index,
            out,
        } => {
            for path in cmd_augment_preview(&dataset, index, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Report { inputs, output } => {
            cmd_report(&inputs, &output)?;
            println!("wrote {}", output.display());
        }
        Command::PrintConfig { config } => {
            let cfg = match config {
                Some(path) => load_config(&path)?,
                None => ExperimentConfig::default(),
            };
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

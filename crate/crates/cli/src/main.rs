use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sapa_cli::{commands, CliError, Context, Overrides, PipelineConfig};
use sapa_core::Mode;

#[derive(Parser)]
#[command(name = "sapa", version, about = "Speaker-style aware phoneme anchoring pipeline")]
struct Cli {
    /// TOML pipeline configuration; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Edge threshold for speaker graphs.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// SAPA, Only-S, Only-P, SAPA-Only-S or SAPA-Only-P.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-corpus embedding file.
    Synth,
    /// Build speaker graphs, detect communities and score modularity.
    Graph,
    /// Compute cross-corpus phoneme similarity and select anchors.
    Anchors,
    /// Train one model in the configured mode.
    Train,
    /// Score the trained model on the target test split.
    Eval,
    /// Train and score every mode over several seeds.
    Ablate,
    /// Group-wise accuracy under emotion-specific, global and random groupings.
    Transfer,
    /// Run every stage in order.
    All,
    /// Print the resolved configuration as TOML.
    Config,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        tau: cli.tau,
        mode: cli.mode,
        out_dir: cli.out_dir,
    };
    let config = base.resolve(&overrides)?;
    if let Command::Config = cli.command {
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    let ctx = Context::new(config);
    let written = match cli.command {
        Command::Synth => commands::cmd_synth(&ctx)?,
        Command::Graph => commands::cmd_graph(&ctx)?,
        Command::Anchors => commands::cmd_anchors(&ctx)?,
        Command::Train => commands::cmd_train(&ctx)?,
        Command::Eval => commands::cmd_eval(&ctx)?,
        Command::Ablate => commands::cmd_ablate(&ctx)?,
        Command::Transfer => commands::cmd_transfer(&ctx)?,
        Command::All => commands::cmd_all(&ctx)?,
        Command::Config => unreachable!(),
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

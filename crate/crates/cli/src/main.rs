use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use suaex_cli::{run, Command, Overrides, PipelineConfig};

/// Unsupervised aspect and category extraction.
#[derive(Debug, Parser)]
#[command(name = "suaex", version)]
struct Args {
    /// Pipeline configuration (TOML).
    #[arg(long, short, global = true, default_value = "suaex.toml")]
    config: PathBuf,

    /// Worker threads; 1 gives reproducible output.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Keep the raw reviews that mention a filter keyword.
    Filter,
    /// Train word embeddings on the corpus.
    Train,
    /// Write the reference groups, expanded with nearest neighbours.
    Expand,
    /// Score test sentences against the reference groups.
    Annotate,
    /// Assign a category to every annotated sentence.
    Classify,
    /// Build per-category aspect lexicons.
    Aspects,
    /// Score assignments against gold labels.
    Eval,
    /// Time every stage on an in-memory run.
    Bench,
    /// Run all stages in order.
    Pipeline,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Filter => Command::Filter,
            Sub::Train => Command::Train,
            Sub::Expand => Command::Expand,
            Sub::Annotate => Command::Annotate,
            Sub::Classify => Command::Classify,
            Sub::Aspects => Command::Aspects,
            Sub::Eval => Command::Eval,
            Sub::Bench => Command::Bench,
            Sub::Pipeline => Command::Pipeline,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        threads: args.threads,
        seed: args.seed,
    };
    let result = PipelineConfig::load(&args.config, overrides)
        .and_then(|cfg| run(args.command.into(), &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("suaex: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;

#[derive(Parser)]
#[command(name = "edenet", version, about = "GPR place recognition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Default,
    Tiny,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Baseline {
    /// Mean absolute amplitude per depth bin.
    Energy,
}

#[derive(Subcommand)]
enum Command {
    /// Print an experiment config preset as JSON.
    Config {
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
    },
    /// Print the JSON schema of the experiment config.
    Schema,
    /// Render the map survey and its revisit.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        queries: PathBuf,
    },
    /// Train a network; writes a checkpoint and a per-epoch CSV log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Log file; stdout when omitted.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Encode every window of a sequence.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        /// Use a hand-crafted descriptor instead of a network.
        #[arg(long, value_enum, conflicts_with = "checkpoint", requires = "window")]
        baseline: Option<Baseline>,
        /// Window length for baselines (networks use their own).
        #[arg(long)]
        window: Option<usize>,
    },
    /// Validate encoded descriptors and store them as a searchable index.
    Index {
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank index entries for every query descriptor.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 5)]
        topk: usize,
    },
    /// Print recall at each configured cut-off as CSV.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Experiment config supplying `eval`; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference check of every parameter group's gradient.
    Gradcheck {
        /// Experiment config supplying `net`; the tiny network otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Time window encoding and index queries.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        index_size: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Write one block's Gabor kernels as a PGM image grid.
    Kernels {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        block: usize,
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Config { preset } => commands::print_config(preset),
        Command::Schema => commands::print_schema(),
        Command::Simulate {
            config,
            map,
            queries,
        } => commands::simulate(&config, &map, &queries),
        Command::Train {
            config,
            map,
            queries,
            out,
            log,
        } => commands::train(&config, &map, &queries, &out, log.as_deref()),
        Command::Encode {
            input,
            out,
            checkpoint,
            baseline,
            window,
        } => commands::encode(&input, &out, checkpoint.as_deref(), baseline, window),
        Command::Index { descriptors, out } => commands::index(&descriptors, &out),
        Command::Query {
            index,
            queries,
            topk,
        } => commands::query(&index, &queries, topk),
        Command::Eval {
            index,
            queries,
            config,
        } => commands::eval(&index, &queries, config.as_deref()),
        Command::Gradcheck {
            config,
            seed,
            inject_fault,
        } => commands::gradcheck(config.as_deref(), seed, inject_fault),
        Command::Bench {
            checkpoint,
            index_size,
            trials,
        } => commands::bench(&checkpoint, index_size, trials),
        Command::Kernels {
            checkpoint,
            out,
            block,
            channel,
        } => commands::kernels(&checkpoint, &out, block, channel),
    }
}

/// 1 usage, 2 configuration or shape mismatch, 3 I/O or file format,
/// 4 numeric failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    use edenet::Error as E;
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<E>()) else {
        return if err.chain().any(|c| c.is::<std::io::Error>()) {
            3
        } else {
            1
        };
    };
    match e {
        E::Usage(_) => 1,
        E::Config(_) | E::Dimension(_) | E::Domain(_) => 2,
        E::Io(_) | E::Format(_) | E::Json(_) => 3,
        E::Numeric(_) | E::Degenerate(_) | E::Mining(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe on stdout (`edenet query … | head`) is not a failure
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

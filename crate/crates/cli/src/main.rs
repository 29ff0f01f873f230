//! `houghvote` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or shape error,
//! 4 I/O error.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use houghvote::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "houghvote", version, about = "Log-polar Hough voting engine")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "HV_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Describe a vote field and optionally dump its region-id map.
    Field(commands::FieldArgs),
    /// Vote evidence tensors into presence maps.
    Vote(commands::VoteArgs),
    /// Decode presence maps into detections.
    Decode(commands::DecodeArgs),
    /// List the voters behind one presence-map pixel.
    Attribute(commands::AttributeArgs),
    /// Accumulate the class-interaction matrix over detections.
    Interactions(commands::InteractionsArgs),
    /// Time the voting backends against each other.
    Bench(commands::BenchArgs),
    /// Convert tensors between dtypes and JSON.
    Convert(commands::ConvertArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Scatter,
    Gather,
    Kernel,
    Sparse,
}

#[derive(Args, Debug, Clone)]
pub struct BackendOpts {
    #[arg(long, value_enum, default_value = "gather")]
    pub backend: BackendArg,
    /// Entries with |e| below this are ignored by the sparse backend.
    #[arg(long, default_value_t = 0.0)]
    pub sparse_threshold: f32,
}

impl BackendOpts {
    pub fn backend(&self) -> houghvote::Backend {
        backend_of(self.backend, self.sparse_threshold)
    }
}

pub fn backend_of(arg: BackendArg, threshold: f32) -> houghvote::Backend {
    match arg {
        BackendArg::Scatter => houghvote::Backend::Scatter,
        BackendArg::Gather => houghvote::Backend::Gather,
        BackendArg::Kernel => houghvote::Backend::Kernel,
        BackendArg::Sparse => houghvote::Backend::Sparse { threshold },
    }
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Io => 4,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self {
            code: 4,
            message: err.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Field(args) => commands::field(args),
        Command::Vote(args) => commands::vote(args),
        Command::Decode(args) => commands::decode(args),
        Command::Attribute(args) => commands::attribute(args),
        Command::Interactions(args) => commands::interactions(args),
        Command::Bench(args) => commands::bench(args),
        Command::Convert(args) => commands::convert(args),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

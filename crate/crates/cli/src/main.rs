use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::Config;

#[derive(Parser)]
#[command(name = "haarbcr", version, about = "Haar non-standard forms of singular integral operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the non-standard form and its split; write both to `--out` (a directory).
    Build(Overrides),
    /// Run the invariant suite and write a JSON report.
    Verify(Overrides),
    /// Apply the operator (or selected components) to `--input`; write `--out`.
    Apply(Overrides),
    /// Time dense and banded applies; write a CSV table.
    Bench(Overrides),
    /// Check the T(b) testing conditions; write a JSON report.
    Tb(Overrides),
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "J")]
    j: Option<u32>,
    #[arg(long)]
    band: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    form: Option<PathBuf>,
    #[arg(long)]
    components: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    bsystem: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Overrides {
    fn resolve(self) -> Result<Config, CliError> {
        let mut c = Config::load(self.config.as_deref())?;
        c.apply_env()?;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(kernel, m, j, seed, components, mode, threads);
        macro_rules! set_opt {
            ($($f:ident),*) => { $(if self.$f.is_some() { c.$f = self.$f; })* };
        }
        set_opt!(band, out, input, form, bsystem);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Some check did not pass.
    Check(String),
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<haarbcr::Error> for CliError {
    fn from(e: haarbcr::Error) -> Self {
        use haarbcr::Error as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::Checksum { .. } => CliError::Check(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(o) => o.resolve().and_then(|c| commands::run(&c, commands::build)),
        Command::Verify(o) => o.resolve().and_then(|c| commands::run(&c, commands::verify)),
        Command::Apply(o) => o.resolve().and_then(|c| commands::run(&c, commands::apply)),
        Command::Bench(o) => o.resolve().and_then(|c| commands::run(&c, commands::bench)),
        Command::Tb(o) => o.resolve().and_then(|c| commands::run(&c, commands::tb)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("haarbcr: {e}");
            ExitCode::from(e.code())
        }
    }
}

//! The `pchart` command line.
//!
//! Exit codes are stable: 0 on success with every boolean result true, 1
//! for diagnostics and failed verification, 2 for usage and I/O errors.
//! Every command accepts `--json`; the output validates against the schema
//! printed by `pchart schema <command>`.

mod commands;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use output::{schema, SCHEMAS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Overrides the cap on explored MDP states.
pub const STATE_LIMIT_VAR: &str = "PCHART_STATE_LIMIT";

#[derive(Parser, Debug)]
#[command(name = "pchart", version, about = "Check, verify, export and generate code from probabilistic state charts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a chart and run the well-formedness checks.
    Check(CheckArgs),
    /// Build the MDP and evaluate the invariant and every query.
    Verify(VerifyArgs),
    /// Write the PRISM model and property files.
    Export(ExportArgs),
    /// Generate C code for a non-probabilistic chart.
    Codegen(CodegenArgs),
    /// Estimate query values by Monte Carlo simulation.
    Simulate(SimulateArgs),
    /// Print the size of the MDP.
    Stats(StatsArgs),
    /// Print the explicit MDP in the line-based dump format.
    Dump(DumpArgs),
    /// Print a chart in canonical layout.
    Fmt(FmtArgs),
    /// Print the JSON schema of a command's `--json` output.
    Schema {
        #[arg(value_enum)]
        command: SchemaName,
    },
}

#[derive(Args, Debug)]
pub struct Input {
    /// Chart file.
    pub file: PathBuf,
    /// Machine-readable output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub input: Input,
    /// Reject variables declared without a range.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundSemantics {
    /// `F<b` allows at most b-1 ticks.
    Strict,
    /// `F<b` allows b ticks.
    NonStrict,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: Input,
    /// Convergence threshold for value iteration.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = BoundSemantics::Strict)]
    pub bound_semantics: BoundSemantics,
    /// Monte Carlo samples for the cross-check of numeric results.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    /// Skip the Monte Carlo cross-check.
    #[arg(long)]
    pub no_cross_check: bool,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub input: Input,
    /// Model file; defaults to `<chart file stem>.pm`.
    #[arg(long, value_name = "FILE")]
    pub prism: Option<PathBuf>,
    /// Property file; defaults to `<chart file stem>.props`.
    #[arg(long, value_name = "FILE")]
    pub props: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CodegenArgs {
    #[command(flatten)]
    pub input: Input,
    /// Write the C source here instead of standard output.
    #[arg(long = "c", value_name = "FILE")]
    pub c: Option<PathBuf>,
    /// Also write a header with the prototypes.
    #[arg(long, value_name = "FILE")]
    pub header: Option<PathBuf>,
    /// Leave out `int main(void)`.
    #[arg(long)]
    pub no_main: bool,
    /// Assert the chart invariant after every external event.
    #[arg(long)]
    pub assertions: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Seed {
    Fixed(u64),
    Random,
}

fn parse_seed(s: &str) -> Result<Seed, String> {
    if s == "random" {
        return Ok(Seed::Random);
    }
    s.parse().map(Seed::Fixed).map_err(|_| format!("expected an integer or `random`, got `{s}`"))
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: Input,
    /// Query to estimate; all chart queries when absent.
    #[arg(long)]
    pub query: Option<String>,
    /// State the query is attached to.
    #[arg(long, requires = "query")]
    pub state: Option<String>,
    #[arg(short = 'n', long, default_value_t = 100_000)]
    pub samples: u64,
    /// Integer seed, or `random`.
    #[arg(long, default_value = "0", value_parser = parse_seed)]
    pub seed: Seed,
    /// Steps after which a run is cut off.
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: u64,
    #[arg(long, value_enum, default_value_t = BoundSemantics::Strict)]
    pub bound_semantics: BoundSemantics,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: Input,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[command(flatten)]
    pub input: Input,
    /// Write the dump here instead of standard output.
    #[arg(short = 'o', long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FmtArgs {
    #[command(flatten)]
    pub input: Input,
    /// Exit with 1 when the file is not formatted.
    #[arg(long, conflicts_with = "write")]
    pub check: bool,
    /// Rewrite the file in place.
    #[arg(long)]
    pub write: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemaName {
    Check,
    Verify,
    Export,
    Codegen,
    Simulate,
    Stats,
    Dump,
    Fmt,
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    commands::dispatch(cli.command, out, err)
}

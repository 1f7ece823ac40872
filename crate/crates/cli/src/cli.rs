use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::commands::{self, Log, StageKind};
use crate::config::{self, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "convbid",
    version,
    about = "Convergence-bidding strategy analysis and backtesting",
    after_long_help = config::help_text()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic market: prices, bids, node registry and planted archetypes.
    Synth(StageArgs),
    /// Settle bids and summarize cleared energy and profit per month.
    Ingest(StageArgs),
    /// Compute the per-bid strategy features.
    Features(StageArgs),
    /// Cluster bids into strategies and tally strategy shares per participant.
    Cluster(StageArgs),
    /// Market shares, most-present participants, CSR, LPR and bid characteristics.
    Metrics(StageArgs),
    /// Label nodes over the latest history window and verify each optimum against the MILP.
    Label(StageArgs),
    /// Rolling backtest of the bidding strategies, plus the epsilon/theta case table.
    Backtest(StageArgs),
    /// Re-render figures from the stage CSVs and write report.md.
    Report(StageArgs),
}

#[derive(Debug, Args)]
struct StageArgs {
    /// Config file (`section.key = value` lines); required for every stage but `report`.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.out (relative to the working directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print errors only.
    #[arg(long, short, conflicts_with = "verbose")]
    quiet: bool,
    /// Print every file written.
    #[arg(long, short)]
    verbose: bool,
}

impl Command {
    fn split(self) -> (StageKind, StageArgs) {
        match self {
            Command::Synth(a) => (StageKind::Synth, a),
            Command::Ingest(a) => (StageKind::Ingest, a),
            Command::Features(a) => (StageKind::Features, a),
            Command::Cluster(a) => (StageKind::Cluster, a),
            Command::Metrics(a) => (StageKind::Metrics, a),
            Command::Label(a) => (StageKind::Label, a),
            Command::Backtest(a) => (StageKind::Backtest, a),
            Command::Report(a) => (StageKind::Report, a),
        }
    }
}

/// Every subcommand's long help ends with the config key reference.
fn try_parse<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = Cli::command().mut_subcommands(|s| s.after_long_help(config::help_text()));
    Cli::from_arg_matches(&cmd.try_get_matches_from(argv)?)
}

/// Parses `argv` into a stage and its effective configuration.
pub fn parse_cli<I, T>(argv: I) -> Result<(StageKind, RunConfig, Log), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = try_parse(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let (kind, args) = cli.command.split();
    let mut cfg = match &args.config {
        Some(p) => config::load_config(p)?,
        None if kind == StageKind::Report => RunConfig::default(),
        None => {
            return Err(CliError::Config(format!(
                "`{}` needs --config <PATH>",
                kind.name()
            )))
        }
    };
    cfg.apply_overrides(args.seed, args.out);
    let level = if args.quiet {
        0
    } else if args.verbose {
        2
    } else {
        1
    };
    Ok((kind, cfg, Log { level }))
}

/// Runs the command line and returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    // help and version are not errors
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if let Err(e) = try_parse(&argv) {
        if !e.use_stderr() {
            let _ = e.print();
            return 0;
        }
    }
    let result = parse_cli(&argv).and_then(|(kind, cfg, log)| commands::run(kind, &cfg, &log));
    match result {
        Ok(_) => 0,
        Err(CliError::Usage(m)) => {
            eprint!("{m}");
            2
        }
        Err(e) => {
            eprintln!("convbid: {e}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_failure() {
        assert!(matches!(parse_cli(["convbid", "frobnicate"]), Err(CliError::Usage(_))));
        assert!(matches!(parse_cli(["convbid", "backtest"]), Err(CliError::Config(_))));
        assert!(matches!(
            parse_cli(["convbid", "report", "--quiet", "--verbose"]),
            Err(CliError::Usage(_))
        ));
        let (k, cfg, log) = parse_cli(["convbid", "report", "--seed", "7", "--out", "d"]).unwrap();
        assert_eq!((k, cfg.seed, cfg.out, log.level), (StageKind::Report, 7, PathBuf::from("d"), 1));
    }
}

//! `clickroles`: clickstream traffic-role analysis from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clickroles_core::Error;

mod commands;
mod report;
mod run;
mod settings;

#[derive(Debug, Parser)]
#[command(name = "clickroles", version, about = "Search and navigation roles of articles from clickstream logs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random choice the subcommand makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fail on the first malformed input line.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// File of key=value defaults; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a clickstream dump into per-article traffic counts.
    Ingest(commands::IngestArgs),
    /// Searchshare, resistance, groups, histograms and heatmaps.
    Metrics(commands::MetricsArgs),
    /// Cumulative top-k overlap between traffic rankings.
    Overlap(commands::OverlapArgs),
    /// Degrees and k-core numbers of the link graph.
    Graph(commands::GraphArgs),
    /// Join per-article features; group medians and topic tables.
    Features(commands::FeaturesArgs),
    /// Equal-count binned quartiles of the metrics against features.
    Bins(commands::BinsArgs),
    /// Fit an LDA topic model to article texts.
    Topics(commands::TopicsArgs),
    /// Cross-validated boosted-tree classifiers per feature group.
    Model(commands::ModelArgs),
    /// Collect CSV outputs of earlier runs into one bundle.
    Report(report::ReportArgs),
    /// Seeded uniform sample of article titles.
    Sample(commands::SampleArgs),
}

fn dispatch(cmd: Command, g: &Global) -> clickroles_core::Result<()> {
    match cmd {
        Command::Ingest(a) => commands::ingest(a, g),
        Command::Metrics(a) => commands::metrics(a, g),
        Command::Overlap(a) => commands::overlap(a, g),
        Command::Graph(a) => commands::graph(a, g),
        Command::Features(a) => commands::features(a, g),
        Command::Bins(a) => commands::bins(a, g),
        Command::Topics(a) => commands::topics(a, g),
        Command::Model(a) => commands::model(a, g),
        Command::Report(a) => report::report(a, g),
        Command::Sample(a) => commands::sample(a, g),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let threads = match settings::Settings::load(cli.global.config.as_deref())
        .and_then(|mut s| s.get("threads", cli.global.threads, 0usize))
    {
        Ok(t) => t,
        Err(e) => {
            eprintln!("clickroles: {e}");
            return ExitCode::from(if matches!(e, Error::Usage(_)) { 2 } else { 1 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("clickroles: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let Cli { global, command } = cli;
    match pool.install(|| dispatch(command, &global)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clickroles: {e}");
            ExitCode::from(if matches!(e, Error::Usage(_)) { 2 } else { 1 })
        }
    }
}

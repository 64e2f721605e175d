use crate::format::parse_real;
use balancelab::allocation::StrategyKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "balancelab",
    version,
    about = "Comparability of randomized groups: exact probabilities, sample sizes, allocation and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Probability that randomized groups are comparable.
    Prob {
        #[command(subcommand)]
        model: ProbModel,
    },
    /// Per-arm size at which the threshold covers k standard deviations.
    Samplesize {
        #[command(subcommand)]
        model: SizeModel,
    },
    /// Full imbalance distribution as CSV.
    Pmf {
        #[command(subcommand)]
        model: PmfModel,
    },
    /// Joint comparability of independent factors.
    Joint(JointArgs),
    /// Threshold line n/i and k-sigma curves, as CSV.
    Figure(FigureArgs),
    /// One-sided sign-test p-value when all n pairs favour one treatment.
    Signtest {
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        precision: Precision,
    },
    /// Monte Carlo campaign described by a TOML configuration.
    Simulate(SimulateArgs),
    /// Allocate units to treatment and control.
    Allocate {
        #[command(subcommand)]
        mode: AllocateMode,
    },
    /// Imbalance report for a cohort and an existing assignment.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct Precision {
    /// Decimals to print (default: table style).
    #[arg(long)]
    pub precision: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum ProbModel {
    /// Binary factor with prevalence p: P(|D| <= n/i).
    Binary {
        #[arg(long)]
        i: u32,
        #[arg(long)]
        n: u32,
        #[arg(long, value_parser = parse_real)]
        p: f64,
        #[command(flatten)]
        precision: Precision,
    },
    /// Ranked factor: P(|D| <= n^2/i).
    Rank {
        #[arg(long)]
        i: u32,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        precision: Precision,
    },
    /// Normal ability: P(|Q| <= l sigma), or P(|D| <= l sigma) with --absolute.
    Continuous {
        #[arg(long, value_parser = parse_real)]
        l: f64,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        absolute: bool,
        #[command(flatten)]
        precision: Precision,
    },
}

#[derive(Debug, Subcommand)]
pub enum SizeModel {
    Binary {
        #[arg(long)]
        i: u32,
        #[arg(long, value_parser = parse_real)]
        k: f64,
        #[arg(long, value_parser = parse_real)]
        p: f64,
    },
    Rank {
        #[arg(long)]
        i: u32,
        #[arg(long, value_parser = parse_real)]
        k: f64,
    },
    Continuous {
        #[arg(long, value_parser = parse_real)]
        l: f64,
        #[arg(long, value_parser = parse_real)]
        k: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum PmfModel {
    Binary {
        #[arg(long)]
        n: u32,
        #[arg(long, value_parser = parse_real)]
        p: f64,
    },
    Rank {
        #[arg(long)]
        n: u32,
    },
}

#[derive(Debug, Args)]
pub struct JointArgs {
    /// Per-factor comparability probabilities (repeat or comma-separate).
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',', value_parser = parse_real)]
    pub q: Vec<f64>,
    /// Use every listed probability m times.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Print 1 - product instead.
    #[arg(long)]
    pub complement: bool,
    #[command(flatten)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',', value_parser = parse_real)]
    pub p: Vec<f64>,
    #[arg(long)]
    pub i: u32,
    #[arg(long, value_parser = parse_real)]
    pub k: f64,
    #[arg(long)]
    pub n_max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides BALANCELAB_SEED and the configuration's seed.
    #[arg(long, env = "BALANCELAB_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<u64>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: balancelab::Error| e.to_string())
}

fn parse_weight(s: &str) -> Result<(String, f64), String> {
    let (name, w) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=WEIGHT, got {s:?}"))?;
    Ok((name.trim().to_string(), parse_real(w)?))
}

#[derive(Debug, Args)]
pub struct StrategyArgs {
    /// complete-random, matched-pairs, minimization or systematic.
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: StrategyKind,
    #[arg(long, env = "BALANCELAB_SEED")]
    pub seed: Option<u64>,
    /// Probability of following the minimizing arm (minimization).
    #[arg(long, value_parser = parse_real)]
    pub biased_coin: Option<f64>,
    /// Maximum improving swaps (systematic).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Weight of arm size as an implicit factor (minimization).
    #[arg(long, value_parser = parse_real)]
    pub size_weight: Option<f64>,
    /// Attribute weight NAME=W; when any is given, unlisted attributes get 0.
    #[arg(long = "weight", value_parser = parse_weight)]
    pub weights: Vec<(String, f64)>,
}

#[derive(Debug, Subcommand)]
pub enum AllocateMode {
    /// Allocate a whole cohort; writes id,arm CSV and logs the imbalance report.
    Batch {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[command(flatten)]
        report: ReportFlags,
        /// Write the report here instead of standard error.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Minimization over a stream: one `id,value,...` line in, one arm out.
    Sequential {
        #[arg(long)]
        schema: PathBuf,
        #[command(flatten)]
        strategy: StrategyArgs,
    },
}

fn parse_threshold(s: &str) -> Result<(String, balancelab::exact::ComparabilityThreshold), String> {
    use balancelab::exact::ComparabilityThreshold;
    let (name, rule) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=i:I or NAME=l:L, got {s:?}"))?;
    let threshold = match rule.split_once(':') {
        Some(("i", v)) => ComparabilityThreshold::RangeFraction {
            i: v.trim().parse().map_err(|_| format!("invalid i in {s:?}"))?,
        },
        Some(("l", v)) => ComparabilityThreshold::SigmaMultiple { l: parse_real(v)? },
        _ => return Err(format!("expected NAME=i:I or NAME=l:L, got {s:?}")),
    };
    Ok((name.trim().to_string(), threshold))
}

#[derive(Debug, Args)]
pub struct ReportFlags {
    /// Also report interaction cells of this order.
    #[arg(long)]
    pub interactions: Option<usize>,
    /// Comparability threshold NAME=i:I or NAME=l:L; adds a verdict.
    #[arg(long = "threshold", value_parser = parse_threshold)]
    pub thresholds: Vec<(String, balancelab::exact::ComparabilityThreshold)>,
    /// Threshold for every interaction cell, as i:I.
    #[arg(long, value_parser = parse_cell_threshold)]
    pub interaction_threshold: Option<balancelab::exact::ComparabilityThreshold>,
}

fn parse_cell_threshold(s: &str) -> Result<balancelab::exact::ComparabilityThreshold, String> {
    parse_threshold(&format!("cells={s}")).map(|(_, t)| t)
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// CSV with id and arm columns.
    #[arg(long)]
    pub assignment: PathBuf,
    #[command(flatten)]
    pub report: ReportFlags,
}

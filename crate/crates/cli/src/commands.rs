//! Subcommand definitions and their handlers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use embias_core::association::DEFAULT_PERMUTATIONS;
use embias_core::similarity::DEFAULT_ITERATIONS;
use embias_core::store::AnalysisSetManifest;
use embias_core::{read_manifest, PermutationConfig, PermutationMode, SamplingConfig, Sidedness};

use crate::error::CliError;
use crate::output::{self, Format};
use crate::pipeline::{self, ReportConfig};

const EXIT_CODES: &str = "Exit codes: 0 success, 1 input/usage error, 2 computation error.";

#[derive(Debug, Parser)]
#[command(name = "embias", version, about = "Bias-transfer analysis of image-embedding snapshots", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Analysis-set manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Base seed for every sampled quantity.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    /// Output format; defaults to json for `.json` paths, csv otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Intra-class similarity for every class of one snapshot.
    Intra {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot: String,
        /// Monte-Carlo iterations per estimate.
        #[arg(long, default_value_t = DEFAULT_ITERATIONS as u64, value_parser = clap::value_parser!(u64).range(1..))]
        m: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Inter-class similarity for every declared pair of one snapshot.
    Inter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot: String,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS as u64, value_parser = clap::value_parser!(u64).range(1..))]
        m: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Bias Transfer Score between the pretrained and finetuned snapshots.
    Bts {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS as u64, value_parser = clap::value_parser!(u64).range(1..))]
        m: u64,
        /// One-sided p-value (alternative: positive correlation).
        #[arg(long)]
        one_sided: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Image association tests for every declared tuple of one snapshot.
    Ieat {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot: String,
        /// Permutations; partitions are enumerated exactly when there are at most this many.
        #[arg(long, default_value_t = DEFAULT_PERMUTATIONS, value_parser = clap::value_parser!(u64).range(1..))]
        n_perm: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Full pipeline: report.json plus intra, inter, bts and ieat CSVs.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS as u64, value_parser = clap::value_parser!(u64).range(1..))]
        m: u64,
        #[arg(long, default_value_t = DEFAULT_PERMUTATIONS, value_parser = clap::value_parser!(u64).range(1..))]
        n_perm: u64,
        #[arg(long)]
        one_sided: bool,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Intra { common, .. }
            | Command::Inter { common, .. }
            | Command::Bts { common, .. }
            | Command::Ieat { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

fn sampling(m: u64, seed: u64) -> SamplingConfig {
    SamplingConfig { m: m as usize, seed }
}

fn sidedness(one_sided: bool) -> Sidedness {
    if one_sided {
        Sidedness::Greater
    } else {
        Sidedness::TwoSided
    }
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time (RFC 3339, UTC).
fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn load(path: &Path) -> Result<AnalysisSetManifest, CliError> {
    read_manifest(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.command.common().threads;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Input(format!("cannot start thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Intra { common, snapshot, m, output } => {
            let manifest = load(&common.manifest)?;
            let snap = pipeline::load_snapshot(&manifest, &snapshot)?;
            let est = pipeline::intra_estimates(&manifest, &snap, sampling(m, common.seed))?;
            let bytes = match Format::resolve(output.format, &output.out) {
                Format::Json => output::to_json(&est),
                Format::Csv => output::intra_csv(&[(&snapshot, &est)], false),
            };
            output::emit(&output.out, &bytes)
        }
        Command::Inter { common, snapshot, m, output } => {
            let manifest = load(&common.manifest)?;
            let snap = pipeline::load_snapshot(&manifest, &snapshot)?;
            if manifest.pairs.is_empty() {
                eprintln!("warning: manifest declares no pairs; writing an empty table");
            }
            let est = pipeline::inter_estimates(&manifest, &snap, sampling(m, common.seed))?;
            let bytes = match Format::resolve(output.format, &output.out) {
                Format::Json => output::to_json(&est),
                Format::Csv => output::inter_csv(&[(&snapshot, &est)], false),
            };
            output::emit(&output.out, &bytes)
        }
        Command::Bts { common, m, one_sided, output } => {
            let manifest = load(&common.manifest)?;
            let roles = pipeline::snapshot_roles(&manifest)?;
            let ids: Vec<&str> = std::iter::once(roles.pretrained.id.as_str())
                .chain(roles.finetuned.iter().map(|s| s.id.as_str()))
                .collect();
            let estimates = pipeline::estimate_snapshots(&manifest, &ids, sampling(m, common.seed))?;
            let outcome = pipeline::bias_transfer(&manifest, &estimates, sidedness(one_sided))?;
            let bytes = match Format::resolve(output.format, &output.out) {
                Format::Json => output::to_json(&outcome.rows),
                Format::Csv => output::bts_csv(&outcome.rows),
            };
            output::emit(&output.out, &bytes)?;
            if outcome.failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::Compute(outcome.failures.join("; ")))
            }
        }
        Command::Ieat { common, snapshot, n_perm, output } => {
            let manifest = load(&common.manifest)?;
            if manifest.associations.is_empty() {
                return Err(CliError::Input("manifest declares no associations".into()));
            }
            let snap = pipeline::load_snapshot(&manifest, &snapshot)?;
            let cfg = PermutationConfig {
                n_perm,
                seed: common.seed,
                mode: PermutationMode::Auto,
            };
            let results = pipeline::association_results(&manifest, &snap, cfg)?;
            let bytes = match Format::resolve(output.format, &output.out) {
                Format::Json => output::to_json(&results),
                Format::Csv => output::ieat_csv(&[(&snapshot, &results)], false),
            };
            output::emit(&output.out, &bytes)
        }
        Command::Report { common, m, n_perm, one_sided, out } => {
            let manifest = load(&common.manifest)?;
            let cfg = ReportConfig {
                sampling: sampling(m, common.seed),
                permutation: PermutationConfig {
                    n_perm,
                    seed: common.seed,
                    mode: PermutationMode::Auto,
                },
                sidedness: sidedness(one_sided),
                timestamp: timestamp(),
            };
            let report = pipeline::run_report(&manifest, &cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_report(&report, &out)
        }
    }
}

fn borrowed<V>(m: &BTreeMap<String, Vec<V>>) -> Vec<(&str, &[V])> {
    m.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect()
}

fn write_report(report: &pipeline::RunReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    output::emit(&dir.join("report.json"), &output::to_json(report))?;
    output::emit(&dir.join("intra.csv"), &output::intra_csv(&borrowed(&report.intra_profiles), true))?;
    output::emit(&dir.join("inter.csv"), &output::inter_csv(&borrowed(&report.inter_profiles), true))?;
    output::emit(&dir.join("bts.csv"), &output::bts_csv(&report.bts_rows))?;
    output::emit(&dir.join("ieat.csv"), &output::ieat_csv(&borrowed(&report.associations), true))
}

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::{error, info, warn};
use survbench::bench::{
    emit_reports, emit_window_grid, prepare, run_benchmark_with, window_sensitivity, Analyses, BenchConfig,
    BenchmarkReport, DataSource, SPLIT_AUDIT,
};
use survbench::ingest::synth::synth_generate;
use survbench::ingest::{write_activity, write_enrollments};
use survbench::seed::{derive_seed, Stage};

/// Exit code for a run that finished but with failed stages.
const EXIT_INCOMPLETE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "survbench", version, about = "Temporal dropout-risk survival benchmark")]
struct Cli {
    /// TOML configuration file; built-in defaults (synthetic cohort) when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `output_dir` from the configuration.
    #[arg(short, long, global = true, env = "SURVBENCH_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full two-arm benchmark with every analysis enabled in the config.
    Run,
    /// Comparable arm refitted over the early-window grid.
    WindowGrid,
    /// Write the configured synthetic cohort as enrollment and activity tables.
    Synth,
    /// Partition the cohort and write the leakage/context audit.
    AuditSplit,
    /// Benchmark plus block ablation only.
    Ablate,
    /// Benchmark plus grouped permutation importance only.
    Importance,
    /// Benchmark plus no-refit bootstrap only.
    Bootstrap,
    /// Benchmark plus the Cox proportional-hazards audit only.
    PhAudit,
}

fn load_config(cli: &Cli) -> anyhow::Result<BenchConfig> {
    let mut cfg = match &cli.config {
        Some(p) => BenchConfig::from_path(p).with_context(|| format!("reading config {}", p.display()))?,
        None => BenchConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(report: &BenchmarkReport, dir: &Path) -> anyhow::Result<bool> {
    let files = emit_reports(report, dir).with_context(|| format!("writing reports to {}", dir.display()))?;
    for f in &files {
        info!("wrote {}", f.display());
    }
    for m in &report.models {
        match &m.metrics {
            Some(r) => println!(
                "{:<10} {:<16} ibs={:.4} td={:.4}",
                m.arm.as_str(),
                m.model.as_str(),
                r.ibs,
                r.td_concordance
            ),
            None => println!("{:<10} {:<16} FAILED", m.arm.as_str(), m.model.as_str()),
        }
    }
    if !report.complete {
        for f in &report.failures {
            warn!(
                "incomplete: stage `{}` ({}) failed: {}",
                f.stage,
                f.model.map(|m| m.as_str()).unwrap_or("-"),
                f.error
            );
        }
    }
    Ok(report.complete)
}

fn only(f: impl FnOnce(&mut Analyses)) -> Analyses {
    let mut a = Analyses::none();
    f(&mut a);
    a
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = load_config(cli)?;
    let dir = cfg.output_dir.clone();
    let analyses = match cli.command {
        Command::Run => Some(cfg.analyses.clone()),
        Command::Ablate => Some(only(|a| a.ablation = true)),
        Command::Importance => Some(only(|a| a.importance = true)),
        Command::Bootstrap => Some(only(|a| a.bootstrap = true)),
        Command::PhAudit => Some(only(|a| a.ph_audit = true)),
        _ => None,
    };
    if let Some(analyses) = analyses {
        let report = run_benchmark_with(&cfg, &analyses)?;
        return finish(&report, &dir);
    }
    match cli.command {
        Command::WindowGrid => {
            let prep = prepare(&cfg)?;
            let rows = window_sensitivity(&cfg, &prep)?;
            let path = emit_window_grid(&rows, &dir)?;
            info!("wrote {}", path.display());
            for r in &rows {
                println!(
                    "w={:<3} {:<12} ibs={} td={}",
                    r.w,
                    r.model.as_str(),
                    r.ibs.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                    r.td_concordance.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
                );
            }
            Ok(rows.iter().all(|r| r.error.is_none()))
        }
        Command::Synth => {
            let DataSource::Synthetic(spec) = &cfg.data else {
                bail!("`synth` needs a synthetic data source in the config");
            };
            let cohort = synth_generate(spec, derive_seed(cfg.seed, Stage::Synth, 0))?.cohort;
            std::fs::create_dir_all(&dir)?;
            write_enrollments(BufWriter::new(File::create(dir.join("enrollments.csv"))?), &cohort.records)?;
            write_activity(BufWriter::new(File::create(dir.join("activity.csv"))?), &cohort.activity)?;
            println!(
                "{} enrollments, {} events, {} activity rows -> {}",
                cohort.records.len(),
                cohort.event_count(),
                cohort.activity.len(),
                dir.display()
            );
            Ok(true)
        }
        Command::AuditSplit => {
            let prep = prepare(&cfg)?;
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(SPLIT_AUDIT);
            serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &prep.audit)?;
            println!("{}", prep.audit.to_table());
            Ok(true)
        }
        _ => unreachable!("analysis subcommands handled above"),
    }
}

/// Error chain joined with `: `, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let part = cause.to_string();
        if !msg.contains(&part) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&part);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_INCOMPLETE),
        Err(e) => {
            error!("{}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use changeloc::commands;
use changeloc::config::ProjectConfig;
use changeloc_core::evaluation::Mode;
use changeloc_core::synthetic::SyntheticConfig;

/// Log verbosity, e.g. `CHANGELOC_LOG=debug`.
const LOG_ENV: &str = "CHANGELOC_LOG";

#[derive(Parser)]
#[command(name = "changeloc", version, about = "Online topic-model bug localization over a change history")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ensemble,
    Baseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ensemble => Mode::Ensemble,
            ModeArg::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Export new commits from the repository and link bugs to fixes.
    Ingest {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Replay the history, scoring every linked bug at its fix.
    Replay {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "ensemble")]
        mode: ModeArg,
        /// Also time a from-scratch rebuild of the changeset model.
        #[arg(long)]
        measure_rebuild: bool,
    },
    /// Rank the current snapshot's classes for a bug report.
    Locate {
        #[arg(short, long)]
        config: PathBuf,
        /// Text file: first line summary, remaining lines description.
        #[arg(short, long)]
        bug: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Use the changeset model alone.
        #[arg(long)]
        baseline: bool,
    },
    /// Compare co-change rates with topic similarity.
    Cochange {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Print model, pair-store and timing figures from the saved state.
    Stats {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Write a synthetic demo project.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        changesets: usize,
        #[arg(long, default_value_t = 10)]
        topics: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { config } => {
            let cfg = ProjectConfig::load(&config)?;
            let s = commands::ingest(&cfg)?;
            println!("{} new changesets ({} total)", s.new_changesets, s.total_changesets);
            if let Some(n) = s.links {
                println!("{n} bugs linked, {} unlinked", s.unlinked.len());
            }
        }
        Command::Replay {
            config,
            mode,
            measure_rebuild,
        } => {
            let cfg = ProjectConfig::load(&config)?;
            let mode = Mode::from(mode);
            let r = commands::replay(&cfg, mode, measure_rebuild)?;
            println!(
                "{} bugs scored, {} skipped: MRR {:.4} MAP {:.4} Top@1 {:.4} Top@5 {:.4}",
                r.bugs.len(),
                r.skipped.len(),
                r.mrr(),
                r.map(),
                r.top_at(1),
                r.top_at(5)
            );
            println!("tables written to {}", commands::metrics_file(&cfg, mode).display());
        }
        Command::Locate {
            config,
            bug,
            top,
            baseline,
        } => {
            let cfg = ProjectConfig::load(&config)?;
            let report = commands::read_bug_text(&bug)?;
            for (i, c) in commands::locate(&cfg, &report, top, baseline)?.iter().enumerate() {
                println!("{:>3}  {:.6}  {}", i + 1, c.distance, c.path);
            }
        }
        Command::Cochange { config } => {
            let cfg = ProjectConfig::load(&config)?;
            let table = commands::cochange_table(&commands::cochange(&cfg)?);
            std::fs::create_dir_all(&cfg.output_dir)?;
            std::fs::write(cfg.output_dir.join("cochange.csv"), &table)?;
            print!("{table}");
        }
        Command::Stats { config } => {
            let cfg = ProjectConfig::load(&config)?;
            print!("{}", commands::stats(&cfg)?);
        }
        Command::Synth {
            out,
            seed,
            changesets,
            topics,
        } => {
            let synthetic = SyntheticConfig {
                seed,
                changesets,
                ..SyntheticConfig::default()
            };
            commands::synth(&out, &synthetic, (topics, topics))?;
            println!("synthetic project written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `btrecover`: run scenarios through the recovery pipeline, batch them
//! into a suite, or replay a saved run report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use recovery_core::pipeline::{run_task, Mode, RunConfig, RunReport};
use recovery_core::reasoner::vlm::{EndpointConfig, Fixture};
use recovery_core::reasoner::{OracleReasoner, Reasoner, VlmReasoner};
use recovery_core::replay::narrative;
use recovery_core::simulator::Scenario;
use recovery_core::suite::{load_dir, run_suite, SuiteConfig};

#[derive(Parser)]
#[command(name = "btrecover", version, about = "Behavior-tree failure detection and recovery harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReasonerKind {
    /// Ground-truth reference reasoner.
    Oracle,
    /// Chat-completions endpoint, or a recorded fixture with `--fixture`.
    Vlm,
}

#[derive(clap::Args)]
struct ReasonerArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    reasoner: ReasonerKind,
    /// TOML endpoint description for `--reasoner vlm`.
    #[arg(long)]
    endpoint_config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, default_value = "100")]
    max_ticks: u64,
    /// Executions shown to the reasoner.
    #[arg(long, default_value = "5")]
    history_window: usize,
}

impl RunArgs {
    fn config(&self, mode: Mode) -> RunConfig {
        RunConfig {
            max_ticks: self.max_ticks,
            history_window: self.history_window,
            ..RunConfig::new(mode)
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute one scenario. Exits 0 when the task goals hold at the end.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "combined", value_parser = parse_mode)]
        mode: Mode,
        #[command(flatten)]
        reasoner: ReasonerArgs,
        /// Replay recorded replies instead of calling an endpoint.
        #[arg(long, conflicts_with = "endpoint_config")]
        fixture: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Write the JSON run report here.
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Print the tick-by-tick narrative.
        #[arg(long)]
        verbose: bool,
    },
    /// Execute every scenario under a directory in each mode. Exits 0 when
    /// every run expected to succeed did; unloadable files are reported
    /// and skipped.
    Suite {
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "pre,reactive,combined", value_parser = parse_mode)]
        modes: Vec<Mode>,
        #[command(flatten)]
        reasoner: ReasonerArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Repetitions per scenario and mode for the determinism check.
        #[arg(long, default_value = "10")]
        reps: usize,
        /// Write the JSON suite report here.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Re-derive and print a saved run report, checking its scene diffs.
    Replay { report: PathBuf },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn endpoint(args: &ReasonerArgs) -> Result<EndpointConfig> {
    let path = args
        .endpoint_config
        .as_deref()
        .context("--reasoner vlm needs --endpoint-config (or --fixture for run)")?;
    EndpointConfig::load(path).map_err(anyhow::Error::msg)
}

fn write_json(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_summary(r: &RunReport) {
    println!(
        "{} [{}]: task {} after {} ticks, {} skills, {} reasoner queries",
        r.scenario,
        r.mode,
        if r.task_success { "achieved" } else { "NOT achieved" },
        r.ticks,
        r.skills_executed,
        r.reasoner_queries
    );
    for c in &r.history.corrections {
        let state = if c.applied { "applied" } else { "rejected" };
        println!("  {} correction {state}: {}", c.kind, c.correction);
    }
    if let recovery_core::pipeline::Termination::Unrecovered { reason } = &r.termination {
        println!("  unrecovered: {reason}");
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            mode,
            reasoner,
            fixture,
            run,
            report_out,
            verbose,
        } => {
            let s = Scenario::load(&scenario).with_context(|| format!("loading scenario {}", scenario.display()))?;
            let mut r: Box<dyn Reasoner> = match (reasoner.reasoner, fixture) {
                (ReasonerKind::Oracle, None) => Box::new(OracleReasoner::default()),
                (ReasonerKind::Oracle, Some(_)) => bail!("--fixture needs --reasoner vlm"),
                (ReasonerKind::Vlm, Some(f)) => {
                    Box::new(VlmReasoner::with_fixture(Fixture::load(&f).map_err(anyhow::Error::msg)?))
                }
                (ReasonerKind::Vlm, None) => {
                    Box::new(VlmReasoner::from_config(endpoint(&reasoner)?).map_err(anyhow::Error::msg)?)
                }
            };
            let report = run_task(&s, &run.config(mode), &mut r);
            if verbose {
                print!("{}", narrative(&report)?);
            }
            print_summary(&report);
            if let Some(path) = report_out {
                write_json(&path, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(if report.task_success { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Suite {
            dir,
            modes,
            reasoner,
            run,
            reps,
            report_out,
        } => {
            if reps == 0 {
                bail!("--reps must be at least 1");
            }
            let scenarios = load_dir(&dir)?;
            let cfg = SuiteConfig {
                modes,
                reps,
                run: run.config(Mode::Combined),
            };
            let report = match reasoner.reasoner {
                ReasonerKind::Oracle => run_suite(&scenarios, &cfg, || Box::new(OracleReasoner::default())),
                ReasonerKind::Vlm => {
                    let ep = endpoint(&reasoner)?;
                    // Fail early on a bad prompt directory rather than once per run.
                    VlmReasoner::from_config(ep.clone()).map_err(anyhow::Error::msg)?;
                    run_suite(&scenarios, &cfg, move || {
                        Box::new(VlmReasoner::from_config(ep.clone()).expect("validated above"))
                    })
                }
            };
            print!("{}", report.table());
            if let Some(path) = report_out {
                write_json(&path, serde_json::to_string_pretty(&report)?)?;
            }
            let failed: Vec<String> = report
                .unexpected_failures()
                .map(|r| format!("{}/{}", r.scenario, r.mode))
                .collect();
            if failed.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("expected to succeed but failed: {}", failed.join(", "));
                Ok(ExitCode::from(1))
            }
        }
        Command::Replay { report } => {
            let text = std::fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let r: RunReport =
                serde_json::from_str(&text).with_context(|| format!("{} is not a run report", report.display()))?;
            print!("{}", narrative(&r)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

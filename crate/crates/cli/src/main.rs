//! `omav-teleop`: live sessions over websocket, log replay, trial analysis.

mod serve;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Parser, Subcommand};
use omav_teleop::log::{replay_log, LogError, SessionLog};
use omav_teleop::pilot::{AbbtPilot, PushPilot};
use omav_teleop::scenario::{bundled, Condition, ScenarioConfig};
use omav_teleop::session::{run_session, InputSource, Participant, Session, SessionOutcome};
use omav_teleop::stats::io::{read_trials, write_trials, TrialRow};
use omav_teleop::stats::report::{anova_report, taguchi_report, tlx_report};
use omav_teleop::stats::{Expertise, OMAV_MASS_KG};
use omav_teleop::Vec3;

#[derive(Parser)]
#[command(name = "omav-teleop", version, about = "Aerial manipulator teleoperation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Scenario selection shared by the session commands.
#[derive(clap::Args, Clone)]
pub struct ScenarioArgs {
    /// Scenario file, or the name of a bundled scenario (abbt, push, peg, ...).
    #[arg(long)]
    scenario: String,
    /// Display and haptics levels, e.g. `SC,H` or `MR,NoH`. Defaults to the scenario's.
    #[arg(long)]
    condition: Option<Condition>,
    /// Config override, e.g. `--set task.duration=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "anonymous")]
    participant: String,
    /// Participant expertise, `B` or `E`.
    #[arg(long, default_value = "B")]
    expertise: Expertise,
    /// Append the trial summary to this CSV file.
    #[arg(long)]
    trials: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run sessions for operator consoles connecting over websocket.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Address to listen on.
        #[arg(long, env = "OMAV_TELEOP_LISTEN", default_value = "127.0.0.1:8765")]
        listen: String,
        /// Write the session log here (`-N` is inserted for later sessions).
        #[arg(long)]
        record: Option<PathBuf>,
        /// Serve a single session, then exit.
        #[arg(long)]
        once: bool,
        /// Seconds to wait for the questionnaire after the trial ends.
        #[arg(long, default_value_t = 300.0)]
        tlx_wait: f64,
    },
    /// Run a session headless with a scripted operator.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// `idle`, `abbt` or `push`.
        #[arg(long, default_value = "idle")]
        pilot: String,
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Re-run a recorded session from its log.
    Replay {
        log: PathBuf,
        /// Check every logged state checksum.
        #[arg(long)]
        verify: bool,
    },
    /// Statistics over a trial CSV.
    #[command(group(ArgGroup::new("analysis").required(true).args(["taguchi", "anova", "tlx"])))]
    Analyze {
        /// Taguchi L4 response tables for N and E.
        #[arg(long)]
        taguchi: bool,
        /// Normality, two-way ANOVA, Tukey grouping and Mood's median.
        #[arg(long)]
        anova: bool,
        /// NASA-TLX workload per configuration.
        #[arg(long)]
        tlx: bool,
        csv: PathBuf,
        /// Also write the machine-readable table here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').with_context(|| format!("override `{kv}` is not KEY=VALUE"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

impl ScenarioArgs {
    pub fn config(&self) -> Result<ScenarioConfig> {
        let text = match bundled(&self.scenario) {
            Some(text) if !Path::new(&self.scenario).exists() => text.to_string(),
            _ => std::fs::read_to_string(&self.scenario)
                .with_context(|| format!("reading scenario {}", self.scenario))?,
        };
        let mut config = ScenarioConfig::parse_with_overrides(&text, &parse_overrides(&self.overrides)?)
            .with_context(|| format!("scenario {}", self.scenario))?;
        if let Some(c) = self.condition {
            config.condition = c;
        }
        // fail early on invalid values
        config.build().with_context(|| format!("scenario {}", self.scenario))?;
        Ok(config)
    }

    pub fn participant(&self) -> Participant {
        Participant { id: self.participant.clone(), expertise: self.expertise }
    }
}

pub fn write_log(path: &Path, log: &SessionLog) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    log.write_to(BufWriter::new(file))?;
    Ok(())
}

/// Appends one trial to a CSV file, creating it with a header if needed.
pub fn append_trial(path: &Path, row: TrialRow) -> Result<()> {
    let mut rows = if path.exists() {
        read_trials(File::open(path)?).with_context(|| format!("reading {}", path.display()))?
    } else {
        Vec::new()
    };
    rows.push(row);
    write_trials(BufWriter::new(File::create(path)?), &rows)?;
    Ok(())
}

pub fn summary(outcome: &SessionOutcome, condition: Condition) -> String {
    let row = TrialRow::from_record(&outcome.record, OMAV_MASS_KG);
    let cfg = &outcome.log.header.config;
    let energy = row.energy.map_or("undefined (no blocks)".to_string(), |e| format!("{e:.3} J/block"));
    format!(
        "scenario {}  condition {condition}  ticks {}  time {:.3} s\nblocks {}  energy {energy}\nfinal checksum {:016x}",
        cfg.name,
        outcome.state.tick,
        outcome.state.elapsed(cfg.session.dt),
        row.blocks,
        outcome.final_checksum,
    )
}

fn simulate(args: &ScenarioArgs, pilot: &str, record: Option<&Path>) -> Result<()> {
    let config = args.config()?;
    let condition = config.condition;
    let session = Session::with_condition(config.build()?, condition, &args.participant())?;
    let source = match pilot {
        "idle" => InputSource::Replay(Vec::new()),
        "abbt" => InputSource::Scripted(Box::new(AbbtPilot::new())),
        "push" => InputSource::Scripted(Box::new(PushPilot::new(Vec3::x(), 8.0))),
        other => bail!("unknown pilot `{other}` (idle, abbt or push)"),
    };
    let outcome = run_session(session, source)?;
    println!("{}", summary(&outcome, condition));
    if let Some(path) = record {
        write_log(path, &outcome.log)?;
    }
    if let Some(path) = &args.trials {
        append_trial(path, TrialRow::from_record(&outcome.record, OMAV_MASS_KG))?;
    }
    Ok(())
}

fn replay(path: &Path, verify: bool) -> Result<()> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let log = SessionLog::read_from(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    let started = Instant::now();
    let result = replay_log(&log, verify);
    let replay = match result {
        Err(e @ LogError::ChecksumMismatch { .. }) => bail!("replay diverged: {e}"),
        other => other?,
    };
    println!("{}", summary(&replay.outcome, log.header.condition));
    if verify {
        println!("checkpoints verified {}", replay.verified);
    }
    println!("replayed in {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn analyze(kind: &str, csv: &Path, out: Option<&Path>, alpha: f64) -> Result<()> {
    let rows = read_trials(File::open(csv).with_context(|| format!("opening {}", csv.display()))?)?;
    let report = match kind {
        "taguchi" => taguchi_report(&rows)?,
        "anova" => anova_report(&rows, alpha)?,
        _ => tlx_report(&rows)?,
    };
    print!("{}", report.text);
    if let Some(path) = out {
        std::fs::write(path, &report.csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { scenario, listen, record, once, tlx_wait } => {
            let opts = serve::ServeOptions { scenario, listen, record, once, tlx_wait };
            tokio::runtime::Runtime::new()?.block_on(serve::serve(opts))
        }
        Command::Simulate { scenario, pilot, record } => simulate(&scenario, &pilot, record.as_deref()),
        Command::Replay { log, verify } => replay(&log, verify),
        Command::Analyze { taguchi, anova, tlx: _, csv, out, alpha } => {
            let kind = if taguchi {
                "taguchi"
            } else if anova {
                "anova"
            } else {
                "tlx"
            };
            analyze(kind, &csv, out.as_deref(), alpha)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

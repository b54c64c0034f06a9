//! Command-line surface. Exit codes: 0 success, 1 usage error, 2 data error.
//! Errors go to stderr prefixed `error[usage]:` or `error[data]:`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::warn;
use serde::{Deserialize, Serialize};

use gamestate::decision::{train_logistic, LogisticConfig};
use gamestate::features::{build_vocab, encode_all, TackleEvent};
use gamestate::io::{load_checkpoint, read_events, save_checkpoint, write_events, Checkpoint, TrainingMetadata};
use gamestate::reports::{ReportContext, ReportParams, ReportRegistry};
use gamestate::synth::{simulate_league, League, LeagueSpec};
use gamestate::training::{evaluate, train, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "gamestate", version, about = "Rugby League game-state model and analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a synthetic league to JSONL.
    Simulate {
        /// LeagueSpec JSON; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the network (and the decision model when last-tackle labels exist).
    Train {
        #[arg(long)]
        events: PathBuf,
        /// Training config JSON with `mdn` and `logistic` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        loss_csv: PathBuf,
    },
    /// Print held-out metrics as JSON.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        events: PathBuf,
    },
    /// Print the predicted distribution summary for one event.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Event as a JSON object; `-` reads stdin.
        #[arg(long)]
        event: String,
    },
    /// Team value over average: full table, per-round running table and field split.
    Dvoa {
        #[command(flatten)]
        common: ReportArgs,
        #[arg(long, default_value_t = 75.0)]
        threshold: f64,
    },
    /// Predicted final margin per tackle and the point each match was decided.
    Scoreline {
        #[command(flatten)]
        common: ReportArgs,
        #[arg(long = "match")]
        match_id: Option<String>,
        #[arg(long)]
        reference_team: Option<usize>,
    },
    /// Per-set exTrySet, momentum and big plays.
    SetTrace {
        #[command(flatten)]
        common: ReportArgs,
        #[arg(long = "match")]
        match_id: Option<String>,
    },
    /// Last-tackle frequencies and expected points by zone and by team.
    Decisions {
        #[command(flatten)]
        common: ReportArgs,
        #[arg(long, default_value_t = 6.0)]
        points_per_try: f64,
        #[arg(long, default_value_t = 30)]
        min_support: usize,
    },
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub mdn: TrainConfig,
    pub logistic: LogisticConfig,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error[usage]: {m}"),
            CliError::Data(m) => write!(f, "error[data]: {m}"),
        }
    }
}

impl From<gamestate::Error> for CliError {
    fn from(e: gamestate::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn events(path: &Path) -> CliResult<Vec<TackleEvent>> {
    let ev = read_events(path)?;
    if ev.is_empty() {
        return Err(CliError::Data(format!("{}: no events", path.display())));
    }
    Ok(ev)
}

fn run_reports(names: &[&str], common: &ReportArgs, params: ReportParams, out: &mut dyn Write) -> CliResult<()> {
    let cp = load_checkpoint(&common.checkpoint)?;
    let ev = events(&common.events)?;
    fs::create_dir_all(&common.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", common.out_dir.display())))?;
    let ctx = ReportContext {
        events: &ev,
        model: &cp.model,
        policy: cp.logistic.as_ref(),
        params,
    };
    let registry = ReportRegistry::with_defaults();
    for name in names {
        for a in registry.run(name, &ctx)? {
            let path = common.out_dir.join(&a.file_name);
            write_file(&path, &a.contents)?;
            writeln!(out, "{}", path.display()).map_err(|e| CliError::Data(e.to_string()))?;
        }
    }
    Ok(())
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let emit = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(|e| CliError::Data(e.to_string()));
    match cli.command {
        Command::Simulate {
            config,
            seed,
            out: path,
        } => {
            let mut spec: LeagueSpec = match config {
                Some(p) => read_json(&p)?,
                None => LeagueSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let league = League::new(&spec)?;
            let ev = simulate_league(&league)?;
            write_events(&path, &ev)?;
            emit(out, format!("{} events -> {}", ev.len(), path.display()))
        }
        Command::Train {
            events: ev_path,
            config,
            checkpoint,
            loss_csv,
        } => {
            let cfg: TrainFile = match config {
                Some(p) => read_json(&p)?,
                None => TrainFile::default(),
            };
            cfg.mdn.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let ev = events(&ev_path)?;
            let encoding = build_vocab(&ev)?;
            let outcome = train(&ev, &encoding, &cfg.mdn)?;
            let fit = if ev.iter().any(|e| e.last_tackle_play.is_some()) {
                Some(train_logistic(&ev, &encoding, &cfg.logistic)?)
            } else {
                warn!("no last-tackle labels; checkpoint carries no decision model");
                None
            };
            let last = outcome.history.last();
            let cp = Checkpoint {
                metadata: TrainingMetadata {
                    seed: cfg.mdn.seed,
                    epochs: cfg.mdn.epochs,
                    best_epoch: outcome.best_epoch,
                    final_train_nll: last.map(|r| r.train_nll),
                    final_val_nll: last.and_then(|r| r.val_nll),
                    logistic_train_loss: fit.as_ref().map(|f| f.train_loss),
                    logistic_test_loss: fit.as_ref().and_then(|f| f.test_loss),
                },
                model: outcome.model.clone(),
                logistic: fit.map(|f| f.weights),
            };
            save_checkpoint(&checkpoint, &cp)?;
            write_file(&loss_csv, &outcome.history_csv())?;
            emit(out, format!("checkpoint -> {}", checkpoint.display()))
        }
        Command::Evaluate {
            checkpoint,
            events: ev_path,
        } => {
            let cp = load_checkpoint(&checkpoint)?;
            let ev = events(&ev_path)?;
            let report = evaluate(&cp.model, &encode_all(&ev, &cp.model.encoding)?)?;
            emit(
                out,
                serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?,
            )
        }
        Command::Predict { checkpoint, event } => {
            let cp = load_checkpoint(&checkpoint)?;
            let text = if event == "-" {
                let mut s = String::new();
                std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                s
            } else {
                event
            };
            let e: TackleEvent =
                serde_json::from_str(text.trim()).map_err(|e| CliError::Data(format!("event: {e}")))?;
            let p = gamestate::engine::predict(&e, &cp.model, cp.logistic.as_ref())?;
            emit(
                out,
                serde_json::to_string_pretty(&p).map_err(|e| CliError::Data(e.to_string()))?,
            )
        }
        Command::Dvoa { common, threshold } => {
            if !(0.0..=100.0).contains(&threshold) {
                return Err(CliError::Usage(format!("--threshold {threshold} not in [0, 100]")));
            }
            let params = ReportParams {
                x_threshold: threshold,
                ..Default::default()
            };
            run_reports(&["dvoa", "dvoa-cumulative", "dvoa-spatial"], &common, params, out)
        }
        Command::Scoreline {
            common,
            match_id,
            reference_team,
        } => {
            let params = ReportParams {
                match_id,
                reference_team,
                ..Default::default()
            };
            run_reports(&["scoreline"], &common, params, out)
        }
        Command::SetTrace { common, match_id } => {
            let params = ReportParams {
                match_id,
                ..Default::default()
            };
            run_reports(&["set-trace"], &common, params, out)
        }
        Command::Decisions {
            common,
            points_per_try,
            min_support,
        } => {
            if !(points_per_try >= 0.0) {
                return Err(CliError::Usage("--points-per-try must be non-negative".into()));
            }
            let mut params = ReportParams::default();
            params.decisions.points_per_try = points_per_try;
            params.decisions.min_support = min_support;
            run_reports(&["decisions"], &common, params, out)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "error[usage]: {first}");
            return 1;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.code()
        }
    }
}

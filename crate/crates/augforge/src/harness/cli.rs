//! `augforge` command line. Exit codes: 0 success, 1 validation or usage
//! error, 2 runtime failure. Failures print one line starting with
//! `error[validation]:` or `error[runtime]:` to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::augment::{preview_grid, BackgroundPool, ChainConfig, ChainResources, ExternalHook};
use crate::eval::{evaluate, DetectionSet, GroundTruth};
use crate::imaging::{load_image, load_mask, Sample};
use crate::importance::{analyze_trials, ForestSettings};
use crate::search::{read_log, run_study, SearchSettings, SearchSpace, Study};

use super::{augment_dataset, report_study, AugmentOptions, DatasetManifest, HarnessError, ObjectiveRunner, Surrogate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "augforge", version, about = "Augmentation search for object detection datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply a chain to every sample of a dataset.
    Augment {
        /// Chain configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Dataset root with images/, optional masks/ and ground_truth.json.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        /// Shell command used as the external augmentation.
        #[arg(long)]
        hook_cmd: Option<String>,
    },
    /// Render every catalog augmentation of one sample into a grid image.
    Preview {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Directory of background PNGs.
        #[arg(long)]
        backgrounds: Option<PathBuf>,
    },
    /// Run a TPE study over which augmentations are active.
    Search(SearchArgs),
    /// Parameter importance of a finished study.
    Importance {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value_t = 64)]
        trees: usize,
        #[arg(long, default_value_t = 64)]
        max_depth: usize,
        #[arg(long, default_value_t = 8)]
        repeats: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score detections against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Objective against number of active augmentations.
    Report {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SeedArg {
    #[arg(long, env = "AUGFORGE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// `{"params": [...]}` naming the searched kinds; all 30 when omitted.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Objective command speaking the JSON protocol.
    #[arg(long, conflicts_with = "surrogate", required_unless_present = "surrogate")]
    objective_cmd: Option<String>,
    /// Use the built-in surrogate objective.
    #[arg(long)]
    surrogate: bool,
    #[arg(long, default_value_t = 0, requires = "surrogate")]
    surrogate_seed: u64,
    #[arg(long, default_value_t = 0.0, requires = "surrogate")]
    noise: f64,
    /// Augment this dataset per trial and score the command's detections by mAP.
    #[arg(long, requires = "objective_cmd")]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    trials: usize,
    #[arg(long, default_value_t = 64)]
    startup: usize,
    /// Study log; the study resumes when it exists.
    #[arg(long)]
    db: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Let the sampler repeat assignments that were already evaluated.
    #[arg(long)]
    allow_duplicates: bool,
    /// Per-trial objective timeout in seconds.
    #[arg(long, default_value_t = 3600.0)]
    timeout: f64,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let mut lines = rendered.lines();
            let first = lines.next().unwrap_or("usage error");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            let _ = writeln!(stderr, "error[validation]: {first}");
            for line in lines {
                let _ = writeln!(stderr, "{line}");
            }
            return EXIT_VALIDATION;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (tag, code) = if e.is_validation() {
                ("validation", EXIT_VALIDATION)
            } else {
                ("runtime", EXIT_RUNTIME)
            };
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "error[{tag}]: {msg}");
            code
        }
    }
}

fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(value: &impl Serialize, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => stdout.write_all(text.as_bytes()).map_err(|source| HarnessError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn execute(cmd: Command, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    match cmd {
        Command::Augment {
            config,
            dataset,
            out,
            seed,
            hook_cmd,
        } => {
            let cfg = ChainConfig::from_json(&read_text(&config)?)?;
            let manifest = DatasetManifest::load(&dataset)?;
            let opts = AugmentOptions {
                hook: hook_cmd.map(ExternalHook::new),
            };
            augment_dataset(&manifest, &cfg, &out, seed.seed, &opts)
        }
        Command::Preview {
            input,
            mask,
            out,
            backgrounds,
        } => {
            let id = input.file_stem().map_or("sample".into(), |s| s.to_string_lossy().into_owned());
            let mut sample = Sample::new(id, load_image(&input)?);
            if let Some(m) = mask {
                sample = sample.with_mask(load_mask(m)?);
            }
            let pool = backgrounds.map(BackgroundPool::from_dir).transpose()?;
            let res = ChainResources {
                backgrounds: pool.as_ref(),
                hook: None,
            };
            let summary = preview_grid(&sample, &res, &out)?;
            let degraded: Vec<&str> = summary.degraded.iter().map(|k| k.name()).collect();
            emit(&json!({"tiles": summary.tiles, "degraded": degraded}), None, stdout)
        }
        Command::Search(args) => search(args, stdout),
        Command::Importance {
            db,
            trees,
            max_depth,
            repeats,
            seed,
            out,
        } => {
            let settings = ForestSettings {
                n_trees: trees,
                max_depth,
                n_repeats: repeats,
                seed: seed.seed,
                ..Default::default()
            };
            settings.validate()?;
            let replay = read_log(&db)?;
            let report = analyze_trials(replay.trials.values(), &settings)?;
            emit(&report, out.as_deref(), stdout)
        }
        Command::Evaluate { gt, det, out } => {
            let gt = GroundTruth::load(&gt)?;
            let det = DetectionSet::load(&det)?;
            emit(&evaluate(&gt, &det)?, out.as_deref(), stdout)
        }
        Command::Report { db, out } => emit(&report_study(&db)?, out.as_deref(), stdout),
    }
}

fn search(args: SearchArgs, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let settings = SearchSettings {
        n_trials: args.trials,
        n_startup_trials: args.startup,
        study_seed: args.seed.seed,
        parallelism: args.parallel,
        avoid_duplicates: !args.allow_duplicates,
        ..Default::default()
    };
    settings.validate()?;
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        return Err(HarnessError::Validation(format!("timeout must be positive, got {}", args.timeout)));
    }
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(HarnessError::Validation(format!("noise must be non-negative, got {}", args.noise)));
    }
    let space = match &args.space {
        Some(p) => SearchSpace::from_json(&read_text(p)?)?,
        None => SearchSpace::full(),
    };
    let timeout = Duration::from_secs_f64(args.timeout);
    let runner = match (args.objective_cmd, args.dataset) {
        (Some(command), Some(dataset)) => {
            // fail on a broken dataset before the first trial
            DatasetManifest::load(&dataset)?;
            ObjectiveRunner::DatasetEval {
                dataset,
                command,
                timeout,
            }
        }
        (Some(command), None) => ObjectiveRunner::External { command, timeout },
        (None, _) => ObjectiveRunner::Surrogate(Surrogate::new(space.clone(), args.surrogate_seed, args.noise)),
    };
    let study = match &args.db {
        Some(db) => Study::open(db, settings, space)?,
        None => Study::in_memory(settings, space)?,
    };
    let study = run_study(study, &runner)?;
    let best = study.best().map(|t| {
        json!({
            "trial_id": t.trial_id,
            "value": t.value,
            "active_count": t.active_count(),
            "params": t.params,
        })
    });
    let summary = json!({
        "n_complete": study.count(crate::search::TrialState::Complete),
        "n_failed": study.count(crate::search::TrialState::Failed),
        "best": best,
    });
    emit(&summary, None, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("augforge").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn startup_above_trials_is_validation() {
        let (code, _, err) = call(&["search", "--surrogate", "--trials", "10", "--startup", "64"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error[validation]:"), "{err}");
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = call(&["report", "--bogus"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error[validation]:") && err.contains("Usage"), "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("search"));
    }

    #[test]
    fn missing_file_is_runtime() {
        let (code, _, err) = call(&["evaluate", "--gt", "/nonexistent/gt.json", "--det", "/nonexistent/d.json"]);
        assert_eq!(code, 2, "{err}");
        assert!(err.starts_with("error[runtime]:"));
        assert_eq!(err.lines().count(), 1);
    }
}

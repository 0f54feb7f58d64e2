//! Append-only JSON-lines study log.
//!
//! Every event is one line. A line is only trusted once its terminating
//! newline is on disk, so a crash mid-write leaves a partial trailing line
//! that replay discards (and [`StudyDb::open`] truncates away).

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{SearchError, TrialRecord, TrialState};

/// Result of replaying a log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replay {
    /// Every event, in file order.
    pub events: Vec<TrialRecord>,
    /// Latest event per trial.
    pub trials: BTreeMap<u64, TrialRecord>,
    /// Bytes of a partial trailing line that were ignored.
    pub discarded_bytes: usize,
}

impl Replay {
    pub fn next_trial_id(&self) -> u64 {
        self.trials.keys().next_back().map_or(0, |id| id + 1)
    }

    pub fn complete(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.values().filter(|t| t.state == TrialState::Complete)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SearchError + '_ {
    move |source| SearchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn replay_bytes(path: &Path, bytes: &[u8]) -> Result<(Replay, usize), SearchError> {
    let valid_len = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let mut replay = Replay {
        discarded_bytes: bytes.len() - valid_len,
        ..Default::default()
    };
    let fail = |line: usize, reason: String| SearchError::Replay {
        path: path.to_path_buf(),
        line,
        reason,
    };
    for (i, raw) in bytes[..valid_len].split(|b| *b == b'\n').enumerate() {
        let line = i + 1;
        let text = std::str::from_utf8(raw).map_err(|e| fail(line, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord = serde_json::from_str(text).map_err(|e| fail(line, e.to_string()))?;
        rec.check().map_err(|r| fail(line, r))?;
        match replay.trials.get(&rec.trial_id) {
            Some(prev) if prev.state != TrialState::Running => {
                return Err(fail(line, format!("trial {} is already finalized", rec.trial_id)));
            }
            Some(prev) if prev.params != rec.params => {
                return Err(fail(line, format!("trial {} changed its parameters", rec.trial_id)));
            }
            Some(_) => {}
            None if rec.trial_id < replay.next_trial_id() => {
                return Err(fail(line, format!("trial id {} is out of order", rec.trial_id)));
            }
            None => {}
        }
        replay.trials.insert(rec.trial_id, rec.clone());
        replay.events.push(rec);
    }
    Ok((replay, valid_len))
}

/// Replays the log at `path` without touching it. A missing file is an empty study.
pub fn read_log(path: impl AsRef<Path>) -> Result<Replay, SearchError> {
    let path = path.as_ref();
    match std::fs::read(path) {
        Ok(bytes) => Ok(replay_bytes(path, &bytes)?.0),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Replay::default()),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// The log with timestamps removed, one canonical JSON object per line.
/// Two runs of the same deterministic study normalize to the same text.
pub fn normalize_log(path: impl AsRef<Path>) -> Result<String, SearchError> {
    let replay = read_log(path)?;
    let mut out = String::new();
    for rec in &replay.events {
        let mut v = serde_json::to_value(rec).expect("records serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("started_at");
            obj.remove("finished_at");
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    Ok(out)
}

/// Single writer of a study log.
#[derive(Debug)]
pub struct StudyDb {
    path: PathBuf,
    file: File,
}

impl StudyDb {
    /// Opens or creates the log, drops a partial trailing line and replays the rest.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Replay), SearchError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(&path))?;
        }
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        let (replay, valid_len) = replay_bytes(&path, &bytes)?;
        if valid_len < bytes.len() {
            file.set_len(valid_len as u64).map_err(io_err(&path))?;
            file.sync_all().map_err(io_err(&path))?;
        }
        Ok((Self { path, file }, replay))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one event and syncs it before returning.
    pub fn append(&mut self, rec: &TrialRecord) -> Result<(), SearchError> {
        let mut line = serde_json::to_vec(rec).expect("records serialize");
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

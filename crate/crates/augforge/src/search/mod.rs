//! Active/inactive search over the augmentation catalog.
//!
//! Each catalog kind becomes one binary parameter. A [`Study`] suggests
//! assignments (uniform during startup, then tree-structured Parzen
//! estimation), runs an [`Objective`] on the resulting chain and appends every
//! event to a JSON-lines log that can be replayed after a crash.

mod db;
mod study;
mod tpe;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentationKind, ChainConfig};

pub use self::db::{normalize_log, read_log, Replay, StudyDb};
pub use self::study::{run_study, Evaluation, Objective, Study, TrialContext};
pub use self::tpe::{gamma, CategoricalEstimator};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
    #[error("study log {path}, line {line}: {reason}")]
    Replay { path: PathBuf, line: usize, reason: String },
    #[error("study log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("study aborted: {failed} of {n_trials} trials failed (last reason: {last_reason})")]
    TooManyFailures {
        failed: usize,
        n_trials: usize,
        last_reason: String,
    },
}

/// The two values of every search parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Active,
    Inactive,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Active, Category::Inactive];

    pub fn from_bool(active: bool) -> Self {
        if active {
            Category::Active
        } else {
            Category::Inactive
        }
    }

    pub fn is_active(self) -> bool {
        self == Category::Active
    }
}

/// Parameter name to category, as stored in the study log.
pub type Assignment = BTreeMap<String, Category>;

/// Ordered list of binary parameters, one per catalog kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    kinds: Vec<AugmentationKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceJson {
    params: Vec<String>,
}

impl SearchSpace {
    /// Every catalog kind, in canonical order.
    pub fn full() -> Self {
        Self {
            kinds: AugmentationKind::ALL.to_vec(),
        }
    }

    pub fn new(kinds: Vec<AugmentationKind>) -> Result<Self, SearchError> {
        if kinds.is_empty() {
            return Err(SearchError::Config("search space is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for k in &kinds {
            if !seen.insert(*k) {
                return Err(SearchError::Config(format!("duplicate search parameter {k}")));
            }
        }
        Ok(Self { kinds })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, SearchError> {
        let kinds = names
            .iter()
            .map(|n| {
                AugmentationKind::from_name(n.as_ref())
                    .ok_or_else(|| SearchError::Config(format!("unknown augmentation {:?}", n.as_ref())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(kinds)
    }

    /// Parses `{"params": ["affine", ...]}`.
    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        let doc: SpaceJson =
            serde_json::from_str(text).map_err(|e| SearchError::Config(format!("search space: {e}")))?;
        Self::from_names(&doc.params)
    }

    pub fn kinds(&self) -> &[AugmentationKind] {
        &self.kinds
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.kinds.iter().map(|k| k.name())
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Builds the assignment from active flags in space order.
    pub fn assignment(&self, active: &[bool]) -> Assignment {
        assert_eq!(active.len(), self.len());
        self.names()
            .zip(active)
            .map(|(n, a)| (n.to_string(), Category::from_bool(*a)))
            .collect()
    }

    /// Active flags in space order; errors if the assignment does not cover exactly this space.
    pub fn flags(&self, a: &Assignment) -> Result<Vec<bool>, SearchError> {
        if a.len() != self.len() {
            return Err(SearchError::Config(format!(
                "assignment has {} parameters, space has {}",
                a.len(),
                self.len()
            )));
        }
        self.names()
            .map(|n| {
                a.get(n)
                    .map(|c| c.is_active())
                    .ok_or_else(|| SearchError::Config(format!("assignment lacks parameter {n}")))
            })
            .collect()
    }

    /// Chain with the assignment's active kinds switched on; kinds outside the space stay inactive.
    pub fn chain(&self, a: &Assignment) -> Result<ChainConfig, SearchError> {
        let flags = self.flags(a)?;
        let active = self.kinds.iter().zip(flags).filter(|(_, f)| *f).map(|(k, _)| *k);
        Ok(ChainConfig::with_active(active))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub n_trials: usize,
    pub n_startup_trials: usize,
    pub n_candidates: usize,
    pub prior_weight: f64,
    pub study_seed: u64,
    pub parallelism: usize,
    /// Redirect suggestions that repeat a complete or running assignment.
    pub avoid_duplicates: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            n_trials: 400,
            n_startup_trials: 64,
            n_candidates: 24,
            prior_weight: 1.0,
            study_seed: 0,
            parallelism: 1,
            avoid_duplicates: true,
        }
    }
}

impl SearchSettings {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.n_startup_trials == 0 || self.n_startup_trials > self.n_trials {
            return Err(SearchError::Config(format!(
                "need 0 < startup trials ({}) <= trials ({})",
                self.n_startup_trials, self.n_trials
            )));
        }
        if self.n_candidates == 0 {
            return Err(SearchError::Config("n_candidates must be at least 1".into()));
        }
        if !(self.prior_weight.is_finite() && self.prior_weight > 0.0) {
            return Err(SearchError::Config(format!("prior_weight must be positive, got {}", self.prior_weight)));
        }
        if self.parallelism == 0 {
            return Err(SearchError::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialState {
    Running,
    Complete,
    Failed,
}

/// One event of the study log. The latest event per `trial_id` is the trial's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub state: TrialState,
    pub params: Assignment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub started_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    /// Why a trial failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Extra numbers reported by the objective, stored verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<serde_json::Value>,
}

impl TrialRecord {
    pub fn active_count(&self) -> usize {
        self.params.values().filter(|c| c.is_active()).count()
    }

    fn check(&self) -> Result<(), String> {
        match (self.state, self.value) {
            (TrialState::Complete, Some(v)) if v.is_finite() => Ok(()),
            (TrialState::Complete, _) => Err("complete trial without a finite value".into()),
            (_, Some(_)) => Err(format!("{:?} trial carries a value", self.state)),
            _ => Ok(()),
        }
    }
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

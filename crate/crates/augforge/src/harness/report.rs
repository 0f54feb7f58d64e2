use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::search::{read_log, Assignment, Replay, SearchError, TrialState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub trial_id: u64,
    pub active_count: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTrial {
    pub trial_id: u64,
    pub value: f64,
    pub active_count: usize,
    pub params: Assignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub active_count: usize,
    pub n: usize,
    pub mean: f64,
    pub max: f64,
}

/// Objective against number of active augmentations, one point per complete trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub n_trials: usize,
    pub n_complete: usize,
    pub n_failed: usize,
    pub points: Vec<ReportPoint>,
    pub best: Option<BestTrial>,
    pub by_count: Vec<CountSummary>,
}

impl StudyReport {
    pub fn from_replay(replay: &Replay) -> Self {
        let points: Vec<ReportPoint> = replay
            .complete()
            .map(|t| ReportPoint {
                trial_id: t.trial_id,
                active_count: t.active_count(),
                value: t.value.expect("complete trials have values"),
            })
            .collect();
        // highest value, earliest trial on ties
        let best = replay
            .complete()
            .fold(None::<&crate::search::TrialRecord>, |best, t| match best {
                Some(b) if b.value >= t.value => Some(b),
                _ => Some(t),
            })
            .map(|t| BestTrial {
                trial_id: t.trial_id,
                value: t.value.expect("complete trials have values"),
                active_count: t.active_count(),
                params: t.params.clone(),
            });
        let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for p in &points {
            groups.entry(p.active_count).or_default().push(p.value);
        }
        let by_count = groups
            .into_iter()
            .map(|(active_count, vs)| CountSummary {
                active_count,
                n: vs.len(),
                mean: vs.iter().sum::<f64>() / vs.len() as f64,
                max: vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
            .collect();
        Self {
            n_trials: replay.trials.len(),
            n_complete: points.len(),
            n_failed: replay.trials.values().filter(|t| t.state == TrialState::Failed).count(),
            points,
            best,
            by_count,
        }
    }
}

/// Reads a study log and summarizes it; a missing file is an empty study.
pub fn report_study(db: impl AsRef<Path>) -> Result<StudyReport, SearchError> {
    Ok(StudyReport::from_replay(&read_log(db)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{Category, TrialRecord};

    fn rec(id: u64, state: TrialState, active: usize, value: Option<f64>) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            state,
            params: (0..30)
                .map(|i| (format!("p{i:02}"), Category::from_bool(i < active)))
                .collect(),
            value,
            started_at: "t".into(),
            finished_at: None,
            reason: None,
            metrics: None,
        }
    }

    fn replay(recs: Vec<TrialRecord>) -> Replay {
        Replay {
            trials: recs.iter().map(|r| (r.trial_id, r.clone())).collect(),
            events: recs,
            discarded_bytes: 0,
        }
    }

    #[test]
    fn counts_active_flags() {
        let r = StudyReport::from_replay(&replay(vec![rec(0, TrialState::Complete, 18, Some(0.4))]));
        assert_eq!(r.points[0].active_count, 18);
        assert_eq!(r.best.unwrap().trial_id, 0);
    }

    #[test]
    fn empty_study() {
        let dir = tempfile::tempdir().unwrap();
        let r = report_study(dir.path().join("none.jsonl")).unwrap();
        assert_eq!((r.n_trials, r.n_complete), (0, 0));
        assert!(r.best.is_none() && r.points.is_empty());
    }

    #[test]
    fn failed_trials_are_excluded() {
        let r = StudyReport::from_replay(&replay(vec![
            rec(0, TrialState::Failed, 3, None),
            rec(1, TrialState::Failed, 4, None),
        ]));
        assert_eq!((r.n_trials, r.n_complete, r.n_failed), (2, 0, 2));
    }

    #[test]
    fn groups_by_count() {
        let r = StudyReport::from_replay(&replay(vec![
            rec(0, TrialState::Complete, 2, Some(0.2)),
            rec(1, TrialState::Complete, 2, Some(0.6)),
            rec(2, TrialState::Complete, 5, Some(0.6)),
        ]));
        assert_eq!(r.by_count.len(), 2);
        assert!((r.by_count[0].mean - 0.4).abs() < 1e-12);
        assert_eq!(r.by_count[0].max, 0.6);
        assert_eq!(r.best.unwrap().trial_id, 1);
    }
}

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Mutex;

use serde_json::Value;

use crate::augment::ChainConfig;
use crate::imaging::derive_stream;

use super::db::StudyDb;
use super::tpe::{sample_tpe, sample_uniform, Observation};
use super::{now, Assignment, SearchError, SearchSettings, SearchSpace, TrialRecord, TrialState};

/// What an objective sees for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialContext {
    pub trial_id: u64,
    /// The study seed; together with `trial_id` it keys every stream of the trial.
    pub seed: u64,
    pub assignment: Assignment,
    pub chain: ChainConfig,
}

/// A successful objective run. Larger values are better.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub metrics: Option<Value>,
}

impl Evaluation {
    pub fn value(value: f64) -> Self {
        Self { value, metrics: None }
    }
}

/// Scores a chain. An `Err` marks the trial failed with that reason.
pub trait Objective: Sync {
    fn evaluate(&self, ctx: &TrialContext) -> Result<Evaluation, String>;
}

impl<F> Objective for F
where
    F: Fn(&TrialContext) -> Result<Evaluation, String> + Sync,
{
    fn evaluate(&self, ctx: &TrialContext) -> Result<Evaluation, String> {
        self(ctx)
    }
}

/// Trial log plus sampler. Every state change goes to the log first.
#[derive(Debug)]
pub struct Study {
    settings: SearchSettings,
    space: SearchSpace,
    db: Option<StudyDb>,
    trials: BTreeMap<u64, TrialRecord>,
    next_id: u64,
}

impl Study {
    /// A study that keeps its log in memory only.
    pub fn in_memory(settings: SearchSettings, space: SearchSpace) -> Result<Self, SearchError> {
        settings.validate()?;
        Ok(Self {
            settings,
            space,
            db: None,
            trials: BTreeMap::new(),
            next_id: 0,
        })
    }

    /// Opens (or creates) the log at `path` and resumes from it. Trials left
    /// running by an interrupted process are marked failed with reason `interrupted`.
    pub fn open(path: impl AsRef<Path>, settings: SearchSettings, space: SearchSpace) -> Result<Self, SearchError> {
        settings.validate()?;
        let (db, replay) = StudyDb::open(path)?;
        for t in replay.trials.values() {
            space.flags(&t.params).map_err(|e| {
                SearchError::Config(format!("trial {} in the log does not fit the search space: {e}", t.trial_id))
            })?;
        }
        let mut study = Self {
            settings,
            space,
            db: Some(db),
            next_id: replay.next_trial_id(),
            trials: replay.trials,
        };
        let stale: Vec<u64> = study
            .trials
            .values()
            .filter(|t| t.state == TrialState::Running)
            .map(|t| t.trial_id)
            .collect();
        for id in stale {
            study.fail(id, "interrupted")?;
        }
        Ok(study)
    }

    pub fn settings(&self) -> &SearchSettings {
        &self.settings
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    /// Latest record of every trial, by id.
    pub fn trials(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.values()
    }

    pub fn trial(&self, id: u64) -> Option<&TrialRecord> {
        self.trials.get(&id)
    }

    pub fn count(&self, state: TrialState) -> usize {
        self.trials.values().filter(|t| t.state == state).count()
    }

    pub fn next_trial_id(&self) -> u64 {
        self.next_id
    }

    /// Highest value among complete trials; ties go to the earlier trial.
    pub fn best(&self) -> Option<&TrialRecord> {
        self.trials
            .values()
            .filter(|t| t.state == TrialState::Complete)
            .fold(None, |best: Option<&TrialRecord>, t| match best {
                Some(b) if b.value >= t.value => Some(b),
                _ => Some(t),
            })
    }

    /// The assignment for `trial_id` given the current log. Running and failed
    /// trials are invisible to the estimator; with `avoid_duplicates` the
    /// assignments of complete and running trials are not repeated.
    pub fn suggest(&self, trial_id: u64) -> Assignment {
        let mut rng = derive_stream(self.settings.study_seed, trial_id, u64::MAX, 0);
        let d = self.space.len();
        let complete: Vec<(u64, f64, Vec<bool>)> = self
            .trials
            .values()
            .filter(|t| t.state == TrialState::Complete)
            .map(|t| {
                let flags = self.space.flags(&t.params).expect("log checked against space");
                (t.trial_id, t.value.expect("complete trials have values"), flags)
            })
            .collect();
        let flags = if complete.len() < self.settings.n_startup_trials {
            sample_uniform(d, &mut rng)
        } else {
            let obs: Vec<Observation<'_>> = complete
                .iter()
                .map(|(id, v, f)| Observation {
                    trial_id: *id,
                    value: *v,
                    flags: f,
                })
                .collect();
            let seen: Option<HashSet<Vec<bool>>> = self.settings.avoid_duplicates.then(|| {
                self.trials
                    .values()
                    .filter(|t| t.state != TrialState::Failed)
                    .map(|t| self.space.flags(&t.params).expect("log checked against space"))
                    .collect()
            });
            sample_tpe(d, &obs, &self.settings, seen.as_ref(), &mut rng)
        };
        self.space.assignment(&flags)
    }

    fn push(&mut self, rec: TrialRecord) -> Result<(), SearchError> {
        if let Some(db) = &mut self.db {
            db.append(&rec)?;
        }
        self.trials.insert(rec.trial_id, rec);
        Ok(())
    }

    /// Suggests the next trial and logs it as running.
    pub fn start_trial(&mut self) -> Result<TrialContext, SearchError> {
        let id = self.next_id;
        let assignment = self.suggest(id);
        let chain = self.space.chain(&assignment)?;
        self.push(TrialRecord {
            trial_id: id,
            state: TrialState::Running,
            params: assignment.clone(),
            value: None,
            started_at: now(),
            finished_at: None,
            reason: None,
            metrics: None,
        })?;
        self.next_id += 1;
        Ok(TrialContext {
            trial_id: id,
            seed: self.settings.study_seed,
            assignment,
            chain,
        })
    }

    fn running(&self, id: u64) -> Result<&TrialRecord, SearchError> {
        match self.trials.get(&id) {
            Some(t) if t.state == TrialState::Running => Ok(t),
            Some(t) => Err(SearchError::State(format!("trial {id} is already {:?}", t.state))),
            None => Err(SearchError::State(format!("unknown trial {id}"))),
        }
    }

    pub fn complete(&mut self, id: u64, eval: Evaluation) -> Result<(), SearchError> {
        if !eval.value.is_finite() {
            return self.fail(id, &format!("non-finite objective {}", eval.value));
        }
        let prev = self.running(id)?;
        let rec = TrialRecord {
            state: TrialState::Complete,
            value: Some(eval.value),
            finished_at: Some(now()),
            metrics: eval.metrics,
            ..prev.clone()
        };
        self.push(rec)
    }

    pub fn fail(&mut self, id: u64, reason: &str) -> Result<(), SearchError> {
        let prev = self.running(id)?;
        let rec = TrialRecord {
            state: TrialState::Failed,
            finished_at: Some(now()),
            reason: Some(reason.to_string()),
            ..prev.clone()
        };
        self.push(rec)
    }

    fn failed_too_often(&self) -> bool {
        2 * self.count(TrialState::Failed) > self.settings.n_trials
    }

    fn last_failure(&self) -> String {
        self.trials
            .values()
            .rev()
            .find_map(|t| t.reason.clone())
            .unwrap_or_default()
    }
}

/// Runs trials until the log holds `n_trials` of them, with up to
/// `parallelism` objective calls in flight. Aborts once more than half of the
/// budget has failed.
pub fn run_study(study: Study, objective: &dyn Objective) -> Result<Study, SearchError> {
    let workers = study.settings.parallelism;
    let n_trials = study.settings.n_trials as u64;
    let shared = Mutex::new((study, None::<SearchError>));

    let worker = || loop {
        let ctx = {
            let mut guard = shared.lock().expect("study lock");
            let (study, err) = &mut *guard;
            if err.is_some() || study.next_id >= n_trials {
                return;
            }
            if study.failed_too_often() {
                *err = Some(SearchError::TooManyFailures {
                    failed: study.count(TrialState::Failed),
                    n_trials: n_trials as usize,
                    last_reason: study.last_failure(),
                });
                return;
            }
            match study.start_trial() {
                Ok(ctx) => ctx,
                Err(e) => {
                    *err = Some(e);
                    return;
                }
            }
        };
        let outcome = objective.evaluate(&ctx);
        let mut guard = shared.lock().expect("study lock");
        let (study, err) = &mut *guard;
        let logged = match outcome {
            Ok(eval) => study.complete(ctx.trial_id, eval),
            Err(reason) => study.fail(ctx.trial_id, &reason),
        };
        if let Err(e) = logged {
            err.get_or_insert(e);
            return;
        }
    };

    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(worker);
            }
        });
    }

    let (study, err) = shared.into_inner().expect("study lock");
    if let Some(e) = err {
        return Err(e);
    }
    if study.failed_too_often() {
        return Err(SearchError::TooManyFailures {
            failed: study.count(TrialState::Failed),
            n_trials: n_trials as usize,
            last_reason: study.last_failure(),
        });
    }
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{normalize_log, Category};

    fn space() -> SearchSpace {
        SearchSpace::from_names(&["fog", "snow", "invert", "affine"]).unwrap()
    }

    fn settings(n: usize, startup: usize) -> SearchSettings {
        SearchSettings {
            n_trials: n,
            n_startup_trials: startup,
            study_seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn constant_objective_completes_everything() {
        let study = Study::in_memory(settings(20, 5), space()).unwrap();
        let obj = |_: &TrialContext| Ok(Evaluation::value(0.5));
        let study = run_study(study, &obj).unwrap();
        assert_eq!(study.count(TrialState::Complete), 20);
        assert_eq!(study.best().unwrap().value, Some(0.5));
        assert_eq!(study.best().unwrap().trial_id, 0);
    }

    fn distinct_after_startup(avoid: bool) -> usize {
        let s = SearchSettings {
            avoid_duplicates: avoid,
            ..settings(16, 4)
        };
        // additive, so the plain sampler settles on one assignment
        let obj = |c: &TrialContext| Ok(Evaluation::value(c.chain.active_count() as f64));
        let study = run_study(Study::in_memory(s, space()).unwrap(), &obj).unwrap();
        let set: HashSet<Vec<bool>> = study
            .trials()
            .skip(4)
            .map(|t| t.params.values().map(|c| c.is_active()).collect())
            .collect();
        set.len()
    }

    #[test]
    fn duplicates_are_redirected() {
        assert_eq!(distinct_after_startup(true), 12);
        assert!(distinct_after_startup(false) < 12);
    }

    #[test]
    fn startup_draws_are_fair_coins() {
        let study = Study::in_memory(settings(2000, 2000), space()).unwrap();
        let active = (0..2000u64)
            .map(|id| study.suggest(id).values().filter(|c| **c == Category::Active).count())
            .sum::<usize>();
        let frac = active as f64 / 8000.0;
        assert!((frac - 0.5).abs() < 0.03, "{frac}");
    }

    #[test]
    fn failures_are_logged_and_excluded() {
        let study = Study::in_memory(settings(10, 2), space()).unwrap();
        let obj = |c: &TrialContext| {
            if c.trial_id.is_multiple_of(3) {
                Err("boom".to_string())
            } else {
                Ok(Evaluation::value(c.chain.active_count() as f64))
            }
        };
        let study = run_study(study, &obj).unwrap();
        assert_eq!(study.count(TrialState::Failed), 4);
        assert_eq!(study.trial(0).unwrap().reason.as_deref(), Some("boom"));
    }

    #[test]
    fn mostly_failing_objective_aborts() {
        let study = Study::in_memory(settings(10, 2), space()).unwrap();
        let obj = |_: &TrialContext| Err::<Evaluation, _>("nope".to_string());
        match run_study(study, &obj) {
            Err(SearchError::TooManyFailures { failed, .. }) => assert_eq!(failed, 6),
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_completion_is_state_error() {
        let mut study = Study::in_memory(settings(10, 2), space()).unwrap();
        let ctx = study.start_trial().unwrap();
        study.complete(ctx.trial_id, Evaluation::value(1.0)).unwrap();
        assert!(matches!(
            study.complete(ctx.trial_id, Evaluation::value(1.0)),
            Err(SearchError::State(_))
        ));
    }

    #[test]
    fn reopen_marks_running_as_interrupted_and_continues_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        {
            let mut study = Study::open(&path, settings(10, 2), space()).unwrap();
            let a = study.start_trial().unwrap();
            study.complete(a.trial_id, Evaluation::value(0.2)).unwrap();
            study.start_trial().unwrap();
        }
        let study = Study::open(&path, settings(10, 2), space()).unwrap();
        assert_eq!(study.trial(1).unwrap().state, TrialState::Failed);
        assert_eq!(study.trial(1).unwrap().reason.as_deref(), Some("interrupted"));
        assert_eq!(study.next_trial_id(), 2);
    }

    #[test]
    fn parallel_runs_fill_the_budget() {
        let mut s = settings(40, 8);
        s.parallelism = 4;
        let study = Study::in_memory(s, space()).unwrap();
        let obj = |c: &TrialContext| Ok(Evaluation::value(c.chain.active_count() as f64));
        let study = run_study(study, &obj).unwrap();
        assert_eq!(study.count(TrialState::Complete), 40);
        let ids: Vec<u64> = study.trials().map(|t| t.trial_id).collect();
        assert_eq!(ids, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn serial_runs_reproduce_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let obj = |c: &TrialContext| Ok(Evaluation::value((c.chain.active_count() as f64).sin()));
        let mut logs = Vec::new();
        for name in ["a.jsonl", "b.jsonl"] {
            let path = dir.path().join(name);
            run_study(Study::open(&path, settings(30, 8), space()).unwrap(), &obj).unwrap();
            logs.push(normalize_log(&path).unwrap());
        }
        assert_eq!(logs[0], logs[1]);
        assert_eq!(logs[0].lines().count(), 60);
    }
}

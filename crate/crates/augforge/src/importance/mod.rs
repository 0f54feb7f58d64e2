//! Functional-ANOVA importance of the search parameters.
//!
//! A random forest is fitted to `(assignment, value)` pairs of a finished
//! study. For every tree the first-order effect of a parameter is the variance
//! of its exact marginal prediction over the uniform binary input space,
//! divided by the variance of the tree. Per-tree fractions are averaged over
//! the forest, and the whole fit is repeated with fresh seeds to report a
//! mean and a spread.

mod forest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::{TrialRecord, TrialState};

pub use self::forest::{fit_forest, Forest, Leaf, Tree};

#[derive(Debug, Error)]
pub enum ImportanceError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestSettings {
    pub n_trees: usize,
    pub max_depth: usize,
    pub n_repeats: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestSettings {
    fn default() -> Self {
        Self {
            n_trees: 64,
            max_depth: 64,
            n_repeats: 8,
            min_samples_leaf: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestSettings {
    pub fn validate(&self) -> Result<(), ImportanceError> {
        if self.n_trees == 0 || self.max_depth == 0 || self.n_repeats == 0 || self.min_samples_leaf == 0 {
            return Err(ImportanceError::Config(
                "n_trees, max_depth, n_repeats and min_samples_leaf must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Binary design matrix with one objective value per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub rows: Vec<(Vec<bool>, f64)>,
}

impl Dataset {
    pub fn new(names: Vec<String>, rows: Vec<(Vec<bool>, f64)>) -> Result<Self, ImportanceError> {
        if names.is_empty() {
            return Err(ImportanceError::Config("no parameters".into()));
        }
        for (i, (x, y)) in rows.iter().enumerate() {
            if x.len() != names.len() {
                return Err(ImportanceError::Config(format!(
                    "row {i} has {} features, expected {}",
                    x.len(),
                    names.len()
                )));
            }
            if !y.is_finite() {
                return Err(ImportanceError::Config(format!("row {i} has non-finite value {y}")));
            }
        }
        Ok(Self { names, rows })
    }

    /// Complete trials of a study; parameter names come from the first record.
    pub fn from_trials<'a>(trials: impl IntoIterator<Item = &'a TrialRecord>) -> Result<Self, ImportanceError> {
        let complete: Vec<&TrialRecord> = trials
            .into_iter()
            .filter(|t| t.state == TrialState::Complete)
            .collect();
        let Some(first) = complete.first() else {
            return Err(ImportanceError::InsufficientData("study has no complete trials".into()));
        };
        let names: Vec<String> = first.params.keys().cloned().collect();
        let rows = complete
            .iter()
            .map(|t| {
                if t.params.len() != names.len() || !names.iter().all(|n| t.params.contains_key(n)) {
                    return Err(ImportanceError::Config(format!(
                        "trial {} has a different parameter set",
                        t.trial_id
                    )));
                }
                let x = t.params.values().map(|c| c.is_active()).collect();
                Ok((x, t.value.expect("complete trials have values")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(names, rows)
    }

    /// Rows sorted by (features, value), so fits do not depend on input order.
    fn canonical(&self) -> Self {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Self {
            names: self.names.clone(),
            rows,
        }
    }

    fn check_fit(&self) -> Result<(), ImportanceError> {
        if self.rows.len() < 2 {
            return Err(ImportanceError::InsufficientData(format!(
                "need at least 2 trials, have {}",
                self.rows.len()
            )));
        }
        if self.rows.iter().all(|r| r.0 == self.rows[0].0) {
            return Err(ImportanceError::InsufficientData("every trial has the same assignment".into()));
        }
        Ok(())
    }

    /// `max(10, 2 d)`: the smallest study worth analysing.
    pub fn min_trials(&self) -> usize {
        (2 * self.names.len()).max(10)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamImportance {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Sorted by descending mean; ties keep parameter order.
    pub params: Vec<ParamImportance>,
    /// Set when every tree of every repeat was constant.
    pub zero_variance: bool,
}

impl ImportanceReport {
    /// The `n` most important parameters.
    pub fn top(&self, n: usize) -> &[ParamImportance] {
        &self.params[..n.min(self.params.len())]
    }

    pub fn get(&self, name: &str) -> Option<&ParamImportance> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Importances of every repeat, `[repeat][param]`; `None` rows are all-constant forests.
pub fn repeat_importances(data: &Dataset, settings: &ForestSettings) -> Result<Vec<Option<Vec<f64>>>, ImportanceError> {
    (0..settings.n_repeats as u64)
        .map(|r| fit_forest(data, settings, r).map(|f| f.importances()))
        .collect()
}

/// Fits `n_repeats` forests and summarizes mean and population std per parameter.
pub fn analyze(data: &Dataset, settings: &ForestSettings) -> Result<ImportanceReport, ImportanceError> {
    if data.rows.len() < data.min_trials() {
        return Err(ImportanceError::InsufficientData(format!(
            "need at least {} complete trials (max(10, 2 x {} parameters)), have {}",
            data.min_trials(),
            data.names.len(),
            data.rows.len()
        )));
    }
    let reps = repeat_importances(data, settings)?;
    let zero_variance = reps.iter().all(Option::is_none);
    let d = data.names.len();
    let per_repeat: Vec<Vec<f64>> = reps.into_iter().map(|r| r.unwrap_or_else(|| vec![0.0; d])).collect();
    let n = per_repeat.len() as f64;
    let mut params: Vec<ParamImportance> = data
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mean = per_repeat.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = per_repeat.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            ParamImportance {
                name: name.clone(),
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    params.sort_by(|a, b| b.mean.total_cmp(&a.mean));
    Ok(ImportanceReport { params, zero_variance })
}

/// [`analyze`] over the complete trials of a study log.
pub fn analyze_trials<'a>(
    trials: impl IntoIterator<Item = &'a TrialRecord>,
    settings: &ForestSettings,
) -> Result<ImportanceReport, ImportanceError> {
    analyze(&Dataset::from_trials(trials)?, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enumerated(d: usize, reps: usize, f: impl Fn(&[bool]) -> f64) -> Dataset {
        let mut rows = Vec::new();
        for _ in 0..reps {
            for code in 0..(1u32 << d) {
                let x: Vec<bool> = (0..d).map(|j| code >> j & 1 == 1).collect();
                let y = f(&x);
                rows.push((x, y));
            }
        }
        Dataset::new((0..d).map(|j| format!("p{j}")).collect(), rows).unwrap()
    }

    #[test]
    fn single_factor_is_fully_important() {
        // replicated so every cell left after the five noise splits can still split on p2
        let data = enumerated(6, 16, |x| if x[2] { 0.9 } else { 0.1 });
        let report = analyze(&data, &ForestSettings::default()).unwrap();
        assert_eq!(report.params[0].name, "p2");
        assert!((report.params[0].mean - 1.0).abs() < 1e-9, "{:?}", report.params[0]);
        assert!(report.params[1..].iter().all(|p| p.mean < 1e-9));
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let data = enumerated(4, 1, |x| x[0] as u8 as f64 + 0.5 * x[1] as u8 as f64);
        let s = ForestSettings {
            n_repeats: 1,
            ..Default::default()
        };
        assert!(analyze(&data, &s).unwrap().params.iter().all(|p| p.std == 0.0));
    }

    #[test]
    fn constant_objective_raises_flag() {
        let data = enumerated(4, 1, |_| 0.3);
        let r = analyze(&data, &ForestSettings::default()).unwrap();
        assert!(r.zero_variance);
        assert!(r.params.iter().all(|p| p.mean == 0.0));
    }

    #[test]
    fn too_few_trials_names_threshold() {
        let data = enumerated(3, 1, |x| x[0] as u8 as f64);
        match analyze(&data, &ForestSettings::default()) {
            Err(ImportanceError::InsufficientData(msg)) => assert!(msg.contains("10"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn order_invariant() {
        let data = enumerated(4, 2, |x| x[0] as u8 as f64 * 0.3 + (x[1] ^ x[3]) as u8 as f64);
        let mut shuffled = data.clone();
        shuffled.rows.reverse();
        shuffled.rows.rotate_left(5);
        let s = ForestSettings::default();
        assert_eq!(analyze(&data, &s).unwrap(), analyze(&shuffled, &s).unwrap());
    }

    #[test]
    fn per_repeat_sums_stay_below_one() {
        let data = enumerated(5, 1, |x| (x[0] && x[1]) as u8 as f64 + x[2] as u8 as f64 * 0.4);
        for r in repeat_importances(&data, &ForestSettings::default()).unwrap() {
            let r = r.unwrap();
            assert!(r.iter().sum::<f64>() <= 1.0 + 1e-9);
            assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

use std::path::PathBuf;
use std::time::Duration;

use serde_json::{json, Value};

use crate::eval::{evaluate, DetectionSet};
use crate::imaging::derive_stream;
use crate::search::{Evaluation, Objective, SearchSpace, TrialContext};
use crate::subprocess::{run_shell, RunError};

use super::dataset::{augment_dataset, DatasetManifest};

/// Stream slot of the surrogate's noise term within a trial.
const NOISE_SLOT: u64 = u64::MAX - 1;

/// Closed-form stand-in for detector training:
/// `logistic(sum w_i x_i + sum v_ij x_i x_j + eps)` over the active flags `x`
/// of the search space.
///
/// Main effects `w_i ~ U(-1, 1)`; `d` distinct pairs `(i, j)` get interaction
/// weights `v_ij ~ U(-2, 2)`; all drawn from `weights_seed`. The noise
/// `eps ~ N(0, noise)` comes from the trial's own stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    space: SearchSpace,
    noise: f64,
    weights: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Surrogate {
    pub fn new(space: SearchSpace, weights_seed: u64, noise: f64) -> Self {
        let d = space.len();
        let mut rng = derive_stream(weights_seed, 0, 0, 0);
        let weights = (0..d).map(|_| rng.range(-1.0, 1.0)).collect();
        let mut all: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
        for i in (1..all.len()).rev() {
            all.swap(i, rng.index(i + 1));
        }
        let pairs = all
            .into_iter()
            .take(d)
            .map(|(i, j)| (i, j, rng.range(-2.0, 2.0)))
            .collect();
        Self {
            space,
            noise,
            weights,
            pairs,
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    /// Noise-free value of active flags given in space order.
    pub fn noiseless(&self, x: &[bool]) -> f64 {
        self.value_with(x, 0.0)
    }

    fn value_with(&self, x: &[bool], eps: f64) -> f64 {
        let f = |b: bool| b as u8 as f64;
        let main: f64 = self.weights.iter().zip(x).map(|(w, b)| w * f(*b)).sum();
        let inter: f64 = self.pairs.iter().map(|(i, j, v)| v * f(x[*i] && x[*j])).sum();
        logistic(main + inter + eps)
    }

    /// Value of a trial: the chain's flags over the space plus the trial's noise.
    pub fn value(&self, ctx: &TrialContext) -> f64 {
        let x: Vec<bool> = self.space.kinds().iter().map(|k| ctx.chain.is_active(*k)).collect();
        let eps = if self.noise > 0.0 {
            derive_stream(ctx.seed, ctx.trial_id, NOISE_SLOT, 0).normal(0.0, self.noise)
        } else {
            0.0
        };
        self.value_with(&x, eps)
    }

    /// Every noiseless value, indexed by the bit pattern of the flags (bit `i` = parameter `i`).
    pub fn enumerate(&self) -> Vec<f64> {
        let d = self.space.len();
        assert!(d <= 24, "enumeration of 2^{d} points");
        (0..1u32 << d)
            .map(|code| {
                let x: Vec<bool> = (0..d).map(|i| code >> i & 1 == 1).collect();
                self.noiseless(&x)
            })
            .collect()
    }
}

/// How a trial's chain is turned into a score.
#[derive(Debug, Clone)]
pub enum ObjectiveRunner {
    /// `sh -c command` speaking the JSON request/response protocol.
    External { command: String, timeout: Duration },
    Surrogate(Surrogate),
    /// Augments `dataset` with the trial's chain, runs `command` (same request
    /// plus a `"dataset"` path to the augmented copy) and scores the
    /// detections it prints against the original ground truth by mAP.
    DatasetEval {
        dataset: PathBuf,
        command: String,
        timeout: Duration,
    },
}

fn request(ctx: &TrialContext) -> Value {
    json!({
        "trial_id": ctx.trial_id,
        "seed": ctx.seed,
        "chain": ctx.chain.to_json(),
    })
}

fn run(command: &str, req: &Value, timeout: Duration) -> Result<Vec<u8>, String> {
    let mut input = serde_json::to_vec(req).expect("request serializes");
    input.push(b'\n');
    let out = run_shell(command, input, timeout).map_err(|e| match e {
        RunError::Timeout => "timeout".to_string(),
        other => other.to_string(),
    })?;
    if !out.status.success() {
        let stderr = String::from_utf8_lossy(&out.stderr);
        let tail = stderr.trim().lines().last().unwrap_or("");
        return Err(format!("{}: {tail}", out.status));
    }
    Ok(out.stdout)
}

/// Parses `{"objective": float, "metrics": {...}?}`.
pub fn parse_response(stdout: &[u8]) -> Result<Evaluation, String> {
    let v: Value = serde_json::from_slice(stdout).map_err(|e| format!("malformed output: {e}"))?;
    let value = v
        .get("objective")
        .and_then(Value::as_f64)
        .ok_or_else(|| "malformed output: missing numeric \"objective\"".to_string())?;
    let metrics = match v.get("metrics") {
        None | Some(Value::Null) => None,
        Some(m @ Value::Object(_)) => Some(m.clone()),
        Some(_) => return Err("malformed output: \"metrics\" is not an object".into()),
    };
    Ok(Evaluation { value, metrics })
}

impl Objective for ObjectiveRunner {
    fn evaluate(&self, ctx: &TrialContext) -> Result<Evaluation, String> {
        match self {
            ObjectiveRunner::Surrogate(s) => Ok(Evaluation::value(s.value(ctx))),
            ObjectiveRunner::External { command, timeout } => parse_response(&run(command, &request(ctx), *timeout)?),
            ObjectiveRunner::DatasetEval {
                dataset,
                command,
                timeout,
            } => {
                let manifest = DatasetManifest::load(dataset).map_err(|e| e.to_string())?;
                let work = tempfile::tempdir().map_err(|e| format!("temporary directory: {e}"))?;
                augment_dataset(&manifest, &ctx.chain, work.path(), ctx.seed, &Default::default())
                    .map_err(|e| e.to_string())?;
                let mut req = request(ctx);
                req["dataset"] = json!(work.path());
                let stdout = run(command, &req, *timeout)?;
                let det: DetectionSet =
                    serde_json::from_slice(&stdout).map_err(|e| format!("malformed detections: {e}"))?;
                let report = evaluate(&manifest.ground_truth, &det).map_err(|e| e.to_string())?;
                Ok(Evaluation {
                    value: report.map,
                    metrics: Some(serde_json::to_value(&report).expect("report serializes")),
                })
            }
        }
    }
}

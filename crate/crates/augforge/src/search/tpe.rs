//! Univariate tree-structured Parzen estimator for binary parameters.

use std::collections::HashSet;

use crate::imaging::RngStream;

use super::{Category, SearchSettings};

/// Size of the good set for `n` completed trials: `min(ceil(n / 10), 25)`.
pub fn gamma(n: usize) -> usize {
    n.div_ceil(10).min(25)
}

/// Categorical distribution over {active, inactive} with an additive prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoricalEstimator {
    p_active: f64,
}

impl CategoricalEstimator {
    pub fn from_counts(active: usize, inactive: usize, prior_weight: f64) -> Self {
        let a = active as f64 + prior_weight;
        let total = (active + inactive) as f64 + 2.0 * prior_weight;
        Self { p_active: a / total }
    }

    pub fn prob(&self, c: Category) -> f64 {
        match c {
            Category::Active => self.p_active,
            Category::Inactive => 1.0 - self.p_active,
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Category {
        Category::from_bool(rng.uniform() < self.p_active)
    }
}

/// One completed trial as the estimator sees it.
pub(crate) struct Observation<'a> {
    pub trial_id: u64,
    pub value: f64,
    pub flags: &'a [bool],
}

/// Uniform draw used while the study is still in its startup phase.
pub(crate) fn sample_uniform(d: usize, rng: &mut RngStream) -> Vec<bool> {
    (0..d).map(|_| rng.bernoulli(0.5)).collect()
}

/// Per parameter: split into the top-`gamma` trials (ties to the lower id) and
/// the rest, fit `l` and `g`, draw candidates from `l` and keep the first one
/// with the highest `l / g`.
///
/// With `seen` given, an assignment already in it is not suggested again:
/// the joint candidates (the `k`-th draw of every parameter) are tried next,
/// best summed log-ratio first, then up to [`UNIFORM_RETRIES`] uniform draws.
/// If all of those were seen too, the plain suggestion is returned.
pub(crate) fn sample_tpe(
    d: usize,
    obs: &[Observation<'_>],
    settings: &SearchSettings,
    seen: Option<&HashSet<Vec<bool>>>,
    rng: &mut RngStream,
) -> Vec<bool> {
    let mut order: Vec<&Observation<'_>> = obs.iter().collect();
    order.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.trial_id.cmp(&b.trial_id)));
    let n_good = gamma(order.len());
    let (good, bad) = order.split_at(n_good);

    let mut draws: Vec<Vec<bool>> = vec![Vec::with_capacity(d); settings.n_candidates];
    let mut log_ratio: Vec<[f64; 2]> = Vec::with_capacity(d);
    let chosen: Vec<bool> = (0..d)
        .map(|j| {
            let count = |set: &[&Observation<'_>]| {
                let active = set.iter().filter(|o| o.flags[j]).count();
                (active, set.len() - active)
            };
            let (ga, gi) = count(good);
            let (ba, bi) = count(bad);
            let l = CategoricalEstimator::from_counts(ga, gi, settings.prior_weight);
            let g = CategoricalEstimator::from_counts(ba, bi, settings.prior_weight);
            let ratio = |c: Category| l.prob(c) / g.prob(c);
            log_ratio.push([ratio(Category::Inactive).ln(), ratio(Category::Active).ln()]);
            let mut best: Option<(Category, f64)> = None;
            for draw in draws.iter_mut() {
                let c = l.sample(rng);
                draw.push(c.is_active());
                if best.is_none_or(|(_, r)| ratio(c) > r) {
                    best = Some((c, ratio(c)));
                }
            }
            best.expect("at least one candidate").0.is_active()
        })
        .collect();

    let Some(seen) = seen.filter(|s| s.contains(&chosen)) else {
        return chosen;
    };
    let score = |x: &[bool]| x.iter().zip(&log_ratio).map(|(b, r)| r[*b as usize]).sum::<f64>();
    let mut ranked: Vec<(f64, usize)> = draws.iter().enumerate().map(|(k, x)| (score(x), k)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if let Some(&(_, k)) = ranked.iter().find(|(_, k)| !seen.contains(&draws[*k])) {
        return draws[k].clone();
    }
    for _ in 0..UNIFORM_RETRIES {
        let x = sample_uniform(d, rng);
        if !seen.contains(&x) {
            return x;
        }
    }
    chosen
}

/// Uniform redraws tried when every joint candidate was already evaluated.
pub(crate) const UNIFORM_RETRIES: usize = 64;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::derive_stream;

    #[test]
    fn gamma_rule() {
        assert_eq!(gamma(100), 10);
        assert_eq!(gamma(1), 1);
        assert_eq!(gamma(64), 7);
        assert_eq!(gamma(1000), 25);
    }

    #[test]
    fn estimator_example() {
        let l = CategoricalEstimator::from_counts(9, 1, 1.0);
        let g = CategoricalEstimator::from_counts(10, 80, 1.0);
        assert!((l.prob(Category::Active) - 10.0 / 12.0).abs() < 1e-12);
        assert!((g.prob(Category::Active) - 11.0 / 92.0).abs() < 1e-12);
        let ra = l.prob(Category::Active) / g.prob(Category::Active);
        let ri = l.prob(Category::Inactive) / g.prob(Category::Inactive);
        // (10/12)/(11/92) and (2/12)/(81/92)
        assert!((ra - 6.969_697).abs() < 1e-5 && (ri - 0.189_300).abs() < 1e-5);
        for e in [l, g] {
            assert!((e.prob(Category::Active) + e.prob(Category::Inactive) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prefers_good_category() {
        // parameter 0 decides the value; parameter 1 is noise
        let flags: Vec<Vec<bool>> = (0..100).map(|i| vec![i % 2 == 0, i % 3 == 0]).collect();
        let obs: Vec<_> = flags
            .iter()
            .enumerate()
            .map(|(i, f)| Observation {
                trial_id: i as u64,
                value: if f[0] { 1.0 } else { 0.0 },
                flags: f,
            })
            .collect();
        let s = SearchSettings::default();
        for seed in 0..20 {
            assert!(sample_tpe(2, &obs, &s, None, &mut derive_stream(seed, 0, 0, 0))[0]);
        }
    }

    #[test]
    fn equal_values_still_valid() {
        let flags = vec![vec![true, false, true]; 30];
        let obs: Vec<_> = flags
            .iter()
            .enumerate()
            .map(|(i, f)| Observation {
                trial_id: i as u64,
                value: 0.5,
                flags: f,
            })
            .collect();
        let out = sample_tpe(3, &obs, &SearchSettings::default(), None, &mut derive_stream(0, 0, 0, 0));
        assert_eq!(out.len(), 3);
    }
}

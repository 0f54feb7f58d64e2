//! Regression forest over binary features with exact marginals under the
//! uniform input distribution.

use rayon::prelude::*;

use crate::imaging::{derive_stream, RngStream};

use super::{Dataset, ForestSettings, ImportanceError};

/// Reductions at or below this are treated as no split.
const MIN_REDUCTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, inactive: usize, active: usize },
}

/// One regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    n_features: usize,
}

/// A leaf cell: the constraint per feature (`None` = free) and the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub constraints: Vec<Option<bool>>,
    pub value: f64,
}

impl Tree {
    pub fn predict(&self, x: &[bool]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    inactive,
                    active,
                } => i = if x[feature] { active } else { inactive },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { inactive, active, .. } => 1 + walk(nodes, inactive).max(walk(nodes, active)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> Vec<Leaf> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, vec![None; self.n_features])];
        while let Some((i, cons)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf(value) => out.push(Leaf {
                    constraints: cons,
                    value,
                }),
                Node::Split {
                    feature,
                    inactive,
                    active,
                } => {
                    let mut a = cons.clone();
                    a[feature] = Some(true);
                    let mut b = cons;
                    b[feature] = Some(false);
                    stack.push((active, a));
                    stack.push((inactive, b));
                }
            }
        }
        out
    }

    /// Mean and variance of the tree's prediction over uniform binary inputs.
    pub fn moments(&self) -> (f64, f64) {
        let (mut m1, mut m2) = (0.0, 0.0);
        for leaf in self.leaves() {
            let p = cell_probability(&leaf.constraints);
            m1 += p * leaf.value;
            m2 += p * leaf.value * leaf.value;
        }
        (m1, (m2 - m1 * m1).max(0.0))
    }

    /// Average prediction with feature `j` clamped to `v` and every other feature uniform.
    pub fn marginal(&self, j: usize, v: bool) -> f64 {
        self.leaves()
            .iter()
            .filter(|l| l.constraints[j].is_none_or(|c| c == v))
            .map(|l| {
                let free_j = l.constraints[j].is_none();
                // probability of the cell's other constraints
                let p = cell_probability(&l.constraints) * if free_j { 1.0 } else { 2.0 };
                p * l.value
            })
            .sum()
    }

    /// First-order variance fraction of feature `j`; `None` for a constant tree.
    pub fn importance(&self, j: usize) -> Option<f64> {
        let (mean, var) = self.moments();
        if var <= 1e-14 * (1.0 + mean * mean) {
            return None;
        }
        let half = (self.marginal(j, false) - self.marginal(j, true)) / 2.0;
        Some((half * half / var).clamp(0.0, 1.0))
    }
}

fn cell_probability(cons: &[Option<bool>]) -> f64 {
    0.5f64.powi(cons.iter().filter(|c| c.is_some()).count() as i32)
}

struct Grower<'a> {
    data: &'a Dataset,
    settings: &'a ForestSettings,
    max_features: usize,
    nodes: Vec<Node>,
}

fn sse(values: impl Iterator<Item = f64> + Clone) -> (f64, usize) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0.0, 0);
    }
    let mean = sum / n as f64;
    (values.map(|v| (v - mean).powi(2)).sum(), n)
}

impl Grower<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mean = idx.iter().map(|&i| self.data.rows[i].1).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        self.nodes.len() - 1
    }

    /// Best split over a shuffled feature order. The first `max_features`
    /// features are always examined; later ones only until a valid split exists.
    fn best_split(&self, idx: &[usize], rng: &mut RngStream) -> Option<usize> {
        let rows = &self.data.rows;
        let (parent, _) = sse(idx.iter().map(|&i| rows[i].1));
        let d = self.data.names.len();
        let mut order: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            order.swap(i, rng.index(i + 1));
        }
        let mut best: Option<(usize, f64)> = None;
        for (seen, &j) in order.iter().enumerate() {
            if seen >= self.max_features && best.is_some() {
                break;
            }
            let on = idx.iter().filter(|&&i| rows[i].0[j]).map(|&i| rows[i].1);
            let off = idx.iter().filter(|&&i| !rows[i].0[j]).map(|&i| rows[i].1);
            let (s_on, n_on) = sse(on);
            let (s_off, n_off) = sse(off);
            if n_on < self.settings.min_samples_leaf || n_off < self.settings.min_samples_leaf {
                continue;
            }
            let gain = parent - s_on - s_off;
            if gain > MIN_REDUCTION && best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best.map(|(j, _)| j)
    }

    fn grow(&mut self, idx: &[usize], depth: usize, rng: &mut RngStream) -> usize {
        if depth >= self.settings.max_depth || idx.len() < 2 * self.settings.min_samples_leaf {
            return self.leaf(idx);
        }
        let Some(j) = self.best_split(idx, rng) else {
            return self.leaf(idx);
        };
        let (on, off): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.data.rows[i].0[j]);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(f64::NAN));
        let inactive = self.grow(&off, depth + 1, rng);
        let active = self.grow(&on, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature: j,
            inactive,
            active,
        };
        slot
    }
}

pub(crate) fn fit_tree(data: &Dataset, settings: &ForestSettings, mut rng: RngStream) -> Tree {
    let n = data.rows.len();
    let idx: Vec<usize> = if settings.bootstrap {
        (0..n).map(|_| rng.index(n)).collect()
    } else {
        (0..n).collect()
    };
    let d = data.names.len();
    let mut g = Grower {
        data,
        settings,
        max_features: (d as f64).sqrt().ceil() as usize,
        nodes: Vec::new(),
    };
    g.grow(&idx, 0, &mut rng);
    Tree {
        nodes: g.nodes,
        n_features: d,
    }
}

/// An ensemble fitted with one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    names: Vec<String>,
    trees: Vec<Tree>,
}

/// Fits `n_trees` trees in parallel. Tree `t` of repeat `r` draws from its own
/// stream, so the result does not depend on thread scheduling.
pub fn fit_forest(data: &Dataset, settings: &ForestSettings, repeat: u64) -> Result<Forest, ImportanceError> {
    settings.validate()?;
    data.check_fit()?;
    let data = data.canonical();
    let trees = (0..settings.n_trees)
        .into_par_iter()
        .map(|t| fit_tree(&data, settings, derive_stream(settings.seed, repeat, t as u64, 0)))
        .collect();
    Ok(Forest {
        names: data.names.clone(),
        trees,
    })
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn predict(&self, x: &[bool]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Per-feature importance averaged over the non-constant trees, or `None`
    /// when every tree is constant.
    pub fn importances(&self) -> Option<Vec<f64>> {
        let d = self.names.len();
        let mut sum = vec![0.0; d];
        let mut used = 0usize;
        for tree in &self.trees {
            let per: Option<Vec<f64>> = (0..d).map(|j| tree.importance(j)).collect();
            if let Some(per) = per {
                used += 1;
                sum.iter_mut().zip(per).for_each(|(s, v)| *s += v);
            }
        }
        (used > 0).then(|| sum.into_iter().map(|s| s / used as f64).collect())
    }

    pub fn importance(&self, name: &str) -> Result<f64, ImportanceError> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ImportanceError::UnknownParam(name.to_string()))?;
        Ok(self.importances().map_or(0.0, |v| v[j]))
    }
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
    fn forced_split_predicts_exactly() {
        let data = enumerated(1, 8, |x| if x[0] { 1.0 } else { 0.0 });
        let forest = fit_forest(&data, &ForestSettings::default(), 0).unwrap();
        for t in forest.trees() {
            assert_eq!(t.predict(&[false]), 0.0);
            assert_eq!(t.predict(&[true]), 1.0);
        }
    }

    #[test]
    fn constant_values_give_stumps() {
        let data = enumerated(3, 2, |_| 0.7);
        let forest = fit_forest(&data, &ForestSettings::default(), 0).unwrap();
        assert!(forest.trees().iter().all(|t| t.depth() == 0));
        assert!(forest.importances().is_none());
    }

    #[test]
    fn marginals_match_brute_force() {
        let data = enumerated(4, 1, |x| x[0] as u8 as f64 * 2.0 + (x[1] && x[2]) as u8 as f64 - x[3] as u8 as f64 * 0.5);
        let forest = fit_forest(&data, &ForestSettings::default(), 3).unwrap();
        for tree in forest.trees() {
            for j in 0..4 {
                for v in [false, true] {
                    let mut acc = 0.0;
                    for code in 0..16u32 {
                        let mut x: Vec<bool> = (0..4).map(|k| code >> k & 1 == 1).collect();
                        if x[j] != v {
                            continue;
                        }
                        x[j] = v;
                        acc += tree.predict(&x) / 8.0;
                    }
                    assert!((tree.marginal(j, v) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn depth_is_bounded() {
        let data = enumerated(5, 2, |x| x.iter().filter(|b| **b).count() as f64);
        let s = ForestSettings {
            max_depth: 2,
            ..Default::default()
        };
        let forest = fit_forest(&data, &s, 0).unwrap();
        assert!(forest.trees().iter().all(|t| t.depth() <= 2));
    }
}

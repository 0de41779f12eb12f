//! Greedy CART: variance reduction for regression, Gini for binary targets.
//!
//! Numeric splits sit at midpoints between consecutive distinct values;
//! categorical splits send a prefix of the levels (ordered by node target
//! mean) left. Ties go to the lower feature index, then the lower threshold.

use serde::{Deserialize, Serialize};

use super::TrainView;
use crate::data::{ColumnKind, Schema, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 3,
            min_samples_leaf: 5,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=30).contains(&self.max_depth) {
            return Err(Error::invalid("max_depth", "must lie in [1, 30]"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SplitRule {
    /// Left when `x <= threshold`.
    Threshold { threshold: f64 },
    /// Left when the level code is in the set.
    Levels { left: Vec<u32> },
}

impl SplitRule {
    pub fn goes_left(&self, x: f64) -> bool {
        match self {
            SplitRule::Threshold { threshold } => x <= *threshold,
            SplitRule::Levels { left } => left.contains(&(x as u32)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
        n: usize,
        /// Mean target (or class-1 share) of the node's training rows.
        value: f64,
        impurity_decrease: f64,
    },
    Leaf {
        n: usize,
        value: f64,
    },
}

impl TreeNode {
    pub fn value(&self) -> f64 {
        match self {
            TreeNode::Split { value, .. } | TreeNode::Leaf { value, .. } => *value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Weighted impurity decrease accumulated per feature (unnormalized).
    pub impurity_decrease: Vec<f64>,
}

/// One satisfied condition on a root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub feature: usize,
    pub condition: String,
    pub went_left: bool,
    pub value_before: f64,
    pub value_after: f64,
}

struct Candidate {
    feature: usize,
    rule: SplitRule,
    gain: f64,
}

/// Sufficient statistics: count, sum, sum of squares.
#[derive(Clone, Copy, Default)]
struct Acc {
    n: f64,
    s: f64,
    ss: f64,
}

impl Acc {
    fn push(&mut self, y: f64) {
        self.n += 1.0;
        self.s += y;
        self.ss += y * y;
    }

    fn minus(self, o: Acc) -> Acc {
        Acc {
            n: self.n - o.n,
            s: self.s - o.s,
            ss: self.ss - o.ss,
        }
    }

    /// n times the node impurity (SSE for regression, n * Gini for binary).
    fn weighted_impurity(&self, task: TaskKind) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        match task {
            TaskKind::Regression => (self.ss - self.s * self.s / self.n).max(0.0),
            TaskKind::Binary => {
                let p = self.s / self.n;
                self.n * 2.0 * p * (1.0 - p)
            }
        }
    }
}

struct Builder<'a> {
    view: &'a TrainView,
    params: TreeParams,
    nodes: Vec<TreeNode>,
    importance: Vec<f64>,
    n_total: f64,
}

fn better(gain: f64, best: Option<&Candidate>) -> bool {
    match best {
        None => true,
        Some(b) => gain > b.gain + 1e-12 * b.gain.abs().max(1e-300),
    }
}

impl Builder<'_> {
    fn acc(&self, rows: &[usize]) -> Acc {
        let mut a = Acc::default();
        for &r in rows {
            a.push(self.view.y[r]);
        }
        a
    }

    fn best_split(&self, rows: &[usize], parent: Acc) -> Option<Candidate> {
        let task = self.view.task;
        let min_leaf = self.params.min_samples_leaf as f64;
        let parent_imp = parent.weighted_impurity(task);
        let mut best: Option<Candidate> = None;
        for (j, info) in self.view.schema.features.iter().enumerate() {
            match info.kind {
                ColumnKind::Numeric => {
                    let mut order: Vec<usize> = rows.to_vec();
                    order.sort_by(|&a, &b| self.view.x.get(a, j).total_cmp(&self.view.x.get(b, j)));
                    let mut left = Acc::default();
                    for w in 0..order.len() - 1 {
                        left.push(self.view.y[order[w]]);
                        let xa = self.view.x.get(order[w], j);
                        let xb = self.view.x.get(order[w + 1], j);
                        if xa == xb || left.n < min_leaf || parent.n - left.n < min_leaf {
                            continue;
                        }
                        let right = parent.minus(left);
                        let gain = (parent_imp
                            - left.weighted_impurity(task)
                            - right.weighted_impurity(task))
                            / parent.n;
                        let threshold = xa + (xb - xa) / 2.0;
                        if better(gain, best.as_ref()) {
                            best = Some(Candidate {
                                feature: j,
                                rule: SplitRule::Threshold { threshold },
                                gain,
                            });
                        }
                    }
                }
                ColumnKind::Categorical => {
                    let n_levels = info.levels.len();
                    let mut per_level = vec![Acc::default(); n_levels];
                    for &r in rows {
                        per_level[self.view.x.get(r, j) as usize].push(self.view.y[r]);
                    }
                    let mut present: Vec<usize> =
                        (0..n_levels).filter(|&k| per_level[k].n > 0.0).collect();
                    present.sort_by(|&a, &b| {
                        let ma = per_level[a].s / per_level[a].n;
                        let mb = per_level[b].s / per_level[b].n;
                        ma.total_cmp(&mb).then(a.cmp(&b))
                    });
                    let mut left = Acc::default();
                    for k in 0..present.len().saturating_sub(1) {
                        let a = per_level[present[k]];
                        left = Acc {
                            n: left.n + a.n,
                            s: left.s + a.s,
                            ss: left.ss + a.ss,
                        };
                        if left.n < min_leaf || parent.n - left.n < min_leaf {
                            continue;
                        }
                        let right = parent.minus(left);
                        let gain = (parent_imp
                            - left.weighted_impurity(task)
                            - right.weighted_impurity(task))
                            / parent.n;
                        if better(gain, best.as_ref()) {
                            let mut set: Vec<u32> = present[..=k].iter().map(|&l| l as u32).collect();
                            set.sort_unstable();
                            best = Some(Candidate {
                                feature: j,
                                rule: SplitRule::Levels { left: set },
                                gain,
                            });
                        }
                    }
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let acc = self.acc(&rows);
        let value = acc.s / acc.n;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            n: rows.len(),
            value,
        });
        let pure = acc.weighted_impurity(self.view.task) <= 1e-14 * acc.n.max(1.0);
        if depth >= self.params.max_depth
            || pure
            || rows.len() < 2 * self.params.min_samples_leaf
        {
            return id;
        }
        let Some(cand) = self.best_split(&rows, acc) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| cand.rule.goes_left(self.view.x.get(i, cand.feature)));
        let decrease = cand.gain.max(0.0) * acc.n / self.n_total;
        self.importance[cand.feature] += decrease;
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: cand.feature,
            rule: cand.rule,
            left,
            right,
            n: rows.len(),
            value,
            impurity_decrease: decrease,
        };
        id
    }
}

impl TreeModel {
    pub fn fit(view: &TrainView, params: &TreeParams) -> Result<TreeModel> {
        params.validate()?;
        let mut b = Builder {
            view,
            params: *params,
            nodes: Vec::new(),
            importance: vec![0.0; view.schema.len()],
            n_total: view.y.len() as f64,
        };
        b.grow((0..view.y.len()).collect(), 0);
        Ok(TreeModel {
            nodes: b.nodes,
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            impurity_decrease: b.importance,
        })
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { .. } => return id,
                TreeNode::Split {
                    feature,
                    rule,
                    left,
                    right,
                    ..
                } => id = if rule.goes_left(row[*feature]) { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.nodes[self.leaf_index(row)].value()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], id: usize) -> usize {
            match &nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Root-to-leaf decision path for one row.
    pub fn decision_path(&self, row: &[f64], schema: &Schema) -> Vec<PathStep> {
        let mut steps = Vec::new();
        let mut id = 0;
        while let TreeNode::Split {
            feature,
            rule,
            left,
            right,
            value,
            ..
        } = &self.nodes[id]
        {
            let f = &schema.features[*feature];
            let went_left = rule.goes_left(row[*feature]);
            let condition = match rule {
                SplitRule::Threshold { threshold } => {
                    format!("{} {} {}", f.name, if went_left { "<=" } else { ">" }, threshold)
                }
                SplitRule::Levels { left: set } => {
                    let names: Vec<&str> = set.iter().map(|&k| f.levels[k as usize].as_str()).collect();
                    format!(
                        "{} {} {{{}}}",
                        f.name,
                        if went_left { "in" } else { "not in" },
                        names.join(", ")
                    )
                }
            };
            let next = if went_left { *left } else { *right };
            steps.push(PathStep {
                feature: *feature,
                condition,
                went_left,
                value_before: *value,
                value_after: self.nodes[next].value(),
            });
            id = next;
        }
        steps
    }
}

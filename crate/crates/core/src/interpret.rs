//! Inherent interpretation of glass models: global importances, effect
//! curves and model form, plus additive local breakdowns.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, Schema, TaskKind};
use crate::error::{Error, Result};
use crate::models::{
    BoostModel, EffectRepresentation, FeatureBins, GamModel, GamTerm, GlmModel, ModelBody,
    PathStep, SplitRule, TrainedModel, TreeModel, TreeNode,
};
use crate::stats;

/// Grid points used to sample smooth curves.
const CURVE_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub name: String,
    /// One feature index for main effects, two for pairs.
    pub features: Vec<usize>,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum EffectCurve {
    /// Sampled smooth curve, linearly interpolated between grid points.
    Continuous { grid: Vec<f64>, values: Vec<f64> },
    /// Piecewise constant: `values[k]` on bin `k` of `edges`
    /// (`edges.len() == values.len() + 1`); a value on an inner edge belongs
    /// to the lower bin.
    Step { edges: Vec<f64>, values: Vec<f64> },
    /// One value per level.
    Levels { levels: Vec<String>, values: Vec<f64> },
}

impl EffectCurve {
    /// Curve value at `x` (a level code for `Levels`); clamps outside the
    /// covered range.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            EffectCurve::Continuous { grid, values } => {
                if grid.len() == 1 || x <= grid[0] {
                    return values[0];
                }
                let last = grid.len() - 1;
                if x >= grid[last] {
                    return values[last];
                }
                let k = grid.partition_point(|g| *g <= x) - 1;
                let t = (x - grid[k]) / (grid[k + 1] - grid[k]);
                values[k] + t * (values[k + 1] - values[k])
            }
            EffectCurve::Step { edges, values } => {
                let inner = &edges[1..edges.len() - 1];
                values[inner.partition_point(|c| *c < x)]
            }
            EffectCurve::Levels { values, .. } => values.get(x as usize).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEffect {
    pub feature: usize,
    pub name: String,
    pub curve: EffectCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSurface {
    pub features: [usize; 2],
    pub names: [String; 2],
    /// Bin edges of the first feature (or level labels for categoricals).
    pub first_axis: Vec<String>,
    pub second_axis: Vec<String>,
    /// Row-major over (first bin, second bin).
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub label: String,
    pub feature: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNodeSummary {
    pub id: usize,
    pub n: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ModelForm {
    Linear { intercept: f64, coefficients: Vec<Coefficient>, link: String },
    Additive { intercept: f64, lambda: f64 },
    Tree { depth: usize, nodes: Vec<TreeNodeSummary> },
    Boosted { intercept: f64, trees: usize, purified: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalInterpretation {
    pub model_kind: String,
    pub task: TaskKind,
    /// Non-negative, sums to 1 unless every entry is 0.
    pub importance: Vec<ImportanceEntry>,
    pub effects: Vec<FeatureEffect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairSurface>,
    pub form: ModelForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub name: String,
    pub features: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalInterpretation {
    pub model_kind: String,
    /// Margin for logistic-link models, raw score otherwise.
    pub scale: String,
    pub base: f64,
    pub contributions: Vec<Contribution>,
    /// `base + Σ contributions`.
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<PathStep>>,
}

pub(crate) fn capability_error() -> Error {
    Error::Capability(
        "interpret not supported for registered models; it works only for inherently interpretable models"
            .into(),
    )
}

fn normalize(entries: &mut [ImportanceEntry]) {
    let total: f64 = entries.iter().map(|e| e.importance).sum();
    if total > 0.0 {
        for e in entries {
            e.importance /= total;
        }
    }
}

fn feature_range(ds: &Dataset, feature: usize) -> (f64, f64) {
    let col = ds.feature_columns().nth(feature).expect("feature index in range");
    let vals = col.present_values(&ds.train_rows());
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn main_name(schema: &Schema, j: usize) -> ImportanceEntry {
    ImportanceEntry { name: schema.features[j].name.clone(), features: vec![j], importance: 0.0 }
}

fn glm_global(m: &GlmModel, schema: &Schema, ds: &Dataset) -> (Vec<ImportanceEntry>, Vec<FeatureEffect>, ModelForm) {
    let mut imp: Vec<ImportanceEntry> = (0..schema.len()).map(|j| main_name(schema, j)).collect();
    for (k, c) in m.design.columns.iter().enumerate() {
        imp[c.feature].importance += m.coefficients[k].abs() * m.design_sds[k];
    }
    let effects = schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let curve = match f.kind {
                ColumnKind::Numeric => {
                    let (lo, hi) = feature_range(ds, j);
                    let grid = linspace(lo, hi, 2);
                    let values = grid.iter().map(|x| glm_contribution(m, j, *x)).collect();
                    EffectCurve::Continuous { grid, values }
                }
                ColumnKind::Categorical => EffectCurve::Levels {
                    levels: f.levels.clone(),
                    values: (0..f.levels.len()).map(|k| glm_contribution(m, j, k as f64)).collect(),
                },
            };
            FeatureEffect { feature: j, name: f.name.clone(), curve }
        })
        .collect();
    let form = ModelForm::Linear {
        intercept: m.intercept,
        coefficients: m
            .design
            .columns
            .iter()
            .zip(&m.coefficients)
            .map(|(c, b)| Coefficient { label: c.label.clone(), feature: c.feature, value: *b })
            .collect(),
        link: format!("{:?}", m.link).to_lowercase(),
    };
    (imp, effects, form)
}

/// `Σ β_k (x_k − mean_k)` over the design columns of feature `j`, for a
/// row whose feature `j` equals `x`.
fn glm_contribution(m: &GlmModel, j: usize, x: f64) -> f64 {
    m.design
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.feature == j)
        .map(|(k, c)| {
            let v = match c.level {
                None => x,
                Some(level) => f64::from(x as u32 == level),
            };
            m.coefficients[k] * (v - m.design_means[k])
        })
        .sum()
}

fn gam_global(m: &GamModel, schema: &Schema, ds: &Dataset) -> (Vec<ImportanceEntry>, Vec<FeatureEffect>, ModelForm) {
    let mut imp: Vec<ImportanceEntry> = (0..schema.len()).map(|j| main_name(schema, j)).collect();
    let mut effects = Vec::new();
    for t in &m.terms {
        let j = t.feature();
        imp[j].importance = t.train_variance();
        let curve = match t {
            GamTerm::Spline { .. } => {
                let (lo, hi) = feature_range(ds, j);
                let grid = linspace(lo, hi, CURVE_POINTS);
                let values = grid.iter().map(|x| t.eval(*x)).collect();
                EffectCurve::Continuous { grid, values }
            }
            GamTerm::Levels { offsets, .. } => EffectCurve::Levels {
                levels: schema.features[j].levels.clone(),
                values: offsets.clone(),
            },
        };
        effects.push(FeatureEffect { feature: j, name: schema.features[j].name.clone(), curve });
    }
    (imp, effects, ModelForm::Additive { intercept: m.intercept, lambda: m.lambda })
}

fn axis_labels(bins: &FeatureBins, schema: &Schema, j: usize) -> Vec<String> {
    match bins {
        FeatureBins::Numeric { edges } => edges.edges().iter().map(|e| e.to_string()).collect(),
        FeatureBins::Categorical { level_bins } => {
            let mut labels = vec![String::new(); level_bins.len()];
            for (level, bin) in level_bins.iter().enumerate() {
                labels[*bin] = schema.features[j].levels[level].clone();
            }
            labels
        }
    }
}

fn effect_curve(rep: &EffectRepresentation, schema: &Schema, j: usize) -> EffectCurve {
    match &rep.bins[j] {
        FeatureBins::Numeric { edges } => EffectCurve::Step { edges: edges.edges(), values: rep.mains[j].clone() },
        FeatureBins::Categorical { level_bins } => EffectCurve::Levels {
            levels: schema.features[j].levels.clone(),
            values: level_bins.iter().map(|b| rep.mains[j][*b]).collect(),
        },
    }
}

fn boost_global(m: &BoostModel, schema: &Schema) -> (Vec<ImportanceEntry>, Vec<FeatureEffect>, Vec<PairSurface>, ModelForm) {
    let rep = &m.effects;
    let mut imp: Vec<ImportanceEntry> = (0..schema.len())
        .map(|j| ImportanceEntry {
            importance: stats::weighted_variance(&rep.mains[j], &rep.main_weights[j]),
            ..main_name(schema, j)
        })
        .collect();
    let effects = (0..schema.len())
        .map(|j| FeatureEffect { feature: j, name: schema.features[j].name.clone(), curve: effect_curve(rep, schema, j) })
        .collect();
    let mut pairs = Vec::new();
    for p in &rep.pairs {
        let [a, b] = p.features;
        let names = [schema.features[a].name.clone(), schema.features[b].name.clone()];
        imp.push(ImportanceEntry {
            name: format!("{} x {}", names[0], names[1]),
            features: vec![a, b],
            importance: stats::weighted_variance(&p.values, &p.weights),
        });
        pairs.push(PairSurface {
            features: p.features,
            names,
            first_axis: axis_labels(&rep.bins[a], schema, a),
            second_axis: axis_labels(&rep.bins[b], schema, b),
            values: p.values.clone(),
        });
    }
    let form = ModelForm::Boosted { intercept: rep.intercept, trees: m.trees.len(), purified: rep.purified };
    (imp, effects, pairs, form)
}

fn tree_global(m: &TreeModel, schema: &Schema) -> (Vec<ImportanceEntry>, Vec<FeatureEffect>, ModelForm) {
    let imp = (0..schema.len())
        .map(|j| ImportanceEntry { importance: m.impurity_decrease[j], ..main_name(schema, j) })
        .collect();
    let nodes = m
        .nodes
        .iter()
        .enumerate()
        .map(|(id, node)| match node {
            TreeNode::Leaf { n, value } => TreeNodeSummary { id, n: *n, value: *value, condition: None, children: None },
            TreeNode::Split { feature, rule, left, right, n, value, .. } => {
                let f = &schema.features[*feature];
                let condition = match rule {
                    SplitRule::Threshold { threshold } => format!("{} <= {}", f.name, threshold),
                    SplitRule::Levels { left } => {
                        let names: Vec<&str> = left.iter().map(|k| f.levels[*k as usize].as_str()).collect();
                        format!("{} in {{{}}}", f.name, names.join(", "))
                    }
                };
                TreeNodeSummary { id, n: *n, value: *value, condition: Some(condition), children: Some([*left, *right]) }
            }
        })
        .collect();
    (imp, Vec::new(), ModelForm::Tree { depth: m.depth(), nodes })
}

/// Global interpretation of a glass model; `ds` supplies train ranges for
/// curve grids.
pub fn interpret_global(model: &TrainedModel, ds: &Dataset) -> Result<GlobalInterpretation> {
    let schema = &model.schema;
    let (mut importance, effects, pairs, form) = match &model.body {
        ModelBody::Glm(m) => {
            let (i, e, f) = glm_global(m, schema, ds);
            (i, e, Vec::new(), f)
        }
        ModelBody::Gam(m) => {
            let (i, e, f) = gam_global(m, schema, ds);
            (i, e, Vec::new(), f)
        }
        ModelBody::Tree(m) => {
            let (i, e, f) = tree_global(m, schema);
            (i, e, Vec::new(), f)
        }
        ModelBody::Xgb1(m) | ModelBody::Xgb2(m) => boost_global(m, schema),
        ModelBody::ScoreTable(_) | ModelBody::Callable(_) => return Err(capability_error()),
    };
    normalize(&mut importance);
    Ok(GlobalInterpretation {
        model_kind: model.kind_name().into(),
        task: model.task(),
        importance,
        effects,
        pairs,
        form,
    })
}

/// Additive breakdown of the model score at one encoded instance.
pub fn interpret_local(model: &TrainedModel, row: &[f64]) -> Result<LocalInterpretation> {
    let schema = &model.schema;
    if row.len() != schema.len() {
        return Err(Error::Schema(format!("instance has {} values, model expects {}", row.len(), schema.len())));
    }
    let named = |j: usize, value: f64| Contribution { name: schema.features[j].name.clone(), features: vec![j], value };
    let mut path = None;
    let (base, contributions) = match &model.body {
        ModelBody::Glm(m) => {
            let base = m.intercept + m.coefficients.iter().zip(&m.design_means).map(|(b, mu)| b * mu).sum::<f64>();
            (base, (0..schema.len()).map(|j| named(j, glm_contribution(m, j, row[j]))).collect())
        }
        ModelBody::Gam(m) => (m.intercept, m.terms.iter().map(|t| named(t.feature(), t.eval(row[t.feature()]))).collect()),
        ModelBody::Xgb1(m) | ModelBody::Xgb2(m) => {
            let rep = &m.effects;
            let mut c: Vec<Contribution> = (0..schema.len()).map(|j| named(j, rep.main_value(j, row[j]))).collect();
            for p in &rep.pairs {
                let [a, b] = p.features;
                c.push(Contribution {
                    name: format!("{} x {}", schema.features[a].name, schema.features[b].name),
                    features: vec![a, b],
                    value: rep.pair_value(p, row),
                });
            }
            (rep.intercept, c)
        }
        ModelBody::Tree(m) => {
            let steps = m.decision_path(row, schema);
            let mut per = vec![0.0; schema.len()];
            for s in &steps {
                per[s.feature] += s.value_after - s.value_before;
            }
            path = Some(steps);
            (m.nodes[0].value(), per.into_iter().enumerate().map(|(j, v)| named(j, v)).collect())
        }
        ModelBody::ScoreTable(_) | ModelBody::Callable(_) => return Err(capability_error()),
    };
    let score = base + contributions.iter().map(|c: &Contribution| c.value).sum::<f64>();
    let scale = match (&model.body, model.task()) {
        (ModelBody::Tree(_), _) | (_, TaskKind::Regression) => "score",
        _ => "margin",
    };
    Ok(LocalInterpretation {
        model_kind: model.kind_name().into(),
        scale: scale.into(),
        base,
        contributions,
        score,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::models::{register_scores, train, Family, ModelSpec, ScoreTable};

    fn ds(task: TaskKind) -> Dataset {
        let n = 120;
        let x1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 13) % 17) as f64 / 4.0).collect();
        let c: Vec<&str> = (0..n).map(|i| ["p", "q", "r"][i % 3]).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let s = x1[i] + 0.5 * x2[i] + (i % 3) as f64;
                match task {
                    TaskKind::Regression => s,
                    TaskKind::Binary => f64::from(s > 2.5),
                }
            })
            .collect();
        Dataset::new(
            "i",
            vec![Column::numeric("x1", x1), Column::numeric("x2", x2), Column::categorical("c", &c), Column::numeric("y", y)],
            "y",
            task,
        )
        .unwrap()
    }

    #[test]
    fn local_additivity_for_every_family() {
        for task in [TaskKind::Regression, TaskKind::Binary] {
            let d = ds(task);
            let frame = d.frame(&d.all_rows());
            for f in Family::ALL {
                let m = train(&d, &ModelSpec::default_for(f), 1).unwrap();
                for row in frame.rows() {
                    let l = interpret_local(&m, row).unwrap();
                    let target = m.margin_row(row).unwrap();
                    assert!((l.score - target).abs() <= 1e-10, "{f} {task}: {} vs {target}", l.score);
                }
                let g = interpret_global(&m, &d).unwrap();
                let total: f64 = g.importance.iter().map(|e| e.importance).sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(g.importance.iter().all(|e| e.importance >= 0.0));
            }
        }
    }

    #[test]
    fn tree_path_conditions_hold() {
        let d = ds(TaskKind::Regression);
        let m = train(&d, &ModelSpec::default_for(Family::Tree), 0).unwrap();
        let ModelBody::Tree(t) = &m.body else { unreachable!() };
        let row = d.frame(&[17]).row(0).to_vec();
        let l = interpret_local(&m, &row).unwrap();
        let mut id = 0;
        for step in l.path.unwrap() {
            let TreeNode::Split { rule, left, right, feature, .. } = &t.nodes[id] else { panic!() };
            assert_eq!(*feature, step.feature);
            assert_eq!(rule.goes_left(row[*feature]), step.went_left);
            id = if step.went_left { *left } else { *right };
        }
        assert!(matches!(t.nodes[id], TreeNode::Leaf { .. }));
    }

    #[test]
    fn registered_models_are_refused() {
        let d = ds(TaskKind::Regression);
        let m = register_scores(&d, ScoreTable::new(&d, vec![0.0; d.n_rows()]).unwrap()).unwrap();
        let err = interpret_global(&m, &d).unwrap_err();
        assert!(err.to_string().contains("interpret not supported"));
        assert!(interpret_local(&m, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn curves_evaluate_between_grid_points() {
        let c = EffectCurve::Continuous { grid: vec![0.0, 1.0, 3.0], values: vec![0.0, 2.0, 0.0] };
        assert_eq!(c.eval(0.5), 1.0);
        assert_eq!(c.eval(2.0), 1.0);
        assert_eq!(c.eval(-1.0), 0.0);
        let s = EffectCurve::Step { edges: vec![0.0, 1.0, 2.0], values: vec![5.0, 7.0] };
        assert_eq!(s.eval(1.0), 5.0);
        assert_eq!(s.eval(1.5), 7.0);
    }
}

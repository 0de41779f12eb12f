//! Analysis requests stored in an experiment and the results they produce.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compare::{model_compare, ComparisonReport};
use crate::data::Dataset;
use crate::diagnose::{run_diagnostic, DiagnosticConfig, DiagnosticResult};
use crate::error::{Error, Result};
use crate::explain::{
    ale, lime_explain, pdp, pfi, shap_explain, AleCurve, LimeExplanation, LimeOptions, PdpResult,
    PfiResult, ShapExplanation, ALE_BINS, PDP_GRID, PFI_REPEATS, SHAP_BACKGROUND,
};
use crate::interpret::{interpret_global, interpret_local, GlobalInterpretation, LocalInterpretation};
use crate::metrics::Metric;
use crate::models::TrainedModel;

/// An instance to explain: a dataset row id or named feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<BTreeMap<String, serde_json::Value>>,
}

impl Instance {
    pub fn row(row: usize) -> Instance {
        Instance { row: Some(row), values: None }
    }

    pub fn resolve(&self, ds: &Dataset) -> Result<Vec<f64>> {
        match (self.row, &self.values) {
            (Some(r), None) => {
                if r >= ds.n_rows() {
                    return Err(Error::invalid("instance.row", format!("row {r} is out of range (dataset has {} rows)", ds.n_rows())));
                }
                Ok(ds.frame(&[r]).row(0).to_vec())
            }
            (None, Some(v)) => ds.schema().encode_instance(v),
            _ => Err(Error::invalid("instance", "give exactly one of `row` or `values`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainMethod {
    Pfi,
    Pdp,
    Ale,
    Lime,
    Shap,
}

impl ExplainMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExplainMethod::Pfi => "pfi",
            ExplainMethod::Pdp => "pdp",
            ExplainMethod::Ale => "ale",
            ExplainMethod::Lime => "lime",
            ExplainMethod::Shap => "shap",
        }
    }
}

/// Parameters of an explanation; which fields apply depends on `method`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub method: ExplainMethod,
    /// pfi: metric (defaults to the task's headline metric).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    /// pfi: permutation repeats.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    /// pdp: one or two features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// ale: the feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// lime, shap: the instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<Instance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// shap: background sample size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ExplainRequest {
    pub fn new(method: ExplainMethod) -> ExplainRequest {
        ExplainRequest {
            method,
            metric: None,
            repeats: None,
            features: None,
            grid: None,
            feature: None,
            bins: None,
            instance: None,
            samples: None,
            top_k: None,
            background: None,
            seed: None,
        }
    }

    fn instance(&self) -> Result<&Instance> {
        self.instance
            .as_ref()
            .ok_or_else(|| Error::invalid("instance", format!("{} needs an instance", self.method.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisRequest {
    Interpret {
        model: String,
        /// Local interpretation when set, global otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instance: Option<Instance>,
    },
    Explain {
        model: String,
        request: ExplainRequest,
    },
    Diagnose {
        model: String,
        diagnostic: DiagnosticConfig,
    },
    Compare {
        models: Vec<String>,
        #[serde(default)]
        tests: Vec<DiagnosticConfig>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Interpretation,
    Explanation,
    Diagnostic,
    Comparison,
}

impl AnalysisRequest {
    /// Fill unset seeds from the master seed so stored requests are complete.
    pub fn with_seed(self, seed: u64) -> AnalysisRequest {
        match self {
            AnalysisRequest::Explain { model, mut request } => {
                if matches!(request.method, ExplainMethod::Pfi | ExplainMethod::Lime | ExplainMethod::Shap) {
                    request.seed.get_or_insert(seed);
                }
                AnalysisRequest::Explain { model, request }
            }
            AnalysisRequest::Diagnose { model, diagnostic } => {
                AnalysisRequest::Diagnose { model, diagnostic: diagnostic.with_seed(seed) }
            }
            AnalysisRequest::Compare { models, tests } => {
                AnalysisRequest::Compare { models, tests: tests.into_iter().map(|t| t.with_seed(seed)).collect() }
            }
            other => other,
        }
    }

    pub fn section(&self) -> Section {
        match self {
            AnalysisRequest::Interpret { .. } => Section::Interpretation,
            AnalysisRequest::Explain { .. } => Section::Explanation,
            AnalysisRequest::Diagnose { .. } => Section::Diagnostic,
            AnalysisRequest::Compare { .. } => Section::Comparison,
        }
    }

    /// Operation name used in result keys, e.g. `explain:pfi`.
    pub fn operation(&self) -> String {
        match self {
            AnalysisRequest::Interpret { instance: None, .. } => "interpret".into(),
            AnalysisRequest::Interpret { instance: Some(_), .. } => "interpret:local".into(),
            AnalysisRequest::Explain { request, .. } => format!("explain:{}", request.method.as_str()),
            AnalysisRequest::Diagnose { diagnostic, .. } => format!("diagnose:{}", diagnostic.test()),
            AnalysisRequest::Compare { .. } => "compare".into(),
        }
    }

    /// Model id, or ids joined by `+` for comparisons.
    pub fn model_key(&self) -> String {
        match self {
            AnalysisRequest::Interpret { model, .. }
            | AnalysisRequest::Explain { model, .. }
            | AnalysisRequest::Diagnose { model, .. } => model.clone(),
            AnalysisRequest::Compare { models, .. } => models.join("+"),
        }
    }

    /// SHA-256 of the request's canonical JSON.
    pub fn config_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("requests serialize");
        hex::encode(Sha256::digest(serde_json::to_vec(&value).expect("values serialize")))
    }

    /// Model and capability checks that need no computation: unknown ids
    /// and operations the model cannot support fail here.
    pub fn check<'a>(&self, lookup: impl Fn(&str) -> Result<&'a TrainedModel>) -> Result<()> {
        match self {
            AnalysisRequest::Interpret { model, .. } => {
                if !lookup(model)?.is_glass() {
                    return Err(crate::interpret::capability_error());
                }
            }
            AnalysisRequest::Explain { model, request } => {
                lookup(model)?.require_evaluable(match request.method {
                    ExplainMethod::Pfi => "permutation feature importance",
                    ExplainMethod::Pdp => "partial dependence",
                    ExplainMethod::Ale => "accumulated local effects",
                    ExplainMethod::Lime => "LIME",
                    ExplainMethod::Shap => "SHAP",
                })?;
            }
            AnalysisRequest::Diagnose { model, diagnostic } => {
                let m = lookup(model)?;
                if matches!(diagnostic, DiagnosticConfig::Robustness(_)) {
                    m.require_evaluable("robustness")?;
                }
            }
            AnalysisRequest::Compare { models, .. } => {
                for m in models {
                    lookup(m)?;
                }
            }
        }
        Ok(())
    }

    /// Run the request. `lookup` resolves model ids.
    pub fn compute<'a>(&self, ds: &Dataset, lookup: impl Fn(&str) -> Result<&'a TrainedModel>, seed: u64) -> Result<Analysis> {
        match self {
            AnalysisRequest::Interpret { model, instance } => {
                let m = lookup(model)?;
                match instance {
                    None => Ok(Analysis::GlobalInterpretation(interpret_global(m, ds)?)),
                    Some(i) => Ok(Analysis::LocalInterpretation(interpret_local(m, &i.resolve(ds)?)?)),
                }
            }
            AnalysisRequest::Explain { model, request: r } => {
                let m = lookup(model)?;
                let seed = r.seed.unwrap_or(seed);
                Ok(match r.method {
                    ExplainMethod::Pfi => {
                        let metric = r.metric.unwrap_or(Metric::primary(ds.task));
                        Analysis::Pfi(pfi(m, ds, metric, r.repeats.unwrap_or(PFI_REPEATS), seed)?)
                    }
                    ExplainMethod::Pdp => {
                        let features = r.features.clone().or_else(|| r.feature.clone().map(|f| vec![f])).ok_or_else(|| {
                            Error::invalid("features", "pdp needs one or two features")
                        })?;
                        Analysis::Pdp(pdp(m, ds, &features, r.grid.unwrap_or(PDP_GRID))?)
                    }
                    ExplainMethod::Ale => {
                        let feature = r.feature.as_deref().ok_or_else(|| Error::invalid("feature", "ale needs a feature"))?;
                        Analysis::Ale(ale(m, ds, feature, r.bins.unwrap_or(ALE_BINS))?)
                    }
                    ExplainMethod::Lime => {
                        let d = LimeOptions::default();
                        let opts = LimeOptions { samples: r.samples.unwrap_or(d.samples), top_k: r.top_k.unwrap_or(d.top_k), seed };
                        Analysis::Lime(lime_explain(m, ds, &r.instance()?.resolve(ds)?, &opts)?)
                    }
                    ExplainMethod::Shap => {
                        let x = r.instance()?.resolve(ds)?;
                        Analysis::Shap(shap_explain(m, ds, &x, r.background.unwrap_or(SHAP_BACKGROUND), seed)?)
                    }
                })
            }
            AnalysisRequest::Diagnose { model, diagnostic } => {
                Ok(Analysis::Diagnostic(run_diagnostic(lookup(model)?, ds, diagnostic, seed)?))
            }
            AnalysisRequest::Compare { models, tests } => {
                let resolved = models.iter().map(|id| Ok((id.clone(), lookup(id)?))).collect::<Result<Vec<_>>>()?;
                Ok(Analysis::Comparison(model_compare(&resolved, ds, tests, seed)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Analysis {
    GlobalInterpretation(GlobalInterpretation),
    LocalInterpretation(LocalInterpretation),
    Pfi(PfiResult),
    Pdp(PdpResult),
    Ale(AleCurve),
    Lime(LimeExplanation),
    Shap(ShapExplanation),
    Diagnostic(DiagnosticResult),
    Comparison(ComparisonReport),
}

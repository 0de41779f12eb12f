//! Model-agnostic diagnostic tests over predictions on the train and test
//! splits.

mod accuracy;
mod fairness;
mod kmeans;
mod reliability;
mod resilience;
mod robustness;
mod slicing;

pub use accuracy::{accuracy, AccuracyConfig, AccuracyResult};
pub use fairness::{
    fairness, DebiasOption, FairnessConfig, FairnessResult, FrontierPoint, GroupStat, SegmentStat,
    AIR_THRESHOLD, MIN_GROUP_SIZE,
};
pub use kmeans::{kmeans, KMeansFit};
pub use reliability::{reliability, ReliabilityConfig, ReliabilityResult, ReliabilitySlice};
pub use resilience::{
    psi, resilience, ClusterStat, CurvePoint, FeatureShift, ResilienceConfig, ResilienceResult,
    Scenario, PSI_FLOOR,
};
pub use robustness::{robustness, RobustnessConfig, RobustnessLevel, RobustnessResult};
pub use slicing::{
    overfit_underfit, weakspot, BinMethod, OverfitConfig, OverfitResult, OverfitSlice, SliceAxis,
    SliceBound, SliceSpec, SliceStat, WeakRegion, WeakspotConfig, WeakspotResult,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::TrainedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticTest {
    Accuracy,
    Weakspot,
    Overfit,
    Reliability,
    Robustness,
    Resilience,
    Fairness,
}

impl DiagnosticTest {
    pub const ALL: [DiagnosticTest; 7] = [
        DiagnosticTest::Accuracy,
        DiagnosticTest::Weakspot,
        DiagnosticTest::Overfit,
        DiagnosticTest::Reliability,
        DiagnosticTest::Robustness,
        DiagnosticTest::Resilience,
        DiagnosticTest::Fairness,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DiagnosticTest::Accuracy => "accuracy",
            DiagnosticTest::Weakspot => "weakspot",
            DiagnosticTest::Overfit => "overfit",
            DiagnosticTest::Reliability => "reliability",
            DiagnosticTest::Robustness => "robustness",
            DiagnosticTest::Resilience => "resilience",
            DiagnosticTest::Fairness => "fairness",
        }
    }
}

impl fmt::Display for DiagnosticTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiagnosticTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "overfit_underfit" | "underfit" => return Ok(DiagnosticTest::Overfit),
            "weak_spot" => return Ok(DiagnosticTest::Weakspot),
            _ => {}
        }
        DiagnosticTest::ALL
            .into_iter()
            .find(|t| t.as_str() == lower)
            .ok_or_else(|| {
                Error::invalid(
                    "test",
                    format!("unknown diagnostic `{s}` (expected accuracy, weakspot, overfit, reliability, robustness, resilience or fairness)"),
                )
            })
    }
}

/// A diagnostic request: the test name plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", content = "config", rename_all = "snake_case")]
pub enum DiagnosticConfig {
    Accuracy(AccuracyConfig),
    Weakspot(WeakspotConfig),
    Overfit(OverfitConfig),
    Reliability(ReliabilityConfig),
    Robustness(RobustnessConfig),
    Resilience(ResilienceConfig),
    Fairness(FairnessConfig),
}

impl DiagnosticConfig {
    pub fn test(&self) -> DiagnosticTest {
        match self {
            DiagnosticConfig::Accuracy(_) => DiagnosticTest::Accuracy,
            DiagnosticConfig::Weakspot(_) => DiagnosticTest::Weakspot,
            DiagnosticConfig::Overfit(_) => DiagnosticTest::Overfit,
            DiagnosticConfig::Reliability(_) => DiagnosticTest::Reliability,
            DiagnosticConfig::Robustness(_) => DiagnosticTest::Robustness,
            DiagnosticConfig::Resilience(_) => DiagnosticTest::Resilience,
            DiagnosticConfig::Fairness(_) => DiagnosticTest::Fairness,
        }
    }

    /// Parse the parameters of `test` from a JSON object (`null` or a
    /// missing object means defaults where the test has them).
    pub fn from_json(test: DiagnosticTest, params: serde_json::Value) -> Result<DiagnosticConfig> {
        let params = if params.is_null() { serde_json::json!({}) } else { params };
        let parse_err = |e: serde_path_to_error::Error<serde_json::Error>| Error::InvalidConfig {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        };
        macro_rules! parse {
            ($variant:ident) => {
                DiagnosticConfig::$variant(serde_path_to_error::deserialize(params).map_err(parse_err)?)
            };
        }
        Ok(match test {
            DiagnosticTest::Accuracy => parse!(Accuracy),
            DiagnosticTest::Weakspot => parse!(Weakspot),
            DiagnosticTest::Overfit => parse!(Overfit),
            DiagnosticTest::Reliability => parse!(Reliability),
            DiagnosticTest::Robustness => parse!(Robustness),
            DiagnosticTest::Resilience => parse!(Resilience),
            DiagnosticTest::Fairness => parse!(Fairness),
        })
    }

    /// Fill an unset seed from the master seed, so stored configs are
    /// complete reproducibility records.
    pub fn with_seed(mut self, seed: u64) -> DiagnosticConfig {
        match &mut self {
            DiagnosticConfig::Reliability(c) => c.seed.get_or_insert(seed),
            DiagnosticConfig::Robustness(c) => c.seed.get_or_insert(seed),
            DiagnosticConfig::Resilience(c) => c.seed.get_or_insert(seed),
            _ => return self,
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum DiagnosticResult {
    Accuracy(AccuracyResult),
    Weakspot(WeakspotResult),
    Overfit(OverfitResult),
    Reliability(ReliabilityResult),
    Robustness(RobustnessResult),
    Resilience(ResilienceResult),
    Fairness(FairnessResult),
}

impl DiagnosticResult {
    pub fn test(&self) -> DiagnosticTest {
        match self {
            DiagnosticResult::Accuracy(_) => DiagnosticTest::Accuracy,
            DiagnosticResult::Weakspot(_) => DiagnosticTest::Weakspot,
            DiagnosticResult::Overfit(_) => DiagnosticTest::Overfit,
            DiagnosticResult::Reliability(_) => DiagnosticTest::Reliability,
            DiagnosticResult::Robustness(_) => DiagnosticTest::Robustness,
            DiagnosticResult::Resilience(_) => DiagnosticTest::Resilience,
            DiagnosticResult::Fairness(_) => DiagnosticTest::Fairness,
        }
    }
}

/// Run one diagnostic. Unset seeds fall back to `seed`.
pub fn run_diagnostic(model: &TrainedModel, ds: &Dataset, config: &DiagnosticConfig, seed: u64) -> Result<DiagnosticResult> {
    Ok(match config.clone().with_seed(seed) {
        DiagnosticConfig::Accuracy(c) => DiagnosticResult::Accuracy(accuracy(model, ds, &c)?),
        DiagnosticConfig::Weakspot(c) => DiagnosticResult::Weakspot(weakspot(model, ds, &c)?),
        DiagnosticConfig::Overfit(c) => DiagnosticResult::Overfit(overfit_underfit(model, ds, &c)?),
        DiagnosticConfig::Reliability(c) => DiagnosticResult::Reliability(reliability(model, ds, &c)?),
        DiagnosticConfig::Robustness(c) => DiagnosticResult::Robustness(robustness(model, ds, &c)?),
        DiagnosticConfig::Resilience(c) => DiagnosticResult::Resilience(resilience(model, ds, &c)?),
        DiagnosticConfig::Fairness(c) => DiagnosticResult::Fairness(fairness(model, ds, &c)?),
    })
}

/// Targets and scores for a set of dataset rows.
pub(crate) struct Scored {
    pub rows: Vec<usize>,
    pub y: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Scored {
    pub fn new(model: &TrainedModel, ds: &Dataset, rows: Vec<usize>) -> Result<Scored> {
        let scores = model.score_rows(ds, &rows)?;
        let y = ds.targets_of(&rows);
        Ok(Scored { rows, y, scores })
    }

    /// Targets and scores at positions `idx` (kept in the given order).
    pub fn subset(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        (idx.iter().map(|&i| self.y[i]).collect(), idx.iter().map(|&i| self.scores[i]).collect())
    }
}

/// Serialize non-finite floats as strings so that configs such as an
/// infinite threshold survive a JSON round trip.
pub(crate) mod extended_float {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_some(x),
            Some(x) if x.is_nan() => s.serialize_some("nan"),
            Some(x) if *x > 0.0 => s.serialize_some("inf"),
            Some(_) => s.serialize_some("-inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" | "infinity" => Ok(Some(f64::INFINITY)),
                "-inf" | "-infinity" => Ok(Some(f64::NEG_INFINITY)),
                "nan" => Ok(Some(f64::NAN)),
                other => Err(D::Error::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_names_parse() {
        for t in DiagnosticTest::ALL {
            assert_eq!(t.as_str().parse::<DiagnosticTest>().unwrap(), t);
        }
        assert_eq!("overfit_underfit".parse::<DiagnosticTest>().unwrap(), DiagnosticTest::Overfit);
        assert!("nope".parse::<DiagnosticTest>().is_err());
    }

    #[test]
    fn config_parsing_reports_paths() {
        let err = DiagnosticConfig::from_json(
            DiagnosticTest::Weakspot,
            serde_json::json!({"slice": {"features": ["a"], "bins": "ten"}}),
        )
        .unwrap_err();
        match err {
            Error::InvalidConfig { path, .. } => assert_eq!(path, "slice.bins"),
            other => panic!("{other:?}"),
        }
        let c = DiagnosticConfig::from_json(DiagnosticTest::Accuracy, serde_json::Value::Null).unwrap();
        assert_eq!(c, DiagnosticConfig::Accuracy(AccuracyConfig::default()));
    }

    #[test]
    fn infinite_delta_round_trips() {
        let c = OverfitConfig { delta: Some(f64::INFINITY), ..OverfitConfig::new(SliceSpec::one("x", 4)) };
        let json = serde_json::to_string(&DiagnosticConfig::Overfit(c.clone())).unwrap();
        assert!(json.contains("\"inf\""));
        let back: DiagnosticConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, DiagnosticConfig::Overfit(c));
    }
}

//! Request builders shared by the command-line and HTTP front ends, and the
//! JSON rendering both use for their output.

use serde::Serialize;
use serde_json::{Map, Value};

use super::request::ExplainRequest;
use crate::diagnose::{DiagnosticConfig, DiagnosticTest};
use crate::error::{Error, Result};
use crate::models::{Family, ModelSpec};

/// Pretty JSON with a trailing newline. CLI `--format json` output and
/// completed-job payloads are both produced here.
pub fn render_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    Error::InvalidConfig { path: e.path().to_string(), reason: e.inner().to_string() }
}

fn object(value: Value, name: &str) -> Result<Map<String, Value>> {
    match value {
        Value::Null => Ok(Map::new()),
        Value::Object(m) => Ok(m),
        _ => Err(Error::invalid(name, "expected a JSON object")),
    }
}

/// `family` plus a JSON object of hyperparameters. Errors name the
/// offending parameter.
pub fn model_spec(family: &str, params: Value) -> Result<ModelSpec> {
    let family: Family = family.parse()?;
    let mut params = object(params, "params")?;
    match params.remove("family") {
        Some(Value::String(f)) if f.parse::<Family>().ok() == Some(family) => {}
        Some(other) => {
            return Err(Error::invalid("family", format!("{other} conflicts with the requested family `{family}`")))
        }
        None => {}
    }
    fn parse<T: serde::de::DeserializeOwned>(params: Map<String, Value>) -> Result<T> {
        serde_path_to_error::deserialize(Value::Object(params)).map_err(path_error)
    }
    Ok(match family {
        Family::Glm => ModelSpec::Glm(parse(params)?),
        Family::Gam => ModelSpec::Gam(parse(params)?),
        Family::Tree => ModelSpec::Tree(parse(params)?),
        Family::Xgb1 => ModelSpec::Xgb1(parse(params)?),
        Family::Xgb2 => ModelSpec::Xgb2(parse(params)?),
    })
}

/// A diagnostic by name. Parameter errors carry the path below `config`.
pub fn diagnostic(test: &str, config: Value) -> Result<DiagnosticConfig> {
    let test: DiagnosticTest = test.parse()?;
    DiagnosticConfig::from_json(test, config).map_err(|e| match e {
        Error::InvalidConfig { path, reason } if path.is_empty() || path == "." => {
            Error::InvalidConfig { path: "config".into(), reason }
        }
        Error::InvalidConfig { path, reason } => Error::InvalidConfig { path: format!("config.{path}"), reason },
        other => other,
    })
}

/// `{"method": ..., <method parameters>}`.
pub fn explain_request(params: Map<String, Value>) -> Result<ExplainRequest> {
    serde_path_to_error::deserialize(Value::Object(params)).map_err(path_error)
}

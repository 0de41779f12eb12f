//! Post-hoc, model-agnostic explainers.

mod ale;
mod lime;
mod pdp;
mod pfi;
mod shap;

pub use ale::{ale, AleCurve, ALE_BINS};
pub use lime::{lime_explain, LimeExplanation, LimeOptions, LimeTerm};
pub use pdp::{pdp, PdpResult, PDP_GRID};
pub use pfi::{permuted_column, pfi, PfiFeature, PfiResult, PFI_REPEATS};
pub use shap::{
    exact_shapley, sample_background, shap_explain, shap_with_background, ShapExplanation,
    ShapMode, ShapValue, EXACT_MAX_FEATURES, SHAP_BACKGROUND, SHAP_COALITIONS,
};

use crate::data::Frame;
use crate::error::Result;
use crate::models::TrainedModel;

/// Predictions for every row of a frame.
pub(crate) fn predict_all(model: &TrainedModel, frame: &Frame) -> Result<Vec<f64>> {
    frame.rows().map(|r| model.predict_row(r)).collect()
}

//! Data ingestion, exploratory summaries, quality checks, feature
//! screening and train/test preparation.

mod csv_io;
mod dataset;
mod frame;
mod prepare;
mod quality;
mod select;
mod summary;

pub use csv_io::{load_csv, read_csv_from, write_csv, write_csv_to};
pub use dataset::{
    Column, ColumnData, ColumnKind, Dataset, FeatureInfo, Partition, Schema, TaskKind,
};
pub use frame::Frame;
pub use prepare::{prepare, PrepareOptions, MISSING_LEVEL};
pub use quality::{data_quality, iqr_outliers, ColumnQuality, DataQualityReport};
pub use select::{correlation_ratio, feature_select, FeatureScore, FeatureSelection};
pub use summary::{
    histogram, summarize, CategoricalSummary, ClassBalance, CorrelationMatrix, EdaSummary,
    Histogram, LevelCount, NumericSummary, HISTOGRAM_BINS,
};

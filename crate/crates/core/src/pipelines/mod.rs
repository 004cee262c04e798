//! Analysis pipelines: each consumes a loaded dataset and produces an
//! [`AnalysisReport`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::aggregation::{pooled_summary, AggregationError, SimilarityMatrix};
use crate::ingestion::IngestError;
use crate::metrics::{Metric, MetricError};
use crate::stats::StatsError;
use crate::types::PredictionRecord;

pub mod render;
pub mod report;
pub mod repr;
pub mod research;
pub mod synth;
pub mod world;

pub use report::{AnalysisReport, NamedHistogram, StatOutcome, Statistic, Table};
pub use repr::{adjusted_similarity, cosine, repr_functional_correlation};
pub use research::{
    rq1_scale_trend, rq2_domain_breakdown, rq3_resource_correlation, rq4_intra_vs_inter, similarity_matrices,
};
pub use synth::{synth_raters, RaterPair};
pub use world::{SyntheticWorld, WorldConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{context}: {source}")]
    Stats {
        context: String,
        #[source]
        source: StatsError,
    },
    #[error("language {0:?} is missing from the resource table")]
    MissingLanguage(String),
    #[error("no matrix cell for language pair {0:?}")]
    MissingPair(String),
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl PipelineError {
    pub(crate) fn stats(context: &str, source: StatsError) -> Self {
        PipelineError::Stats {
            context: context.to_string(),
            source,
        }
    }

    /// True when the failure comes from degenerate statistics rather than bad input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            PipelineError::Stats { .. }
                | PipelineError::Metric(MetricError::DegenerateChance { .. })
                | PipelineError::Aggregation(AggregationError::Metric(MetricError::DegenerateChance { .. }))
        )
    }
}

/// How a matrix is collapsed to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Arithmetic mean of the defined unique off-diagonal cells.
    #[default]
    Mean,
    /// All unique pairs' items pooled and scored once.
    Pooled,
}

impl Averaging {
    pub fn name(self) -> &'static str {
        match self {
            Averaging::Mean => "mean",
            Averaging::Pooled => "pooled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Every other model in the same language.
    #[default]
    Full,
    /// Only the other-family model closest in size.
    ClosestSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pivot {
    /// Every unordered language pair.
    #[default]
    All,
    /// Only pairs that include English.
    English,
}

/// Flags shared by every pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub metric: Metric,
    pub averaging: Averaging,
    pub strict: bool,
    pub bins: usize,
    /// Models left out of the analysis entirely.
    pub exclude_models: Vec<String>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            metric: Metric::KappaPHardFull,
            averaging: Averaging::Mean,
            strict: false,
            bins: 20,
            exclude_models: Vec::new(),
        }
    }
}

impl PipelineOptions {
    pub fn flags(&self) -> BTreeMap<String, String> {
        let mut f = BTreeMap::new();
        f.insert("metric".to_string(), self.metric.name().to_string());
        f.insert("averaging".to_string(), self.averaging.name().to_string());
        f.insert("strict".to_string(), self.strict.to_string());
        f.insert("bins".to_string(), self.bins.to_string());
        if !self.exclude_models.is_empty() {
            f.insert("exclude_models".to_string(), self.exclude_models.join(","));
        }
        f
    }

    pub fn includes(&self, model: &str) -> bool {
        !self.exclude_models.iter().any(|m| m == model)
    }
}

/// Scalar summary of a matrix under the chosen averaging scheme.
///
/// `entries` must be the same labeled sequences the matrix was built from.
pub(crate) fn collapse(
    matrix: &SimilarityMatrix,
    entries: &[(String, Vec<PredictionRecord>)],
    num_options: usize,
    opts: &PipelineOptions,
    filter: Option<&crate::aggregation::SubjectFilter>,
) -> Result<Option<f64>, PipelineError> {
    match opts.averaging {
        Averaging::Mean => Ok(matrix.summary().mean),
        Averaging::Pooled => Ok(pooled_summary(entries, num_options, opts.metric, filter)?.map(|s| s.value)),
    }
}

pub(crate) fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

//! Chance-adjusted agreement metrics for multiple-choice predictions, and the
//! cross-lingual consistency analyses built on them.
//!
//! The crate is organised bottom-up:
//!
//! - [`types`]: probability vectors, prediction records, item alignment.
//! - [`metrics`]: raw agreement, Cohen's κ, Scott's π, hard and probabilistic κ_p, RankC.
//! - [`aggregation`]: micro-averaging, similarity matrices, category partitions.
//! - [`stats`]: Mann-Whitney U, Pearson correlation, histograms.
//! - [`ingestion`]: log, table, and embedding-dump formats; run manifests.
//! - [`pipelines`]: the analyses, synthetic data generators, reports, and SVG figures.

pub mod aggregation;
pub mod ingestion;
pub mod metrics;
pub mod pipelines;
pub mod stats;
pub mod types;

//! Micro-averaging, similarity matrices, and category partitioning.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{AgreementScore, Metric, MetricError, Tally};
use crate::types::{
    join, subject_key, AlignError, AlignMode, AlignedPairSet, CategoryTable, Granularity, PredictionRecord,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregationError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("alignment of {left} with {right} failed: {source}")]
    Align {
        left: String,
        right: String,
        #[source]
        source: AlignError,
    },
    #[error("sets disagree on option count: {0} vs {1}")]
    MixedOptionCount(usize, usize),
    #[error("subject {0:?} is not in the category table")]
    UnknownSubject(String),
    #[error("roster spans a single family")]
    SingleFamily,
    #[error("roster spans {0} families, closest-size pairing needs exactly 2")]
    TooManyFamilies(usize),
}

/// Micro-averaged score: pools every item of every set, then scores once.
pub fn micro_kappa(sets: &[AlignedPairSet], metric: Metric) -> Result<AgreementScore, AggregationError> {
    let first = sets.first().ok_or(MetricError::Empty)?;
    let mut total = Tally::new(first.num_options);
    for set in sets {
        if set.num_options != first.num_options {
            return Err(AggregationError::MixedOptionCount(first.num_options, set.num_options));
        }
        total.merge(&Tally::from_set(set))?;
    }
    Ok(total.score(metric)?)
}

/// Which pairs a grouping key compares.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupKey {
    LanguagePairWithinModel {
        model: String,
        languages: (String, String),
        #[serde(skip_serializing_if = "Option::is_none")]
        category: Option<String>,
    },
    ModelPairWithinLanguage {
        language: String,
        models: (String, String),
        #[serde(skip_serializing_if = "Option::is_none")]
        category: Option<String>,
    },
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl GroupKey {
    pub fn language_pair(model: &str, a: &str, b: &str, category: Option<&str>) -> Self {
        GroupKey::LanguagePairWithinModel {
            model: model.to_string(),
            languages: unordered(a, b),
            category: category.map(str::to_string),
        }
    }

    pub fn model_pair(language: &str, a: &str, b: &str, category: Option<&str>) -> Self {
        GroupKey::ModelPairWithinLanguage {
            language: language.to_string(),
            models: unordered(a, b),
            category: category.map(str::to_string),
        }
    }
}

/// Restricts records to a set of subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFilter {
    pub name: String,
    subjects: HashSet<String>,
}

impl SubjectFilter {
    pub fn new<I, S>(name: &str, subjects: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            name: name.to_string(),
            subjects: subjects.into_iter().map(|s| subject_key(s.as_ref())).collect(),
        }
    }

    pub fn for_group(table: &CategoryTable, group: &str, granularity: Granularity) -> Self {
        Self::new(group, table.subjects_in(group, granularity))
    }

    pub fn accepts(&self, record: &PredictionRecord) -> bool {
        self.subjects.contains(&subject_key(&record.subject))
    }

    pub fn apply(&self, records: &[PredictionRecord]) -> Vec<PredictionRecord> {
        records.iter().filter(|r| self.accepts(r)).cloned().collect()
    }
}

/// Symmetric matrix of pairwise scores; `None` marks undefined cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    /// Row-major `labels.len()²` cells.
    pub cells: Vec<Option<AgreementScore>>,
    pub metric: Metric,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
}

/// Arithmetic mean of the defined off-diagonal cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub mean: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
}

impl SimilarityMatrix {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&AgreementScore> {
        self.cells[i * self.size() + j].as_ref()
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.get(i, j).map(|s| s.value)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn value_by_label(&self, a: &str, b: &str) -> Option<f64> {
        self.value(self.index_of(a)?, self.index_of(b)?)
    }

    /// `(i, j)` with `i < j`, row by row.
    pub fn unique_pairs(&self) -> Vec<(usize, usize)> {
        upper_pairs(self.size())
    }

    pub fn off_diagonal_values(&self) -> Vec<Option<f64>> {
        self.unique_pairs().into_iter().map(|(i, j)| self.value(i, j)).collect()
    }

    pub fn summary(&self) -> MatrixSummary {
        summarize_cells(self.off_diagonal_values())
    }
}

pub(crate) fn summarize_cells(values: Vec<Option<f64>>) -> MatrixSummary {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let undefined = values.len() - defined.len();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    MatrixSummary {
        mean,
        defined: defined.len(),
        undefined,
    }
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

fn cell_score(
    entries: &[(String, Vec<PredictionRecord>)],
    i: usize,
    j: usize,
    num_options: usize,
    metric: Metric,
) -> Result<Option<AgreementScore>, AggregationError> {
    let (la, a) = &entries[i];
    let (lb, b) = &entries[j];
    let joined = join(a, b, num_options, AlignMode::Strict).map_err(|source| AggregationError::Align {
        left: la.clone(),
        right: lb.clone(),
        source,
    })?;
    match Tally::from_pairs(&joined.pairs, num_options).score(metric) {
        Ok(s) => Ok(Some(s)),
        Err(MetricError::DegenerateChance { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Builds a symmetric matrix over labeled record sequences.
///
/// Cells are evaluated in parallel and assembled in index order, so the
/// result does not depend on scheduling. Degenerate cells become `None`.
pub fn similarity_matrix(
    entries: &[(String, Vec<PredictionRecord>)],
    num_options: usize,
    metric: Metric,
    filter: Option<&SubjectFilter>,
) -> Result<SimilarityMatrix, AggregationError> {
    let filtered: Cow<[(String, Vec<PredictionRecord>)]> = match filter {
        Some(f) => Cow::Owned(entries.iter().map(|(l, r)| (l.clone(), f.apply(r))).collect()),
        None => Cow::Borrowed(entries),
    };
    let n = filtered.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let scored: Vec<Option<AgreementScore>> = pairs
        .par_iter()
        .map(|&(i, j)| cell_score(&filtered, i, j, num_options, metric))
        .collect::<Result<_, _>>()?;

    let mut cells = vec![None; n * n];
    for (&(i, j), s) in pairs.iter().zip(scored) {
        cells[i * n + j] = s;
        cells[j * n + i] = s;
    }
    Ok(SimilarityMatrix {
        labels: filtered.iter().map(|(l, _)| l.clone()).collect(),
        cells,
        metric,
        filter: filter.map(|f| f.name.clone()),
    })
}

/// One model across languages: `logs` maps language → that model's records.
pub fn intra_model_matrix(
    logs: &BTreeMap<String, Vec<PredictionRecord>>,
    num_options: usize,
    metric: Metric,
    filter: Option<&SubjectFilter>,
) -> Result<SimilarityMatrix, AggregationError> {
    let entries: Vec<_> = logs.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    similarity_matrix(&entries, num_options, metric, filter)
}

/// Several models in one language: `logs` maps model → its records in that language.
pub fn inter_model_matrix(
    logs: &BTreeMap<String, Vec<PredictionRecord>>,
    num_options: usize,
    metric: Metric,
    filter: Option<&SubjectFilter>,
) -> Result<SimilarityMatrix, AggregationError> {
    intra_model_matrix(logs, num_options, metric, filter)
}

/// Alternative scalar summary: pool every unique pair's items and score once.
pub fn pooled_summary(
    entries: &[(String, Vec<PredictionRecord>)],
    num_options: usize,
    metric: Metric,
    filter: Option<&SubjectFilter>,
) -> Result<Option<AgreementScore>, AggregationError> {
    let mut total = Tally::new(num_options);
    for (i, j) in upper_pairs(entries.len()) {
        let (la, a) = &entries[i];
        let (lb, b) = &entries[j];
        let (a, b) = match filter {
            Some(f) => (Cow::Owned(f.apply(a)), Cow::Owned(f.apply(b))),
            None => (Cow::Borrowed(a), Cow::Borrowed(b)),
        };
        let joined = join(&a, &b, num_options, AlignMode::Strict).map_err(|source| AggregationError::Align {
            left: la.clone(),
            right: lb.clone(),
            source,
        })?;
        total.merge(&Tally::from_pairs(&joined.pairs, num_options))?;
    }
    if total.is_empty() {
        return Ok(None);
    }
    match total.score(metric) {
        Ok(s) => Ok(Some(s)),
        Err(MetricError::DegenerateChance { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Disjoint grouping of records by category.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<'a> {
    pub groups: BTreeMap<String, Vec<&'a PredictionRecord>>,
    /// Distinct subjects the table could not resolve (non-strict mode).
    pub unresolved: BTreeSet<String>,
}

impl Partition<'_> {
    pub fn counts(&self) -> BTreeMap<String, usize> {
        self.groups.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }
}

pub fn partition_by_category<'a>(
    records: &'a [PredictionRecord],
    table: &CategoryTable,
    granularity: Granularity,
    strict: bool,
) -> Result<Partition<'a>, AggregationError> {
    let mut groups: BTreeMap<String, Vec<&PredictionRecord>> = BTreeMap::new();
    let mut unresolved = BTreeSet::new();
    for r in records {
        match table.resolve(&r.subject, granularity) {
            Some(g) => groups.entry(g.to_string()).or_default().push(r),
            None if strict => return Err(AggregationError::UnknownSubject(r.subject.clone())),
            None => {
                unresolved.insert(r.subject.clone());
            }
        }
    }
    Ok(Partition { groups, unresolved })
}

/// A model in a roster, with its family and parameter count (billions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub family: String,
    pub size_billions: f64,
}

/// For each model, the other-family model closest in size (ties → smaller).
pub fn closest_size_pairing(roster: &[ModelInfo]) -> Result<BTreeMap<String, String>, AggregationError> {
    let families: BTreeSet<&str> = roster.iter().map(|m| m.family.as_str()).collect();
    match families.len() {
        0 | 1 => return Err(AggregationError::SingleFamily),
        2 => {}
        k => return Err(AggregationError::TooManyFamilies(k)),
    }
    let mut out = BTreeMap::new();
    for m in roster {
        let partner = roster
            .iter()
            .filter(|o| o.family != m.family)
            .min_by(|a, b| {
                let da = (a.size_billions - m.size_billions).abs();
                let db = (b.size_billions - m.size_billions).abs();
                da.total_cmp(&db)
                    .then(a.size_billions.total_cmp(&b.size_billions))
                    .then(a.name.cmp(&b.name))
            })
            .expect("two families present");
        out.insert(m.name.clone(), partner.name.clone());
    }
    Ok(out)
}

/// Distinct unordered cross-family pairs from [`closest_size_pairing`].
pub fn closest_size_pair_set(roster: &[ModelInfo]) -> Result<BTreeSet<(String, String)>, AggregationError> {
    Ok(closest_size_pairing(roster)?
        .into_iter()
        .map(|(a, b)| unordered(&a, &b))
        .collect())
}

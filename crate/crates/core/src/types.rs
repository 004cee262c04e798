//! Domain types shared by every module: probability vectors, prediction
//! records, aligned record pairs, and the subject/resource lookup tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of a probability vector's sum from 1 before it is rejected.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

/// Entries below this are treated as real negative mass, not rounding noise.
pub const NEGATIVE_MASS_TOLERANCE: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("probability vector needs at least 2 options, got {0}")]
    TooFewOptions(usize),
    #[error("probability entry {index} is negative ({value})")]
    NegativeMass { index: usize, value: f64 },
    #[error("probability entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("probabilities sum to {sum}, outside 1 ± {PROB_SUM_TOLERANCE}")]
    SumOutOfTolerance { sum: f64 },
    #[error("option index {index} out of range for {num_options} options")]
    IndexOutOfRange { index: usize, num_options: usize },
    #[error("predicted index {predicted} disagrees with probability argmax {argmax}")]
    ArgmaxMismatch { predicted: usize, argmax: usize },
    #[error("probability vector has {found} entries, expected {expected}")]
    OptionCountMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("item {item_id} has gold {left} on the left and {right} on the right")]
    GoldMismatch { item_id: String, left: usize, right: usize },
    #[error("the two record sequences share no items")]
    EmptyIntersection,
    #[error("strict alignment failed: {left_only} items only on the left, {right_only} only on the right")]
    StrictMismatch { left_only: usize, right_only: usize },
    #[error("option count differs: {left} vs {right}")]
    MixedOptionCount { left: usize, right: usize },
    #[error("duplicate item id {0}")]
    DuplicateItemId(String),
}

/// A validated probability distribution over the answer options of one item.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVector {
    entries: Vec<f64>,
}

impl ProbVector {
    /// Validates raw option probabilities and renormalizes them.
    ///
    /// Entries in `[-1e-12, 0)` are clamped to zero. A vector whose sum is
    /// already 1 up to accumulated rounding (`C` ulps) is stored untouched,
    /// which makes validation idempotent.
    pub fn new(raw: &[f64]) -> Result<Self, TypeError> {
        if raw.len() < 2 {
            return Err(TypeError::TooFewOptions(raw.len()));
        }
        let mut entries = Vec::with_capacity(raw.len());
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() {
                return Err(TypeError::NonFinite { index });
            }
            if value < NEGATIVE_MASS_TOLERANCE {
                return Err(TypeError::NegativeMass { index, value });
            }
            entries.push(value.max(0.0));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(TypeError::SumOutOfTolerance { sum });
        }
        if (sum - 1.0).abs() > entries.len() as f64 * f64::EPSILON {
            for e in &mut entries {
                *e /= sum;
            }
        }
        Ok(Self { entries })
    }

    /// Point mass on option `index`.
    pub fn one_hot(index: usize, num_options: usize) -> Result<Self, TypeError> {
        if num_options < 2 {
            return Err(TypeError::TooFewOptions(num_options));
        }
        if index >= num_options {
            return Err(TypeError::IndexOutOfRange { index, num_options });
        }
        let mut entries = vec![0.0; num_options];
        entries[index] = 1.0;
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn num_options(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries[index]
    }

    /// Index of the largest entry, ties going to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax_label(self)
    }

    /// Option indices ordered by probability (descending), then index (ascending).
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| {
            self.entries[b]
                .partial_cmp(&self.entries[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
    }
}

impl<'de> Deserialize<'de> for ProbVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        ProbVector::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Deterministic argmax; the first maximal entry wins.
pub fn argmax_label(p: &ProbVector) -> usize {
    let mut best = 0;
    for (i, &v) in p.entries.iter().enumerate().skip(1) {
        if v > p.entries[best] {
            best = i;
        }
    }
    best
}

/// One model's answer to one benchmark item in one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub item_id: String,
    pub subject: String,
    pub language: String,
    pub model: String,
    pub predicted_index: usize,
    pub gold_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<ProbVector>,
}

impl PredictionRecord {
    /// Checks the record against an option count `num_options`.
    pub fn validate(&self, num_options: usize) -> Result<(), TypeError> {
        if num_options < 2 {
            return Err(TypeError::TooFewOptions(num_options));
        }
        for index in [self.predicted_index, self.gold_index] {
            if index >= num_options {
                return Err(TypeError::IndexOutOfRange { index, num_options });
            }
        }
        if let Some(p) = &self.probs {
            if p.num_options() != num_options {
                return Err(TypeError::OptionCountMismatch {
                    expected: num_options,
                    found: p.num_options(),
                });
            }
            let argmax = p.argmax();
            if argmax != self.predicted_index {
                return Err(TypeError::ArgmaxMismatch {
                    predicted: self.predicted_index,
                    argmax,
                });
            }
        }
        Ok(())
    }

    pub fn is_correct(&self) -> bool {
        self.predicted_index == self.gold_index
    }
}

/// One item seen by both sides of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedItem {
    pub item_id: String,
    pub left: PredictionRecord,
    pub right: PredictionRecord,
    pub gold_index: usize,
}

/// Two prediction sequences joined on item identity, ordered by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPairSet {
    pub left_label: String,
    pub right_label: String,
    pub num_options: usize,
    pub items: Vec<AlignedItem>,
    /// Items present only on the left (intersect mode only).
    pub dropped_left: usize,
    /// Items present only on the right (intersect mode only).
    pub dropped_right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    Strict,
    Intersect,
}

impl AlignedPairSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.dropped_left + self.dropped_right
    }

    /// The same set seen from the other side.
    pub fn swapped(&self) -> AlignedPairSet {
        AlignedPairSet {
            left_label: self.right_label.clone(),
            right_label: self.left_label.clone(),
            num_options: self.num_options,
            items: self
                .items
                .iter()
                .map(|it| AlignedItem {
                    item_id: it.item_id.clone(),
                    left: it.right.clone(),
                    right: it.left.clone(),
                    gold_index: it.gold_index,
                })
                .collect(),
            dropped_left: self.dropped_right,
            dropped_right: self.dropped_left,
        }
    }
}

fn index_by_id(records: &[PredictionRecord]) -> Result<BTreeMap<&str, &PredictionRecord>, AlignError> {
    let mut map = BTreeMap::new();
    for r in records {
        if map.insert(r.item_id.as_str(), r).is_some() {
            return Err(AlignError::DuplicateItemId(r.item_id.clone()));
        }
    }
    Ok(map)
}

/// Item-id join of two record sequences, borrowing instead of cloning.
#[derive(Debug, Clone, PartialEq)]
pub struct Joined<'a> {
    /// `(left, right)` records sharing an item id, sorted by item id.
    pub pairs: Vec<(&'a PredictionRecord, &'a PredictionRecord)>,
    pub left_only: usize,
    pub right_only: usize,
}

/// The checks of [`align`] without copying records.
pub fn join<'a>(
    left: &'a [PredictionRecord],
    right: &'a [PredictionRecord],
    num_options: usize,
    mode: AlignMode,
) -> Result<Joined<'a>, AlignError> {
    for r in left.iter().chain(right) {
        if let Some(p) = &r.probs {
            if p.num_options() != num_options {
                return Err(AlignError::MixedOptionCount {
                    left: num_options,
                    right: p.num_options(),
                });
            }
        }
    }
    let left_map = index_by_id(left)?;
    let right_map = index_by_id(right)?;

    let mut pairs = Vec::with_capacity(left_map.len().min(right_map.len()));
    let mut left_only = 0;
    for (id, l) in &left_map {
        match right_map.get(id) {
            Some(r) => {
                if l.gold_index != r.gold_index {
                    return Err(AlignError::GoldMismatch {
                        item_id: id.to_string(),
                        left: l.gold_index,
                        right: r.gold_index,
                    });
                }
                pairs.push((*l, *r));
            }
            None => left_only += 1,
        }
    }
    let right_only = right_map.len() - pairs.len();

    if mode == AlignMode::Strict && (left_only > 0 || right_only > 0) {
        return Err(AlignError::StrictMismatch { left_only, right_only });
    }
    if pairs.is_empty() {
        return Err(AlignError::EmptyIntersection);
    }
    Ok(Joined {
        pairs,
        left_only,
        right_only,
    })
}

/// Joins two record sequences on `item_id`.
///
/// Both sides are checked against `num_options`; tuples come out sorted by
/// item id so results never depend on input order.
pub fn align(
    left_label: &str,
    left: &[PredictionRecord],
    right_label: &str,
    right: &[PredictionRecord],
    num_options: usize,
    mode: AlignMode,
) -> Result<AlignedPairSet, AlignError> {
    let joined = join(left, right, num_options, mode)?;
    let items = joined
        .pairs
        .iter()
        .map(|(l, r)| AlignedItem {
            item_id: l.item_id.clone(),
            left: (*l).clone(),
            right: (*r).clone(),
            gold_index: l.gold_index,
        })
        .collect();
    Ok(AlignedPairSet {
        left_label: left_label.to_string(),
        right_label: right_label.to_string(),
        num_options,
        items,
        dropped_left: joined.left_only,
        dropped_right: joined.right_only,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Domain,
    Fine,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::Domain => f.write_str("domain"),
            Granularity::Fine => f.write_str("fine"),
        }
    }
}

/// Normalizes a subject name so "High School Physics" and
/// "high_school_physics" resolve to the same key.
pub fn subject_key(subject: &str) -> String {
    subject
        .trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

/// Subject → (domain, fine category) lookup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    subject_to_domain: BTreeMap<String, String>,
    subject_to_category: BTreeMap<String, String>,
}

impl CategoryTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a row; returns false if the subject was already present.
    pub fn insert(&mut self, subject: &str, domain: &str, category: &str) -> bool {
        let key = subject_key(subject);
        if self.subject_to_domain.contains_key(&key) {
            return false;
        }
        self.subject_to_domain.insert(key.clone(), domain.to_string());
        self.subject_to_category.insert(key, category.to_string());
        true
    }

    pub fn len(&self) -> usize {
        self.subject_to_domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subject_to_domain.is_empty()
    }

    pub fn domain(&self, subject: &str) -> Option<&str> {
        self.subject_to_domain.get(&subject_key(subject)).map(String::as_str)
    }

    pub fn category(&self, subject: &str) -> Option<&str> {
        self.subject_to_category.get(&subject_key(subject)).map(String::as_str)
    }

    pub fn resolve(&self, subject: &str, granularity: Granularity) -> Option<&str> {
        match granularity {
            Granularity::Domain => self.domain(subject),
            Granularity::Fine => self.category(subject),
        }
    }

    /// Group names at a granularity, in first-appearance-independent sorted order.
    pub fn groups(&self, granularity: Granularity) -> Vec<String> {
        let source = match granularity {
            Granularity::Domain => &self.subject_to_domain,
            Granularity::Fine => &self.subject_to_category,
        };
        let mut names: Vec<String> = source.values().cloned().collect();
        names.sort();
        names.dedup();
        names
    }

    /// Normalized subject keys belonging to `group`.
    pub fn subjects_in(&self, group: &str, granularity: Granularity) -> Vec<String> {
        let source = match granularity {
            Granularity::Domain => &self.subject_to_domain,
            Granularity::Fine => &self.subject_to_category,
        };
        source
            .iter()
            .filter(|(_, g)| g.as_str() == group)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.subject_to_domain.keys().map(String::as_str)
    }
}

/// Language → encyclopedia article count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceTable {
    counts: BTreeMap<String, u64>,
}

impl ResourceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn insert(&mut self, language: &str, count: u64) -> bool {
        debug_assert!(count > 0);
        self.counts.insert(language.to_string(), count).is_none()
    }

    pub fn from_counts<I, S>(counts: I) -> Option<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut table = Self::new();
        for (lang, count) in counts {
            let lang = lang.into();
            if count == 0 || !table.insert(&lang, count) {
                return None;
            }
        }
        Some(table)
    }

    pub fn get(&self, language: &str) -> Option<u64> {
        self.counts.get(language).copied()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// The twenty evaluation languages used for the bundled fixtures.
pub const EVAL_LANGUAGES: [&str; 20] = [
    "am", "ar", "bn", "zh", "en", "fr", "de", "he", "hi", "id", "it", "ja", "ko", "fa", "ru", "es", "sw", "te", "tr",
    "vi",
];

/// Language codes available in the parallel multiple-choice benchmark.
pub const KNOWN_LANGUAGES: [&str; 42] = [
    "am", "ar", "bn", "cs", "de", "el", "en", "es", "fa", "fil", "fr", "ha", "he", "hi", "id", "ig", "it", "ja", "ko",
    "ky", "lt", "mg", "ms", "ne", "nl", "ny", "pl", "pt", "ro", "ru", "si", "sn", "so", "sr", "sv", "sw", "te", "tr",
    "uk", "vi", "yo", "zh",
];

pub fn is_known_language(code: &str) -> bool {
    KNOWN_LANGUAGES.contains(&code)
}

/// Groups records by a key; used by loaders and pipelines.
pub fn group_by<K, F>(records: &[PredictionRecord], key: F) -> HashMap<K, Vec<&PredictionRecord>>
where
    K: std::hash::Hash + Eq,
    F: Fn(&PredictionRecord) -> K,
{
    let mut out: HashMap<K, Vec<&PredictionRecord>> = HashMap::new();
    for r in records {
        out.entry(key(r)).or_default().push(r);
    }
    out
}

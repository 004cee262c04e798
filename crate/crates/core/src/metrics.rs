//! Pairwise agreement metrics over aligned prediction sets.
//!
//! Every metric is computed from a [`Tally`] of sufficient statistics. Tallies
//! add, so pooling several sets and computing once (micro-averaging) is the
//! same as computing on the concatenated items.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{AlignedItem, AlignedPairSet, PredictionRecord};

/// Smallest admissible `1 - c_exp` before a chance-adjusted score is undefined.
pub const DEGENERATE_CHANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("expected agreement {c_exp} leaves no room above chance")]
    DegenerateChance { c_exp: f64 },
    #[error("item {item_id} has no probability vector")]
    MissingProbabilities { item_id: String },
    #[error("option count differs between sets: {0} vs {1}")]
    MixedOptionCount(usize, usize),
    #[error("no items to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Raw,
    Cohen,
    Scott,
    KappaPHardSimple,
    KappaPHardFull,
    KappaPProb,
    Rankc,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Raw,
        Metric::Cohen,
        Metric::Scott,
        Metric::KappaPHardSimple,
        Metric::KappaPHardFull,
        Metric::KappaPProb,
        Metric::Rankc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Raw => "raw",
            Metric::Cohen => "cohen",
            Metric::Scott => "scott",
            Metric::KappaPHardSimple => "kappa_p_hard_simple",
            Metric::KappaPHardFull => "kappa_p_hard_full",
            Metric::KappaPProb => "kappa_p_prob",
            Metric::Rankc => "rankc",
        }
    }

    pub fn is_chance_adjusted(self) -> bool {
        !matches!(self, Metric::Raw | Metric::Rankc)
    }

    pub fn needs_probabilities(self) -> bool {
        matches!(self, Metric::KappaPProb | Metric::Rankc)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// Expected-agreement formula for hard-label κ_p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardVariant {
    /// `acc₁·acc₂`
    Simple,
    /// `acc₁·acc₂ + (1-acc₁)(1-acc₂)/(C-1)`
    Full,
}

/// Metric value plus the components it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementScore {
    pub metric: Metric,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_obs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_exp: Option<f64>,
    pub n: usize,
}

fn chance_adjusted(metric: Metric, c_obs: f64, c_exp: f64, n: usize) -> Result<AgreementScore, MetricError> {
    if 1.0 - c_exp <= DEGENERATE_CHANCE_EPS {
        return Err(MetricError::DegenerateChance { c_exp });
    }
    Ok(AgreementScore {
        metric,
        value: (c_obs - c_exp) / (1.0 - c_exp),
        c_obs: Some(c_obs),
        c_exp: Some(c_exp),
        n,
    })
}

/// RankC weights `w_j = e^{C-j} / Σ_ℓ e^{C-ℓ}` for `j = 1..=C`.
pub fn rankc_weights(num_options: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=num_options).map(|j| ((num_options - j) as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn rankc_item(left: &[usize], right: &[usize], weights: &[f64]) -> f64 {
    let c = left.len();
    let mut in_left = vec![false; c];
    let mut in_right = vec![false; c];
    let mut overlap = 0usize;
    let mut score = 0.0;
    for j in 0..c {
        let (a, b) = (left[j], right[j]);
        in_left[a] = true;
        in_right[b] = true;
        if a == b {
            overlap += 1;
        } else {
            overlap += usize::from(in_right[a]) + usize::from(in_left[b]);
        }
        score += weights[j] * overlap as f64 / (j + 1) as f64;
    }
    score
}

/// Probability-dependent sums, present only while every item carries probabilities.
#[derive(Debug, Clone, PartialEq)]
struct ProbSums {
    dot: f64,
    gold_left: f64,
    gold_right: f64,
    rankc: f64,
}

/// Additive sufficient statistics for every metric in this module.
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    num_options: usize,
    n: u64,
    agree: u64,
    correct_left: u64,
    correct_right: u64,
    marginal_left: Vec<u64>,
    marginal_right: Vec<u64>,
    prob: Option<ProbSums>,
    first_missing: Option<String>,
}

impl Tally {
    pub fn new(num_options: usize) -> Self {
        Self {
            num_options,
            n: 0,
            agree: 0,
            correct_left: 0,
            correct_right: 0,
            marginal_left: vec![0; num_options],
            marginal_right: vec![0; num_options],
            prob: Some(ProbSums {
                dot: 0.0,
                gold_left: 0.0,
                gold_right: 0.0,
                rankc: 0.0,
            }),
            first_missing: None,
        }
    }

    pub fn from_set(set: &AlignedPairSet) -> Self {
        let mut t = Tally::new(set.num_options);
        let weights = rankc_weights(set.num_options);
        for item in &set.items {
            t.push_with_weights(&item.left, &item.right, item.gold_index, &weights);
        }
        t
    }

    /// Tally of already-joined record pairs (see [`crate::types::join`]).
    pub fn from_pairs(pairs: &[(&PredictionRecord, &PredictionRecord)], num_options: usize) -> Self {
        let mut t = Tally::new(num_options);
        let weights = rankc_weights(num_options);
        for (l, r) in pairs {
            t.push_with_weights(l, r, l.gold_index, &weights);
        }
        t
    }

    pub fn push(&mut self, item: &AlignedItem) {
        let weights = rankc_weights(self.num_options);
        self.push_with_weights(&item.left, &item.right, item.gold_index, &weights);
    }

    /// Adds one item given only hard labels. The tally then supports the
    /// hard-label metrics only; the missing item is reported by position.
    ///
    /// Panics if a label is not below the option count.
    pub fn push_labels(&mut self, left: usize, right: usize, gold: usize) {
        assert!(left < self.num_options && right < self.num_options && gold < self.num_options);
        if self.prob.take().is_some() {
            self.first_missing = Some(format!("#{}", self.n));
        }
        self.n += 1;
        self.agree += u64::from(left == right);
        self.correct_left += u64::from(left == gold);
        self.correct_right += u64::from(right == gold);
        self.marginal_left[left] += 1;
        self.marginal_right[right] += 1;
    }

    fn push_with_weights(&mut self, l: &PredictionRecord, r: &PredictionRecord, gold: usize, weights: &[f64]) {
        self.n += 1;
        self.agree += u64::from(l.predicted_index == r.predicted_index);
        self.correct_left += u64::from(l.predicted_index == gold);
        self.correct_right += u64::from(r.predicted_index == gold);
        self.marginal_left[l.predicted_index] += 1;
        self.marginal_right[r.predicted_index] += 1;
        match (&l.probs, &r.probs, &mut self.prob) {
            (Some(pl), Some(pr), Some(sums)) => {
                sums.dot += pl.entries().iter().zip(pr.entries()).map(|(a, b)| a * b).sum::<f64>();
                sums.gold_left += pl.get(gold);
                sums.gold_right += pr.get(gold);
                sums.rankc += rankc_item(&pl.ranking(), &pr.ranking(), weights);
            }
            (_, _, None) => {}
            _ => {
                self.prob = None;
                self.first_missing = Some(l.item_id.clone());
            }
        }
    }

    /// Pools another tally into this one.
    pub fn merge(&mut self, other: &Tally) -> Result<(), MetricError> {
        if self.num_options != other.num_options {
            return Err(MetricError::MixedOptionCount(self.num_options, other.num_options));
        }
        self.n += other.n;
        self.agree += other.agree;
        self.correct_left += other.correct_left;
        self.correct_right += other.correct_right;
        for (a, b) in self.marginal_left.iter_mut().zip(&other.marginal_left) {
            *a += b;
        }
        for (a, b) in self.marginal_right.iter_mut().zip(&other.marginal_right) {
            *a += b;
        }
        match (&mut self.prob, &other.prob) {
            (Some(a), Some(b)) => {
                a.dot += b.dot;
                a.gold_left += b.gold_left;
                a.gold_right += b.gold_right;
                a.rankc += b.rankc;
            }
            (Some(_), None) => {
                self.prob = None;
                self.first_missing = other.first_missing.clone();
            }
            (None, _) => {}
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn prob_sums(&self) -> Result<&ProbSums, MetricError> {
        self.prob.as_ref().ok_or_else(|| MetricError::MissingProbabilities {
            item_id: self.first_missing.clone().unwrap_or_default(),
        })
    }

    pub fn accuracy_left(&self) -> f64 {
        self.correct_left as f64 / self.nf()
    }

    pub fn accuracy_right(&self) -> f64 {
        self.correct_right as f64 / self.nf()
    }

    /// Finalizes the tally into a score for `metric`.
    pub fn score(&self, metric: Metric) -> Result<AgreementScore, MetricError> {
        if self.n == 0 {
            return Err(MetricError::Empty);
        }
        let n = self.len();
        let nf = self.nf();
        let c_obs_hard = self.agree as f64 / nf;
        match metric {
            Metric::Raw => Ok(AgreementScore {
                metric,
                value: c_obs_hard,
                c_obs: Some(c_obs_hard),
                c_exp: None,
                n,
            }),
            Metric::Cohen => {
                let cross: u128 = self
                    .marginal_left
                    .iter()
                    .zip(&self.marginal_right)
                    .map(|(&a, &b)| a as u128 * b as u128)
                    .sum();
                let c_exp = cross as f64 / (self.n as u128 * self.n as u128) as f64;
                chance_adjusted(metric, c_obs_hard, c_exp, n)
            }
            Metric::Scott => {
                let pooled: u128 = self
                    .marginal_left
                    .iter()
                    .zip(&self.marginal_right)
                    .map(|(&a, &b)| {
                        let s = a as u128 + b as u128;
                        s * s
                    })
                    .sum();
                let total = 2 * self.n as u128;
                let c_exp = pooled as f64 / (total * total) as f64;
                chance_adjusted(metric, c_obs_hard, c_exp, n)
            }
            Metric::KappaPHardSimple | Metric::KappaPHardFull => {
                let a1 = self.accuracy_left();
                let a2 = self.accuracy_right();
                let variant = if metric == Metric::KappaPHardSimple {
                    HardVariant::Simple
                } else {
                    HardVariant::Full
                };
                let c_exp = expected_agreement(a1, a2, self.num_options, variant);
                chance_adjusted(metric, c_obs_hard, c_exp, n)
            }
            Metric::KappaPProb => {
                let sums = self.prob_sums()?;
                let c_obs = sums.dot / nf;
                let p1 = sums.gold_left / nf;
                let p2 = sums.gold_right / nf;
                let c_exp = expected_agreement(p1, p2, self.num_options, HardVariant::Full);
                chance_adjusted(metric, c_obs, c_exp, n)
            }
            Metric::Rankc => {
                let sums = self.prob_sums()?;
                Ok(AgreementScore {
                    metric,
                    value: sums.rankc / nf,
                    c_obs: None,
                    c_exp: None,
                    n,
                })
            }
        }
    }
}

/// Chance agreement of two raters with (mean) correctness `p1`, `p2`.
pub fn expected_agreement(p1: f64, p2: f64, num_options: usize, variant: HardVariant) -> f64 {
    let both_right = p1 * p2;
    match variant {
        HardVariant::Simple => both_right,
        HardVariant::Full => both_right + (1.0 - p1) * (1.0 - p2) / (num_options - 1) as f64,
    }
}

/// Fraction of records whose prediction matches gold. Empty input gives NaN.
pub fn accuracy<'a, I>(records: I) -> f64
where
    I: IntoIterator<Item = &'a PredictionRecord>,
{
    let (mut n, mut hit) = (0usize, 0usize);
    for r in records {
        n += 1;
        hit += usize::from(r.is_correct());
    }
    hit as f64 / n as f64
}

pub fn score(set: &AlignedPairSet, metric: Metric) -> Result<AgreementScore, MetricError> {
    Tally::from_set(set).score(metric)
}

pub fn raw_agreement(set: &AlignedPairSet) -> Result<AgreementScore, MetricError> {
    score(set, Metric::Raw)
}

pub fn cohen_kappa(set: &AlignedPairSet) -> Result<AgreementScore, MetricError> {
    score(set, Metric::Cohen)
}

pub fn scott_pi(set: &AlignedPairSet) -> Result<AgreementScore, MetricError> {
    score(set, Metric::Scott)
}

pub fn kappa_p_hard(set: &AlignedPairSet, variant: HardVariant) -> Result<AgreementScore, MetricError> {
    match variant {
        HardVariant::Simple => score(set, Metric::KappaPHardSimple),
        HardVariant::Full => score(set, Metric::KappaPHardFull),
    }
}

pub fn kappa_p_prob(set: &AlignedPairSet) -> Result<AgreementScore, MetricError> {
    score(set, Metric::KappaPProb)
}

pub fn rankc(set: &AlignedPairSet) -> Result<AgreementScore, MetricError> {
    score(set, Metric::Rankc)
}

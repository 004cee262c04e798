//! Synthetic rater pairs with controlled error coupling.
//!
//! Each item is either coupled (probability ρ) or independent. A coupled item
//! draws one shared uniform `u`; rater k is correct iff `u < acc_k`, and when
//! both are wrong they pick the same wrong option. An independent item gives
//! each rater its own coin and its own uniformly chosen wrong option. Both
//! branches keep rater k's accuracy at `acc_k`, so ρ moves linearly between
//! independence (ρ = 0) and maximal coincidence (ρ = 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metrics::Tally;
use crate::types::{align, AlignMode, AlignedPairSet, PredictionRecord};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct RaterPair {
    pub num_options: usize,
    pub gold: Vec<usize>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl RaterPair {
    pub fn records(&self, model: &str, predictions: &[usize]) -> Vec<PredictionRecord> {
        predictions
            .iter()
            .zip(&self.gold)
            .enumerate()
            .map(|(i, (&p, &g))| PredictionRecord {
                item_id: format!("synth-{i:06}"),
                subject: "synthetic".to_string(),
                language: "xx".to_string(),
                model: model.to_string(),
                predicted_index: p,
                gold_index: g,
                probs: None,
            })
            .collect()
    }

    /// Sufficient statistics of the pair, without building records.
    pub fn tally(&self) -> Tally {
        let mut t = Tally::new(self.num_options);
        for ((&l, &r), &g) in self.left.iter().zip(&self.right).zip(&self.gold) {
            t.push_labels(l, r, g);
        }
        t
    }

    pub fn aligned(&self) -> AlignedPairSet {
        let l = self.records("left", &self.left);
        let r = self.records("right", &self.right);
        align("left", &l, "right", &r, self.num_options, AlignMode::Strict).expect("same item ids")
    }
}

/// Expected observed agreement of [`synth_raters`] output.
pub fn expected_observed_agreement(num_options: usize, acc1: f64, acc2: f64, rho: f64) -> f64 {
    let coupled = acc1.min(acc2) + 1.0 - acc1.max(acc2);
    let independent = acc1 * acc2 + (1.0 - acc1) * (1.0 - acc2) / (num_options as f64 - 1.0);
    rho * coupled + (1.0 - rho) * independent
}

fn wrong_option(rng: &mut ChaCha8Rng, gold: usize, num_options: usize) -> usize {
    let k = rng.gen_range(0..num_options - 1);
    if k >= gold {
        k + 1
    } else {
        k
    }
}

pub fn synth_raters(
    n_items: usize,
    num_options: usize,
    acc1: f64,
    acc2: f64,
    rho: f64,
    seed: u64,
) -> Result<RaterPair, PipelineError> {
    if num_options < 2 {
        return Err(PipelineError::InvalidParameter(format!(
            "option count must be at least 2, got {num_options}"
        )));
    }
    for (name, v) in [("acc1", acc1), ("acc2", acc2), ("rho", rho)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(PipelineError::InvalidParameter(format!(
                "{name} must lie in [0, 1], got {v}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pair = RaterPair {
        num_options,
        gold: Vec::with_capacity(n_items),
        left: Vec::with_capacity(n_items),
        right: Vec::with_capacity(n_items),
    };
    for _ in 0..n_items {
        let gold = rng.gen_range(0..num_options);
        let (l, r) = if rng.gen::<f64>() < rho {
            let u: f64 = rng.gen();
            let shared_wrong = wrong_option(&mut rng, gold, num_options);
            let l = if u < acc1 { gold } else { shared_wrong };
            let r = if u < acc2 { gold } else { shared_wrong };
            (l, r)
        } else {
            let l = if rng.gen::<f64>() < acc1 {
                gold
            } else {
                wrong_option(&mut rng, gold, num_options)
            };
            let r = if rng.gen::<f64>() < acc2 {
                gold
            } else {
                wrong_option(&mut rng, gold, num_options)
            };
            (l, r)
        };
        pair.gold.push(gold);
        pair.left.push(l);
        pair.right.push(r);
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{kappa_p_hard, HardVariant, Metric, MetricError};

    fn observed(pair: &RaterPair) -> f64 {
        pair.left.iter().zip(&pair.right).filter(|(a, b)| a == b).count() as f64 / pair.gold.len() as f64
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            synth_raters(10, 1, 0.5, 0.5, 0.0, 1),
            Err(PipelineError::InvalidParameter(_))
        ));
        assert!(matches!(
            synth_raters(10, 4, 1.5, 0.5, 0.0, 1),
            Err(PipelineError::InvalidParameter(_))
        ));
        assert!(matches!(
            synth_raters(10, 4, 0.5, 0.5, -0.1, 1),
            Err(PipelineError::InvalidParameter(_))
        ));
    }

    #[test]
    fn same_seed_same_output() {
        let a = synth_raters(500, 4, 0.6, 0.7, 0.3, 9).unwrap();
        let b = synth_raters(500, 4, 0.6, 0.7, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_raters(500, 4, 0.6, 0.7, 0.3, 10).unwrap());
    }

    #[test]
    fn marginal_accuracy_matches_request() {
        let n = 40_000;
        for rho in [0.0, 0.5, 1.0] {
            let p = synth_raters(n, 4, 0.3, 0.8, rho, 3).unwrap();
            for (preds, acc) in [(&p.left, 0.3), (&p.right, 0.8)] {
                let hit = preds.iter().zip(&p.gold).filter(|(a, b)| a == b).count() as f64 / n as f64;
                let sd = (acc * (1.0 - acc) / n as f64).sqrt();
                assert!((hit - acc).abs() < 4.0 * sd, "rho {rho}: {hit} vs {acc}");
            }
        }
    }

    #[test]
    fn observed_agreement_matches_closed_form() {
        let n = 20_000;
        for &(a1, a2, rho) in &[(0.6, 0.6, 0.0), (0.6, 0.6, 1.0), (0.4, 0.7, 0.5), (0.9, 0.2, 0.25)] {
            let expect = expected_observed_agreement(4, a1, a2, rho);
            let got = observed(&synth_raters(n, 4, a1, a2, rho, 17).unwrap());
            let sd = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (got - expect).abs() <= 3.0 * sd + 1e-12,
                "({a1},{a2},{rho}): {got} vs {expect}"
            );
        }
    }

    #[test]
    fn expected_agreement_increases_with_rho() {
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=10 {
            let v = expected_observed_agreement(4, 0.6, 0.5, k as f64 / 10.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn empirical_kappa_increases_with_rho() {
        let kappas: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&rho| {
                let set = synth_raters(20_000, 4, 0.5, 0.5, rho, 5).unwrap().aligned();
                kappa_p_hard(&set, HardVariant::Full).unwrap().value
            })
            .collect();
        assert!(kappas[0] < kappas[1] && kappas[1] < kappas[2], "{kappas:?}");
        assert!(kappas[2] > 0.9);
    }

    #[test]
    fn tally_matches_aligned_records() {
        let p = synth_raters(300, 3, 0.5, 0.7, 0.4, 2).unwrap();
        let via_records = crate::metrics::Tally::from_set(&p.aligned());
        for metric in [Metric::Raw, Metric::Cohen, Metric::Scott, Metric::KappaPHardFull] {
            assert_eq!(p.tally().score(metric).unwrap(), via_records.score(metric).unwrap());
        }
        assert!(matches!(
            p.tally().score(Metric::Rankc),
            Err(MetricError::MissingProbabilities { .. })
        ));
    }

    #[test]
    fn perfect_raters_are_degenerate() {
        let set = synth_raters(100, 4, 1.0, 1.0, 0.0, 1).unwrap().aligned();
        assert!(matches!(
            kappa_p_hard(&set, HardVariant::Full),
            Err(MetricError::DegenerateChance { .. })
        ));
    }
}

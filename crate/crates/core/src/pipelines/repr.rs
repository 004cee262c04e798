//! Representational similarity of hidden states against functional agreement.

use std::collections::BTreeMap;

use crate::aggregation::SimilarityMatrix;
use crate::ingestion::EmbeddingDump;
use crate::stats::pearson;

use super::report::{fingerprint, AnalysisReport, StatOutcome, Statistic, Table};
use super::{mean, PipelineError};

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, PipelineError> {
    if a.len() != b.len() {
        return Err(PipelineError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(PipelineError::InvalidParameter("cosine of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn mean_cosine(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64, PipelineError> {
    let values: Vec<f64> = pairs.iter().map(|(a, b)| cosine(a, b)).collect::<Result<_, _>>()?;
    Ok(mean(&values).expect("dumps hold at least one pair"))
}

/// Mean matched-pair cosine, mean baseline cosine, and their difference.
pub fn adjusted_similarity(dump: &EmbeddingDump) -> Result<(f64, f64, f64), PipelineError> {
    let matched = mean_cosine(&dump.matched)?;
    let baseline = mean_cosine(&dump.baseline)?;
    Ok((matched, baseline, matched - baseline))
}

/// Splits a pair tag like `en-fr` into two labels present in the matrix.
fn resolve_pair<'a>(tag: &'a str, matrix: &SimilarityMatrix) -> Option<(&'a str, &'a str)> {
    tag.match_indices('-').find_map(|(k, _)| {
        let (a, b) = (&tag[..k], &tag[k + 1..]);
        (matrix.index_of(a).is_some() && matrix.index_of(b).is_some()).then_some((a, b))
    })
}

/// Correlates each pair's baseline-adjusted hidden-state similarity with its
/// agreement score from `matrix`.
pub fn repr_functional_correlation(
    dumps: &[EmbeddingDump],
    matrix: &SimilarityMatrix,
) -> Result<AnalysisReport, PipelineError> {
    if let Some(first) = dumps.first() {
        if let Some(d) = dumps.iter().find(|d| d.dim != first.dim) {
            return Err(PipelineError::DimensionMismatch(first.dim, d.dim));
        }
    }
    let mut sorted: Vec<&EmbeddingDump> = dumps.iter().collect();
    sorted.sort_by(|a, b| a.pair.cmp(&b.pair));

    let mut flags = BTreeMap::new();
    flags.insert("metric".to_string(), matrix.metric.name().to_string());
    let inputs: Vec<_> = sorted
        .iter()
        .map(|d| (d.pair.as_str(), &d.matched, &d.baseline))
        .collect();
    let mut report = AnalysisReport::new(
        "repr_functional_correlation",
        fingerprint(&(matrix, inputs), &flags),
        flags,
    );

    let mut table = Table::new(
        "representational_similarity",
        "pair",
        &["kappa", "matched_cosine", "baseline_cosine", "adjusted_similarity"],
    );
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for d in sorted {
        let (a, b) = resolve_pair(&d.pair, matrix).ok_or_else(|| PipelineError::MissingPair(d.pair.clone()))?;
        let (matched, baseline, adjusted) = adjusted_similarity(d)?;
        let kappa = matrix.value_by_label(a, b);
        table.push(&d.pair, vec![kappa, Some(matched), Some(baseline), Some(adjusted)]);
        match kappa {
            Some(k) => {
                xs.push(adjusted);
                ys.push(k);
            }
            None => report
                .body
                .warnings
                .push(format!("{}: agreement undefined, left out of the correlation", d.pair)),
        }
    }
    report.body.tables.push(table);
    let c = pearson(&xs, &ys).map_err(|e| PipelineError::stats("adjusted_similarity_vs_kappa", e))?;
    report.body.statistics.push(Statistic {
        name: "adjusted_similarity_vs_kappa".into(),
        subject: None,
        method: "pearson".into(),
        metric: matrix.metric.name().to_string(),
        outcome: StatOutcome::Correlation(c),
    });
    report.body.series.insert("adjusted_similarity".into(), xs);
    report.body.series.insert("kappa".into(), ys);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{AgreementScore, Metric};

    fn dump(pair: &str, matched: Vec<(Vec<f64>, Vec<f64>)>, baseline: Vec<(Vec<f64>, Vec<f64>)>) -> EmbeddingDump {
        EmbeddingDump::new(pair, matched, baseline).unwrap()
    }

    fn matrix(labels: &[&str], values: &[(usize, usize, f64)]) -> SimilarityMatrix {
        let n = labels.len();
        let mut cells = vec![None; n * n];
        for &(i, j, v) in values {
            let s = AgreementScore {
                metric: Metric::Raw,
                value: v,
                c_obs: Some(v),
                c_exp: None,
                n: 10,
            };
            cells[i * n + j] = Some(s);
            cells[j * n + i] = Some(s);
        }
        SimilarityMatrix {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            cells,
            metric: Metric::Raw,
            filter: None,
        }
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[-2.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(PipelineError::DimensionMismatch(1, 2))
        ));
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn baseline_equal_to_matched_gives_zero() {
        let pairs = vec![(vec![1.0, 2.0], vec![2.0, 1.0]), (vec![0.5, 0.1], vec![0.3, 0.9])];
        let (_, _, adj) = adjusted_similarity(&dump("en-fr", pairs.clone(), pairs)).unwrap();
        assert_eq!(adj, 0.0);
    }

    #[test]
    fn orthogonal_everywhere_gives_zero() {
        let orth = vec![(vec![1.0, 0.0], vec![0.0, 1.0])];
        let (m, b, adj) = adjusted_similarity(&dump("en-fr", orth.clone(), orth)).unwrap();
        assert_eq!((m, b, adj), (0.0, 0.0, 0.0));
    }

    fn at_angle(cos: f64) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0, 0.0], vec![cos, (1.0 - cos * cos).sqrt()])
    }

    #[test]
    fn rising_similarity_correlates_positively() {
        let m = matrix(&["en", "fr", "de", "sw"], &[(0, 1, 0.8), (0, 2, 0.6), (0, 3, 0.2)]);
        let base = vec![at_angle(0.1)];
        let dumps = vec![
            dump("en-fr", vec![at_angle(0.9)], base.clone()),
            dump("en-de", vec![at_angle(0.7)], base.clone()),
            dump("en-sw", vec![at_angle(0.3)], base),
        ];
        let r = repr_functional_correlation(&dumps, &m).unwrap();
        let c = r
            .statistic("adjusted_similarity_vs_kappa", None)
            .unwrap()
            .correlation()
            .unwrap();
        assert!(c.r > 0.99);
        let t = r.table("representational_similarity").unwrap();
        assert!((t.get("en-fr", "adjusted_similarity").unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(t.get("en-fr", "kappa"), Some(0.8));
    }

    #[test]
    fn unknown_pair_is_reported() {
        let m = matrix(&["en", "fr"], &[(0, 1, 0.5)]);
        let d = vec![dump("en-ja", vec![at_angle(0.5)], vec![at_angle(0.1)])];
        assert!(matches!(repr_functional_correlation(&d, &m), Err(PipelineError::MissingPair(p)) if p == "en-ja"));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let m = matrix(&["en", "fr", "de"], &[(0, 1, 0.5), (0, 2, 0.4)]);
        let d = vec![
            dump("en-fr", vec![at_angle(0.5)], vec![at_angle(0.1)]),
            dump(
                "en-de",
                vec![(vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0])],
                vec![(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0])],
            ),
        ];
        assert!(matches!(
            repr_functional_correlation(&d, &m),
            Err(PipelineError::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn hyphenated_labels_resolve() {
        let m = matrix(&["zh-cn", "en"], &[(0, 1, 0.5)]);
        assert_eq!(resolve_pair("zh-cn-en", &m), Some(("zh-cn", "en")));
        assert_eq!(resolve_pair("en-zh-cn", &m), Some(("en", "zh-cn")));
        assert_eq!(resolve_pair("en-fr", &m), None);
    }
}

//! Scale, domain, resource, and intra-versus-inter analyses.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::aggregation::{closest_size_pairing, similarity_matrix, ModelInfo, SimilarityMatrix, SubjectFilter};
use crate::ingestion::Dataset;
use crate::metrics::accuracy;
use crate::stats::{mann_whitney_u, paired_histograms, pearson, Alternative};
use crate::types::{CategoryTable, Granularity, PredictionRecord, ResourceTable};

use super::report::{fingerprint, AnalysisReport, NamedHistogram, StatOutcome, Statistic, Table};
use super::{collapse, mean, Pairing, PipelineError, PipelineOptions, Pivot};

type Entries = Vec<(String, Vec<PredictionRecord>)>;

pub(crate) const ENGLISH: &str = "en";

fn models(dataset: &Dataset, opts: &PipelineOptions) -> Vec<ModelInfo> {
    dataset
        .manifest
        .models
        .iter()
        .filter(|m| opts.includes(&m.name) && dataset.logs.contains_key(&m.name))
        .cloned()
        .collect()
}

/// One model's logs as (language, records), in manifest language order.
fn language_entries(dataset: &Dataset, model: &str) -> Entries {
    dataset
        .manifest
        .languages
        .iter()
        .filter_map(|l| dataset.records(model, l).map(|r| (l.clone(), r.to_vec())))
        .collect()
}

/// One language's logs as (model, records), in roster order.
fn model_entries(dataset: &Dataset, roster: &[ModelInfo], language: &str) -> Entries {
    roster
        .iter()
        .filter_map(|m| dataset.records(&m.name, language).map(|r| (m.name.clone(), r.to_vec())))
        .collect()
}

fn new_report<T: Serialize>(
    name: &str,
    dataset: &Dataset,
    extra: &T,
    flags: BTreeMap<String, String>,
) -> AnalysisReport {
    let fp = fingerprint(&(&dataset.manifest, extra), &flags);
    let mut report = AnalysisReport::new(name, fp, flags);
    report.body.warnings.extend(dataset.warnings.iter().cloned());
    report
}

fn note_undefined(report: &mut AnalysisReport, what: &str, m: &SimilarityMatrix) {
    let s = m.summary();
    if s.undefined > 0 {
        report.body.warnings.push(format!(
            "{what}: {} of {} pairs undefined (degenerate chance agreement)",
            s.undefined,
            s.undefined + s.defined
        ));
    }
}

fn correlation_stat(name: &str, x: &[f64], y: &[f64], opts: &PipelineOptions) -> Result<Statistic, PipelineError> {
    let c = pearson(x, y).map_err(|e| PipelineError::stats(name, e))?;
    Ok(Statistic {
        name: name.to_string(),
        subject: None,
        method: "pearson".to_string(),
        metric: opts.metric.name().to_string(),
        outcome: StatOutcome::Correlation(c),
    })
}

fn mean_accuracy(entries: &Entries, filter: Option<&SubjectFilter>) -> Option<f64> {
    let per_language: Vec<f64> = entries
        .iter()
        .filter_map(|(_, recs)| {
            let n = recs.iter().filter(|r| filter.is_none_or(|f| f.accepts(r))).count();
            (n > 0).then(|| accuracy(recs.iter().filter(|r| filter.is_none_or(|f| f.accepts(r)))))
        })
        .collect();
    mean(&per_language)
}

fn as_f64(n: usize) -> Option<f64> {
    Some(n as f64)
}

/// Mean intra-model agreement against model size and accuracy.
pub fn rq1_scale_trend(dataset: &Dataset, opts: &PipelineOptions) -> Result<AnalysisReport, PipelineError> {
    let c = dataset.manifest.num_options;
    let mut report = new_report("rq1_scale_trend", dataset, &(), opts.flags());
    let mut table = Table::new(
        "scale_trend",
        "model",
        &[
            "size_billions",
            "mean_kappa",
            "mean_accuracy",
            "defined_pairs",
            "undefined_pairs",
        ],
    );
    let (mut sizes, mut accs, mut kappas) = (Vec::new(), Vec::new(), Vec::new());
    for m in models(dataset, opts) {
        let entries = language_entries(dataset, &m.name);
        let matrix = similarity_matrix(&entries, c, opts.metric, None)?;
        note_undefined(&mut report, &format!("intra {}", m.name), &matrix);
        let kappa = collapse(&matrix, &entries, c, opts, None)?;
        let acc = mean_accuracy(&entries, None);
        let s = matrix.summary();
        table.push(
            &m.name,
            vec![
                Some(m.size_billions),
                kappa,
                acc,
                as_f64(s.defined),
                as_f64(s.undefined),
            ],
        );
        match (kappa, acc) {
            (Some(k), Some(a)) => {
                sizes.push(m.size_billions);
                accs.push(a);
                kappas.push(k);
            }
            _ => report.body.warnings.push(format!(
                "{}: no defined intra-model score, left out of the correlations",
                m.name
            )),
        }
    }
    report.body.tables.push(table);
    report
        .body
        .statistics
        .push(correlation_stat("size_vs_kappa", &sizes, &kappas, opts)?);
    report
        .body
        .statistics
        .push(correlation_stat("accuracy_vs_kappa", &accs, &kappas, opts)?);
    report.body.series.insert("size_billions".into(), sizes);
    report.body.series.insert("mean_accuracy".into(), accs);
    report.body.series.insert("mean_kappa".into(), kappas);
    Ok(report)
}

/// Per-model intra-model agreement and accuracy within each subject category.
///
/// With `only` set, the report covers that single category.
pub fn rq2_domain_breakdown(
    dataset: &Dataset,
    table: &CategoryTable,
    granularity: Granularity,
    only: Option<&str>,
    opts: &PipelineOptions,
) -> Result<AnalysisReport, PipelineError> {
    let c = dataset.manifest.num_options;
    let gran = match granularity {
        Granularity::Domain => "domain",
        Granularity::Fine => "fine",
    };
    let mut flags = opts.flags();
    flags.insert("granularity".into(), gran.into());
    if let Some(o) = only {
        flags.insert("category".into(), o.into());
    }
    let table_rows: Vec<(String, String, String)> = {
        let mut rows: Vec<_> = table
            .subjects()
            .map(|s| {
                (
                    s.to_string(),
                    table.domain(s).unwrap_or_default().to_string(),
                    table.category(s).unwrap_or_default().to_string(),
                )
            })
            .collect();
        rows.sort();
        rows
    };
    let mut report = new_report("rq2_domain_breakdown", dataset, &table_rows, flags);

    let mut unresolved = BTreeSet::new();
    for langs in dataset.logs.values() {
        for recs in langs.values() {
            for r in recs {
                if table.resolve(&r.subject, granularity).is_none() {
                    unresolved.insert(r.subject.clone());
                }
            }
        }
    }
    if let Some(first) = unresolved.first() {
        if opts.strict {
            return Err(crate::aggregation::AggregationError::UnknownSubject(first.clone()).into());
        }
        report.body.warnings.push(format!(
            "{} subjects missing from the category table are excluded: {}",
            unresolved.len(),
            unresolved.iter().cloned().collect::<Vec<_>>().join(", ")
        ));
    }

    let all_groups = table.groups(granularity);
    let groups: Vec<String> = match only {
        Some(o) if all_groups.iter().any(|g| g == o) => vec![o.to_string()],
        Some(o) => {
            return Err(PipelineError::InvalidParameter(format!(
                "category {o:?} is not defined at {gran} granularity"
            )))
        }
        None => all_groups,
    };
    let roster = models(dataset, opts);

    // Every log covers the same items, so any one of them gives the category sizes.
    let reference: &[PredictionRecord] = roster
        .first()
        .and_then(|m| {
            dataset
                .manifest
                .languages
                .first()
                .and_then(|l| dataset.records(&m.name, l))
        })
        .unwrap_or(&[]);
    let filters: Vec<SubjectFilter> = groups
        .iter()
        .map(|g| SubjectFilter::for_group(table, g, granularity))
        .collect();
    let counts: Vec<usize> = filters
        .iter()
        .map(|f| reference.iter().filter(|r| f.accepts(r)).count())
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        if counts[i] == 0 {
            report
                .body
                .warnings
                .push(format!("category {g:?} has no items and is skipped"));
        } else {
            kept.push(i);
        }
    }
    let columns: Vec<&str> = kept.iter().map(|&i| groups[i].as_str()).collect();

    let mut items = Table::new("items", "", &columns);
    items.push("items", kept.iter().map(|&i| as_f64(counts[i])).collect());
    let mut kappa_table = Table::new("kappa", "model", &columns);
    let mut acc_table = Table::new("accuracy", "model", &columns);
    for m in &roster {
        let entries = language_entries(dataset, &m.name);
        let (mut krow, mut arow) = (Vec::new(), Vec::new());
        for &i in &kept {
            let f = &filters[i];
            let matrix = similarity_matrix(&entries, c, opts.metric, Some(f))?;
            note_undefined(&mut report, &format!("intra {} / {}", m.name, groups[i]), &matrix);
            krow.push(collapse(&matrix, &entries, c, opts, Some(f))?);
            arow.push(mean_accuracy(&entries, Some(f)));
        }
        kappa_table.push(&m.name, krow);
        acc_table.push(&m.name, arow);
    }
    report.body.tables.push(items);
    report.body.tables.push(kappa_table);
    report.body.tables.push(acc_table);
    Ok(report)
}

/// Mean inter-model agreement per language against resource availability.
pub fn rq3_resource_correlation(
    dataset: &Dataset,
    resources: &ResourceTable,
    log_scale: bool,
    opts: &PipelineOptions,
) -> Result<AnalysisReport, PipelineError> {
    let c = dataset.manifest.num_options;
    let mut flags = opts.flags();
    flags.insert("log_resource".into(), if log_scale { "on" } else { "off" }.into());
    for l in &dataset.manifest.languages {
        if resources.get(l).is_none() {
            return Err(PipelineError::MissingLanguage(l.clone()));
        }
    }
    let mut report = new_report("rq3_resource_correlation", dataset, resources, flags);
    let roster = models(dataset, opts);
    let mut table = Table::new(
        "resource_correlation",
        "language",
        &[
            "article_count",
            "resource_value",
            "mean_kappa",
            "defined_pairs",
            "undefined_pairs",
        ],
    );
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for l in &dataset.manifest.languages {
        let count = resources.get(l).expect("checked above") as f64;
        let x = if log_scale { count.log10() } else { count };
        let entries = model_entries(dataset, &roster, l);
        let matrix = similarity_matrix(&entries, c, opts.metric, None)?;
        note_undefined(&mut report, &format!("inter {l}"), &matrix);
        let kappa = collapse(&matrix, &entries, c, opts, None)?;
        let s = matrix.summary();
        table.push(
            l,
            vec![Some(count), Some(x), kappa, as_f64(s.defined), as_f64(s.undefined)],
        );
        if let Some(k) = kappa {
            xs.push(x);
            ys.push(k);
        }
    }
    report.body.tables.push(table);
    report
        .body
        .statistics
        .push(correlation_stat("resource_vs_kappa", &xs, &ys, opts)?);
    report.body.series.insert("resource_value".into(), xs);
    report.body.series.insert("mean_kappa".into(), ys);
    Ok(report)
}

/// Per model: its cross-language agreement versus its agreement with other
/// models in the same language, compared with a two-sided Mann-Whitney U test.
///
/// Per-model statistical failures (e.g. every value tied) are recorded as
/// error entries in the report instead of aborting the run.
pub fn rq4_intra_vs_inter(
    dataset: &Dataset,
    pairing: Pairing,
    pivot: Pivot,
    opts: &PipelineOptions,
) -> Result<AnalysisReport, PipelineError> {
    let c = dataset.manifest.num_options;
    let languages = &dataset.manifest.languages;
    let roster = models(dataset, opts);
    if roster.len() < 2 {
        return Err(PipelineError::InvalidParameter(format!(
            "need at least 2 models, got {}",
            roster.len()
        )));
    }
    if languages.len() < 2 {
        return Err(PipelineError::InvalidParameter(format!(
            "need at least 2 languages, got {}",
            languages.len()
        )));
    }
    if pivot == Pivot::English && !languages.iter().any(|l| l == ENGLISH) {
        return Err(PipelineError::MissingLanguage(ENGLISH.to_string()));
    }
    let partners = match pairing {
        Pairing::Full => None,
        Pairing::ClosestSize => Some(closest_size_pairing(&roster)?),
    };

    let mut flags = opts.flags();
    flags.insert(
        "pairing".into(),
        match pairing {
            Pairing::Full => "full",
            Pairing::ClosestSize => "closest-size",
        }
        .into(),
    );
    flags.insert(
        "pivot".into(),
        match pivot {
            Pivot::All => "all",
            Pivot::English => "en",
        }
        .into(),
    );
    let mut report = new_report("rq4_intra_vs_inter", dataset, &(), flags);

    let inter: Vec<SimilarityMatrix> = languages
        .iter()
        .map(|l| similarity_matrix(&model_entries(dataset, &roster, l), c, opts.metric, None))
        .collect::<Result<_, _>>()?;

    let l = languages.len();
    let expected_intra = match pivot {
        Pivot::All => l * (l - 1) / 2,
        Pivot::English => l - 1,
    };
    let expected_inter = match pairing {
        Pairing::Full => (roster.len() - 1) * l,
        Pairing::ClosestSize => l,
    };

    let mut counts = Table::new(
        "rq4_counts",
        "model",
        &[
            "intra_values",
            "inter_values",
            "intra_undefined",
            "inter_undefined",
            "intra_median",
            "inter_median",
            "u_statistic",
            "p_value",
        ],
    );
    for m in &roster {
        let intra_matrix = similarity_matrix(&language_entries(dataset, &m.name), c, opts.metric, None)?;
        let mut intra_cells = Vec::new();
        for (i, j) in intra_matrix.unique_pairs() {
            let keep = match pivot {
                Pivot::All => true,
                Pivot::English => intra_matrix.labels[i] == ENGLISH || intra_matrix.labels[j] == ENGLISH,
            };
            if keep {
                intra_cells.push(intra_matrix.value(i, j));
            }
        }
        let mut inter_cells = Vec::new();
        for matrix in &inter {
            let me = matrix.index_of(&m.name).expect("roster model in matrix");
            for (k, other) in matrix.labels.iter().enumerate() {
                let keep = match &partners {
                    None => k != me,
                    Some(p) => p.get(&m.name) == Some(other),
                };
                if keep {
                    inter_cells.push(matrix.value(me, k));
                }
            }
        }
        assert_eq!(intra_cells.len(), expected_intra, "intra value count for {}", m.name);
        assert_eq!(inter_cells.len(), expected_inter, "inter value count for {}", m.name);

        let intra: Vec<f64> = intra_cells.iter().flatten().copied().collect();
        let inter_v: Vec<f64> = inter_cells.iter().flatten().copied().collect();
        let (iu, eu) = (intra_cells.len() - intra.len(), inter_cells.len() - inter_v.len());
        if iu + eu > 0 {
            report.body.warnings.push(format!(
                "{}: {iu} intra and {eu} inter values undefined (degenerate chance agreement)",
                m.name
            ));
        }

        let outcome = match mann_whitney_u(&intra, &inter_v, Alternative::TwoSided) {
            Ok(u) => StatOutcome::MannWhitney(u),
            Err(e) => StatOutcome::Error { message: e.to_string() },
        };
        let (u_stat, p) = match &outcome {
            StatOutcome::MannWhitney(u) => (Some(u.u_statistic), Some(u.p_value)),
            _ => (None, None),
        };
        let med = |v: &[f64]| -> Option<f64> {
            if v.is_empty() {
                return None;
            }
            let mut s = v.to_vec();
            s.sort_by(|a, b| a.total_cmp(b));
            let n = s.len();
            Some(if n % 2 == 1 {
                s[n / 2]
            } else {
                (s[n / 2 - 1] + s[n / 2]) / 2.0
            })
        };
        counts.push(
            &m.name,
            vec![
                as_f64(intra.len()),
                as_f64(inter_v.len()),
                as_f64(iu),
                as_f64(eu),
                med(&intra),
                med(&inter_v),
                u_stat,
                p,
            ],
        );
        report.body.statistics.push(Statistic {
            name: "intra_vs_inter".into(),
            subject: Some(m.name.clone()),
            method: "mann_whitney_u".into(),
            metric: opts.metric.name().to_string(),
            outcome,
        });
        if let Ok((hi, he)) = paired_histograms(&intra, &inter_v, opts.bins.max(1)) {
            report.body.histograms.push(NamedHistogram {
                name: "intra".into(),
                subject: Some(m.name.clone()),
                histogram: hi,
            });
            report.body.histograms.push(NamedHistogram {
                name: "inter".into(),
                subject: Some(m.name.clone()),
                histogram: he,
            });
        }
        report.body.series.insert(format!("intra/{}", m.name), intra);
        report.body.series.insert(format!("inter/{}", m.name), inter_v);
    }
    let mut expected = Table::new("rq4_expected_counts", "", &["intra_values", "inter_values"]);
    expected.push("expected", vec![as_f64(expected_intra), as_f64(expected_inter)]);
    report.body.tables.push(counts);
    report.body.tables.push(expected);
    Ok(report)
}

/// Intra-model matrices for every model and inter-model matrices for every
/// language, as tables.
pub fn similarity_matrices(dataset: &Dataset, opts: &PipelineOptions) -> Result<AnalysisReport, PipelineError> {
    let c = dataset.manifest.num_options;
    let roster = models(dataset, opts);
    let mut report = new_report("similarity_matrices", dataset, &(), opts.flags());
    let mut summary = Table::new("matrix_means", "matrix", &["mean", "defined_pairs", "undefined_pairs"]);
    for m in &roster {
        let entries = language_entries(dataset, &m.name);
        let matrix = similarity_matrix(&entries, c, opts.metric, None)?;
        let name = format!("intra_{}", m.name);
        note_undefined(&mut report, &name, &matrix);
        let s = matrix.summary();
        summary.push(
            &name,
            vec![
                collapse(&matrix, &entries, c, opts, None)?,
                as_f64(s.defined),
                as_f64(s.undefined),
            ],
        );
        report.body.tables.push(Table::from_matrix(&name, &matrix));
    }
    for l in &dataset.manifest.languages {
        let entries = model_entries(dataset, &roster, l);
        let matrix = similarity_matrix(&entries, c, opts.metric, None)?;
        let name = format!("inter_{l}");
        note_undefined(&mut report, &name, &matrix);
        let s = matrix.summary();
        summary.push(
            &name,
            vec![
                collapse(&matrix, &entries, c, opts, None)?,
                as_f64(s.defined),
                as_f64(s.undefined),
            ],
        );
        report.body.tables.push(Table::from_matrix(&name, &matrix));
    }
    report.body.tables.push(summary);
    Ok(report)
}

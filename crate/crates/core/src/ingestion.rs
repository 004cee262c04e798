//! Readers and writers for prediction logs, lookup tables, embedding dumps,
//! and the run manifest that ties them together.
//!
//! Prediction logs are line-delimited JSON, one [`PredictionRecord`] per
//! line. Unknown fields are ignored so logs converted from other harnesses
//! can carry extra metadata.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::ModelInfo;
use crate::types::{is_known_language, CategoryTable, PredictionRecord, ResourceTable, TypeError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} options, found {found}")]
    InconsistentOptionCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate item id {item_id}")]
    DuplicateItemId { line: usize, item_id: String },
    #[error("line {line}: article count for {language} must be positive")]
    NonPositiveCount { line: usize, language: String },
    #[error("unknown language code {0:?}")]
    UnknownLanguageCode(String),
    #[error("line {line}: expected vectors of dimension {expected}, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("embedding dump has no baseline pairs")]
    EmptyBaseline,
    #[error("embedding dump has no matched pairs")]
    EmptyMatched,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
}

impl IngestError {
    fn in_file(self, path: &Path) -> Self {
        IngestError::InFile {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with file context peeled off.
    pub fn root(&self) -> &IngestError {
        match self {
            IngestError::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, IngestError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn read_to_string(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Records parsed from one log, plus non-fatal findings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionLog {
    pub records: Vec<PredictionRecord>,
    pub warnings: Vec<String>,
}

/// Parses a line-delimited prediction log. Blank lines are skipped.
pub fn parse_predictions<R: BufRead>(reader: R, num_options: usize) -> Result<PredictionLog, IngestError> {
    let mut log = PredictionLog::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        record.validate(num_options).map_err(|e| match e {
            TypeError::OptionCountMismatch { expected, found } => IngestError::InconsistentOptionCount {
                line: line_no,
                expected,
                found,
            },
            other => IngestError::Parse {
                line: line_no,
                message: other.to_string(),
            },
        })?;
        if !seen.insert(record.item_id.clone()) {
            return Err(IngestError::DuplicateItemId {
                line: line_no,
                item_id: record.item_id,
            });
        }
        log.records.push(record);
    }
    if log.records.is_empty() {
        log.warnings.push("log contains no records".to_string());
    }
    Ok(log)
}

pub fn load_predictions(path: &Path, num_options: usize) -> Result<PredictionLog, IngestError> {
    let log = parse_predictions(open(path)?, num_options).map_err(|e| e.in_file(path))?;
    for w in &log.warnings {
        log::warn!("{}: {}", path.display(), w);
    }
    Ok(log)
}

/// Writes records one JSON object per line; floats use shortest round-trip form.
pub fn write_predictions<W: Write>(mut writer: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    write_predictions(&mut w, records).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn delimited_reader(text: &str) -> csv::Reader<&[u8]> {
    let header = text.lines().next().unwrap_or("");
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::Parse {
            line: 1,
            message: format!("missing column {name:?}"),
        })
}

fn csv_parse_error(line: usize, e: csv::Error) -> IngestError {
    IngestError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parses a `subject,domain,fine_category` table (comma or tab delimited).
pub fn parse_category_table(text: &str) -> Result<CategoryTable, IngestError> {
    let mut rdr = delimited_reader(text);
    let headers = rdr.headers().map_err(|e| csv_parse_error(1, e))?.clone();
    let (s, d, f) = (
        column(&headers, "subject")?,
        column(&headers, "domain")?,
        column(&headers, "fine_category")?,
    );
    let mut table = CategoryTable::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| csv_parse_error(line, e))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        if field(s).is_empty() {
            return Err(IngestError::Parse {
                line,
                message: "empty subject".into(),
            });
        }
        if !table.insert(field(s), field(d), field(f)) {
            return Err(IngestError::Parse {
                line,
                message: format!("duplicate subject {:?}", field(s)),
            });
        }
    }
    Ok(table)
}

pub fn load_category_table(path: &Path) -> Result<CategoryTable, IngestError> {
    parse_category_table(&read_to_string(path)?).map_err(|e| e.in_file(path))
}

/// The bundled 57-subject table with four domains and fourteen fine categories.
pub fn builtin_category_table() -> CategoryTable {
    parse_category_table(BUILTIN_CATEGORIES).expect("bundled category table is valid")
}

pub const BUILTIN_CATEGORIES: &str = include_str!("../data/globalmmlu_categories.csv");

/// Parses a `language,article_count` table.
///
/// In strict mode an unrecognized language code is an error; otherwise it
/// is reported in the returned warnings.
pub fn parse_resource_table(text: &str, strict: bool) -> Result<(ResourceTable, Vec<String>), IngestError> {
    let mut rdr = delimited_reader(text);
    let headers = rdr.headers().map_err(|e| csv_parse_error(1, e))?.clone();
    let (l, c) = (column(&headers, "language")?, column(&headers, "article_count")?);
    let mut table = ResourceTable::new();
    let mut warnings = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| csv_parse_error(line, e))?;
        let language = row.get(l).unwrap_or("").to_string();
        let raw = row.get(c).unwrap_or("");
        let count: i128 = raw.parse().map_err(|_| IngestError::Parse {
            line,
            message: format!("article_count {raw:?} is not an integer"),
        })?;
        if count <= 0 {
            return Err(IngestError::NonPositiveCount { line, language });
        }
        if !is_known_language(&language) {
            if strict {
                return Err(IngestError::UnknownLanguageCode(language));
            }
            warnings.push(format!("line {line}: unknown language code {language:?}"));
        }
        let count = u64::try_from(count).map_err(|_| IngestError::Parse {
            line,
            message: "article_count overflows".into(),
        })?;
        if !table.insert(&language, count) {
            return Err(IngestError::Parse {
                line,
                message: format!("duplicate language {language:?}"),
            });
        }
    }
    Ok((table, warnings))
}

pub fn load_resource_table(path: &Path, strict: bool) -> Result<(ResourceTable, Vec<String>), IngestError> {
    let (table, warnings) = parse_resource_table(&read_to_string(path)?, strict).map_err(|e| e.in_file(path))?;
    for w in &warnings {
        log::warn!("{}: {}", path.display(), w);
    }
    Ok((table, warnings))
}

pub fn write_resource_table<W: Write>(mut writer: W, table: &ResourceTable) -> std::io::Result<()> {
    writeln!(writer, "language,article_count")?;
    for (lang, count) in table.iter() {
        writeln!(writer, "{lang},{count}")?;
    }
    Ok(())
}

/// Hidden-state vectors for translated sentence pairs in two languages.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    /// Language pair, e.g. `en-fr`.
    pub pair: String,
    pub dim: usize,
    pub matched: Vec<(Vec<f64>, Vec<f64>)>,
    pub baseline: Vec<(Vec<f64>, Vec<f64>)>,
}

impl EmbeddingDump {
    pub fn new(
        pair: &str,
        matched: Vec<(Vec<f64>, Vec<f64>)>,
        baseline: Vec<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self, IngestError> {
        if matched.is_empty() {
            return Err(IngestError::EmptyMatched);
        }
        if baseline.is_empty() {
            return Err(IngestError::EmptyBaseline);
        }
        let dim = matched[0].0.len();
        for (k, (a, b)) in matched.iter().chain(&baseline).enumerate() {
            for v in [a, b] {
                if v.len() != dim {
                    return Err(IngestError::DimensionMismatch {
                        line: k + 2,
                        expected: dim,
                        found: v.len(),
                    });
                }
            }
        }
        Ok(Self {
            pair: pair.to_string(),
            dim,
            matched,
            baseline,
        })
    }
}

fn header_field(token: Option<&str>, key: &str) -> Result<usize, IngestError> {
    let bad = || IngestError::Parse {
        line: 1,
        message: format!("header must read \"dim=<d> matched=<m> baseline=<b>\" (problem with {key})"),
    };
    let value = token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(bad)?;
    value.parse().map_err(|_| bad())
}

/// Parses a text dump: a `dim=<d> matched=<m> baseline=<b>` header, then one
/// pair per line as `2·d` whitespace-separated numbers; matched pairs first.
pub fn parse_embedding_dump(text: &str, pair: &str) -> Result<EmbeddingDump, IngestError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(IngestError::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let mut tokens = header.split_whitespace();
    let dim = header_field(tokens.next(), "dim")?;
    let matched_n = header_field(tokens.next(), "matched")?;
    let baseline_n = header_field(tokens.next(), "baseline")?;
    if matched_n == 0 {
        return Err(IngestError::EmptyMatched);
    }
    if baseline_n == 0 {
        return Err(IngestError::EmptyBaseline);
    }
    let mut pairs = Vec::with_capacity(matched_n + baseline_n);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| IngestError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if values.len() != 2 * dim {
            return Err(IngestError::DimensionMismatch {
                line: line_no,
                expected: 2 * dim,
                found: values.len(),
            });
        }
        let (a, b) = values.split_at(dim);
        pairs.push((a.to_vec(), b.to_vec()));
    }
    if pairs.len() != matched_n + baseline_n {
        return Err(IngestError::Parse {
            line: 1,
            message: format!(
                "header promises {} pairs, found {}",
                matched_n + baseline_n,
                pairs.len()
            ),
        });
    }
    let baseline = pairs.split_off(matched_n);
    EmbeddingDump::new(pair, pairs, baseline)
}

/// Loads a dump; the pair tag is the file stem (`en-fr.emb` → `en-fr`).
pub fn load_embedding_dump(path: &Path) -> Result<EmbeddingDump, IngestError> {
    let pair = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    parse_embedding_dump(&read_to_string(path)?, &pair).map_err(|e| e.in_file(path))
}

pub fn write_embedding_dump<W: Write>(mut writer: W, dump: &EmbeddingDump) -> std::io::Result<()> {
    writeln!(
        writer,
        "dim={} matched={} baseline={}",
        dump.dim,
        dump.matched.len(),
        dump.baseline.len()
    )?;
    for (a, b) in dump.matched.iter().chain(&dump.baseline) {
        let line: Vec<String> = a.iter().chain(b).map(|v| format!("{v:?}")).collect();
        writeln!(writer, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Describes one analysis run: models, languages, and where their logs live.
///
/// Relative paths are resolved against the manifest's directory. Logs can be
/// listed explicitly or derived from `log_pattern`, which substitutes
/// `{model}` and `{language}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub models: Vec<ModelInfo>,
    pub languages: Vec<String>,
    pub expected_item_count: usize,
    #[serde(default = "default_num_options")]
    pub num_options: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub logs: BTreeMap<String, BTreeMap<String, PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_table: Option<PathBuf>,
    /// Embedding dumps per model, keyed by language pair tag.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub embeddings: BTreeMap<String, BTreeMap<String, PathBuf>>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_num_options() -> usize {
    4
}

impl RunManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, IngestError> {
        let mut m: RunManifest = serde_json::from_str(text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        m.base_dir = base_dir.to_path_buf();
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn log_path(&self, model: &str, language: &str) -> Option<PathBuf> {
        if let Some(p) = self.logs.get(model).and_then(|m| m.get(language)) {
            return Some(self.resolve(p));
        }
        self.log_pattern.as_ref().map(|pat| {
            let p = pat.replace("{model}", model).replace("{language}", language);
            self.resolve(Path::new(&p))
        })
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.name.clone()).collect()
    }

    pub fn model(&self, name: &str) -> Option<&ModelInfo> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Structural checks; returns warnings that strict mode would have rejected.
    pub fn validate(&self, strict: bool) -> Result<Vec<String>, IngestError> {
        let mut warnings = Vec::new();
        let err = |msg: String| Err(IngestError::Manifest(msg));
        if self.models.is_empty() {
            return err("no models listed".into());
        }
        if self.languages.is_empty() {
            return err("no languages listed".into());
        }
        if self.num_options < 2 {
            return err(format!("num_options must be at least 2, got {}", self.num_options));
        }
        let mut names = HashSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return err(format!("model {:?} listed twice", m.name));
            }
            if !(m.size_billions > 0.0 && m.size_billions.is_finite()) {
                return err(format!("model {:?} has non-positive size", m.name));
            }
        }
        let mut langs = HashSet::new();
        for l in &self.languages {
            if !langs.insert(l.as_str()) {
                return err(format!("language {l:?} listed twice"));
            }
            if !is_known_language(l) {
                if strict {
                    return Err(IngestError::UnknownLanguageCode(l.clone()));
                }
                warnings.push(format!("unknown language code {l:?}"));
            }
        }
        for m in &self.models {
            for l in &self.languages {
                match self.log_path(&m.name, l) {
                    None => return err(format!("no log for model {:?} in language {l:?}", m.name)),
                    Some(p) if !p.is_file() => return err(format!("log {} does not exist", p.display())),
                    Some(_) => {}
                }
            }
        }
        for p in self.category_table.iter().chain(&self.resource_table) {
            let p = self.resolve(p);
            if !p.is_file() {
                return err(format!("{} does not exist", p.display()));
            }
        }
        for (model, dumps) in &self.embeddings {
            if self.model(model).is_none() {
                return err(format!("embeddings listed for unknown model {model:?}"));
            }
            for p in dumps.values() {
                let p = self.resolve(p);
                if !p.is_file() {
                    return err(format!("{} does not exist", p.display()));
                }
            }
        }
        Ok(warnings)
    }
}

/// All prediction logs of a manifest, keyed by model then language.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: RunManifest,
    pub logs: BTreeMap<String, BTreeMap<String, Vec<PredictionRecord>>>,
    pub warnings: Vec<String>,
}

impl Dataset {
    /// Validates the manifest and loads every log (in parallel).
    pub fn load(manifest: RunManifest, strict: bool) -> Result<Self, IngestError> {
        let mut warnings = manifest.validate(strict)?;
        let jobs: Vec<(String, String, PathBuf)> = manifest
            .models
            .iter()
            .flat_map(|m| manifest.languages.iter().map(move |l| (m.name.clone(), l.clone())))
            .map(|(m, l)| {
                let p = manifest.log_path(&m, &l).expect("validated");
                (m, l, p)
            })
            .collect();
        let loaded: Vec<(String, String, PredictionLog)> = jobs
            .into_par_iter()
            .map(|(m, l, p)| load_predictions(&p, manifest.num_options).map(|log| (m, l, log)))
            .collect::<Result<_, _>>()?;

        let mut logs: BTreeMap<String, BTreeMap<String, Vec<PredictionRecord>>> = BTreeMap::new();
        for (model, language, log) in loaded {
            if log.records.len() != manifest.expected_item_count {
                return Err(IngestError::Manifest(format!(
                    "{model}/{language}: expected {} items, found {}",
                    manifest.expected_item_count,
                    log.records.len()
                )));
            }
            let mislabeled = log
                .records
                .iter()
                .filter(|r| r.model != model || r.language != language)
                .count();
            if mislabeled > 0 {
                warnings.push(format!(
                    "{model}/{language}: {mislabeled} records carry a different model or language tag"
                ));
            }
            warnings.extend(log.warnings.into_iter().map(|w| format!("{model}/{language}: {w}")));
            logs.entry(model).or_default().insert(language, log.records);
        }
        Ok(Self {
            manifest,
            logs,
            warnings,
        })
    }

    pub fn records(&self, model: &str, language: &str) -> Option<&[PredictionRecord]> {
        self.logs.get(model)?.get(language).map(Vec::as_slice)
    }

    /// Language → records for one model.
    pub fn by_language(&self, model: &str) -> BTreeMap<String, Vec<PredictionRecord>> {
        self.logs.get(model).cloned().unwrap_or_default()
    }

    /// Model → records for one language.
    pub fn by_model(&self, language: &str) -> BTreeMap<String, Vec<PredictionRecord>> {
        self.logs
            .iter()
            .filter_map(|(m, langs)| langs.get(language).map(|r| (m.clone(), r.clone())))
            .collect()
    }

    pub fn category_table(&self) -> Result<CategoryTable, IngestError> {
        match &self.manifest.category_table {
            Some(p) => load_category_table(&self.manifest.resolve(p)),
            None => Ok(builtin_category_table()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ProbVector;
    use proptest::prelude::*;

    const LINE: &str = r#"{"item_id":"q1","subject":"anatomy","language":"en","model":"m","predicted_index":1,"gold_index":1,"probs":[0.1,0.7,0.1,0.1],"extra":"ignored"}"#;

    #[test]
    fn parses_records_and_ignores_unknown_fields() {
        let text = format!("{LINE}\n\n{}\n", LINE.replace("q1", "q2"));
        let log = parse_predictions(text.as_bytes(), 4).unwrap();
        assert_eq!(log.records.len(), 2);
        assert_eq!(log.records[0].probs.as_ref().unwrap().entries(), &[0.1, 0.7, 0.1, 0.1]);
        assert!(log.warnings.is_empty());
    }

    #[test]
    fn empty_log_warns() {
        let log = parse_predictions("".as_bytes(), 4).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(log.warnings.len(), 1);
    }

    #[test]
    fn bad_probability_mass_reports_line() {
        let bad = LINE.replace("[0.1,0.7,0.1,0.1]", "[0.1,0.5,0.1,0.1]");
        let text = format!("{}\n{bad}\n", LINE.replace("q1", "q0"));
        match parse_predictions(text.as_bytes(), 4) {
            Err(IngestError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("sum"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn option_count_and_duplicates() {
        assert!(matches!(
            parse_predictions(LINE.as_bytes(), 3),
            Err(IngestError::InconsistentOptionCount {
                line: 1,
                expected: 3,
                found: 4
            })
        ));
        let text = format!("{LINE}\n{LINE}\n");
        assert!(matches!(
            parse_predictions(text.as_bytes(), 4),
            Err(IngestError::DuplicateItemId { line: 2, .. })
        ));
        let argmax_off = LINE.replace("\"predicted_index\":1", "\"predicted_index\":0");
        assert!(matches!(
            parse_predictions(argmax_off.as_bytes(), 4),
            Err(IngestError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_predictions("{not json".as_bytes(), 4),
            Err(IngestError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn load_predictions_wraps_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "garbage\n").unwrap();
        let e = load_predictions(&p, 4).unwrap_err();
        assert!(matches!(e.root(), IngestError::Parse { line: 1, .. }));
        assert!(e.to_string().contains("x.jsonl"));
        assert!(matches!(
            load_predictions(&dir.path().join("none"), 4),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn builtin_category_table_shape() {
        let t = builtin_category_table();
        assert_eq!(t.len(), 57);
        assert_eq!(t.groups(crate::types::Granularity::Domain).len(), 4);
        assert_eq!(t.groups(crate::types::Granularity::Fine).len(), 14);
        assert_eq!(t.category("College Chemistry"), Some("Chemistry"));
        assert_eq!(t.domain("human_sexuality"), Some("Social Sciences"));
        assert_eq!(t.category("human_sexuality"), Some("Biology"));
    }

    #[test]
    fn category_table_requires_exact_columns() {
        assert!(parse_category_table("subject,domain,category\na,b,c\n").is_err());
        let t = parse_category_table("subject\tdomain\tfine_category\nAnatomy\tSTEM\tMedicine\n").unwrap();
        assert_eq!(t.domain("anatomy"), Some("STEM"));
        assert!(matches!(
            parse_category_table("subject,domain,fine_category\na,b,c\nA,b,c\n"),
            Err(IngestError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn resource_table_examples() {
        let rows: String = crate::types::EVAL_LANGUAGES
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{l},{}\n", 1000 * (i + 1)))
            .collect();
        let (t, w) = parse_resource_table(&format!("language,article_count\n{rows}"), true).unwrap();
        assert_eq!(t.len(), 20);
        assert!(w.is_empty());
        assert!(matches!(
            parse_resource_table("language,article_count\nen, 0\n", false),
            Err(IngestError::NonPositiveCount { line: 2, .. })
        ));
        assert!(matches!(
            parse_resource_table("language,article_count\nen,5\nen,6\n", false),
            Err(IngestError::Parse { line: 3, .. })
        ));
        let (t, w) = parse_resource_table("language,article_count\nxx,5\n", false).unwrap();
        assert_eq!((t.len(), w.len()), (1, 1));
        assert!(matches!(
            parse_resource_table("language,article_count\nxx,5\n", true),
            Err(IngestError::UnknownLanguageCode(_))
        ));
    }

    fn dump_text(dim: usize, matched: usize, baseline: usize) -> String {
        let mut s = format!("dim={dim} matched={matched} baseline={baseline}\n");
        for k in 0..matched + baseline {
            let row: Vec<String> = (0..2 * dim).map(|i| format!("{}", (i + k) as f64 * 0.5)).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    #[test]
    fn embedding_dump_examples() {
        let d = parse_embedding_dump(&dump_text(2048, 100, 100), "en-fr").unwrap();
        assert_eq!((d.dim, d.matched.len(), d.baseline.len()), (2048, 100, 100));

        let mut bad = dump_text(4, 1, 1);
        bad = bad.replacen("0 0.5 1 1.5 2 2.5 3 3.5", "0 0.5 1 1.5 2 2.5", 1);
        assert!(matches!(
            parse_embedding_dump(&bad, "x"),
            Err(IngestError::DimensionMismatch { line: 2, .. })
        ));
        assert!(matches!(
            parse_embedding_dump(&dump_text(4, 2, 0), "x"),
            Err(IngestError::EmptyBaseline)
        ));
        assert!(matches!(
            parse_embedding_dump("dims=4 matched=1 baseline=1\n", "x"),
            Err(IngestError::Parse { .. })
        ));

        let mismatched = EmbeddingDump::new(
            "x",
            vec![(vec![0.0; 2048], vec![0.0; 1024])],
            vec![(vec![0.0; 2048], vec![0.0; 2048])],
        );
        assert!(matches!(mismatched, Err(IngestError::DimensionMismatch { .. })));
    }

    #[test]
    fn embedding_dump_round_trip() {
        let d = parse_embedding_dump(&dump_text(3, 2, 3), "en-de").unwrap();
        let mut buf = Vec::new();
        write_embedding_dump(&mut buf, &d).unwrap();
        assert_eq!(
            parse_embedding_dump(std::str::from_utf8(&buf).unwrap(), "en-de").unwrap(),
            d
        );
    }

    fn arb_record() -> impl Strategy<Value = PredictionRecord> {
        (
            "[a-z0-9]{1,8}",
            prop::collection::vec(0.001f64..1.0, 4),
            0usize..4,
            any::<bool>(),
        )
            .prop_map(|(id, raw, gold, with_probs)| {
                let s: f64 = raw.iter().sum();
                let p = ProbVector::new(&raw.iter().map(|x| x / s).collect::<Vec<_>>()).unwrap();
                PredictionRecord {
                    item_id: id,
                    subject: "virology".into(),
                    language: "sw".into(),
                    model: "m".into(),
                    predicted_index: p.argmax(),
                    gold_index: gold,
                    probs: with_probs.then_some(p),
                }
            })
    }

    proptest! {
        #[test]
        fn prediction_round_trip(records in prop::collection::btree_map("[a-z]{1,6}", arb_record(), 0..20)) {
            let records: Vec<PredictionRecord> = records
                .into_iter()
                .map(|(id, mut r)| { r.item_id = id; r })
                .collect();
            let mut buf = Vec::new();
            write_predictions(&mut buf, &records).unwrap();
            let back = parse_predictions(buf.as_slice(), 4).unwrap();
            prop_assert_eq!(back.records, records);
        }
    }

    #[test]
    fn manifest_validation() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{
            "models": [{"name": "a", "family": "x", "size_billions": 1.0}],
            "languages": ["en", "fr"],
            "expected_item_count": 1,
            "log_pattern": "{model}_{language}.jsonl"
        }"#;
        let m = RunManifest::parse(text, dir.path()).unwrap();
        assert_eq!(m.num_options, 4);
        assert!(matches!(m.validate(false), Err(IngestError::Manifest(_))));
        for l in ["en", "fr"] {
            fs::write(
                dir.path().join(format!("a_{l}.jsonl")),
                LINE.replace("\"en\"", &format!("\"{l}\"")).replace("\"m\"", "\"a\""),
            )
            .unwrap();
        }
        assert!(m.validate(true).unwrap().is_empty());
        let ds = Dataset::load(m.clone(), true).unwrap();
        assert_eq!(ds.records("a", "fr").unwrap().len(), 1);
        assert!(ds.warnings.is_empty());

        let mut bad = m.clone();
        bad.languages.push("xx".into());
        assert!(matches!(bad.validate(true), Err(IngestError::UnknownLanguageCode(_))));
        let mut bad = m.clone();
        bad.models[0].size_billions = 0.0;
        assert!(bad.validate(false).is_err());
        let mut bad = m;
        bad.expected_item_count = 2;
        assert!(matches!(Dataset::load(bad, false), Err(IngestError::Manifest(_))));
    }
}

//! A synthetic multi-model, multi-language benchmark run.
//!
//! Every prediction is drawn from one of three sources, in order:
//!
//! * a per-language consensus answer shared by all models, taken with a
//!   probability that grows with the language's resource level;
//! * the model's own base answer for the item, shared across languages,
//!   taken with a probability that grows with model size and is raised for
//!   STEM subjects and lowered for Humanities;
//! * an independent draw at the model's accuracy.
//!
//! This yields cross-language agreement rising with size, higher agreement
//! on STEM than Humanities, cross-model agreement rising with resource
//! level, and within-model agreement above cross-model agreement.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation::ModelInfo;
use crate::ingestion::{
    builtin_category_table, save_predictions, write_embedding_dump, write_resource_table, Dataset, EmbeddingDump,
    IngestError, RunManifest, BUILTIN_CATEGORIES,
};
use crate::types::{PredictionRecord, ProbVector, ResourceTable, EVAL_LANGUAGES};

use super::research::ENGLISH;
use super::PipelineError;

/// Evaluation languages from most to least resourced; drives the synthetic resource levels.
const RESOURCE_ORDER: [&str; 20] = [
    "en", "de", "fr", "ru", "es", "it", "ja", "zh", "vi", "fa", "ar", "id", "ko", "tr", "he", "hi", "bn", "sw", "te",
    "am",
];

const CONSENSUS_ACCURACY: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub models: Vec<ModelInfo>,
    pub languages: Vec<String>,
    pub items: usize,
    pub num_options: usize,
    pub seed: u64,
    pub with_probs: bool,
    pub embedding_dim: usize,
    /// Matched and baseline sentence pairs per embedding dump.
    pub embedding_pairs: usize,
}

/// Eight models in two families, sized 1B to 14B.
pub fn default_roster() -> Vec<ModelInfo> {
    [
        ("alpha-1b", "alpha", 1.0),
        ("beta-1.7b", "beta", 1.7),
        ("alpha-4b", "alpha", 4.0),
        ("beta-4b", "beta", 4.0),
        ("alpha-7b", "alpha", 7.0),
        ("beta-8b", "beta", 8.0),
        ("alpha-12b", "alpha", 12.0),
        ("beta-14b", "beta", 14.0),
    ]
    .into_iter()
    .map(|(name, family, size)| ModelInfo {
        name: name.to_string(),
        family: family.to_string(),
        size_billions: size,
    })
    .collect()
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            models: default_roster(),
            languages: EVAL_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            items: 500,
            num_options: 4,
            seed: 0,
            with_probs: true,
            embedding_dim: 16,
            embedding_pairs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub manifest: RunManifest,
    pub logs: BTreeMap<String, BTreeMap<String, Vec<PredictionRecord>>>,
    pub resources: ResourceTable,
    /// Dumps for the largest model, keyed by pair tag.
    pub embeddings: BTreeMap<String, BTreeMap<String, EmbeddingDump>>,
}

/// Resource level in `[0, 1]` per language, 1 for the best resourced.
fn resource_levels(languages: &[String]) -> BTreeMap<String, f64> {
    let mut ranked: Vec<&String> = languages.iter().collect();
    ranked.sort_by_key(|l| {
        RESOURCE_ORDER
            .iter()
            .position(|r| r == l)
            .unwrap_or(RESOURCE_ORDER.len())
    });
    let denom = (ranked.len().max(2) - 1) as f64;
    ranked
        .iter()
        .enumerate()
        .map(|(k, l)| ((*l).clone(), 1.0 - k as f64 / denom))
        .collect()
}

fn consensus_rate(level: f64) -> f64 {
    (0.01 + 0.15 * level).sqrt()
}

fn copy_rate(size_billions: f64) -> f64 {
    (0.55 + 0.025 * size_billions).min(0.85)
}

fn model_accuracy(size_billions: f64) -> f64 {
    (0.35 + 0.03 * size_billions).min(0.9)
}

fn domain_shift(domain: &str) -> f64 {
    match domain {
        "STEM" => 0.1,
        "Humanities" => -0.1,
        _ => 0.0,
    }
}

fn draw_answer(rng: &mut ChaCha8Rng, gold: usize, num_options: usize, acc: f64) -> usize {
    if rng.gen::<f64>() < acc {
        gold
    } else {
        let k = rng.gen_range(0..num_options - 1);
        if k >= gold {
            k + 1
        } else {
            k
        }
    }
}

fn draw_probs(rng: &mut ChaCha8Rng, pred: usize, num_options: usize) -> ProbVector {
    let top = 0.51 + 0.44 * rng.gen::<f64>();
    let weights: Vec<f64> = (0..num_options - 1).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let mut rest = weights.iter().map(|w| w / total * (1.0 - top));
    let raw: Vec<f64> = (0..num_options)
        .map(|k| {
            if k == pred {
                top
            } else {
                rest.next().expect("one weight per other option")
            }
        })
        .collect();
    ProbVector::new(&raw).expect("constructed distribution is valid")
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Two unit vectors whose cosine is exactly `cos`.
fn pair_at_cosine(rng: &mut ChaCha8Rng, dim: usize, cos: f64) -> (Vec<f64>, Vec<f64>) {
    let a = unit((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let r: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dot: f64 = r.iter().zip(&a).map(|(x, y)| x * y).sum();
    let u = unit(r.iter().zip(&a).map(|(x, y)| x - dot * y).collect());
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    let b = a.iter().zip(&u).map(|(x, y)| cos * x + sin * y).collect();
    (a, b)
}

impl SyntheticWorld {
    pub fn generate(cfg: &WorldConfig) -> Result<Self, PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidParameter(m));
        if cfg.num_options < 2 {
            return bad(format!("option count must be at least 2, got {}", cfg.num_options));
        }
        if cfg.items == 0 || cfg.models.is_empty() || cfg.languages.is_empty() {
            return bad("need at least one item, model, and language".into());
        }
        if cfg.embedding_dim < 2 || cfg.embedding_pairs == 0 {
            return bad("embedding dumps need dim >= 2 and at least one pair".into());
        }
        let c = cfg.num_options;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let categories = builtin_category_table();
        let mut subjects: Vec<&str> = categories.subjects().collect();
        subjects.sort_unstable();

        let items: Vec<(String, &str, usize, f64)> = (0..cfg.items)
            .map(|i| {
                let subject = subjects[i % subjects.len()];
                let shift = domain_shift(categories.domain(subject).unwrap_or_default());
                (format!("q{i:05}"), subject, rng.gen_range(0..c), shift)
            })
            .collect();
        let levels = resource_levels(&cfg.languages);
        let consensus: BTreeMap<&str, Vec<usize>> = cfg
            .languages
            .iter()
            .map(|l| {
                let answers = items
                    .iter()
                    .map(|&(_, _, gold, _)| draw_answer(&mut rng, gold, c, CONSENSUS_ACCURACY))
                    .collect();
                (l.as_str(), answers)
            })
            .collect();

        let mut logs: BTreeMap<String, BTreeMap<String, Vec<PredictionRecord>>> = BTreeMap::new();
        for m in &cfg.models {
            let acc = model_accuracy(m.size_billions);
            let copy = copy_rate(m.size_billions);
            let base: Vec<usize> = items
                .iter()
                .map(|&(_, _, gold, _)| draw_answer(&mut rng, gold, c, acc))
                .collect();
            for l in &cfg.languages {
                let q = consensus_rate(levels[l]);
                let mut records = Vec::with_capacity(items.len());
                for (i, (id, subject, gold, shift)) in items.iter().enumerate() {
                    let pred = if rng.gen::<f64>() < q {
                        consensus[l.as_str()][i]
                    } else if rng.gen::<f64>() < (copy + shift).clamp(0.0, 1.0) {
                        base[i]
                    } else {
                        draw_answer(&mut rng, *gold, c, acc)
                    };
                    let probs = cfg.with_probs.then(|| draw_probs(&mut rng, pred, c));
                    records.push(PredictionRecord {
                        item_id: id.clone(),
                        subject: subject.to_string(),
                        language: l.clone(),
                        model: m.name.clone(),
                        predicted_index: pred,
                        gold_index: *gold,
                        probs,
                    });
                }
                logs.entry(m.name.clone()).or_default().insert(l.clone(), records);
            }
        }

        let resources = ResourceTable::from_counts(
            levels
                .iter()
                .map(|(l, lv)| (l.clone(), 10f64.powf(4.0 + 2.8 * lv).round() as u64)),
        )
        .expect("distinct languages with positive counts");

        let mut embeddings = BTreeMap::new();
        let largest = cfg
            .models
            .iter()
            .max_by(|a, b| a.size_billions.total_cmp(&b.size_billions).then(b.name.cmp(&a.name)))
            .expect("non-empty roster");
        if levels.contains_key(ENGLISH) {
            let rho = copy_rate(largest.size_billions);
            let q_en = consensus_rate(levels[ENGLISH]);
            let mut dumps = BTreeMap::new();
            for l in cfg.languages.iter().filter(|l| l.as_str() != ENGLISH) {
                let expected = (1.0 - q_en) * (1.0 - consensus_rate(levels[l])) * rho * rho;
                let target = (0.2 + 0.7 * expected).min(0.95);
                let mut pairs = |centre: f64| -> Vec<(Vec<f64>, Vec<f64>)> {
                    (0..cfg.embedding_pairs)
                        .map(|_| {
                            let cos = centre + rng.gen_range(-0.03..0.03);
                            pair_at_cosine(&mut rng, cfg.embedding_dim, cos)
                        })
                        .collect()
                };
                let matched = pairs(target);
                let baseline = pairs(0.15);
                let tag = format!("{ENGLISH}-{l}");
                let dump = EmbeddingDump::new(&tag, matched, baseline).expect("non-empty, equal dimensions");
                dumps.insert(tag, dump);
            }
            embeddings.insert(largest.name.clone(), dumps);
        }

        let manifest = RunManifest {
            models: cfg.models.clone(),
            languages: cfg.languages.clone(),
            expected_item_count: cfg.items,
            num_options: c,
            log_pattern: Some("logs/{model}/{language}.jsonl".into()),
            logs: BTreeMap::new(),
            category_table: None,
            resource_table: None,
            embeddings: embeddings
                .iter()
                .map(|(m, d): (&String, &BTreeMap<String, EmbeddingDump>)| {
                    let paths = d
                        .keys()
                        .map(|tag| (tag.clone(), PathBuf::from(format!("embeddings/{m}/{tag}.emb"))))
                        .collect();
                    (m.clone(), paths)
                })
                .collect(),
            base_dir: PathBuf::new(),
        };
        Ok(Self {
            manifest,
            logs,
            resources,
            embeddings,
        })
    }

    /// The generated logs as a dataset, without touching the filesystem.
    ///
    /// The in-memory manifest names no table files; the built-in category
    /// table applies and the resource table is [`SyntheticWorld::resources`].
    pub fn dataset(&self) -> Dataset {
        Dataset {
            manifest: self.manifest.clone(),
            logs: self.logs.clone(),
            warnings: Vec::new(),
        }
    }

    /// Writes manifest, logs, tables, and dumps under `dir`; returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, IngestError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| IngestError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        for (model, langs) in &self.logs {
            for (lang, records) in langs {
                let p = dir.join(format!("logs/{model}/{lang}.jsonl"));
                fs::create_dir_all(p.parent().expect("has parent")).map_err(io(&p))?;
                save_predictions(&p, records)?;
            }
        }
        let p = dir.join("categories.csv");
        fs::write(&p, BUILTIN_CATEGORIES).map_err(io(&p))?;
        let p = dir.join("resources.csv");
        let f = fs::File::create(&p).map_err(io(&p))?;
        write_resource_table(BufWriter::new(f), &self.resources).map_err(io(&p))?;
        for (model, dumps) in &self.embeddings {
            for (tag, dump) in dumps {
                let p = dir.join(format!("embeddings/{model}/{tag}.emb"));
                fs::create_dir_all(p.parent().expect("has parent")).map_err(io(&p))?;
                let f = fs::File::create(&p).map_err(io(&p))?;
                write_embedding_dump(BufWriter::new(f), dump).map_err(io(&p))?;
            }
        }
        let manifest = RunManifest {
            category_table: Some(PathBuf::from("categories.csv")),
            resource_table: Some(PathBuf::from("resources.csv")),
            ..self.manifest.clone()
        };
        let p = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&p, text + "\n").map_err(io(&p))?;
        Ok(p)
    }
}

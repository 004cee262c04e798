//! `xling`: cross-lingual agreement analyses from the command line.
//!
//! Exit status is 0 on success, 1 for bad input, and 2 when the analysis ran
//! but some statistic could not be computed (ties, too few points, chance
//! agreement of 1).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use xling_core::aggregation::similarity_matrix;
use xling_core::ingestion::{load_embedding_dump, load_resource_table, save_predictions, Dataset, RunManifest};
use xling_core::metrics::Metric;
use xling_core::pipelines::render::render_report;
use xling_core::pipelines::synth::expected_observed_agreement;
use xling_core::pipelines::{
    repr_functional_correlation, rq1_scale_trend, rq2_domain_breakdown, rq3_resource_correlation, rq4_intra_vs_inter,
    similarity_matrices, synth_raters, AnalysisReport, Averaging, Pairing, PipelineError, PipelineOptions, Pivot,
    SyntheticWorld, WorldConfig,
};
use xling_core::types::Granularity;

#[derive(Parser)]
#[command(
    name = "xling",
    version,
    about = "Agreement analyses over multilingual multiple-choice predictions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and every log it names.
    Validate {
        manifest: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Intra-model and inter-model similarity matrices.
    Matrix(Analysis),
    /// Agreement against model size.
    Rq1(Analysis),
    /// Agreement and accuracy per subject category.
    Rq2 {
        #[command(flatten)]
        analysis: Analysis,
        #[arg(long, value_enum, default_value_t = GranularityArg::Domain)]
        granularity: GranularityArg,
        /// Restrict the report to one category.
        #[arg(long)]
        category: Option<String>,
    },
    /// Inter-model agreement against language resource size.
    Rq3 {
        #[command(flatten)]
        analysis: Analysis,
        /// Resource table; defaults to the one named in the manifest.
        #[arg(long)]
        resources: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        log_resource: Switch,
    },
    /// Cross-language versus cross-model agreement per model.
    Rq4 {
        #[command(flatten)]
        analysis: Analysis,
        #[arg(long, value_enum, default_value_t = PairingArg::Full)]
        pairing: PairingArg,
        #[arg(long, value_enum, default_value_t = PivotArg::All)]
        pivot: PivotArg,
    },
    /// Hidden-state similarity against agreement for one model.
    Repr {
        #[command(flatten)]
        analysis: Analysis,
        /// Model whose dumps to use; defaults to the first model with dumps.
        #[arg(long)]
        model: Option<String>,
        /// Explicit dump files instead of those listed in the manifest.
        #[arg(long = "dump")]
        dumps: Vec<PathBuf>,
    },
    /// Generate synthetic data.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Render SVG figures from a saved report.json.
    Report {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// A full multi-model, multi-language world written as a manifest plus logs.
    World {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        items: usize,
        /// Comma-separated language codes.
        #[arg(long, value_delimiter = ',')]
        languages: Option<Vec<String>>,
        #[arg(long)]
        no_probs: bool,
    },
    /// Two raters with controlled error coupling.
    Pair {
        #[arg(long, default_value_t = 1000)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        options: usize,
        #[arg(long)]
        acc1: f64,
        #[arg(long)]
        acc2: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        metric: MetricArgs,
        /// Directory for left.jsonl and right.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long, value_enum, default_value_t = MetricArg::KappaP)]
    metric: MetricArg,
    /// Chance model for hard κ_p.
    #[arg(long, value_enum, default_value_t = Variant::Full)]
    variant: Variant,
    /// Use the probabilistic form of κ_p.
    #[arg(long)]
    prob: bool,
}

impl MetricArgs {
    fn resolve(&self) -> anyhow::Result<Metric> {
        if self.metric != MetricArg::KappaP && self.prob {
            bail!("--prob only applies to --metric kappa-p");
        }
        Ok(match (self.metric, self.prob, self.variant) {
            (MetricArg::KappaP, true, _) => Metric::KappaPProb,
            (MetricArg::KappaP, false, Variant::Simple) => Metric::KappaPHardSimple,
            (MetricArg::KappaP, false, Variant::Full) => Metric::KappaPHardFull,
            (MetricArg::Cohen, ..) => Metric::Cohen,
            (MetricArg::Scott, ..) => Metric::Scott,
            (MetricArg::Rankc, ..) => Metric::Rankc,
            (MetricArg::Raw, ..) => Metric::Raw,
        })
    }
}

#[derive(Args)]
struct Analysis {
    /// Run manifest (JSON).
    manifest: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long, value_enum, default_value_t = AverageArg::Mean)]
    average: AverageArg,
    /// Leave a model out of the analysis; repeatable.
    #[arg(long = "exclude-model")]
    exclude_models: Vec<String>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Fail on unknown languages, subjects or malformed log lines.
    #[arg(long)]
    strict: bool,
    /// Accepted for uniformity; analyses are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Write report.json and one TSV per table here; prints JSON otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render SVG figures into the output directory.
    #[arg(long, requires = "out")]
    figures: bool,
}

impl Analysis {
    fn options(&self) -> anyhow::Result<PipelineOptions> {
        if self.bins == 0 {
            bail!("--bins must be positive");
        }
        Ok(PipelineOptions {
            metric: self.metric.resolve()?,
            averaging: match self.average {
                AverageArg::Mean => Averaging::Mean,
                AverageArg::Pooled => Averaging::Pooled,
            },
            strict: self.strict,
            bins: self.bins,
            exclude_models: self.exclude_models.clone(),
        })
    }

    fn dataset(&self) -> Result<Dataset, Failure> {
        let manifest = RunManifest::load(&self.manifest).map_err(flat)?;
        let dataset = Dataset::load(manifest, self.strict).map_err(flat)?;
        for w in &dataset.warnings {
            warn!("{w}");
        }
        Ok(dataset)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    KappaP,
    Cohen,
    Scott,
    Rankc,
    Raw,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Simple,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum AverageArg {
    Mean,
    Pooled,
}

#[derive(Clone, Copy, ValueEnum)]
enum GranularityArg {
    Domain,
    Fine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairingArg {
    Full,
    ClosestSize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PivotArg {
    All,
    En,
}

/// An error plus the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure::input(error)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = if e.is_degenerate() { 2 } else { 1 };
        Self { code, error: flat(e) }
    }
}

/// Core errors already spell out their causes; keep them as one message.
fn flat<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!("{e}")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Validate { manifest, strict } => validate(&manifest, strict),
        Command::Matrix(a) => {
            let opts = a.options()?;
            let report = similarity_matrices(&a.dataset()?, &opts)?;
            emit(&a, &report)
        }
        Command::Rq1(a) => {
            let opts = a.options()?;
            let report = rq1_scale_trend(&a.dataset()?, &opts)?;
            emit(&a, &report)
        }
        Command::Rq2 {
            analysis: a,
            granularity,
            category,
        } => {
            let opts = a.options()?;
            let dataset = a.dataset()?;
            let table = dataset.category_table().map_err(flat)?;
            let granularity = match granularity {
                GranularityArg::Domain => Granularity::Domain,
                GranularityArg::Fine => Granularity::Fine,
            };
            let report = rq2_domain_breakdown(&dataset, &table, granularity, category.as_deref(), &opts)?;
            emit(&a, &report)
        }
        Command::Rq3 {
            analysis: a,
            resources,
            log_resource,
        } => {
            let opts = a.options()?;
            let dataset = a.dataset()?;
            let path = match resources {
                Some(p) => p,
                None => dataset
                    .manifest
                    .resource_table
                    .as_ref()
                    .map(|p| dataset.manifest.resolve(p))
                    .ok_or_else(|| anyhow!("no resource table: pass --resources or set one in the manifest"))?,
            };
            let (table, warnings) = load_resource_table(&path, a.strict).map_err(flat)?;
            for w in warnings {
                warn!("{w}");
            }
            let report = rq3_resource_correlation(&dataset, &table, log_resource == Switch::On, &opts)?;
            emit(&a, &report)
        }
        Command::Rq4 {
            analysis: a,
            pairing,
            pivot,
        } => {
            let opts = a.options()?;
            let pairing = match pairing {
                PairingArg::Full => Pairing::Full,
                PairingArg::ClosestSize => Pairing::ClosestSize,
            };
            let pivot = match pivot {
                PivotArg::All => Pivot::All,
                PivotArg::En => Pivot::English,
            };
            let report = rq4_intra_vs_inter(&a.dataset()?, pairing, pivot, &opts)?;
            emit(&a, &report)
        }
        Command::Repr {
            analysis: a,
            model,
            dumps,
        } => {
            let opts = a.options()?;
            let dataset = a.dataset()?;
            let manifest = &dataset.manifest;
            let model = match model {
                Some(m) => m,
                None => manifest
                    .embeddings
                    .keys()
                    .next()
                    .cloned()
                    .ok_or_else(|| anyhow!("manifest lists no embedding dumps; pass --model and --dump"))?,
            };
            if !dataset.logs.contains_key(&model) {
                return Err(anyhow!("model {model:?} is not in the manifest").into());
            }
            let paths: Vec<PathBuf> = if dumps.is_empty() {
                manifest
                    .embeddings
                    .get(&model)
                    .ok_or_else(|| anyhow!("no embedding dumps listed for model {model:?}"))?
                    .values()
                    .map(|p| manifest.resolve(p))
                    .collect()
            } else {
                dumps
            };
            let dumps = paths
                .iter()
                .map(|p| load_embedding_dump(p).map_err(flat))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let entries: Vec<_> = dataset.by_language(&model).into_iter().collect();
            let matrix =
                similarity_matrix(&entries, manifest.num_options, opts.metric, None).map_err(PipelineError::from)?;
            let report = repr_functional_correlation(&dumps, &matrix)?;
            emit(&a, &report)
        }
        Command::Synth(SynthCommand::World {
            out,
            seed,
            items,
            languages,
            no_probs,
        }) => {
            let mut cfg = WorldConfig {
                seed,
                items,
                with_probs: !no_probs,
                ..WorldConfig::default()
            };
            if let Some(l) = languages {
                cfg.languages = l;
            }
            let world = SyntheticWorld::generate(&cfg)?;
            let manifest = world.write(&out).map_err(flat)?;
            println!("{}", manifest.display());
            Ok(0)
        }
        Command::Synth(SynthCommand::Pair {
            items,
            options,
            acc1,
            acc2,
            rho,
            seed,
            metric,
            out,
        }) => {
            let metric = metric.resolve()?;
            let pair = synth_raters(items, options, acc1, acc2, rho, seed)?;
            if let Some(dir) = &out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                save_predictions(&dir.join("left.jsonl"), &pair.records("left", &pair.left)).map_err(flat)?;
                save_predictions(&dir.join("right.jsonl"), &pair.records("right", &pair.right)).map_err(flat)?;
            }
            let tally = pair.tally();
            let observed = tally.score(Metric::Raw).map_err(PipelineError::from)?.value;
            let mut code = 0;
            let value = match tally.score(metric) {
                Ok(s) => Some(s.value),
                Err(e) => {
                    let e = PipelineError::from(e);
                    if !e.is_degenerate() {
                        return Err(e.into());
                    }
                    warn!("{e}");
                    code = 2;
                    None
                }
            };
            let summary = serde_json::json!({
                "items": items,
                "num_options": options,
                "acc1": acc1,
                "acc2": acc2,
                "rho": rho,
                "seed": seed,
                "metric": metric.name(),
                "expected_observed_agreement": expected_observed_agreement(options, acc1, acc2, rho),
                "observed_agreement": observed,
                "score": value,
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("plain JSON"));
            Ok(code)
        }
        Command::Report { input, out } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let report = AnalysisReport::from_json(&text).with_context(|| format!("parsing {}", input.display()))?;
            let written = write_figures(&report, &out)?;
            info!("wrote {written} figures to {}", out.display());
            Ok(0)
        }
    }
}

fn validate(path: &Path, strict: bool) -> Result<u8, Failure> {
    let manifest = RunManifest::load(path).map_err(flat)?;
    let dataset = Dataset::load(manifest, strict).map_err(flat)?;
    for w in &dataset.warnings {
        warn!("{w}");
    }
    let m = &dataset.manifest;
    println!(
        "ok: {} models, {} languages, {} items per log, {} options, {} warnings",
        m.models.len(),
        m.languages.len(),
        m.expected_item_count,
        m.num_options,
        dataset.warnings.len()
    );
    Ok(0)
}

fn write_figures(report: &AnalysisReport, dir: &Path) -> anyhow::Result<usize> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let figures = render_report(report);
    for (name, svg) in &figures {
        fs::write(dir.join(name), svg).with_context(|| format!("writing {name}"))?;
    }
    Ok(figures.len())
}

/// Writes or prints the report; degenerate statistics turn into exit status 2.
fn emit(a: &Analysis, report: &AnalysisReport) -> Result<u8, Failure> {
    for w in &report.body.warnings {
        warn!("{w}");
    }
    match &a.out {
        Some(dir) => {
            report
                .write_dir(dir)
                .with_context(|| format!("writing report to {}", dir.display()))?;
            if a.figures {
                write_figures(report, dir)?;
            }
            info!("wrote {} to {}", report.body.pipeline, dir.display());
        }
        None => println!("{}", report.to_json()),
    }
    if report.has_errors() {
        for s in report.body.statistics.iter().filter(|s| s.is_error()) {
            eprintln!("degenerate statistic {} {}", s.name, s.subject.as_deref().unwrap_or(""));
        }
        return Ok(2);
    }
    Ok(0)
}

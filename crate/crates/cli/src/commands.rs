use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sizegraph_core::brand_similarity::{NmfConfig, SimilarityMode, DEFAULT_RANK};
use sizegraph_core::bundle::{build_bundle, AlphaSpec, BuildConfig, ModelBundle};
use sizegraph_core::catalog::{parse_events, write_events_jsonl, EventFormat};
use sizegraph_core::eval::{
    accuracy_table, evaluate, sweep_alpha, sweep_lambda, synth_generate, EvalMethod, EvalReport,
    SynthConfig,
};
use sizegraph_core::size_graph::{edge_count_report, sparsity};
use sizegraph_core::skipgram::SkipGramConfig;
use sizegraph_core::wbsr::{MarginalMode, PRODUCTION_ALPHA_PERCENTILE, PRODUCTION_LAMBDA};
use sizegraph_core::{Category, Gender, InteractionEvent};

use crate::error::CliError;
use crate::experiment::Split;
use crate::query::{answer, Query, QueryMethod};

#[derive(Parser, Debug)]
#[command(
    name = "sizegraph",
    version,
    about = "Brand-graph footwear size recommendation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate and normalize an event file into a JSONL store.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
    /// Build the brand and size graphs of one category into a bundle.
    Build(BuildArgs),
    /// Train the skip-gram baseline and attach it to a bundle.
    TrainSkipgram(TrainSkipgramArgs),
    /// Recommend a size in a target brand.
    Recommend(RecommendArgs),
    /// Score WBSR and/or skip-gram on held-out orders.
    Evaluate(EvaluateArgs),
    /// Accuracy over alpha percentiles at a fixed lambda.
    SweepAlpha(SweepAlphaArgs),
    /// Accuracy over lambda values at a fixed alpha.
    SweepLambda(SweepLambdaArgs),
    /// Serve POST /recommend and GET /healthz.
    Serve(ServeArgs),
}

#[derive(Args, Clone, Debug)]
pub struct CategoryArgs {
    #[arg(long)]
    pub gender: Gender,
    #[arg(long = "article-type")]
    pub article_type: String,
}

impl CategoryArgs {
    pub fn category(&self) -> Result<Category, CliError> {
        Category::new(self.gender, &self.article_type).map_err(CliError::Invalid)
    }
}

#[derive(Args, Clone, Debug)]
pub struct BundleLocation {
    /// Bundle file; defaults to `<model dir>/<category slug>.bundle.json`.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, env = "SIZEGRAPH_MODEL_DIR")]
    pub model_dir: Option<PathBuf>,
}

impl BundleLocation {
    pub fn resolve(&self, category: &Category) -> Result<PathBuf, CliError> {
        match (&self.bundle, &self.model_dir) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(format!("{}.bundle.json", category.slug()))),
            (None, None) => Err(CliError::NoBundleLocation),
        }
    }
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args, Clone, Debug)]
pub struct ModelFlags {
    #[arg(long, default_value_t = DEFAULT_RANK)]
    pub rank: usize,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    /// Relative objective improvement below which NMF stops; 0 runs every iteration.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Seeds NMF initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = PRODUCTION_ALPHA_PERCENTILE, conflicts_with = "alpha")]
    pub alpha_percentile: f64,
    /// Fixed edge-strength threshold instead of a percentile.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = PRODUCTION_LAMBDA)]
    pub lambda: f64,
    /// frequency, raw-count or softmax.
    #[arg(long, default_value = "frequency", value_parser = parse_serde::<MarginalMode>)]
    pub marginal_mode: MarginalMode,
    /// dot or cosine.
    #[arg(long, default_value = "dot", value_parser = parse_serde::<SimilarityMode>)]
    pub similarity: SimilarityMode,
}

impl ModelFlags {
    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            nmf: NmfConfig {
                rank: self.rank,
                max_iters: self.max_iters,
                tol: self.tol,
                seed: self.seed,
            },
            alpha: match self.alpha {
                Some(a) => AlphaSpec::Fixed(a),
                None => AlphaSpec::Percentile(self.alpha_percentile),
            },
            lambda: self.lambda,
            marginal_mode: self.marginal_mode,
            similarity_mode: self.similarity,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct SkipGramFlags {
    #[arg(long, default_value_t = 32)]
    pub dims: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[arg(id = "skipgram_seed", long = "skipgram-seed", default_value_t = 0)]
    pub seed: u64,
}

impl SkipGramFlags {
    pub fn config(&self) -> SkipGramConfig {
        SkipGramConfig {
            dims: self.dims,
            window: self.window,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            negatives: self.negatives,
            seed: self.seed,
            min_count: self.min_count,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct IngestArgs {
    /// JSONL or CSV (by extension) event file.
    #[arg(long)]
    pub input: PathBuf,
    /// Normalized JSONL output.
    #[arg(long)]
    pub out: PathBuf,
    /// Rejected lines as JSONL.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    /// Keep only this gender (with --article-type).
    #[arg(long, requires = "article_type")]
    pub gender: Option<Gender>,
    #[arg(long = "article-type", requires = "gender")]
    pub article_type: Option<String>,
}

#[derive(Args, Clone, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub category: CategoryArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub users: usize,
    #[arg(long, default_value_t = 20)]
    pub brands: usize,
    #[arg(long, default_value_t = 8)]
    pub purchases_per_user: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub bands: usize,
    #[arg(long, default_value_t = 0.9)]
    pub in_band_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub popularity_skew: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthArgs {
    pub fn config(&self) -> Result<SynthConfig, CliError> {
        let mut cfg = SynthConfig::new(
            self.category.category()?,
            self.users,
            self.brands,
            self.seed,
        )
        .with_bands(self.bands);
        cfg.purchases_per_user = self.purchases_per_user;
        cfg.noise_rate = self.noise;
        cfg.in_band_rate = self.in_band_rate;
        cfg.popularity_skew = self.popularity_skew;
        Ok(cfg)
    }
}

#[derive(Args, Clone, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub category: CategoryArgs,
    /// Event store (JSONL or CSV).
    #[arg(long)]
    pub events: PathBuf,
    #[command(flatten)]
    pub location: BundleLocation,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args, Clone, Debug)]
pub struct TrainSkipgramArgs {
    #[command(flatten)]
    pub category: CategoryArgs,
    #[arg(long)]
    pub events: PathBuf,
    #[command(flatten)]
    pub location: BundleLocation,
    #[command(flatten)]
    pub skipgram: SkipGramFlags,
}

#[derive(Args, Clone, Debug)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub category: CategoryArgs,
    #[command(flatten)]
    pub location: BundleLocation,
    /// Brand the user states a size for.
    #[arg(long)]
    pub brand: String,
    /// UK size worn in --brand.
    #[arg(long)]
    pub size: f64,
    /// Brand to recommend a size in.
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum, default_value_t = QueryMethod::Wbsr)]
    pub method: QueryMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalChoice {
    Wbsr,
    Skipgram,
    Both,
}

#[derive(Args, Clone, Debug)]
pub struct ExperimentFlags {
    #[command(flatten)]
    pub category: CategoryArgs,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Seeds the order split.
    #[arg(long = "split-seed", default_value_t = 0)]
    pub split_seed: u64,
    /// Machine-readable report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    #[arg(long, value_enum, default_value_t = EvalChoice::Both)]
    pub method: EvalChoice,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub skipgram: SkipGramFlags,
}

#[derive(Args, Clone, Debug)]
pub struct SweepAlphaArgs {
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    /// Validation share carved from the train orders.
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    #[arg(long, value_delimiter = ',', default_value = "60,65,70,75,80")]
    pub percentiles: Vec<f64>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args, Clone, Debug)]
pub struct SweepLambdaArgs {
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9")]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args, Clone, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub category: CategoryArgs,
    #[command(flatten)]
    pub location: BundleLocation,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
}

pub fn read_events(path: &Path) -> Result<(Vec<InteractionEvent>, usize), CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let (events, report) =
        parse_events(file, EventFormat::from_path(path)).map_err(|source| CliError::Ingest {
            path: path.to_path_buf(),
            source,
        })?;
    Ok((events, report.rejects.len()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(path, e.into()))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summaries serialize");
    s.push('\n');
    s
}

/// Load a bundle and check it belongs to the requested category.
pub fn load_bundle(path: &Path, category: &Category) -> Result<ModelBundle, CliError> {
    let bundle = ModelBundle::load(path).map_err(|e| CliError::persist(path, e))?;
    if &bundle.category != category {
        return Err(CliError::Invalid(format!(
            "{} holds category {}, not {}",
            path.display(),
            bundle.category,
            category
        )));
    }
    Ok(bundle)
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    bundle.save(path).map_err(|e| CliError::persist(path, e))
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Build(a) => build(a),
        Command::TrainSkipgram(a) => train_skipgram(a),
        Command::Recommend(a) => recommend(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::SweepAlpha(a) => sweep_alpha_cmd(a),
        Command::SweepLambda(a) => sweep_lambda_cmd(a),
        Command::Serve(a) => {
            let category = a.category.category()?;
            let path = a.location.resolve(&category)?;
            let bundle = load_bundle(&path, &category)?;
            crate::server::serve_blocking(bundle, &a.listen)?;
            Ok(String::new())
        }
    }
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    input: &'a Path,
    output: &'a Path,
    accepted: usize,
    kept: usize,
    rejected: usize,
    rejects: &'a [sizegraph_core::catalog::Reject],
}

fn ingest(a: IngestArgs) -> Result<String, CliError> {
    let file = File::open(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let (events, report) =
        parse_events(file, EventFormat::from_path(&a.input)).map_err(|source| {
            CliError::Ingest {
                path: a.input.clone(),
                source,
            }
        })?;
    let filter = match (a.gender, &a.article_type) {
        (Some(g), Some(t)) => Some(Category::new(g, t).map_err(CliError::Invalid)?),
        _ => None,
    };
    let kept: Vec<InteractionEvent> = events
        .iter()
        .filter(|e| filter.as_ref().is_none_or(|c| &e.category == c))
        .cloned()
        .collect();
    let mut out = create(&a.out)?;
    write_events_jsonl(&mut out, &kept)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(&a.out, e))?;
    if let Some(path) = &a.rejects {
        let mut w = create(path)?;
        report
            .write_jsonl(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(path, e))?;
    }
    Ok(json_line(&IngestSummary {
        input: &a.input,
        output: &a.out,
        accepted: events.len(),
        kept: kept.len(),
        rejected: report.rejects.len(),
        rejects: &report.rejects,
    }))
}

fn synth(a: SynthArgs) -> Result<String, CliError> {
    let cfg = a.config()?;
    let data = synth_generate(&cfg).map_err(CliError::Invalid)?;
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let write_store = |name: &str, events: &[InteractionEvent]| -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        write_events_jsonl(&mut w, events)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    };
    let events_path = write_store("events.jsonl", &data.events)?;
    let orders_path = write_store("orders.jsonl", &data.orders())?;
    let truth_path = dir.join("truth.jsonl");
    let mut w = create(&truth_path)?;
    data.write_truth(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&truth_path, e))?;
    write_json(&dir.join("config.json"), &cfg)?;
    Ok(json_line(&serde_json::json!({
        "events": events_path,
        "orders": orders_path,
        "truth": truth_path,
        "n_events": data.events.len(),
        "n_orders": data.orders().len(),
    })))
}

fn build(a: BuildArgs) -> Result<String, CliError> {
    let category = a.category.category()?;
    let out = a.location.resolve(&category)?;
    let (events, n_rejects) = read_events(&a.events)?;
    let bundle = build_bundle(&events, &category, &a.model.build_config())?;
    save_bundle(&bundle, &out)?;
    let (n_vertices, n_edges) = edge_count_report(&bundle.size_graph);
    Ok(json_line(&serde_json::json!({
        "bundle": out,
        "category": category,
        "alpha": bundle.metadata.alpha,
        "lambda": bundle.hyperparams.lambda,
        "vertices": n_vertices,
        "labelled_edges": n_edges,
        "sparsity": sparsity(&bundle.size_graph).ok(),
        "nmf_iterations": bundle.metadata.nmf_iterations,
        "events_fingerprint": bundle.metadata.events_fingerprint,
        "bundle_fingerprint": bundle.fingerprint(),
        "rejected_lines": n_rejects,
    })))
}

fn train_skipgram(a: TrainSkipgramArgs) -> Result<String, CliError> {
    let category = a.category.category()?;
    let path = a.location.resolve(&category)?;
    let mut bundle = load_bundle(&path, &category)?;
    let (events, _) = read_events(&a.events)?;
    bundle.attach_skipgram(&events, a.skipgram.config())?;
    save_bundle(&bundle, &path)?;
    let model = bundle.skipgram.as_ref().expect("just attached");
    Ok(json_line(&serde_json::json!({
        "bundle": path,
        "vocabulary": model.vocab().len(),
        "skipgram": bundle.metadata.skipgram,
    })))
}

fn recommend(a: RecommendArgs) -> Result<String, CliError> {
    let category = a.category.category()?;
    let path = a.location.resolve(&category)?;
    let bundle = load_bundle(&path, &category)?;
    let query = Query {
        brand: a.brand,
        size: a.size,
        target: a.target,
        method: a.method,
    };
    Ok(answer(&bundle, &query)?.render())
}

#[derive(Serialize)]
struct EvaluationDocument {
    category: Category,
    n_train_orders: usize,
    n_test_orders: usize,
    reports: Vec<EvalReport>,
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<String, CliError> {
    let ex = &a.experiment;
    let category = ex.category.category()?;
    let (events, _) = read_events(&ex.events)?;
    let split = Split::new(&events, &category, ex.test_fraction, ex.split_seed)?;
    let model_events = split.model_events();
    let mut bundle = build_bundle(&model_events, &category, &a.model.build_config())?;
    let mut reports = Vec::new();
    let (mut skip, mut wbsr) = (None, None);
    if a.method != EvalChoice::Skipgram {
        let r = evaluate(EvalMethod::Wbsr, &bundle, &split.train, &split.test);
        wbsr = Some(reports.len());
        reports.push(r);
    }
    if a.method != EvalChoice::Wbsr {
        bundle.attach_skipgram(&model_events, a.skipgram.config())?;
        let r = evaluate(EvalMethod::SkipGram, &bundle, &split.train, &split.test);
        skip = Some(reports.len());
        reports.push(r);
    }
    let table = accuracy_table(&[(
        category.clone(),
        skip.map(|i| &reports[i]),
        wbsr.map(|i| &reports[i]),
    )]);
    let mut text = table;
    for r in &reports {
        text.push_str(&format!(
            "{:?}: coverage {:.2}% over {} queries\n",
            r.method,
            100.0 * r.coverage,
            r.n_queries
        ));
    }
    if let Some(path) = &ex.report {
        write_json(
            path,
            &EvaluationDocument {
                category,
                n_train_orders: split.train.len(),
                n_test_orders: split.test.len(),
                reports,
            },
        )?;
    }
    Ok(text)
}

fn sweep_setup(
    ex: &ExperimentFlags,
    validation_fraction: f64,
    model: &ModelFlags,
) -> Result<(Split, ModelBundle), CliError> {
    let category = ex.category.category()?;
    let (events, _) = read_events(&ex.events)?;
    let held_out = Split::new(&events, &category, ex.test_fraction, ex.split_seed)?;
    let val = held_out.validation(validation_fraction, ex.split_seed)?;
    let bundle = build_bundle(&val.model_events(), &category, &model.build_config())?;
    Ok((val, bundle))
}

fn sweep_alpha_cmd(a: SweepAlphaArgs) -> Result<String, CliError> {
    if let Some(p) = a.percentiles.iter().find(|p| !(**p > 0.0 && **p < 100.0)) {
        return Err(CliError::Invalid(format!(
            "percentile {p} must lie in (0, 100)"
        )));
    }
    let (val, bundle) = sweep_setup(&a.experiment, a.validation_fraction, &a.model)?;
    let table = sweep_alpha(
        &a.percentiles,
        a.model.lambda,
        &bundle,
        &val.train,
        &val.test,
    )?;
    if let Some(path) = &a.experiment.report {
        write_json(path, &table)?;
    }
    Ok(table.to_text())
}

fn sweep_lambda_cmd(a: SweepLambdaArgs) -> Result<String, CliError> {
    let (val, bundle) = sweep_setup(&a.experiment, a.validation_fraction, &a.model)?;
    let table = sweep_lambda(
        &a.values,
        bundle.metadata.alpha,
        &bundle,
        &val.train,
        &val.test,
    )?;
    if let Some(path) = &a.experiment.report {
        write_json(path, &table)?;
    }
    Ok(table.to_text())
}

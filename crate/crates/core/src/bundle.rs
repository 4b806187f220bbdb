//! Offline build of one category's models and their persisted container.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::brand_similarity::{
    build_brand_graph, build_matrix, nmf_factorize, BrandModel, BrandSimilarityGraph, NmfConfig,
    SimilarityMode,
};
use crate::catalog::{
    compute_importance, extract_copurchases, reduce_highest_priority, Category, EventImportance,
    InteractionEvent,
};
use crate::error::{GraphError, IngestError, NmfError, PersistError, SkipGramError, WbsrError};
use crate::size_graph::{
    alpha_from_percentile, build_size_graph, BuildReport, SizeGraph, SizeGraphDoc,
};
use crate::skipgram::{build_documents, train, SkipGramConfig, SkipGramModel};
use crate::wbsr::{Hyperparams, MarginalMode, PRODUCTION_ALPHA_PERCENTILE, PRODUCTION_LAMBDA};
use crate::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Nmf(#[from] NmfError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Hyperparams(#[from] WbsrError),
    #[error(transparent)]
    SkipGram(#[from] SkipGramError),
    #[error("no events for category {0}")]
    EmptyCategory(Category),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSpec {
    /// Nearest-rank percentile of connected pairs' total edge weights.
    Percentile(f64),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub nmf: NmfConfig,
    pub alpha: AlphaSpec,
    pub lambda: f64,
    pub marginal_mode: MarginalMode,
    pub similarity_mode: SimilarityMode,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            nmf: NmfConfig::default(),
            alpha: AlphaSpec::Percentile(PRODUCTION_ALPHA_PERCENTILE),
            lambda: PRODUCTION_LAMBDA,
            marginal_mode: MarginalMode::Frequency,
            similarity_mode: SimilarityMode::Dot,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramMetadata {
    pub config: SkipGramConfig,
    pub events_fingerprint: String,
    pub final_epoch_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub config: BuildConfig,
    /// Resolved alpha; equals the percentile value when built from one.
    pub alpha: f64,
    pub lambda_is_production_choice: bool,
    pub importance: EventImportance,
    pub size_graph_report: BuildReport,
    pub nmf_iterations: usize,
    pub nmf_final_objective: f64,
    /// SHA-256 over the category's events, canonical JSONL.
    pub events_fingerprint: String,
    pub n_events: usize,
    /// Earliest and latest event timestamps in the build window.
    pub window: (u64, u64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipgram: Option<SkipGramMetadata>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub category: Category,
    pub brand_model: BrandModel,
    pub brand_graph: BrandSimilarityGraph,
    pub size_graph: SizeGraph,
    pub hyperparams: Hyperparams,
    pub skipgram: Option<SkipGramModel>,
    pub metadata: BuildMetadata,
}

pub fn fingerprint_events<'a>(events: impl IntoIterator<Item = &'a InteractionEvent>) -> String {
    let mut hasher = Sha256::new();
    for ev in events {
        let line = serde_json::to_vec(&ev.to_record()).expect("records serialize");
        hasher.update(&line);
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Brand graph (NMF) and size graph for one category, with alpha resolved.
pub fn build_bundle(
    events: &[InteractionEvent],
    category: &Category,
    cfg: &BuildConfig,
) -> Result<ModelBundle, BuildError> {
    let in_cat: Vec<InteractionEvent> = events
        .iter()
        .filter(|e| &e.category == category)
        .cloned()
        .collect();
    if in_cat.is_empty() {
        return Err(BuildError::EmptyCategory(category.clone()));
    }
    let importance = compute_importance(&in_cat)?;
    let priority = reduce_highest_priority(&in_cat, category);
    let matrix = build_matrix(&priority, &importance);
    let factors = nmf_factorize(&matrix, &cfg.nmf)?;
    let mut brand_model =
        BrandModel::from_factors(category.clone(), &matrix, &factors, cfg.nmf.seed);
    brand_model.mode = cfg.similarity_mode;
    let brand_graph = build_brand_graph(&brand_model, category);

    let catalog: Vec<String> = in_cat
        .iter()
        .map(|e| e.brand_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pairs = extract_copurchases(&in_cat, category);
    let (size_graph, report) = build_size_graph(&pairs, category, &catalog);

    let alpha = match cfg.alpha {
        AlphaSpec::Percentile(p) => alpha_from_percentile(&size_graph, p)?.value(),
        AlphaSpec::Fixed(a) => a,
    };
    let hyperparams = Hyperparams::new(alpha, cfg.lambda)?.with_mode(cfg.marginal_mode);

    let window = in_cat.iter().fold((u64::MAX, 0), |(lo, hi), e| {
        (lo.min(e.timestamp), hi.max(e.timestamp))
    });
    let metadata = BuildMetadata {
        config: *cfg,
        alpha,
        lambda_is_production_choice: cfg.lambda == PRODUCTION_LAMBDA,
        importance,
        size_graph_report: report,
        nmf_iterations: factors.iterations(),
        nmf_final_objective: *factors.trace.last().expect("non-empty trace"),
        events_fingerprint: fingerprint_events(&in_cat),
        n_events: in_cat.len(),
        window,
        skipgram: None,
    };
    Ok(ModelBundle {
        category: category.clone(),
        brand_model,
        brand_graph,
        size_graph,
        hyperparams,
        skipgram: None,
        metadata,
    })
}

impl ModelBundle {
    /// Train the skip-gram baseline on the category's purchases and attach it.
    pub fn attach_skipgram(
        &mut self,
        events: &[InteractionEvent],
        cfg: SkipGramConfig,
    ) -> Result<(), SkipGramError> {
        let docs = build_documents(events, &self.category);
        let (model, losses) = train(&docs, cfg)?;
        self.metadata.skipgram = Some(SkipGramMetadata {
            config: cfg,
            events_fingerprint: fingerprint_events(
                events.iter().filter(|e| e.category == self.category),
            ),
            final_epoch_loss: losses.last().copied().unwrap_or(f64::NAN),
        });
        self.skipgram = Some(model);
        Ok(())
    }

    /// Same bundle with a different hyperparameter set.
    pub fn with_hyperparams(&self, hyperparams: Hyperparams) -> Self {
        let mut b = self.clone();
        b.hyperparams = hyperparams;
        b.metadata.alpha = hyperparams.alpha.value();
        b.metadata.lambda_is_production_choice = hyperparams.lambda == PRODUCTION_LAMBDA;
        b
    }

    pub fn to_doc(&self) -> BundleDoc {
        BundleDoc {
            format_version: FORMAT_VERSION,
            category: self.category.clone(),
            brand_model: self.brand_model.clone(),
            size_graph: self.size_graph.to_doc(),
            hyperparams: self.hyperparams,
            skipgram: self.skipgram.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_doc(doc: BundleDoc) -> Result<Self, PersistError> {
        if doc.format_version > FORMAT_VERSION {
            return Err(PersistError::UnsupportedVersion {
                found: doc.format_version,
                supported: FORMAT_VERSION,
            });
        }
        if doc.brand_model.category != doc.category || doc.size_graph.category != doc.category {
            return Err(PersistError::Invalid(
                "sub-models belong to different categories".into(),
            ));
        }
        if doc.brand_model.vectors.len() != doc.brand_model.brands.len()
            || doc
                .brand_model
                .vectors
                .iter()
                .any(|v| v.len() != doc.brand_model.rank)
        {
            return Err(PersistError::Invalid(
                "brand embedding shape mismatch".into(),
            ));
        }
        let size_graph = SizeGraph::from_doc(doc.size_graph)?;
        let brand_graph = build_brand_graph(&doc.brand_model, &doc.category);
        Ok(Self {
            category: doc.category,
            brand_model: doc.brand_model,
            brand_graph,
            size_graph,
            hyperparams: doc.hyperparams,
            skipgram: doc.skipgram,
            metadata: doc.metadata,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_doc()).expect("bundle serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the persisted form; equal bundles share it.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format_version > FORMAT_VERSION {
            return Err(PersistError::UnsupportedVersion {
                found: probe.format_version,
                supported: FORMAT_VERSION,
            });
        }
        Self::from_doc(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PersistError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Persisted bundle container. The brand graph is recomputed from the
/// stored brand factors on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleDoc {
    pub format_version: u32,
    pub category: Category,
    pub brand_model: BrandModel,
    pub size_graph: SizeGraphDoc,
    pub hyperparams: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipgram: Option<SkipGramModel>,
    pub metadata: BuildMetadata,
}

//! The single answer path shared by `recommend` and the HTTP server, so both
//! emit byte-identical documents.

use serde::{Deserialize, Serialize};
use sizegraph_core::bundle::ModelBundle;
use sizegraph_core::skipgram::{recommend_skipgram, Scoring};
use sizegraph_core::{
    wbsr, Preference, Recommendation, SizeDelta, SizeError, SkipGramError, UkSize, WbsrError,
};
use thiserror::Error;

use crate::error::{exit, skipgram_code, wbsr_code};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum QueryMethod {
    #[default]
    Wbsr,
    Skipgram,
    Both,
}

/// "Wears `size` in `brand`; what size in `target`?"
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub brand: String,
    pub size: f64,
    pub target: String,
    #[serde(default)]
    pub method: QueryMethod,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error(transparent)]
    Size(#[from] SizeError),
    #[error(transparent)]
    Wbsr(#[from] WbsrError),
    #[error(transparent)]
    SkipGram(#[from] SkipGramError),
    #[error("bundle has no skip-gram model; run train-skipgram first")]
    NoSkipGramModel,
}

impl QueryError {
    pub fn kind(&self) -> &'static str {
        match self {
            QueryError::Size(_) => "InvalidSize",
            QueryError::Wbsr(WbsrError::NoPath(..) | WbsrError::NoDirectEdge(..)) => "NoPath",
            QueryError::Wbsr(WbsrError::UnknownBrand(_)) => "UnknownBrand",
            QueryError::Wbsr(WbsrError::InvalidHyperparams(_)) => "InvalidHyperparams",
            QueryError::SkipGram(SkipGramError::UnknownPreference(_)) => "UnknownBrand",
            QueryError::SkipGram(SkipGramError::NoCandidates) => "NoPath",
            QueryError::SkipGram(_) => "SkipGram",
            QueryError::NoSkipGramModel => "NoSkipGramModel",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            QueryError::Size(_) | QueryError::NoSkipGramModel => exit::INVALID,
            QueryError::Wbsr(e) => wbsr_code(e),
            QueryError::SkipGram(e) => skipgram_code(e),
        }
    }

    /// 422 for unreachable targets, 404 for unknown brands.
    pub fn http_status(&self) -> u16 {
        match self.exit_code() {
            exit::NO_PATH => 422,
            exit::UNKNOWN_BRAND => 404,
            _ => 400,
        }
    }

    pub fn to_document(&self) -> ErrorDocument {
        ErrorDocument {
            error: ErrorBody {
                kind: self.kind().to_string(),
                message: self.to_string(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDocument {
    pub error: ErrorBody,
}

/// Skip-gram result. Scores are cosines, not probabilities, so this does not
/// reuse the WBSR document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramDocument {
    pub size: UkSize,
    pub method: String,
    pub score: f64,
    pub chosen_delta: SizeDelta,
    pub skipped: Vec<UkSize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slot<T> {
    Ok(T),
    Err(ErrorDocument),
}

impl<T> From<Result<T, QueryError>> for Slot<T> {
    fn from(r: Result<T, QueryError>) -> Self {
        match r {
            Ok(v) => Slot::Ok(v),
            Err(e) => Slot::Err(e.to_document()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BothDocument {
    pub wbsr: Slot<Recommendation>,
    pub skipgram: Slot<SkipGramDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Answer {
    Wbsr(Recommendation),
    SkipGram(SkipGramDocument),
    Both(BothDocument),
}

impl Answer {
    /// One JSON line, the exact bytes printed by the CLI and sent by the
    /// server.
    pub fn render(&self) -> String {
        let mut s = serde_json::to_string(self).expect("answers serialize");
        s.push('\n');
        s
    }
}

pub fn answer_wbsr(
    bundle: &ModelBundle,
    pref: &Preference,
    target: &str,
) -> Result<Recommendation, QueryError> {
    Ok(wbsr::recommend(
        pref,
        target,
        &bundle.size_graph,
        &bundle.brand_graph,
        &bundle.hyperparams,
    )?)
}

pub fn answer_skipgram(
    bundle: &ModelBundle,
    pref: &Preference,
    target: &str,
) -> Result<SkipGramDocument, QueryError> {
    let model = bundle
        .skipgram
        .as_ref()
        .ok_or(QueryError::NoSkipGramModel)?;
    if !bundle.size_graph.contains(target) && !bundle.brand_graph.contains(target) {
        return Err(WbsrError::UnknownBrand(target.to_string()).into());
    }
    let candidates: Vec<UkSize> = UkSize::all().collect();
    let a = recommend_skipgram(
        model,
        pref,
        &candidates,
        &bundle.category,
        target,
        Scoring::Cosine,
    )?;
    Ok(SkipGramDocument {
        size: a.size,
        method: "SkipGram".into(),
        score: a.score,
        chosen_delta: pref.size - a.size,
        skipped: a.skipped,
    })
}

/// With `both`, per-method failures are embedded in the document and the
/// call itself succeeds.
pub fn answer(bundle: &ModelBundle, query: &Query) -> Result<Answer, QueryError> {
    let pref = Preference {
        category: bundle.category.clone(),
        brand: query.brand.clone(),
        size: UkSize::new(query.size)?,
    };
    Ok(match query.method {
        QueryMethod::Wbsr => Answer::Wbsr(answer_wbsr(bundle, &pref, &query.target)?),
        QueryMethod::Skipgram => Answer::SkipGram(answer_skipgram(bundle, &pref, &query.target)?),
        QueryMethod::Both => Answer::Both(BothDocument {
            wbsr: answer_wbsr(bundle, &pref, &query.target).into(),
            skipgram: answer_skipgram(bundle, &pref, &query.target).into(),
        }),
    })
}

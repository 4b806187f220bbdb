//! Weighted brand similarity recommendation.
//!
//! Given "wears size `s` in brand `u`", the size for brand `v` comes from one
//! of three routes, tried in order:
//!
//! 1. identity, when `v == u`;
//! 2. a strong direct edge: total co-purchase count above `alpha` and a
//!    softmax over the five raw label counts whose top probability exceeds
//!    `lambda`;
//! 3. marginalization over every intermediate brand `z` connected to both
//!    `u` and `v`, weighting each two-hop label combination by the brand
//!    similarities `sim(u, z)` and `sim(z, v)`.

use serde::{Deserialize, Serialize};

use crate::brand_similarity::BrandSimilarityGraph;
use crate::catalog::Category;
use crate::error::WbsrError;
use crate::size_graph::{
    total_edge_weight, EdgeStrengthThreshold, LabelCounts, SizeGraph, LABELS, N_LABELS,
};
use crate::units::{SizeDelta, UkSize};

/// The softmax threshold selected on validation data for production.
pub const PRODUCTION_LAMBDA: f64 = 0.7;
/// Percentile of total edge weights used for alpha in production.
pub const PRODUCTION_ALPHA_PERCENTILE: f64 = 75.0;

/// Number of composite deltas reachable over two hops: -2 ..= 2 in 0.5 steps.
pub const N_COMPOSITE: usize = 2 * N_LABELS - 1;

pub fn composite_delta(index: usize) -> SizeDelta {
    SizeDelta::from_half_points(index as i32 - (N_COMPOSITE as i32 - 1) / 2)
}

/// How a leg's label counts become the conditional weights used in
/// marginalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalMode {
    /// `count / total` per label.
    #[default]
    Frequency,
    /// The raw counts.
    RawCount,
    /// Stable softmax of the raw counts.
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: EdgeStrengthThreshold,
    pub lambda: f64,
    #[serde(default)]
    pub marginal_mode: MarginalMode,
}

impl Hyperparams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self, WbsrError> {
        let alpha = EdgeStrengthThreshold::new(alpha).map_err(WbsrError::InvalidHyperparams)?;
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(WbsrError::InvalidHyperparams(format!(
                "lambda must lie in (0, 1), got {lambda}"
            )));
        }
        Ok(Self {
            alpha,
            lambda,
            marginal_mode: MarginalMode::Frequency,
        })
    }

    pub fn with_mode(mut self, mode: MarginalMode) -> Self {
        self.marginal_mode = mode;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub category: Category,
    pub brand: String,
    pub size: UkSize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Identity,
    Direct,
    Marginal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub brand: String,
    pub contribution: f64,
}

/// A predicted size. `size == query size - chosen_delta` unless `clamped`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub size: UkSize,
    pub method: Method,
    pub confidence: f64,
    pub chosen_delta: SizeDelta,
    pub trail: Vec<TrailEntry>,
    pub clamped: bool,
}

impl Recommendation {
    fn from_delta(
        s_u: UkSize,
        delta: SizeDelta,
        method: Method,
        confidence: f64,
        trail: Vec<TrailEntry>,
    ) -> Self {
        let (size, clamped) = s_u.shifted_down(delta);
        Self {
            size,
            method,
            confidence,
            chosen_delta: delta,
            trail,
            clamped,
        }
    }
}

/// Softmax with the maximum subtracted first, so every exponent is <= 0.
pub fn stable_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Highest score; ties go to the smallest |delta|, then the negative one.
fn argmax_delta(scored: impl IntoIterator<Item = (SizeDelta, f64)>) -> Option<(SizeDelta, f64)> {
    let mut best: Option<(SizeDelta, f64)> = None;
    for (d, s) in scored {
        best = match best {
            None => Some((d, s)),
            Some((bd, bs)) if s > bs || (s == bs && d.tie_break_key() < bd.tie_break_key()) => {
                Some((d, s))
            }
            keep => keep,
        };
    }
    best
}

pub fn edge_softmax(graph: &SizeGraph, u: &str, v: &str) -> Result<[f64; N_LABELS], WbsrError> {
    let counts = graph.counts(u, v);
    if counts.iter().all(|c| *c == 0) {
        return Err(WbsrError::NoDirectEdge(u.to_string(), v.to_string()));
    }
    Ok(softmax_of_counts(&counts))
}

fn softmax_of_counts(counts: &LabelCounts) -> [f64; N_LABELS] {
    let xs: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
    let p = stable_softmax(&xs);
    let mut out = [0.0; N_LABELS];
    out.copy_from_slice(&p);
    out
}

/// Direct-edge route; `None` means fall through to marginalization.
pub fn direct_recommend(
    graph: &SizeGraph,
    u: &str,
    s_u: UkSize,
    v: &str,
    params: &Hyperparams,
) -> Option<Recommendation> {
    let total = total_edge_weight(graph, u, v);
    if total == 0 || total as f64 <= params.alpha.value() {
        return None;
    }
    let probs = edge_softmax(graph, u, v).ok()?;
    let (delta, p) = argmax_delta(LABELS.iter().copied().zip(probs))?;
    (p > params.lambda)
        .then(|| Recommendation::from_delta(s_u, delta, Method::Direct, p, Vec::new()))
}

/// Composite-delta scores from two-hop marginalization.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalScores {
    /// Indexed by composite delta, -2 ..= 2 in 0.5 steps.
    pub scores: [f64; N_COMPOSITE],
    /// Total contribution of each intermediate brand, ascending by brand.
    pub trail: Vec<TrailEntry>,
}

impl MarginalScores {
    pub fn get(&self, delta: SizeDelta) -> f64 {
        let idx = delta.half_points() + (N_COMPOSITE as i32 - 1) / 2;
        usize::try_from(idx)
            .ok()
            .and_then(|i| self.scores.get(i).copied())
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SizeDelta, f64)> + '_ {
        self.scores
            .iter()
            .enumerate()
            .map(|(i, s)| (composite_delta(i), *s))
    }
}

pub fn leg_weights(counts: &LabelCounts, mode: MarginalMode) -> [f64; N_LABELS] {
    match mode {
        MarginalMode::Frequency => {
            let total: u64 = counts.iter().sum();
            let mut out = [0.0; N_LABELS];
            if total > 0 {
                for (o, c) in out.iter_mut().zip(counts) {
                    *o = *c as f64 / total as f64;
                }
            }
            out
        }
        MarginalMode::RawCount => counts.map(|c| c as f64),
        MarginalMode::Softmax => softmax_of_counts(counts),
    }
}

/// Intermediate brands: every `z` outside {u, v} with co-purchases on both
/// legs, ascending by brand id.
pub fn intermediaries<'a>(graph: &'a SizeGraph, u: &'a str, v: &'a str) -> Vec<&'a str> {
    graph
        .neighbors(u)
        .filter(|z| *z != v && *z != u && total_edge_weight(graph, z, v) > 0)
        .collect()
}

pub fn marginal_scores(
    size_graph: &SizeGraph,
    brand_graph: &BrandSimilarityGraph,
    u: &str,
    v: &str,
    mode: MarginalMode,
) -> Result<MarginalScores, WbsrError> {
    let zs = intermediaries(size_graph, u, v);
    if zs.is_empty() {
        return Err(WbsrError::NoPath(u.to_string(), v.to_string()));
    }
    let mut scores = [0.0; N_COMPOSITE];
    let mut trail = Vec::with_capacity(zs.len());
    for z in zs {
        let p_uz = leg_weights(&size_graph.counts(u, z), mode);
        let p_zv = leg_weights(&size_graph.counts(z, v), mode);
        let sim_uz = brand_graph.get(u, z).unwrap_or(0.0);
        let sim_zv = brand_graph.get(z, v).unwrap_or(0.0);
        let mut through_z = 0.0;
        for i in 0..N_LABELS {
            for j in 0..N_LABELS {
                let c = p_uz[i] * sim_uz * p_zv[j] * sim_zv;
                scores[i + j] += c;
                through_z += c;
            }
        }
        trail.push(TrailEntry {
            brand: z.to_string(),
            contribution: through_z,
        });
    }
    Ok(MarginalScores { scores, trail })
}

/// Normalize, pick the best composite delta and transfer the size.
pub fn marginal_recommend(
    scores: &MarginalScores,
    s_u: UkSize,
) -> Result<Recommendation, WbsrError> {
    let total: f64 = scores.scores.iter().sum();
    if !(total > 0.0) {
        return Err(WbsrError::NoPath(String::new(), String::new()));
    }
    let (delta, best) = argmax_delta(scores.iter()).expect("nine buckets");
    Ok(Recommendation::from_delta(
        s_u,
        delta,
        Method::Marginal,
        best / total,
        scores.trail.clone(),
    ))
}

fn check_known(
    brand: &str,
    size_graph: &SizeGraph,
    brand_graph: &BrandSimilarityGraph,
) -> Result<(), WbsrError> {
    if size_graph.contains(brand) || brand_graph.contains(brand) {
        Ok(())
    } else {
        Err(WbsrError::UnknownBrand(brand.to_string()))
    }
}

pub fn recommend(
    pref: &Preference,
    target_brand: &str,
    size_graph: &SizeGraph,
    brand_graph: &BrandSimilarityGraph,
    params: &Hyperparams,
) -> Result<Recommendation, WbsrError> {
    if target_brand == pref.brand {
        return Ok(Recommendation {
            size: pref.size,
            method: Method::Identity,
            confidence: 1.0,
            chosen_delta: SizeDelta::ZERO,
            trail: Vec::new(),
            clamped: false,
        });
    }
    check_known(target_brand, size_graph, brand_graph)?;
    check_known(&pref.brand, size_graph, brand_graph)?;
    if let Some(rec) = direct_recommend(size_graph, &pref.brand, pref.size, target_brand, params) {
        return Ok(rec);
    }
    let no_path = || WbsrError::NoPath(pref.brand.clone(), target_brand.to_string());
    let scores = marginal_scores(
        size_graph,
        brand_graph,
        &pref.brand,
        target_brand,
        params.marginal_mode,
    )
    .map_err(|_| no_path())?;
    marginal_recommend(&scores, pref.size).map_err(|_| no_path())
}

/// Ablation that answers only through identity or a strong direct edge.
pub fn recommend_direct_only(
    pref: &Preference,
    target_brand: &str,
    size_graph: &SizeGraph,
    brand_graph: &BrandSimilarityGraph,
    params: &Hyperparams,
) -> Result<Recommendation, WbsrError> {
    match recommend(pref, target_brand, size_graph, brand_graph, params)? {
        r if r.method == Method::Marginal => Err(WbsrError::NoPath(
            pref.brand.clone(),
            target_brand.to_string(),
        )),
        r => Ok(r),
    }
}

//! Skip-gram SKU embedding baseline.
//!
//! Each purchase becomes a word `gender_articleType_brand_size`, each user's
//! chronologically ordered purchases a document. Embeddings are trained with
//! negative sampling and a size is predicted by the candidate whose input
//! vector is closest (cosine) to the preference word's.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Category, EventKind, Gender, InteractionEvent};
use crate::error::{PersistError, SkipGramError};
use crate::units::UkSize;
use crate::wbsr::Preference;
use crate::FORMAT_VERSION;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SkuWord(String);

impl SkuWord {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SkuWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn underscored(s: &str) -> String {
    s.trim().replace(' ', "_")
}

pub fn encode_sku(category: &Category, brand: &str, size: UkSize) -> SkuWord {
    SkuWord(format!(
        "{}_{}_{}_{}",
        category.gender,
        underscored(&category.article_type),
        underscored(brand),
        size
    ))
}

/// Known (category, brand) combinations, used to split tokens whose
/// components themselves contain underscores.
#[derive(Clone, Debug, Default)]
pub struct BrandRegistry {
    by_middle: HashMap<(Gender, String), (Category, String)>,
}

impl BrandRegistry {
    /// Returns false when the brand's encoding collides with a different,
    /// already registered brand.
    pub fn register(&mut self, category: &Category, brand: &str) -> bool {
        let middle = format!(
            "{}_{}",
            underscored(&category.article_type),
            underscored(brand)
        );
        match self.by_middle.get(&(category.gender, middle.clone())) {
            Some((c, b)) => c == category && b == brand,
            None => {
                self.by_middle.insert(
                    (category.gender, middle),
                    (category.clone(), brand.to_string()),
                );
                true
            }
        }
    }

    pub fn decode(&self, word: &SkuWord) -> Option<(Category, String, UkSize)> {
        let (gender, rest) = word.0.split_once('_')?;
        let (middle, size) = rest.rsplit_once('_')?;
        let gender: Gender = gender.parse().ok()?;
        let size = UkSize::new(size.parse().ok()?).ok()?;
        let (category, brand) = self.by_middle.get(&(gender, middle.to_string()))?;
        Some((category.clone(), brand.clone(), size))
    }
}

/// One document per purchasing user (ascending user id), words in timestamp
/// order with ties broken by order id and then token.
pub fn build_documents(events: &[InteractionEvent], category: &Category) -> Vec<Vec<SkuWord>> {
    let mut by_user: BTreeMap<&str, Vec<(u64, Option<&str>, SkuWord)>> = BTreeMap::new();
    for ev in events
        .iter()
        .filter(|e| e.kind == EventKind::Purchase && &e.category == category)
    {
        let Some(size) = ev.size else { continue };
        by_user.entry(ev.user_id.as_str()).or_default().push((
            ev.timestamp,
            ev.order_id.as_deref(),
            encode_sku(category, &ev.brand_id, size),
        ));
    }
    by_user
        .into_values()
        .map(|mut words| {
            words.sort();
            words.into_iter().map(|(_, _, w)| w).collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dims: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
    pub min_count: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dims: 32,
            window: 5,
            epochs: 10,
            learning_rate: 0.025,
            negatives: 5,
            seed: 0,
            min_count: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkipGramDoc", into = "SkipGramDoc")]
pub struct SkipGramModel {
    vocab: Vec<SkuWord>,
    index: HashMap<SkuWord, usize>,
    /// |V| × dims, row-major.
    input: Vec<f64>,
    output: Vec<f64>,
    pub dims: usize,
    pub window: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SkipGramDoc {
    format_version: u32,
    dims: usize,
    window: usize,
    seed: u64,
    vocab: Vec<SkuWord>,
    input_vectors: Vec<Vec<f64>>,
    output_vectors: Vec<Vec<f64>>,
}

impl From<SkipGramModel> for SkipGramDoc {
    fn from(m: SkipGramModel) -> Self {
        let rows = |flat: &[f64]| flat.chunks(m.dims).map(<[f64]>::to_vec).collect();
        SkipGramDoc {
            format_version: FORMAT_VERSION,
            dims: m.dims,
            window: m.window,
            seed: m.seed,
            input_vectors: rows(&m.input),
            output_vectors: rows(&m.output),
            vocab: m.vocab,
        }
    }
}

impl TryFrom<SkipGramDoc> for SkipGramModel {
    type Error = PersistError;

    fn try_from(doc: SkipGramDoc) -> Result<Self, Self::Error> {
        if doc.format_version > FORMAT_VERSION {
            return Err(PersistError::UnsupportedVersion {
                found: doc.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let n = doc.vocab.len();
        let shape_ok =
            |rows: &[Vec<f64>]| rows.len() == n && rows.iter().all(|r| r.len() == doc.dims);
        if doc.dims == 0 || !shape_ok(&doc.input_vectors) || !shape_ok(&doc.output_vectors) {
            return Err(PersistError::Invalid(
                "skip-gram vector shapes do not match vocabulary".into(),
            ));
        }
        let input: Vec<f64> = doc.input_vectors.concat();
        let output: Vec<f64> = doc.output_vectors.concat();
        if input.iter().chain(&output).any(|x| !x.is_finite()) {
            return Err(PersistError::Invalid(
                "non-finite skip-gram vector entry".into(),
            ));
        }
        let index: HashMap<SkuWord, usize> = doc
            .vocab
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, w)| (w, i))
            .collect();
        if index.len() != n {
            return Err(PersistError::Invalid("duplicate vocabulary word".into()));
        }
        Ok(Self {
            vocab: doc.vocab,
            index,
            input,
            output,
            dims: doc.dims,
            window: doc.window,
            seed: doc.seed,
        })
    }
}

impl SkipGramModel {
    pub fn vocab(&self) -> &[SkuWord] {
        &self.vocab
    }

    pub fn index_of(&self, word: &SkuWord) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn input_vector(&self, idx: usize) -> &[f64] {
        &self.input[idx * self.dims..(idx + 1) * self.dims]
    }

    pub fn output_vector(&self, idx: usize) -> &[f64] {
        &self.output[idx * self.dims..(idx + 1) * self.dims]
    }

    pub fn input_vector_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.input[idx * self.dims..(idx + 1) * self.dims]
    }

    pub fn word_vector(&self, word: &SkuWord) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.input_vector(i))
    }

    /// Negative-sampling loss of one (center, context, negatives) example.
    pub fn pair_loss(&self, center: usize, context: usize, negatives: &[usize]) -> f64 {
        let negs: Vec<&[f64]> = negatives.iter().map(|n| self.output_vector(*n)).collect();
        ns_loss_and_grad(
            self.input_vector(center),
            self.output_vector(context),
            &negs,
        )
        .loss
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    pub grad_center: Vec<f64>,
    pub grad_context: Vec<f64>,
    pub grad_negatives: Vec<Vec<f64>>,
}

/// `-log σ(u·v_o) - Σ log σ(-u·v_n)` and its gradients with respect to the
/// center input vector, the context output vector and each negative's output
/// vector.
pub fn ns_loss_and_grad(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> PairGradient {
    let dims = center.len();
    let pos = dot(center, context);
    let mut loss = softplus(-pos);
    let g_pos = sigmoid(pos) - 1.0;
    let mut grad_center: Vec<f64> = context.iter().map(|x| g_pos * x).collect();
    let grad_context: Vec<f64> = center.iter().map(|x| g_pos * x).collect();
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let s = dot(center, neg);
        loss += softplus(s);
        let g = sigmoid(s);
        for d in 0..dims {
            grad_center[d] += g * neg[d];
        }
        grad_negatives.push(center.iter().map(|x| g * x).collect());
    }
    PairGradient {
        loss,
        grad_center,
        grad_context,
        grad_negatives,
    }
}

/// Full-softmax cross-entropy `-log p(target | center)` over all output
/// vectors, with gradients. Only practical for tiny vocabularies.
pub fn full_softmax_loss_and_grad(
    center: &[f64],
    outputs: &[&[f64]],
    target: usize,
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let logits: Vec<f64> = outputs.iter().map(|o| dot(center, o)).collect();
    let p = crate::wbsr::stable_softmax(&logits);
    let loss = -p[target].ln();
    let mut grad_center = vec![0.0; center.len()];
    let mut grad_outputs = Vec::with_capacity(outputs.len());
    for (k, o) in outputs.iter().enumerate() {
        let coef = p[k] - if k == target { 1.0 } else { 0.0 };
        for (g, x) in grad_center.iter_mut().zip(o.iter()) {
            *g += coef * x;
        }
        grad_outputs.push(center.iter().map(|x| coef * x).collect());
    }
    (loss, grad_center, grad_outputs)
}

/// Single-threaded, seeded SGD over (center, context) pairs.
pub struct SkipGramTrainer {
    model: SkipGramModel,
    cfg: SkipGramConfig,
    docs: Vec<Vec<usize>>,
    cumulative: Vec<f64>,
    rng: ChaCha8Rng,
    processed: u64,
    total: u64,
    epochs_done: usize,
}

impl SkipGramTrainer {
    pub fn new(documents: &[Vec<SkuWord>], cfg: SkipGramConfig) -> Result<Self, SkipGramError> {
        if cfg.dims == 0 || cfg.window == 0 || cfg.epochs == 0 {
            return Err(SkipGramError::InvalidConfig(
                "dims, window and epochs must be at least 1".into(),
            ));
        }
        if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
            return Err(SkipGramError::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        let mut counts: BTreeMap<&SkuWord, u64> = BTreeMap::new();
        for w in documents.iter().flatten() {
            *counts.entry(w).or_default() += 1;
        }
        counts.retain(|_, c| *c >= cfg.min_count.max(1) as u64);
        let vocab: Vec<SkuWord> = counts.keys().map(|w| (*w).clone()).collect();
        let index: HashMap<SkuWord, usize> = vocab
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, w)| (w, i))
            .collect();
        let docs: Vec<Vec<usize>> = documents
            .iter()
            .map(|d| d.iter().filter_map(|w| index.get(w).copied()).collect())
            .collect();
        let per_epoch: u64 = docs.iter().map(|d| pairs_in(d.len(), cfg.window)).sum();
        if per_epoch == 0 {
            return Err(SkipGramError::InsufficientData);
        }

        let mut acc = 0.0;
        let cumulative = counts
            .values()
            .map(|c| {
                acc += (*c as f64).powf(0.75);
                acc
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = vocab.len();
        let scale = 1.0 / cfg.dims as f64;
        let input = (0..n * cfg.dims)
            .map(|_| (rng.gen::<f64>() - 0.5) * scale)
            .collect();
        let output = vec![0.0; n * cfg.dims];
        Ok(Self {
            model: SkipGramModel {
                vocab,
                index,
                input,
                output,
                dims: cfg.dims,
                window: cfg.window,
                seed: cfg.seed,
            },
            cfg,
            docs,
            cumulative,
            rng,
            processed: 0,
            total: per_epoch * cfg.epochs as u64,
            epochs_done: 0,
        })
    }

    pub fn model(&self) -> &SkipGramModel {
        &self.model
    }

    pub fn epochs_remaining(&self) -> usize {
        self.cfg.epochs - self.epochs_done
    }

    fn sample_negative(&mut self) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = self.rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|c| *c <= x)
            .min(self.cumulative.len() - 1)
    }

    /// One pass over all documents; returns the mean pair loss seen.
    pub fn run_epoch(&mut self) -> f64 {
        let q = self.cfg.window;
        let mut loss_sum = 0.0;
        let mut n_pairs = 0u64;
        let mut negatives = Vec::with_capacity(self.cfg.negatives);
        for d in 0..self.docs.len() {
            let len = self.docs[d].len();
            for pos in 0..len {
                let lo = pos.saturating_sub(q);
                let hi = (pos + q).min(len - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let center = self.docs[d][pos];
                    let context = self.docs[d][ctx_pos];
                    negatives.clear();
                    for _ in 0..self.cfg.negatives {
                        let n = self.sample_negative();
                        if n != context {
                            negatives.push(n);
                        }
                    }
                    let progress = self.processed as f64 / self.total as f64;
                    let lr = self.cfg.learning_rate * (1.0 - progress).max(1e-4);
                    loss_sum += self.step(center, context, &negatives, lr);
                    n_pairs += 1;
                    self.processed += 1;
                }
            }
        }
        self.epochs_done += 1;
        loss_sum / n_pairs.max(1) as f64
    }

    fn step(&mut self, center: usize, context: usize, negatives: &[usize], lr: f64) -> f64 {
        let m = &mut self.model;
        let grad = {
            let negs: Vec<&[f64]> = negatives.iter().map(|n| m.output_vector(*n)).collect();
            ns_loss_and_grad(m.input_vector(center), m.output_vector(context), &negs)
        };
        let dims = m.dims;
        for (x, g) in m.output[context * dims..(context + 1) * dims]
            .iter_mut()
            .zip(&grad.grad_context)
        {
            *x -= lr * g;
        }
        for (n, gn) in negatives.iter().zip(&grad.grad_negatives) {
            for (x, g) in m.output[n * dims..(n + 1) * dims].iter_mut().zip(gn) {
                *x -= lr * g;
            }
        }
        for (x, g) in m.input_vector_mut(center).iter_mut().zip(&grad.grad_center) {
            *x -= lr * g;
        }
        grad.loss
    }

    pub fn into_model(self) -> SkipGramModel {
        self.model
    }
}

fn pairs_in(len: usize, window: usize) -> u64 {
    (0..len)
        .map(|p| {
            let lo = p.saturating_sub(window);
            let hi = (p + window).min(len.saturating_sub(1));
            (hi - lo) as u64
        })
        .sum()
}

/// Train for `cfg.epochs` epochs; also returns the mean loss per epoch.
pub fn train(
    documents: &[Vec<SkuWord>],
    cfg: SkipGramConfig,
) -> Result<(SkipGramModel, Vec<f64>), SkipGramError> {
    let mut trainer = SkipGramTrainer::new(documents, cfg)?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    while trainer.epochs_remaining() > 0 {
        losses.push(trainer.run_epoch());
    }
    Ok((trainer.into_model(), losses))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    #[default]
    Cosine,
    InnerProduct,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramAnswer {
    pub size: UkSize,
    pub score: f64,
    /// Candidate sizes whose SKU word is not in the vocabulary.
    pub skipped: Vec<UkSize>,
}

/// Candidate size whose SKU vector scores highest against the preference
/// word's vector; ties go to the smaller size.
pub fn recommend_skipgram(
    model: &SkipGramModel,
    pref: &Preference,
    candidate_sizes: &[UkSize],
    target_category: &Category,
    target_brand: &str,
    scoring: Scoring,
) -> Result<SkipGramAnswer, SkipGramError> {
    let pref_word = encode_sku(&pref.category, &pref.brand, pref.size);
    let query = model
        .word_vector(&pref_word)
        .ok_or_else(|| SkipGramError::UnknownPreference(pref_word.to_string()))?;
    let mut sizes = candidate_sizes.to_vec();
    sizes.sort();
    sizes.dedup();
    let mut best: Option<(UkSize, f64)> = None;
    let mut skipped = Vec::new();
    for s in sizes {
        let Some(v) = model.word_vector(&encode_sku(target_category, target_brand, s)) else {
            skipped.push(s);
            continue;
        };
        let score = match scoring {
            Scoring::Cosine => cosine(query, v),
            Scoring::InnerProduct => dot(query, v),
        };
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((s, score));
        }
    }
    let (size, score) = best.ok_or(SkipGramError::NoCandidates)?;
    Ok(SkipGramAnswer {
        size,
        score,
        skipped,
    })
}

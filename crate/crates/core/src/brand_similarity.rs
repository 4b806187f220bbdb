//! Brand-brand similarity from importance-weighted user-brand interactions.
//!
//! The user-brand matrix holds, for every (user, brand) pair, the importance
//! weight of the highest-priority interaction. It is factorized with
//! squared-Frobenius multiplicative updates (Lee & Seung) and brand
//! similarity is the dot product of the resulting brand factors.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Category, EventImportance, EventKind};
use crate::error::{GraphError, NmfError};

/// Added to every multiplicative-update denominator.
pub const NMF_EPSILON: f64 = 1e-12;
pub const DEFAULT_RANK: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct UserBrandMatrix {
    pub users: Vec<String>,
    pub brands: Vec<String>,
    /// Strictly positive entries only; absent means zero.
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl UserBrandMatrix {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_brands(&self) -> usize {
        self.brands.len()
    }

    pub fn get(&self, user: usize, brand: usize) -> f64 {
        self.entries.get(&(user, brand)).copied().unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.n_users(), self.n_brands()));
        for (&(i, j), &v) in &self.entries {
            dense[[i, j]] = v;
        }
        dense
    }
}

/// One row per user, one column per brand; indices follow sorted ids.
pub fn build_matrix(
    priority_map: &BTreeMap<(String, String), EventKind>,
    importance: &EventImportance,
) -> UserBrandMatrix {
    let users: Vec<String> = priority_map
        .keys()
        .map(|(u, _)| u.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let brands: Vec<String> = priority_map
        .keys()
        .map(|(_, b)| b.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let user_idx: BTreeMap<&str, usize> = users
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let brand_idx: BTreeMap<&str, usize> = brands
        .iter()
        .enumerate()
        .map(|(i, b)| (b.as_str(), i))
        .collect();
    let entries = priority_map
        .iter()
        .map(|((u, b), kind)| {
            (
                (user_idx[u.as_str()], brand_idx[b.as_str()]),
                importance.weight(*kind),
            )
        })
        .collect();
    UserBrandMatrix {
        users,
        brands,
        entries,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once the relative objective improvement of one step drops below
    /// this. Zero or less runs all `max_iters` steps.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self {
            rank: DEFAULT_RANK,
            max_iters: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NmfFactors {
    /// m × d user factors.
    pub w: Array2<f64>,
    /// d × n brand factors.
    pub h: Array2<f64>,
    /// Objective at initialization followed by the objective after each step.
    pub trace: Vec<f64>,
}

impl NmfFactors {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn reconstruction_error(&self, v: &Array2<f64>) -> f64 {
        frobenius_sq(v, &self.w, &self.h)
    }
}

/// Strictly positive uniform(0, 1] initial factors. W is drawn first,
/// row-major, then H.
pub fn seeded_init(m: usize, n: usize, rank: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || 1.0 - rng.gen::<f64>();
    let w = Array2::from_shape_simple_fn((m, rank), &mut draw);
    let h = Array2::from_shape_simple_fn((rank, n), &mut draw);
    (w, h)
}

pub fn nmf_factorize(matrix: &UserBrandMatrix, cfg: &NmfConfig) -> Result<NmfFactors, NmfError> {
    let (m, n) = (matrix.n_users(), matrix.n_brands());
    check_rank(cfg.rank, m, n)?;
    if matrix.entries.values().all(|v| *v == 0.0) {
        return Err(NmfError::DegenerateMatrix);
    }
    let (w0, h0) = seeded_init(m, n, cfg.rank, cfg.seed);
    nmf_from_init(&matrix.to_dense(), w0, h0, cfg.max_iters, cfg.tol)
}

fn check_rank(rank: usize, m: usize, n: usize) -> Result<(), NmfError> {
    if rank == 0 {
        return Err(NmfError::InvalidConfig("rank must be at least 1".into()));
    }
    let max = m.min(n);
    if rank > max {
        return Err(NmfError::RankTooLarge { rank, max });
    }
    Ok(())
}

/// Multiplicative updates from explicit initial factors.
pub fn nmf_from_init(
    v: &Array2<f64>,
    mut w: Array2<f64>,
    mut h: Array2<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<NmfFactors, NmfError> {
    let (m, n) = v.dim();
    let rank = w.ncols();
    check_rank(rank, m, n)?;
    if max_iters == 0 {
        return Err(NmfError::InvalidConfig(
            "max_iters must be at least 1".into(),
        ));
    }
    if w.nrows() != m || h.dim() != (rank, n) {
        return Err(NmfError::InvalidConfig(format!(
            "factor shapes {:?} x {:?} do not match {m}x{n}",
            w.dim(),
            h.dim()
        )));
    }
    if v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(NmfError::InvalidConfig(
            "matrix must be finite and non-negative".into(),
        ));
    }
    if v.iter().all(|x| *x == 0.0) {
        return Err(NmfError::DegenerateMatrix);
    }

    let mut trace = Vec::with_capacity(max_iters + 1);
    trace.push(frobenius_sq(v, &w, &h));
    for _ in 0..max_iters {
        // H <- H * (W^T V) / (W^T W H)
        let numer = w.t().dot(v);
        let denom = w.t().dot(&w).dot(&h);
        multiplicative_step(&mut h, &numer, &denom);
        // W <- W * (V H^T) / (W H H^T)
        let numer = v.dot(&h.t());
        let denom = w.dot(&h.dot(&h.t()));
        multiplicative_step(&mut w, &numer, &denom);

        let prev = *trace.last().expect("trace starts non-empty");
        let cur = frobenius_sq(v, &w, &h);
        trace.push(cur);
        if cur == 0.0 || (tol > 0.0 && (prev - cur) / prev < tol) {
            break;
        }
    }
    Ok(NmfFactors { w, h, trace })
}

fn multiplicative_step(base: &mut Array2<f64>, numer: &Array2<f64>, denom: &Array2<f64>) {
    Zip::from(base).and(numer).and(denom).for_each(|b, &n, &d| {
        *b *= n / (d + NMF_EPSILON);
    });
}

fn frobenius_sq(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let approx = w.dot(h);
    Zip::from(v)
        .and(&approx)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    /// Raw dot product of brand factors.
    #[default]
    Dot,
    /// Dot product of unit-normalized factors.
    Cosine,
}

/// Brand factors of one category, the part of the factorization consumed
/// downstream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrandModel {
    pub category: Category,
    pub rank: usize,
    pub seed: u64,
    pub brands: Vec<String>,
    /// One length-`rank` vector per brand, same order as `brands`.
    pub vectors: Vec<Vec<f64>>,
    #[serde(default)]
    pub mode: SimilarityMode,
}

impl BrandModel {
    pub fn from_factors(
        category: Category,
        matrix: &UserBrandMatrix,
        factors: &NmfFactors,
        seed: u64,
    ) -> Self {
        let vectors = factors
            .h
            .columns()
            .into_iter()
            .map(|c| c.to_vec())
            .collect();
        Self {
            category,
            rank: factors.h.nrows(),
            seed,
            brands: matrix.brands.clone(),
            vectors,
            mode: SimilarityMode::Dot,
        }
    }

    pub fn index_of(&self, brand: &str) -> Option<usize> {
        self.brands
            .binary_search_by(|b| b.as_str().cmp(brand))
            .ok()
            .or_else(|| {
                // brands built by build_matrix are sorted; hand-made models may not be
                self.brands.iter().position(|b| b == brand)
            })
    }

    pub fn vector(&self, brand: &str) -> Option<&[f64]> {
        self.index_of(brand).map(|i| self.vectors[i].as_slice())
    }

    fn sim_by_index(&self, i: usize, j: usize) -> f64 {
        // canonical order: lower index on the left
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let (va, vb) = (&self.vectors[a], &self.vectors[b]);
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        match self.mode {
            SimilarityMode::Dot => dot,
            SimilarityMode::Cosine => {
                let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na * nb)
                }
            }
        }
    }
}

pub fn similarity(model: &BrandModel, b_i: &str, b_j: &str) -> Result<f64, GraphError> {
    let i = model
        .index_of(b_i)
        .ok_or_else(|| GraphError::UnknownBrand(b_i.to_string()))?;
    let j = model
        .index_of(b_j)
        .ok_or_else(|| GraphError::UnknownBrand(b_j.to_string()))?;
    Ok(model.sim_by_index(i, j))
}

/// Undirected weighted brand graph; one stored weight per unordered pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BrandSimilarityGraph {
    pub category: Category,
    pub brands: Vec<String>,
    sim: BTreeMap<(String, String), f64>,
}

fn canonical<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl BrandSimilarityGraph {
    pub fn from_weights(
        category: Category,
        brands: Vec<String>,
        weights: impl IntoIterator<Item = (String, String, f64)>,
    ) -> Self {
        let sim = weights
            .into_iter()
            .filter(|(a, b, _)| a != b)
            .map(|(a, b, w)| {
                let (x, y) = canonical(&a, &b);
                ((x.to_string(), y.to_string()), w)
            })
            .collect();
        Self {
            category,
            brands,
            sim,
        }
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = canonical(a, b);
        self.sim.get(&(x.to_string(), y.to_string())).copied()
    }

    pub fn contains(&self, brand: &str) -> bool {
        self.brands.iter().any(|b| b == brand)
    }

    pub fn n_pairs(&self) -> usize {
        self.sim.len()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.sim
            .iter()
            .map(|((a, b), w)| (a.as_str(), b.as_str(), *w))
    }

    /// Same graph with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            category: self.category.clone(),
            brands: self.brands.clone(),
            sim: self
                .sim
                .iter()
                .map(|(k, w)| (k.clone(), w * factor))
                .collect(),
        }
    }
}

pub fn build_brand_graph(model: &BrandModel, category: &Category) -> BrandSimilarityGraph {
    let n = model.brands.len();
    let mut sim = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = canonical(&model.brands[i], &model.brands[j]);
            sim.insert((a.to_string(), b.to_string()), model.sim_by_index(i, j));
        }
    }
    let mut brands = model.brands.clone();
    brands.sort();
    BrandSimilarityGraph {
        category: category.clone(),
        brands,
        sim,
    }
}

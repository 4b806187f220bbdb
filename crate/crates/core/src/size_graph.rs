//! Directed multi-edge co-purchase size graph.
//!
//! Every ordered brand pair `(u, v)` carries five counters, one per size
//! difference `size(u) - size(v)` in {-1, -0.5, 0, 0.5, 1}. Both directions
//! are stored, so `count(u, v, d) == count(v, u, -d)` always holds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{Category, CoPurchasePair};
use crate::error::{GraphError, PersistError};
use crate::units::SizeDelta;
use crate::FORMAT_VERSION;

pub const N_LABELS: usize = 5;

/// Edge labels in ascending order.
pub const LABELS: [SizeDelta; N_LABELS] = [
    SizeDelta::from_half_points(-2),
    SizeDelta::from_half_points(-1),
    SizeDelta::from_half_points(0),
    SizeDelta::from_half_points(1),
    SizeDelta::from_half_points(2),
];

pub type LabelCounts = [u64; N_LABELS];

pub fn label_index(delta: SizeDelta) -> Option<usize> {
    let hp = delta.half_points();
    (-2..=2).contains(&hp).then(|| (hp + 2) as usize)
}

/// Index of the label `-LABELS[i]`.
pub fn mirror_index(i: usize) -> usize {
    N_LABELS - 1 - i
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EdgeStrengthThreshold(f64);

impl EdgeStrengthThreshold {
    pub fn new(alpha: f64) -> Result<Self, String> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(format!("alpha must be finite and >= 0, got {alpha}"));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub retained: u64,
    /// Pairs whose size difference falls outside the label alphabet.
    pub dropped_wide_delta: u64,
    pub dropped_other_category: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeGraph {
    pub category: Category,
    brands: BTreeSet<String>,
    edges: BTreeMap<(String, String), LabelCounts>,
}

impl SizeGraph {
    pub fn new(category: Category) -> Self {
        Self {
            category,
            brands: BTreeSet::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn add_vertex(&mut self, brand: &str) {
        if !self.brands.contains(brand) {
            self.brands.insert(brand.to_string());
        }
    }

    /// Record `n` co-purchases with `size(u) - size(v) == LABELS[label]`,
    /// writing the mirror edge as well.
    pub fn add_count(&mut self, u: &str, v: &str, label: usize, n: u64) {
        assert_ne!(u, v, "self-loops are not allowed");
        self.add_vertex(u);
        self.add_vertex(v);
        self.edges
            .entry((u.to_string(), v.to_string()))
            .or_insert([0; N_LABELS])[label] += n;
        self.edges
            .entry((v.to_string(), u.to_string()))
            .or_insert([0; N_LABELS])[mirror_index(label)] += n;
    }

    pub fn brands(&self) -> impl Iterator<Item = &str> {
        self.brands.iter().map(String::as_str)
    }

    pub fn n_vertices(&self) -> usize {
        self.brands.len()
    }

    pub fn contains(&self, brand: &str) -> bool {
        self.brands.contains(brand)
    }

    /// Counts for the ordered pair; all zero when unconnected.
    pub fn counts(&self, u: &str, v: &str) -> LabelCounts {
        self.edges
            .get(&(u.to_string(), v.to_string()))
            .copied()
            .unwrap_or([0; N_LABELS])
    }

    /// Ordered pairs with stored counters, in key order (both directions).
    pub fn directed_edges(&self) -> impl Iterator<Item = (&str, &str, &LabelCounts)> {
        self.edges
            .iter()
            .map(|((u, v), c)| (u.as_str(), v.as_str(), c))
    }

    /// Unordered pairs `u < v` with their counters.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (&str, &str, &LabelCounts)> {
        self.directed_edges().filter(|(u, v, _)| u < v)
    }

    /// Brands `z` with a stored edge `u -> z`, ascending.
    pub fn neighbors<'a>(&'a self, u: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .range((u.to_string(), String::new())..)
            .take_while(move |((a, _), _)| a == u)
            .filter(|(_, c)| c.iter().any(|x| *x > 0))
            .map(|((_, b), _)| b.as_str())
    }

    pub fn to_doc(&self) -> SizeGraphDoc {
        SizeGraphDoc {
            format_version: FORMAT_VERSION,
            category: self.category.clone(),
            vertices: self.brands.iter().cloned().collect(),
            edges: self
                .undirected_edges()
                .flat_map(|(u, v, c)| {
                    c.iter()
                        .enumerate()
                        .filter(|(_, n)| **n > 0)
                        .map(move |(i, n)| EdgeRecord {
                            u: u.to_string(),
                            v: v.to_string(),
                            label: LABELS[i],
                            count: *n,
                        })
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: SizeGraphDoc) -> Result<Self, PersistError> {
        if doc.format_version > FORMAT_VERSION {
            return Err(PersistError::UnsupportedVersion {
                found: doc.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let mut g = SizeGraph::new(doc.category);
        for v in &doc.vertices {
            g.add_vertex(v);
        }
        let mut seen = BTreeSet::new();
        for e in doc.edges {
            if e.u >= e.v {
                return Err(PersistError::Invalid(format!(
                    "edge ({:?}, {:?}) is not in canonical u < v order",
                    e.u, e.v
                )));
            }
            if !g.contains(&e.u) || !g.contains(&e.v) {
                return Err(PersistError::Invalid(format!(
                    "edge ({:?}, {:?}) references an unknown vertex",
                    e.u, e.v
                )));
            }
            let label = label_index(e.label)
                .ok_or_else(|| PersistError::Invalid(format!("invalid edge label {}", e.label)))?;
            if !seen.insert((e.u.clone(), e.v.clone(), label)) {
                return Err(PersistError::Invalid(format!(
                    "duplicate edge ({:?}, {:?}, {})",
                    e.u, e.v, e.label
                )));
            }
            g.add_count(&e.u, &e.v, label, e.count);
        }
        Ok(g)
    }
}

/// Persisted form: vertex list plus one record per nonzero label of each
/// unordered pair `u < v`; mirror edges are rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeGraphDoc {
    pub format_version: u32,
    pub category: Category,
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub u: String,
    pub v: String,
    pub label: SizeDelta,
    pub count: u64,
}

/// Fold co-purchase pairs into a size graph. `catalog` adds brands that
/// should appear as vertices even without co-purchases.
pub fn build_size_graph(
    pairs: &[CoPurchasePair],
    category: &Category,
    catalog: &[String],
) -> (SizeGraph, BuildReport) {
    let mut graph = SizeGraph::new(category.clone());
    let mut report = BuildReport::default();
    for brand in catalog {
        graph.add_vertex(brand);
    }
    for p in pairs {
        if &p.category != category || p.brand_u == p.brand_v {
            report.dropped_other_category += 1;
            continue;
        }
        match label_index(p.size_u - p.size_v) {
            Some(label) => {
                graph.add_count(&p.brand_u, &p.brand_v, label, 1);
                report.retained += 1;
            }
            None => report.dropped_wide_delta += 1,
        }
    }
    (graph, report)
}

/// Sum of the five label counts of the ordered pair.
pub fn total_edge_weight(graph: &SizeGraph, u: &str, v: &str) -> u64 {
    graph.counts(u, v).iter().sum()
}

/// `1 - connected pairs / (n (n - 1) / 2)`.
pub fn sparsity(graph: &SizeGraph) -> Result<f64, GraphError> {
    let n = graph.n_vertices();
    if n < 2 {
        return Err(GraphError::DegenerateGraph(format!(
            "sparsity needs at least 2 vertices, graph has {n}"
        )));
    }
    let connected = graph
        .undirected_edges()
        .filter(|(_, _, c)| c.iter().any(|x| *x > 0))
        .count();
    let complete = n * (n - 1) / 2;
    Ok(1.0 - connected as f64 / complete as f64)
}

/// `(vertices, labelled edges)` where each nonzero (unordered pair, label)
/// combination counts once.
pub fn edge_count_report(graph: &SizeGraph) -> (usize, usize) {
    let edges = graph
        .undirected_edges()
        .map(|(_, _, c)| c.iter().filter(|x| **x > 0).count())
        .sum();
    (graph.n_vertices(), edges)
}

/// Total edge weights of all connected unordered pairs, ascending.
pub fn connected_weights(graph: &SizeGraph) -> Vec<u64> {
    let mut w: Vec<u64> = graph
        .undirected_edges()
        .map(|(_, _, c)| c.iter().sum::<u64>())
        .filter(|t| *t > 0)
        .collect();
    w.sort_unstable();
    w
}

/// Nearest-rank percentile of the connected pairs' total edge weights.
pub fn alpha_from_percentile(
    graph: &SizeGraph,
    percentile: f64,
) -> Result<EdgeStrengthThreshold, GraphError> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(GraphError::InvalidPercentile(percentile));
    }
    let weights = connected_weights(graph);
    if weights.is_empty() {
        return Err(GraphError::DegenerateGraph(
            "no connected brand pairs".into(),
        ));
    }
    let rank = ((percentile * weights.len() as f64) / 100.0)
        .ceil()
        .max(1.0) as usize;
    let value = weights[rank.min(weights.len()) - 1];
    Ok(EdgeStrengthThreshold(value as f64))
}

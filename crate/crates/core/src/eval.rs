//! Offline evaluation on synthetic data with known ground truth.
//!
//! The generator gives every user a canonical foot size and every brand a
//! size offset, so a purchase of brand `b` is `foot + offset(b)` unless noise
//! shifts it by half a size. Users buy mostly inside their own price band.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::catalog::{purchases_by_user, Category, EventKind, InteractionEvent};
use crate::error::GraphError;
use crate::size_graph::{alpha_from_percentile, sparsity};
use crate::skipgram::{recommend_skipgram, Scoring};
use crate::units::{SizeDelta, UkSize};
use crate::wbsr::{self, Hyperparams, Preference, PRODUCTION_LAMBDA};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventMultipliers {
    pub clicks: f64,
    pub carts: f64,
    pub wishlists: f64,
}

impl Default for EventMultipliers {
    fn default() -> Self {
        Self {
            clicks: 6.0,
            carts: 1.5,
            wishlists: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub category: Category,
    pub n_users: usize,
    /// Brand ids, one offset and one band per brand.
    pub brands: Vec<String>,
    pub brand_offsets: Vec<SizeDelta>,
    pub price_bands: Vec<usize>,
    pub purchases_per_user: usize,
    /// Probability a purchase is drawn from the user's own band.
    pub in_band_rate: f64,
    /// Probability a purchase deviates by ±0.5 from the true size.
    pub noise_rate: f64,
    /// Brand popularity falls off as `1 / (rank + 1)^skew` within a band.
    pub popularity_skew: f64,
    pub event_multipliers: EventMultipliers,
    pub seed: u64,
}

const OFFSET_CYCLE: [i32; 5] = [0, -1, 1, -2, 2];

impl SynthConfig {
    /// `n_brands` brands named `Brand00..`, offsets cycling through
    /// {0, -0.5, 0.5, -1, 1}, all in one band; 8 purchases per user.
    pub fn new(category: Category, n_users: usize, n_brands: usize, seed: u64) -> Self {
        Self {
            category,
            n_users,
            brands: (0..n_brands).map(|i| format!("Brand{i:02}")).collect(),
            brand_offsets: (0..n_brands)
                .map(|i| SizeDelta::from_half_points(OFFSET_CYCLE[i % OFFSET_CYCLE.len()]))
                .collect(),
            price_bands: vec![0; n_brands],
            purchases_per_user: 8,
            in_band_rate: 0.9,
            noise_rate: 0.0,
            popularity_skew: 0.0,
            event_multipliers: EventMultipliers::default(),
            seed,
        }
    }

    /// Assign brand `i` to band `i % n_bands`.
    pub fn with_bands(mut self, n_bands: usize) -> Self {
        self.price_bands = (0..self.brands.len()).map(|i| i % n_bands.max(1)).collect();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.brands.len();
        if n == 0 || self.n_users == 0 || self.purchases_per_user == 0 {
            return Err("need at least one brand, user and purchase".into());
        }
        if self.brand_offsets.len() != n || self.price_bands.len() != n {
            return Err("every brand needs an offset and a band".into());
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err("noise_rate must lie in [0, 0.5)".into());
        }
        if !(0.0..=1.0).contains(&self.in_band_rate) {
            return Err("in_band_rate must lie in [0, 1]".into());
        }
        if self.brand_offsets.iter().any(|o| o.half_points().abs() > 2) {
            return Err("brand offsets must lie in [-1, 1]".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TruthRecord {
    Brand {
        brand: String,
        offset: SizeDelta,
        band: usize,
    },
    User {
        user: String,
        foot: UkSize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    /// Every generated event, purchases included.
    pub events: Vec<InteractionEvent>,
    pub truth: Vec<TruthRecord>,
}

impl SynthData {
    pub fn orders(&self) -> Vec<InteractionEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Purchase)
            .cloned()
            .collect()
    }

    pub fn browse_events(&self) -> Vec<InteractionEvent> {
        self.events
            .iter()
            .filter(|e| e.kind != EventKind::Purchase)
            .cloned()
            .collect()
    }

    pub fn write_truth<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.truth {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn stochastic_round(rng: &mut ChaCha8Rng, x: f64) -> usize {
    let base = x.floor();
    base as usize + usize::from(rng.gen::<f64>() < x - base)
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData, String> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bands: Vec<usize> = cfg
        .price_bands
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    // per band: (brand index, popularity weight)
    let members: BTreeMap<usize, Vec<(usize, f64)>> = bands
        .iter()
        .map(|b| {
            let list = (0..cfg.brands.len())
                .filter(|i| cfg.price_bands[*i] == *b)
                .enumerate()
                .map(|(rank, i)| (i, 1.0 / ((rank + 1) as f64).powf(cfg.popularity_skew)))
                .collect();
            (*b, list)
        })
        .collect();
    let pick = |rng: &mut ChaCha8Rng, pool: &[(usize, f64)]| -> usize {
        pool.choose_weighted(rng, |(_, w)| *w)
            .expect("non-empty band")
            .0
    };
    let pick_for_band = |rng: &mut ChaCha8Rng, own: usize| -> usize {
        let others: Vec<(usize, f64)> = members
            .iter()
            .filter(|(b, _)| **b != own)
            .flat_map(|(_, l)| l.iter().copied())
            .collect();
        if others.is_empty() || rng.gen::<f64>() < cfg.in_band_rate {
            pick(rng, &members[&own])
        } else {
            pick(rng, &others)
        }
    };

    let mut truth: Vec<TruthRecord> = cfg
        .brands
        .iter()
        .enumerate()
        .map(|(i, b)| TruthRecord::Brand {
            brand: b.clone(),
            offset: cfg.brand_offsets[i],
            band: cfg.price_bands[i],
        })
        .collect();
    let mut events = Vec::new();
    let lo = (cfg.purchases_per_user / 2).max(1);
    let hi = 2 * cfg.purchases_per_user - lo;
    for u in 0..cfg.n_users {
        let user = format!("user{u:05}");
        let foot_hp = rng.gen_range(8..=24);
        let foot = UkSize::from_half_points(foot_hp).expect("grid");
        truth.push(TruthRecord::User {
            user: user.clone(),
            foot,
        });
        let own_band = *bands.choose(&mut rng).expect("at least one band");
        let n_purchases = rng.gen_range(lo..=hi);
        let mut ts: u64 = 1_700_000_000 + rng.gen_range(0..30 * 86_400);
        for k in 0..n_purchases {
            ts += rng.gen_range(3_600..20 * 86_400);
            let brand = pick_for_band(&mut rng, own_band);
            let mut hp = foot_hp + cfg.brand_offsets[brand].half_points();
            if rng.gen::<f64>() < cfg.noise_rate {
                hp += if rng.gen::<bool>() { 1 } else { -1 };
            }
            let (size, _) = UkSize::clamped_from_half_points(hp);

            let browse = [
                (EventKind::Click, cfg.event_multipliers.clicks, 0.5),
                (EventKind::Cart, cfg.event_multipliers.carts, 0.7),
                (EventKind::Wishlist, cfg.event_multipliers.wishlists, 0.7),
            ];
            for (kind, mult, p_same) in browse {
                for _ in 0..stochastic_round(&mut rng, mult) {
                    let b = if rng.gen::<f64>() < p_same {
                        brand
                    } else {
                        pick_for_band(&mut rng, own_band)
                    };
                    events.push(InteractionEvent {
                        user_id: user.clone(),
                        brand_id: cfg.brands[b].clone(),
                        category: cfg.category.clone(),
                        kind,
                        timestamp: ts - rng.gen_range(60..3_600),
                        size: None,
                        order_id: None,
                    });
                }
            }
            events.push(InteractionEvent {
                user_id: user.clone(),
                brand_id: cfg.brands[brand].clone(),
                category: cfg.category.clone(),
                kind: EventKind::Purchase,
                timestamp: ts,
                size: Some(size),
                order_id: Some(format!("o{u:05}_{k:03}")),
            });
        }
    }
    Ok(SynthData { events, truth })
}

/// Per-order random split. A user whose orders all land in test gets the
/// earliest one moved back to train, so every test user keeps an anchor.
pub fn split(
    orders: &[InteractionEvent],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<InteractionEvent>, Vec<InteractionEvent>), String> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test: Vec<bool> = orders
        .iter()
        .map(|_| rng.gen::<f64>() < test_fraction)
        .collect();

    // (user, category) -> indices, earliest first
    let mut groups: BTreeMap<(&str, String), Vec<usize>> = BTreeMap::new();
    for (i, o) in orders.iter().enumerate() {
        groups
            .entry((o.user_id.as_str(), o.category.slug()))
            .or_default()
            .push(i);
    }
    for idx in groups.values_mut() {
        if idx.iter().all(|i| in_test[*i]) {
            let earliest = *idx
                .iter()
                .min_by_key(|i| (orders[**i].timestamp, &orders[**i].order_id, **i))
                .expect("group non-empty");
            in_test[earliest] = false;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (o, t) in orders.iter().zip(in_test) {
        if t {
            test.push(o.clone());
        } else {
            train.push(o.clone());
        }
    }
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    Wbsr,
    /// WBSR without marginalization, for coverage comparisons.
    WbsrDirectOnly,
    SkipGram,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteStats {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub category: Category,
    pub method: EvalMethod,
    /// Over covered queries only; 0 when nothing was covered.
    pub accuracy: f64,
    pub coverage: f64,
    pub n_queries: usize,
    pub n_covered: usize,
    pub n_correct: usize,
    pub per_route: BTreeMap<String, RouteStats>,
    pub sparsity: Option<f64>,
}

/// The questionnaire stand-in: each user's earliest train purchase.
pub fn preference_proxies(
    train: &[InteractionEvent],
    category: &Category,
) -> BTreeMap<String, Preference> {
    purchases_by_user(train, category)
        .into_iter()
        .filter_map(|(user, list)| {
            let first = list.first()?;
            Some((
                user.to_string(),
                Preference {
                    category: category.clone(),
                    brand: first.brand_id.clone(),
                    size: first.size?,
                },
            ))
        })
        .collect()
}

/// Score one method on held-out purchases.
pub fn evaluate(
    method: EvalMethod,
    bundle: &ModelBundle,
    train: &[InteractionEvent],
    test: &[InteractionEvent],
) -> EvalReport {
    let category = &bundle.category;
    let prefs = preference_proxies(train, category);
    let candidates: Vec<UkSize> = UkSize::all().collect();
    let mut per_route: BTreeMap<String, RouteStats> = BTreeMap::new();
    let (mut n_queries, mut n_covered, mut n_correct) = (0, 0, 0);
    for order in test.iter().filter(|o| o.is_purchase_in(category)) {
        let Some(actual) = order.size else { continue };
        n_queries += 1;
        let Some(pref) = prefs.get(&order.user_id) else {
            continue;
        };
        let answer: Option<(UkSize, String)> = match method {
            EvalMethod::Wbsr | EvalMethod::WbsrDirectOnly => {
                let run = if method == EvalMethod::Wbsr {
                    wbsr::recommend
                } else {
                    wbsr::recommend_direct_only
                };
                run(
                    pref,
                    &order.brand_id,
                    &bundle.size_graph,
                    &bundle.brand_graph,
                    &bundle.hyperparams,
                )
                .ok()
                .map(|r| (r.size, format!("{:?}", r.method)))
            }
            EvalMethod::SkipGram => bundle.skipgram.as_ref().and_then(|m| {
                recommend_skipgram(
                    m,
                    pref,
                    &candidates,
                    category,
                    &order.brand_id,
                    Scoring::Cosine,
                )
                .ok()
                .map(|a| (a.size, "SkipGram".to_string()))
            }),
        };
        let Some((predicted, route)) = answer else {
            continue;
        };
        n_covered += 1;
        let stats = per_route.entry(route).or_default();
        stats.count += 1;
        if predicted == actual {
            n_correct += 1;
            stats.correct += 1;
        }
    }
    for s in per_route.values_mut() {
        s.accuracy = s.correct as f64 / s.count as f64;
    }
    EvalReport {
        category: category.clone(),
        method,
        accuracy: if n_covered == 0 {
            0.0
        } else {
            n_correct as f64 / n_covered as f64
        },
        coverage: if n_queries == 0 {
            0.0
        } else {
            n_covered as f64 / n_queries as f64
        },
        n_queries,
        n_covered,
        n_correct,
        per_route,
        sparsity: sparsity(&bundle.size_graph).ok(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// The swept value: a percentile for alpha sweeps, lambda otherwise.
    pub value: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub accuracy: f64,
    pub coverage: f64,
    pub n_queries: usize,
    pub direct_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
    /// Set when the fixed or swept lambda is the production choice.
    pub production_lambda: f64,
}

fn sweep_row(
    value: f64,
    bundle: &ModelBundle,
    params: Hyperparams,
    train: &[InteractionEvent],
    validation: &[InteractionEvent],
) -> SweepRow {
    let b = bundle.with_hyperparams(params);
    let r = evaluate(EvalMethod::Wbsr, &b, train, validation);
    SweepRow {
        value,
        alpha: params.alpha.value(),
        lambda: params.lambda,
        accuracy: r.accuracy,
        coverage: r.coverage,
        n_queries: r.n_queries,
        direct_count: r.per_route.get("Direct").map_or(0, |s| s.count),
    }
}

/// One evaluation per percentile, alpha taken from the bundle's size graph.
pub fn sweep_alpha(
    percentiles: &[f64],
    lambda: f64,
    bundle: &ModelBundle,
    train: &[InteractionEvent],
    validation: &[InteractionEvent],
) -> Result<SweepTable, GraphError> {
    let mut ps = percentiles.to_vec();
    ps.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(ps.len());
    for p in ps {
        let alpha = alpha_from_percentile(&bundle.size_graph, p)?;
        let params = Hyperparams::new(alpha.value(), lambda)
            .map_err(|e| GraphError::DegenerateGraph(e.to_string()))?
            .with_mode(bundle.hyperparams.marginal_mode);
        rows.push(sweep_row(p, bundle, params, train, validation));
    }
    Ok(SweepTable {
        parameter: "alpha-percentile".into(),
        rows,
        production_lambda: PRODUCTION_LAMBDA,
    })
}

pub fn sweep_lambda(
    values: &[f64],
    alpha: f64,
    bundle: &ModelBundle,
    train: &[InteractionEvent],
    validation: &[InteractionEvent],
) -> Result<SweepTable, crate::error::WbsrError> {
    let mut vs = values.to_vec();
    vs.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(vs.len());
    for l in vs {
        let params = Hyperparams::new(alpha, l)?.with_mode(bundle.hyperparams.marginal_mode);
        rows.push(sweep_row(l, bundle, params, train, validation));
    }
    Ok(SweepTable {
        parameter: "lambda".into(),
        rows,
        production_lambda: PRODUCTION_LAMBDA,
    })
}

impl SweepTable {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>16} | {:>8} | {:>6} | {:>10} | {:>10} | {:>6}",
            self.parameter, "alpha", "lambda", "accuracy %", "coverage %", "direct"
        );
        let _ = writeln!(s, "{}", "-".repeat(72));
        for r in &self.rows {
            let mark = if r.lambda == self.production_lambda && self.parameter == "lambda" {
                " *"
            } else {
                ""
            };
            let _ = writeln!(
                s,
                "{:>16} | {:>8.1} | {:>6.2} | {:>10.2} | {:>10.2} | {:>6}{}",
                r.value,
                r.alpha,
                r.lambda,
                100.0 * r.accuracy,
                100.0 * r.coverage,
                r.direct_count,
                mark
            );
        }
        s
    }
}

/// Plain-text accuracy table: one row per category, skip-gram then WBSR.
pub fn accuracy_table(rows: &[(Category, Option<&EvalReport>, Option<&EvalReport>)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} | {:>20} | {:>16} | {:>10}",
        "Article Type", "Skip Gram Accuracy %", "WBSR Accuracy %", "Sparsity"
    );
    let _ = writeln!(s, "{}", "-".repeat(80));
    let pct = |r: Option<&EvalReport>| {
        r.map_or("-".to_string(), |r| format!("{:.1}", 100.0 * r.accuracy))
    };
    for (cat, skip, wbsr) in rows {
        let sp = wbsr
            .or(*skip)
            .and_then(|r| r.sparsity)
            .map_or("-".to_string(), |x| format!("{x:.2}"));
        let _ = writeln!(
            s,
            "{:<24} | {:>20} | {:>16} | {:>10}",
            cat.to_string(),
            pct(*skip),
            pct(*wbsr),
            sp
        );
    }
    s
}

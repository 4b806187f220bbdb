//! End-to-end acceptance checks, one verdict line per criterion.
//!
//! Runs as a plain binary so every criterion reports even when an earlier
//! one fails. Criteria listed in `KNOWN_GAPS` are expected to fail for
//! reasons documented in the README; their FAIL lines still print, but they
//! do not fail the run. Any other failure exits nonzero.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sizegraph_cli::experiment::Split;
use sizegraph_cli::query::{answer, Answer, Query, QueryMethod};
use sizegraph_core::brand_similarity::{
    nmf_factorize, BrandSimilarityGraph, NmfConfig, UserBrandMatrix,
};
use sizegraph_core::bundle::{build_bundle, AlphaSpec, BuildConfig, ModelBundle};
use sizegraph_core::catalog::extract_copurchases;
use sizegraph_core::eval::{
    evaluate, split, sweep_alpha, synth_generate, EvalMethod, SweepTable, SynthConfig,
};
use sizegraph_core::size_graph::{sparsity, SizeGraph, N_LABELS};
use sizegraph_core::skipgram::{
    encode_sku, ns_loss_and_grad, recommend_skipgram, train, Scoring, SkipGramConfig, SkuWord,
};
use sizegraph_core::wbsr::{marginal_scores, recommend, stable_softmax, MarginalMode};
use sizegraph_core::{Category, Gender, InteractionEvent, Preference, UkSize};

const BIN: &str = env!("CARGO_BIN_EXE_sizegraph");
const KNOWN_GAPS: &[&str] = &["noisy-sparse-recovery", "alpha-sweep"];

type Check = Box<dyn Fn() -> Verdict>;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn cat() -> Category {
    Category::new(Gender::Women, "Casual Shoes").unwrap()
}

fn size(half_points: i32) -> UkSize {
    UkSize::from_half_points(half_points).unwrap()
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

// ---------------------------------------------------------------- graphs

/// Random size graph plus a mirror count table kept independently of it.
struct RandomWorld {
    brands: Vec<String>,
    graph: SizeGraph,
    counts: BTreeMap<(String, String), [u64; N_LABELS]>,
    sims: BTreeMap<(String, String), f64>,
    brand_graph: BrandSimilarityGraph,
}

fn random_world(rng: &mut ChaCha8Rng, max_brands: usize, max_count: u64) -> RandomWorld {
    let n = rng.gen_range(2..=max_brands);
    let brands: Vec<String> = (0..n).map(|i| format!("b{i}")).collect();
    let mut graph = SizeGraph::new(cat());
    for b in &brands {
        graph.add_vertex(b);
    }
    let mut counts: BTreeMap<(String, String), [u64; N_LABELS]> = BTreeMap::new();
    let density: f64 = rng.gen_range(0.2..1.0);
    for a in 0..n {
        for b in a + 1..n {
            if !rng.gen_bool(density) {
                continue;
            }
            for label in 0..N_LABELS {
                if rng.gen_bool(0.5) {
                    let c = rng.gen_range(1..=max_count);
                    graph.add_count(&brands[a], &brands[b], label, c);
                    counts
                        .entry((brands[a].clone(), brands[b].clone()))
                        .or_insert([0; N_LABELS])[label] += c;
                    counts
                        .entry((brands[b].clone(), brands[a].clone()))
                        .or_insert([0; N_LABELS])[N_LABELS - 1 - label] += c;
                }
            }
        }
    }
    let mut sims = BTreeMap::new();
    for a in 0..n {
        for b in a + 1..n {
            let s: f64 = rng.gen_range(0.0..2.0);
            sims.insert((brands[a].clone(), brands[b].clone()), s);
            sims.insert((brands[b].clone(), brands[a].clone()), s);
        }
    }
    let brand_graph = BrandSimilarityGraph::from_weights(
        cat(),
        brands.clone(),
        sims.iter().map(|((a, b), s)| (a.clone(), b.clone(), *s)),
    );
    RandomWorld {
        brands,
        graph,
        counts,
        sims,
        brand_graph,
    }
}

/// Exhaustive (z, i, j) enumeration over all brands in ascending order.
fn marginal_oracle(w: &RandomWorld, u: &str, v: &str) -> Option<[f64; 2 * N_LABELS - 1]> {
    let zero = [0u64; N_LABELS];
    let mut scores = [0.0; 2 * N_LABELS - 1];
    let mut any = false;
    for z in &w.brands {
        if z == u || z == v {
            continue;
        }
        let uz = w.counts.get(&(u.to_string(), z.clone())).unwrap_or(&zero);
        let zv = w.counts.get(&(z.clone(), v.to_string())).unwrap_or(&zero);
        let (t_uz, t_zv): (u64, u64) = (uz.iter().sum(), zv.iter().sum());
        if t_uz == 0 || t_zv == 0 {
            continue;
        }
        any = true;
        let s_uz = w.sims[&(u.to_string(), z.clone())];
        let s_zv = w.sims[&(z.clone(), v.to_string())];
        for i in 0..N_LABELS {
            for j in 0..N_LABELS {
                let p_uz = uz[i] as f64 / t_uz as f64;
                let p_zv = zv[j] as f64 / t_zv as f64;
                scores[i + j] += p_uz * s_uz * p_zv * s_zv;
            }
        }
    }
    any.then_some(scores)
}

fn marginal_oracle_check() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut compared, mut no_path) = (0, 0);
    for g in 0..200 {
        let w = random_world(&mut rng, 6, 50);
        for u in &w.brands {
            for v in &w.brands {
                if u == v {
                    continue;
                }
                let got =
                    marginal_scores(&w.graph, &w.brand_graph, u, v, MarginalMode::Frequency).ok();
                let want = marginal_oracle(&w, u, v);
                match (got, want) {
                    (None, None) => no_path += 1,
                    (Some(got), Some(want)) => {
                        let same = got
                            .scores
                            .iter()
                            .zip(&want)
                            .all(|(a, b)| a.to_bits() == b.to_bits());
                        if !same {
                            return Verdict::new(
                                false,
                                format!("graph {g} ({u}->{v}): {:?} != {want:?}", got.scores),
                            );
                        }
                        compared += 1;
                    }
                    (got, want) => {
                        return Verdict::new(
                            false,
                            format!(
                                "graph {g} ({u}->{v}): path disagreement, got {} want {}",
                                got.is_some(),
                                want.is_some()
                            ),
                        )
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    Verdict::new(
        within(t, 10),
        format!(
            "{compared} ordered pairs bitwise equal, {no_path} agreed NoPath, {:.2}s (limit 10s)",
            t.as_secs_f64()
        ),
    )
}

fn softmax_contract() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for k in 0..10_000 {
        let len = rng.gen_range(1..=9);
        let top: u64 = match k % 3 {
            0 => 50,
            1 => 1_000_000,
            _ => 1_000_000_000,
        };
        let counts: Vec<u64> = (0..len).map(|_| rng.gen_range(0..=top)).collect();
        let xs: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
        let p = stable_softmax(&xs);
        if p.iter().any(|x| !x.is_finite()) {
            return Verdict::new(false, format!("non-finite output for {counts:?}"));
        }
        let sum: f64 = p.iter().sum();
        worst = worst.max((sum - 1.0).abs());
        let int_argmax = first_max(counts.iter().map(|c| *c as f64));
        let p_argmax = first_max(p.iter().copied());
        if int_argmax != p_argmax {
            return Verdict::new(
                false,
                format!("argmax {p_argmax} != {int_argmax} for {counts:?}"),
            );
        }
    }
    Verdict::new(
        worst <= 1e-9,
        format!("10000 vectors, max |sum - 1| = {worst:.2e}"),
    )
}

fn first_max(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn nmf_monotonicity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut steps = 0;
    for k in 0..50 {
        let m = rng.gen_range(10..=100);
        let n = rng.gen_range(8..=50);
        let density: f64 = rng.gen_range(0.05..0.3);
        let mut entries = BTreeMap::new();
        for i in 0..m {
            for j in 0..n {
                if rng.gen_bool(density) {
                    entries.insert((i, j), rng.gen_range(0.1..10.0));
                }
            }
        }
        entries.entry((0, 0)).or_insert(1.0);
        let matrix = UserBrandMatrix {
            users: (0..m).map(|i| format!("u{i}")).collect(),
            brands: (0..n).map(|j| format!("b{j}")).collect(),
            entries,
        };
        let rank = rng.gen_range(1..=8);
        let cfg = NmfConfig {
            rank,
            max_iters: 300,
            tol: 0.0,
            seed: k,
        };
        let f = match nmf_factorize(&matrix, &cfg) {
            Ok(f) => f,
            Err(e) => return Verdict::new(false, format!("matrix {k}: {e}")),
        };
        if f.trace.len() != 301 {
            return Verdict::new(
                false,
                format!("matrix {k}: trace has {} entries", f.trace.len()),
            );
        }
        for (it, w) in f.trace.windows(2).enumerate() {
            if w[1] > w[0] * (1.0 + 1e-9) {
                return Verdict::new(false, format!("matrix {k} iter {it}: {} -> {}", w[0], w[1]));
            }
        }
        if f.w.iter().chain(f.h.iter()).any(|x| !(*x >= 0.0)) {
            return Verdict::new(false, format!("matrix {k}: negative factor entry"));
        }
        steps += f.trace.len() - 1;
    }
    let t = start.elapsed();
    Verdict::new(
        within(t, 60),
        format!(
            "50 matrices, {steps} updates non-increasing, factors non-negative, {:.2}s (limit 60s)",
            t.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------- synthetic

struct World {
    events: Vec<InteractionEvent>,
    train: Vec<InteractionEvent>,
    test: Vec<InteractionEvent>,
}

fn world(cfg: &SynthConfig, split_seed: u64) -> World {
    let data = synth_generate(cfg).expect("valid synth config");
    let (train, test) = split(&data.orders(), 0.2, split_seed).expect("valid split");
    let mut events = data.browse_events();
    events.extend(train.iter().cloned());
    World {
        events,
        train,
        test,
    }
}

/// Two price bands, 90% in-band purchases, half-size noise on 10% of
/// purchases, and few purchases per user over many brands.
fn noisy_sparse(seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::new(cat(), 2000, 50, seed).with_bands(2);
    cfg.noise_rate = 0.1;
    cfg.in_band_rate = 0.9;
    cfg.purchases_per_user = 2;
    cfg.popularity_skew = 1.0;
    cfg
}

fn antisymmetry_and_conservation() -> Verdict {
    let mut checked = 0;
    for seed in 0..4 {
        let mut cfg = SynthConfig::new(cat(), 400, 12, seed).with_bands(2);
        cfg.noise_rate = 0.2;
        let data = synth_generate(&cfg).unwrap();
        let mut bc = BuildConfig::default();
        bc.nmf.rank = 8;
        let bundle = build_bundle(&data.events, &cat(), &bc).unwrap();
        let g = &bundle.size_graph;
        let brands: Vec<&str> = g.brands().collect();
        for u in &brands {
            for v in &brands {
                let (a, b) = (g.counts(u, v), g.counts(v, u));
                for i in 0..N_LABELS {
                    if a[i] != b[N_LABELS - 1 - i] {
                        return Verdict::new(
                            false,
                            format!("seed {seed}: count({u},{v},{i}) != mirror"),
                        );
                    }
                    checked += 1;
                }
            }
        }
        let total: u64 = g
            .undirected_edges()
            .map(|(_, _, c)| c.iter().sum::<u64>())
            .sum();
        let retained = bundle.metadata.size_graph_report.retained as u64;
        // Independent recount: co-purchases within one size of each other.
        let recount = extract_copurchases(&data.events, &cat())
            .iter()
            .filter(|p| {
                p.brand_u != p.brand_v
                    && (p.size_u.half_points() - p.size_v.half_points()).abs() <= 2
            })
            .count() as u64;
        if total != retained || retained != recount {
            return Verdict::new(
                false,
                format!("seed {seed}: sum e_t {total}, retained {retained}, recount {recount}"),
            );
        }
    }
    Verdict::new(
        true,
        format!("4 builds, {checked} label counts mirrored, sum e_t = retained pairs"),
    )
}

fn noise_free_recovery() -> Verdict {
    let start = Instant::now();
    let cfg = SynthConfig::new(cat(), 2000, 20, 7);
    let w = world(&cfg, 7);
    let bundle = build_bundle(&w.events, &cat(), &BuildConfig::default()).unwrap();
    let r = evaluate(EvalMethod::Wbsr, &bundle, &w.train, &w.test);
    let t = start.elapsed();
    Verdict::new(
        r.accuracy == 1.0 && r.coverage == 1.0 && within(t, 30),
        format!(
            "accuracy {:.4}, coverage {:.4} over {} queries, {:.2}s (limit 30s)",
            r.accuracy,
            r.coverage,
            r.n_queries,
            t.as_secs_f64()
        ),
    )
}

fn noisy_sparse_recovery() -> Verdict {
    let start = Instant::now();
    let w = world(&noisy_sparse(0), 0);
    let mut bundle = build_bundle(&w.events, &cat(), &BuildConfig::default()).unwrap();
    bundle
        .attach_skipgram(&w.events, SkipGramConfig::default())
        .unwrap();
    let wbsr = evaluate(EvalMethod::Wbsr, &bundle, &w.train, &w.test);
    let sg = evaluate(EvalMethod::SkipGram, &bundle, &w.train, &w.test);
    let t = start.elapsed();
    let threshold = wbsr.accuracy >= 0.85;
    let direction = wbsr.accuracy >= sg.accuracy;
    Verdict::new(
        threshold && direction && within(t, 180),
        format!(
            "WBSR accuracy {:.4} (needs >= 0.85: {}), skip-gram {:.4} (WBSR >= skip-gram: {}), sparsity {:.3}, {:.1}s",
            wbsr.accuracy,
            if threshold { "met" } else { "not met" },
            sg.accuracy,
            if direction { "met" } else { "not met" },
            wbsr.sparsity.unwrap_or(f64::NAN),
            t.as_secs_f64()
        ),
    )
}

fn alpha_sweep() -> Verdict {
    let percentiles = [60.0, 65.0, 70.0, 75.0, 80.0];
    let mut lines = Vec::new();
    let mut interior = Vec::new();
    for seed in 0..5 {
        let data = synth_generate(&noisy_sparse(seed)).unwrap();
        let held_out = Split::new(&data.events, &cat(), 0.2, seed).unwrap();
        let val = held_out.validation(0.2, seed).unwrap();
        let run = || -> SweepTable {
            let bundle =
                build_bundle(&val.model_events(), &cat(), &BuildConfig::default()).unwrap();
            sweep_alpha(&percentiles, 0.7, &bundle, &val.train, &val.test).unwrap()
        };
        let (a, b) = (run(), run());
        if a != b {
            return Verdict::new(false, format!("seed {seed}: two identical sweeps differ"));
        }
        if a.rows.len() != 5 {
            return Verdict::new(false, format!("seed {seed}: {} rows", a.rows.len()));
        }
        let acc: Vec<f64> = a.rows.iter().map(|r| r.accuracy).collect();
        let best = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if acc[1..4].contains(&best) && best > acc[0] && best > acc[4] {
            interior.push(seed);
        }
        let alphas: BTreeSet<u64> = a.rows.iter().map(|r| r.alpha as u64).collect();
        lines.push(format!(
            "seed {seed}: alpha {alphas:?} acc [{}]",
            acc.iter()
                .map(|x| format!("{x:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    Verdict::new(
        !interior.is_empty(),
        format!(
            "5 rows, deterministic on 5 seeds; interior maximum on seeds {interior:?}; {}",
            lines.join("; ")
        ),
    )
}

// ------------------------------------------------------------- skip-gram

fn gradient_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut v: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let loss = |v: &[Vec<f64>]| ns_loss_and_grad(&v[0], &v[1], &[&v[2], &v[3]]).loss;
        let g = ns_loss_and_grad(&v[0], &v[1], &[&v[2], &v[3]]);
        let analytic: Vec<f64> = g
            .grad_center
            .iter()
            .chain(&g.grad_context)
            .chain(g.grad_negatives.iter().flatten())
            .copied()
            .collect();
        let h = 1e-6;
        let mut numeric = Vec::new();
        for w in 0..4 {
            for d in 0..4 {
                let x = v[w][d];
                v[w][d] = x + h;
                let up = loss(&v);
                v[w][d] = x - h;
                let down = loss(&v);
                v[w][d] = x;
                numeric.push((up - down) / (2.0 * h));
            }
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    Verdict::new(
        worst < 1e-4,
        format!("dims 4, 2 negatives, 20 draws, max relative error {worst:.2e}"),
    )
}

fn cosine_argmax_invariance() -> Verdict {
    let c = cat();
    let brands = ["Alpha", "Beta", "Gamma", "Delta"];
    let sizes: Vec<UkSize> = (10..=26).map(size).collect();
    let words: Vec<SkuWord> = brands
        .iter()
        .flat_map(|b| sizes.iter().map(|s| encode_sku(&c, b, *s)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let docs: Vec<Vec<SkuWord>> = (0..40)
        .map(|_| {
            let mut d = words.clone();
            d.shuffle(&mut rng);
            d
        })
        .collect();
    let cfg = SkipGramConfig {
        dims: 16,
        epochs: 1,
        ..SkipGramConfig::default()
    };
    let (mut model, _) = train(&docs, cfg).unwrap();
    let n_vocab = model.vocab().len();
    for trial in 0..1000 {
        for i in 0..n_vocab {
            for x in model.input_vector_mut(i) {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        let pref = Preference {
            category: c.clone(),
            brand: brands.choose(&mut rng).unwrap().to_string(),
            size: *sizes.choose(&mut rng).unwrap(),
        };
        let target = brands.choose(&mut rng).unwrap();
        let k = rng.gen_range(1..=sizes.len());
        let cands: Vec<UkSize> = sizes.choose_multiple(&mut rng, k).copied().collect();
        let before =
            recommend_skipgram(&model, &pref, &cands, &c, target, Scoring::Cosine).unwrap();
        for i in 0..n_vocab {
            let s: f64 = 10f64.powf(rng.gen_range(-3.0..3.0));
            for x in model.input_vector_mut(i) {
                *x *= s;
            }
        }
        let after = recommend_skipgram(&model, &pref, &cands, &c, target, Scoring::Cosine).unwrap();
        if before.size != after.size {
            return Verdict::new(
                false,
                format!("trial {trial}: {} became {}", before.size, after.size),
            );
        }
    }
    Verdict::new(
        true,
        "1000 query/candidate sets, scaled by factors in [1e-3, 1e3], argmax unchanged",
    )
}

// --------------------------------------------------------------- sparsity

fn sparsity_definition() -> Verdict {
    let mut g = SizeGraph::new(cat());
    for b in ["A", "B", "C", "D"] {
        g.add_vertex(b);
    }
    g.add_count("A", "B", 2, 3);
    g.add_count("B", "C", 0, 1);
    g.add_count("C", "A", 4, 2);
    let hand = sparsity(&g).unwrap();
    if hand != 0.5 {
        return Verdict::new(false, format!("hand-built graph gives {hand}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for k in 0..100 {
        let w = random_world(&mut rng, 12, 5);
        let n = w.brands.len();
        let mut pairs = BTreeSet::new();
        for ((a, b), c) in &w.counts {
            if c.iter().any(|x| *x > 0) {
                pairs.insert(if a < b { (a, b) } else { (b, a) });
            }
        }
        let oracle = 1.0 - pairs.len() as f64 / (n * (n - 1) / 2) as f64;
        let got = sparsity(&w.graph).unwrap();
        if got != oracle {
            return Verdict::new(false, format!("graph {k}: {got} != {oracle}"));
        }
    }
    Verdict::new(
        true,
        "4-node graph with 3 connected pairs gives 0.5; 100 random graphs match pair counting",
    )
}

// ------------------------------------------------------------ persistence

fn served_world() -> (ModelBundle, Vec<String>) {
    let mut cfg = SynthConfig::new(cat(), 800, 16, 11).with_bands(2);
    cfg.noise_rate = 0.1;
    cfg.purchases_per_user = 3;
    cfg.popularity_skew = 1.0;
    let w = world(&cfg, 11);
    let bc = BuildConfig {
        alpha: AlphaSpec::Percentile(75.0),
        ..BuildConfig::default()
    };
    let mut bundle = build_bundle(&w.events, &cat(), &bc).unwrap();
    bundle
        .attach_skipgram(
            &w.events,
            SkipGramConfig {
                epochs: 3,
                ..SkipGramConfig::default()
            },
        )
        .unwrap();
    let brands = cfg.brands.clone();
    (bundle, brands)
}

fn random_queries(rng: &mut ChaCha8Rng, brands: &[String], n: usize) -> Vec<Query> {
    (0..n)
        .map(|_| {
            let pick = |rng: &mut ChaCha8Rng| {
                if rng.gen_bool(0.05) {
                    "Unheard".to_string()
                } else {
                    brands.choose(rng).unwrap().clone()
                }
            };
            Query {
                brand: pick(rng),
                size: rng.gen_range(2..=30) as f64 / 2.0,
                target: pick(rng),
                method: QueryMethod::Wbsr,
            }
        })
        .collect()
}

fn cli_recommend(bundle: &Path, q: &Query) -> (i32, String) {
    let o = Command::new(BIN)
        .args([
            "recommend",
            "--gender",
            "women",
            "--article-type",
            "Casual Shoes",
        ])
        .arg("--bundle")
        .arg(bundle)
        .args([
            "--brand",
            &q.brand,
            "--size",
            &q.size.to_string(),
            "--target",
            &q.target,
        ])
        .output()
        .expect("binary runs");
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
    )
}

fn bitwise_equal(a: &ModelBundle, b: &ModelBundle) -> Result<usize, String> {
    let mut n = 0;
    for (x, y, s) in a.brand_graph.pairs() {
        match b.brand_graph.get(x, y) {
            Some(t) if t.to_bits() == s.to_bits() => n += 1,
            other => return Err(format!("similarity {x}/{y}: {s} vs {other:?}")),
        }
    }
    let ea: Vec<_> = a.size_graph.directed_edges().collect();
    let eb: Vec<_> = b.size_graph.directed_edges().collect();
    if ea != eb {
        return Err("edge counts differ".into());
    }
    n += ea.len();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for (va, vb) in a.brand_model.vectors.iter().zip(&b.brand_model.vectors) {
        if bits(va) != bits(vb) {
            return Err("brand embedding differs".into());
        }
        n += 1;
    }
    let (sa, sb) = (a.skipgram.as_ref().unwrap(), b.skipgram.as_ref().unwrap());
    if sa.vocab() != sb.vocab() {
        return Err("skip-gram vocabulary differs".into());
    }
    for i in 0..sa.vocab().len() {
        if bits(sa.input_vector(i)) != bits(sb.input_vector(i))
            || bits(sa.output_vector(i)) != bits(sb.output_vector(i))
        {
            return Err(format!("skip-gram vector {i} differs"));
        }
        n += 2;
    }
    Ok(n)
}

fn persistence_round_trip(dir: &Path) -> Verdict {
    let (bundle, brands) = served_world();
    let path = dir.join("bundle.json");
    bundle.save(&path).unwrap();
    let loaded = ModelBundle::load(&path).unwrap();
    let n = match bitwise_equal(&bundle, &loaded) {
        Ok(n) => n,
        Err(e) => return Verdict::new(false, e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut routes: BTreeMap<String, usize> = BTreeMap::new();
    for (k, q) in random_queries(&mut rng, &brands, 500).iter().enumerate() {
        let pref = Preference {
            category: cat(),
            brand: q.brand.clone(),
            size: UkSize::new(q.size).unwrap(),
        };
        let in_process = recommend(
            &pref,
            &q.target,
            &bundle.size_graph,
            &bundle.brand_graph,
            &bundle.hyperparams,
        );
        let (code, out) = cli_recommend(&path, q);
        let (want_code, want_out, route) = match in_process {
            Ok(r) => {
                let route = format!("{:?}", r.method);
                (0, Answer::Wbsr(r).render(), route)
            }
            Err(e) => {
                let e = sizegraph_cli::QueryError::from(e);
                (e.exit_code() as i32, String::new(), e.kind().to_string())
            }
        };
        if code != want_code || out != want_out {
            return Verdict::new(false, format!("query {k} {q:?}: cli ({code}) {out:?} vs in-process ({want_code}) {want_out:?}"));
        }
        *routes.entry(route).or_default() += 1;
    }
    Verdict::new(
        true,
        format!(
            "{n} values bitwise equal after reload; 500 CLI answers identical, routes {routes:?}"
        ),
    )
}

// ------------------------------------------------------------------ serve

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_post(addr: &str, body: &str) -> std::io::Result<(u16, String)> {
    let mut s = TcpStream::connect(addr)?;
    s.set_read_timeout(Some(Duration::from_secs(30)))?;
    write!(
        s,
        "POST /recommend HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut raw = String::new();
    s.read_to_string(&mut raw)?;
    let (head, body) = raw.split_once("\r\n\r\n").unwrap_or((&raw, ""));
    let status = head
        .split_whitespace()
        .nth(1)
        .and_then(|c| c.parse().ok())
        .unwrap_or(0);
    Ok((status, body.to_string()))
}

fn serve_parity(dir: &Path) -> Verdict {
    let path = dir.join("bundle.json");
    if !path.exists() {
        served_world().0.save(&path).unwrap();
    }
    let bundle = ModelBundle::load(&path).unwrap();
    let brands = bundle.brand_model.brands.clone();
    let mut child = Command::new(BIN)
        .args([
            "serve",
            "--gender",
            "women",
            "--article-type",
            "Casual Shoes",
            "--listen",
            "127.0.0.1:0",
        ])
        .arg("--bundle")
        .arg(&path)
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .expect("server starts");
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let server = Server(child);
    let Some(addr) = line
        .trim()
        .strip_prefix("listening on http://")
        .map(str::to_string)
    else {
        return Verdict::new(false, format!("unexpected banner {line:?}"));
    };

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut queries = random_queries(&mut rng, &brands, 100);
    for (i, q) in queries.iter_mut().enumerate() {
        q.method = [QueryMethod::Wbsr, QueryMethod::Skipgram, QueryMethod::Both][i % 3];
    }
    let handles: Vec<_> = queries
        .iter()
        .map(|q| {
            let (addr, body) = (addr.clone(), serde_json::to_string(q).unwrap());
            std::thread::spawn(move || http_post(&addr, &body))
        })
        .collect();
    let responses: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    drop(server);

    let mut statuses: BTreeMap<u16, usize> = BTreeMap::new();
    for (k, (q, r)) in queries.iter().zip(responses).enumerate() {
        let (status, body) = match r {
            Ok(r) => r,
            Err(e) => return Verdict::new(false, format!("request {k}: {e}")),
        };
        let method = match q.method {
            QueryMethod::Wbsr => "wbsr",
            QueryMethod::Skipgram => "skipgram",
            QueryMethod::Both => "both",
        };
        let o = Command::new(BIN)
            .args([
                "recommend",
                "--gender",
                "women",
                "--article-type",
                "Casual Shoes",
            ])
            .arg("--bundle")
            .arg(&path)
            .args([
                "--brand",
                &q.brand,
                "--size",
                &q.size.to_string(),
                "--target",
                &q.target,
                "--method",
                method,
            ])
            .output()
            .unwrap();
        let cli_out = String::from_utf8_lossy(&o.stdout);
        let code = o.status.code().unwrap_or(-1);
        let ok = match status {
            200 => code == 0 && body == cli_out,
            // Error bodies are JSON documents; the CLI reports the same
            // failure through its exit code.
            _ => {
                let expected = answer(&bundle, q)
                    .err()
                    .map(|e| (e.http_status(), e.exit_code() as i32));
                expected == Some((status, code))
                    && body
                        == format!(
                            "{}\n",
                            serde_json::to_string(&answer(&bundle, q).unwrap_err().to_document())
                                .unwrap()
                        )
            }
        };
        if !ok {
            return Verdict::new(
                false,
                format!("query {k} {q:?}: http {status} {body:?} vs cli {code} {cli_out:?}"),
            );
        }
        *statuses.entry(status).or_default() += 1;
    }
    Verdict::new(
        true,
        format!("100 concurrent requests match CLI output, statuses {statuses:?}"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let dir_path = dir.path().to_path_buf();
    let criteria: Vec<(&str, Check)> = vec![
        ("marginal-oracle", Box::new(marginal_oracle_check)),
        ("softmax-contract", Box::new(softmax_contract)),
        ("nmf-monotonicity", Box::new(nmf_monotonicity)),
        (
            "size-graph-antisymmetry",
            Box::new(antisymmetry_and_conservation),
        ),
        ("noise-free-recovery", Box::new(noise_free_recovery)),
        ("noisy-sparse-recovery", Box::new(noisy_sparse_recovery)),
        ("skipgram-gradient", Box::new(gradient_check)),
        (
            "cosine-argmax-invariance",
            Box::new(cosine_argmax_invariance),
        ),
        ("sparsity-definition", Box::new(sparsity_definition)),
        ("alpha-sweep", Box::new(alpha_sweep)),
        (
            "persistence-round-trip",
            Box::new({
                let d = dir_path.clone();
                move || persistence_round_trip(&d)
            }),
        ),
        (
            "serve-parity",
            Box::new({
                let d = dir_path.clone();
                move || serve_parity(&d)
            }),
        ),
    ];

    let (mut passed, mut gaps, mut unexpected) = (0, Vec::new(), Vec::new());
    for (name, check) in &criteria {
        let start = Instant::now();
        let v = check();
        let known = KNOWN_GAPS.contains(name);
        let note = match (v.pass, known) {
            (true, true) => " (known gap closed)",
            (false, true) => " (known gap)",
            _ => "",
        };
        match (v.pass, known) {
            (true, _) => passed += 1,
            (false, true) => gaps.push(*name),
            (false, false) => unexpected.push(*name),
        }
        println!(
            "{} {name}{note}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{passed} passed, {} failed as known gaps ({}), {} failed unexpectedly",
        gaps.len(),
        gaps.join(", "),
        unexpected.len()
    );
    if !unexpected.is_empty() {
        println!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}

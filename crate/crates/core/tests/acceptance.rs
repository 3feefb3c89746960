//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `ZSC_ACCEPTANCE=fast` runs only the property suites (criteria 6 to 8).
//! `ZSC_ACCEPTANCE_STRICT=1` makes any failing criterion fail the process.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng as _;
use zsc_core::encoding::{encode, random_graph, CardMode, FeatureSchema};
use zsc_core::eval::{prepare_corpus, qerror, run_index_on_corpus, run_on_corpus, DatabaseArtifacts, ExperimentReport, ExperimentSpec};
use zsc_core::executor::{annotate_actuals, brute_force_oracle, execute, CostWeights};
use zsc_core::model::{gradient_check, CostModel, ModelConfig, PreparedGraph};
use zsc_core::planner::{plan, PhysicalOp};
use zsc_core::relcore::{compute_statistics, generate_database, GenConfig, Range};
use zsc_core::rng;
use zsc_core::workload::{generate_index_set, generate_workload, WorkloadConfig};

const SEED: u64 = 20_240_601;
const DATABASES: usize = 14;
const VALIDATION: usize = 13;
const HOLDOUTS: [usize; 3] = [0, 1, 2];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn failed(id: u32, name: &'static str, err: impl std::fmt::Display) -> Outcome {
    outcome(id, name, false, format!("error: {err}"))
}

fn progress(msg: &str) {
    eprintln!("[acceptance] {msg}");
}

// criteria 1 to 5 and 9

fn spec_for(holdout: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec::with_databases(DATABASES, SEED, holdout, VALIDATION);
    spec.model = ModelConfig { hidden: 32, epochs: 30, patience: 5, ..ModelConfig::default() };
    if holdout != HOLDOUTS[0] {
        // the stagnation curve is reported once
        spec.stagnation_sizes.clear();
    }
    spec
}

fn run_holdouts(corpus: &[DatabaseArtifacts]) -> zsc_core::Result<Vec<ExperimentReport>> {
    HOLDOUTS
        .iter()
        .map(|&h| {
            let t = Instant::now();
            let report = run_on_corpus(&spec_for(h), corpus, None)?;
            progress(&format!("holdout {} done in {:.0?}", report.holdout, t.elapsed()));
            Ok(report)
        })
        .collect()
}

fn median(report: &ExperimentReport, mode: CardMode) -> f64 {
    report.zero_shot(mode).map_or(f64::INFINITY, |r| r.metrics.median)
}

fn criterion1(reports: &[ExperimentReport], elapsed: Duration) -> Outcome {
    let mut pass = elapsed <= Duration::from_secs(3600);
    let mut parts = Vec::new();
    for r in reports {
        let exact = r.zero_shot(CardMode::Exact).map(|m| m.metrics);
        let (em, ep) = exact.map_or((f64::INFINITY, f64::INFINITY), |m| (m.median, m.p95));
        let sm = median(r, CardMode::Estimated);
        pass &= em <= 2.0 && ep <= 6.0 && sm <= 3.0;
        parts.push(format!("{}: exact median {em:.3} p95 {ep:.3}, estimated median {sm:.3}", r.holdout));
    }
    parts.push(format!("wall time {:.1} min", elapsed.as_secs_f64() / 60.0));
    outcome(1, "zero-shot generalization", pass, parts.join("; "))
}

fn criterion2(reports: &[ExperimentReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in reports {
        match &r.onehot_ablation {
            Some(a) => {
                let ours = median(r, a.mode);
                let ratio = a.metrics.median / ours;
                pass &= ratio >= 2.0;
                parts.push(format!("{}: one-hot {:.3} vs {:.3} ({ratio:.2}x)", r.holdout, a.metrics.median, ours));
            }
            None => {
                pass = false;
                parts.push(format!("{}: no ablation", r.holdout));
            }
        }
    }
    outcome(2, "transferability ablation", pass, parts.join("; "))
}

fn criterion3(reports: &[ExperimentReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in reports {
        let zero = r.curve_reference.as_ref().map_or(f64::INFINITY, |c| c.metrics.median);
        let curve: Vec<(usize, f64)> = r.scaled_cost.iter().map(|p| (p.n, p.metrics.median)).collect();
        let at100 = curve.iter().find(|(n, _)| *n == 100).map_or(f64::NAN, |p| p.1);
        let monotone = curve.windows(2).all(|w| w[1].1 <= w[0].1 + 0.1);
        pass &= at100 > zero && monotone && curve.len() == 4;
        let shown: Vec<String> = curve.iter().map(|(n, m)| format!("{n}:{m:.3}")).collect();
        parts.push(format!("{}: zero-shot {zero:.3}, baseline [{}]", r.holdout, shown.join(" ")));
    }
    outcome(3, "scaled-cost baseline curve", pass, parts.join("; "))
}

fn criterion4() -> Outcome {
    let name = "what-if index mode";
    let mut spec = spec_for(HOLDOUTS[0]);
    spec.index_mode = true;
    spec.card_modes = vec![CardMode::Exact];
    let t = Instant::now();
    let corpus = match prepare_corpus(&spec) {
        Ok(c) => c,
        Err(e) => return failed(4, name, e),
    };
    let report = match run_index_on_corpus(&spec, &corpus, None) {
        Ok(r) => r,
        Err(e) => return failed(4, name, e),
    };
    progress(&format!("index experiment done in {:.0?}", t.elapsed()));
    let Some(ix) = report.index else { return failed(4, name, "no index pairs") };
    let r = &ix.modes[0];
    let fraction = r.direction.fraction.unwrap_or(0.0);
    let pass = r.metrics.median <= 3.0 && fraction >= 0.8;
    outcome(
        4,
        name,
        pass,
        format!(
            "{} pairs ({} use the index): median {:.3} p95 {:.3} max {:.3}; direction {}/{} = {:.3}",
            ix.pairs,
            ix.pairs_using_index,
            r.metrics.median,
            r.metrics.p95,
            r.metrics.max,
            r.direction.correct,
            r.direction.eligible,
            fraction
        ),
    )
}

fn criterion5(reports: &[ExperimentReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in reports {
        match &r.finetune {
            Some(f) => {
                pass &= f.finetuned_median_q <= f.zero_shot_median_q + 0.05 && f.samples == 100 && f.eval_queries == 500;
                parts.push(format!(
                    "{}: zero-shot {:.3} -> fine-tuned {:.3} ({} samples, {} eval)",
                    r.holdout, f.zero_shot_median_q, f.finetuned_median_q, f.samples, f.eval_queries
                ));
            }
            None => {
                pass = false;
                parts.push(format!("{}: no fine-tuning result", r.holdout));
            }
        }
    }
    outcome(5, "few-shot fine-tuning", pass, parts.join("; "))
}

fn criterion9(first: &ExperimentReport) -> Outcome {
    let name = "end-to-end determinism";
    let spec = spec_for(*HOLDOUTS.last().unwrap());
    let again = prepare_corpus(&spec).and_then(|c| run_on_corpus(&spec, &c, None));
    match (first.to_json(), again.and_then(|r| r.to_json())) {
        (Ok(a), Ok(b)) => outcome(9, name, a == b, format!("{} report bytes, identical: {}", a.len(), a == b)),
        (_, Err(e)) | (Err(e), _) => failed(9, name, e),
    }
}

// criteria 6 to 8

fn criterion6() -> Outcome {
    let t = Instant::now();
    let schema = FeatureSchema::transferable();
    let mut worst: f64 = 0.0;
    let (mut checked, mut kinks) = (0, 0);
    for i in 0..100u64 {
        let mut r = rng::derive_rng(SEED, &format!("gradcheck-{i}"));
        let nodes = r.random_range(2..16);
        let g = random_graph(&schema, nodes, rng::derive(SEED, &format!("graph-{i}")));
        let cfg = ModelConfig { hidden: 16, seed: i, ..ModelConfig::default() };
        let model = match CostModel::new(cfg, schema.clone()) {
            Ok(m) => m,
            Err(e) => return failed(6, "gradient correctness", e),
        };
        let prepared = PreparedGraph::new(&g).expect("random graphs are valid");
        let label = r.random_range(0.0..10.0);
        match gradient_check(&model, &prepared, label, 1e-4) {
            Ok(c) => {
                worst = worst.max(c.max_relative_error);
                checked += c.checked;
                kinks += c.skipped_kinks;
            }
            Err(e) => return failed(6, "gradient correctness", e),
        }
    }
    let elapsed = t.elapsed();
    outcome(
        6,
        "gradient correctness",
        worst <= 1e-3 && elapsed <= Duration::from_secs(120),
        format!("100 graphs, {checked} parameters checked ({kinks} at ReLU kinks skipped), max relative error {worst:.2e}, {elapsed:.1?}"),
    )
}

fn criterion7() -> Outcome {
    let name = "executor/oracle equivalence";
    let gen = GenConfig { table_count: Range::new(2, 5), rows: Range::new(5, 25), attribute_columns: Range::new(1, 3), ..GenConfig::default() };
    let weights = CostWeights::default();
    let (mut queries, mut joins, mut mismatches) = (0, 0, 0);
    for seed in [1u64, 2, 3] {
        let mut run = || -> zsc_core::Result<()> {
            let db = generate_database("oracle", &gen, seed)?;
            let cat = compute_statistics(&db, 8);
            let cfg = WorkloadConfig { query_count: 50, seed, ..WorkloadConfig::default() };
            let w = generate_workload(&db, &cat, &cfg)?;
            let indexes = generate_index_set(&db, 2, seed)?;
            let mut idb = db.clone();
            for i in &indexes {
                idb.build_index(i)?;
            }
            for q in &w.queries {
                let oracle = brute_force_oracle(q, &db)?;
                queries += 1;
                for (d, ix) in [(&db, &[][..]), (&idb, &indexes[..])] {
                    let p = plan(q, &cat, ix)?;
                    let r = execute(&p, d, &weights)?;
                    if r.values != oracle.values {
                        mismatches += 1;
                    }
                    for (id, (node, op)) in p.nodes.iter().zip(&r.ops).enumerate() {
                        if let PhysicalOp::HashJoin { .. } = node.op {
                            joins += 1;
                            if Some(op.actual_out) != oracle.card_of(&p.subtree_tables(id)) {
                                mismatches += 1;
                            }
                        }
                    }
                }
            }
            Ok(())
        };
        if let Err(e) = run() {
            return failed(7, name, e);
        }
    }
    outcome(7, name, mismatches == 0 && queries == 150, format!("{queries} queries, {joins} join outputs, {mismatches} mismatches"))
}

fn criterion8() -> Outcome {
    let name = "encoding invariance";
    let run = || -> zsc_core::Result<(usize, usize, usize)> {
        let gen = GenConfig { rows: Range::new(200, 3000), ..GenConfig::default() };
        let db = generate_database("original", &gen, 8)?;
        let table = |t: &str| format!("x_{}", t.chars().rev().collect::<String>());
        let column = |t: &str, c: &str| format!("{c}_{}_y", t.len());
        let renamed = db.renamed("elsewhere", &table, &column)?;
        let (cat, rcat) = (compute_statistics(&db, 32), compute_statistics(&renamed, 32));
        let w = generate_workload(&db, &cat, &WorkloadConfig { query_count: 300, seed: 8, ..WorkloadConfig::default() })?;
        let model = CostModel::new(ModelConfig { hidden: 16, seed: 8, ..ModelConfig::default() }, FeatureSchema::transferable())?;
        let weights = CostWeights::default();
        let mut r = rng::derive_rng(SEED, "edge-permutations");
        let (mut graph_diffs, mut prediction_diffs, mut order_diffs) = (0, 0, 0);
        for q in &w.queries {
            let rq = q.renamed(&table, &column);
            let (mut p, mut rp) = (plan(q, &cat, &[])?, plan(&rq, &rcat, &[])?);
            let (e, re) = (execute(&p, &db, &weights)?, execute(&rp, &renamed, &weights)?);
            annotate_actuals(&mut p, &e)?;
            annotate_actuals(&mut rp, &re)?;
            for mode in [CardMode::Exact, CardMode::Estimated] {
                let (g, rg) = (encode(&p, &cat, mode)?, encode(&rp, &rcat, mode)?);
                if g.to_json()? != rg.to_json()? {
                    graph_diffs += 1;
                }
                let y = model.predict(&g)?;
                if y.to_bits() != model.predict(&rg)?.to_bits() {
                    prediction_diffs += 1;
                }
                let mut shuffled = g.clone();
                shuffled.edges.shuffle(&mut r);
                if y.to_bits() != model.predict(&shuffled)?.to_bits() {
                    order_diffs += 1;
                }
            }
        }
        Ok((graph_diffs, prediction_diffs, order_diffs))
    };
    let (graphs, predictions, orders) = match run() {
        Ok(v) => v,
        Err(e) => return failed(8, name, e),
    };
    let mut r = rng::derive_rng(SEED, "qerror-pairs");
    let mut violations = 0;
    for _ in 0..10_000 {
        let p = 10f64.powf(r.random_range(-3.0..9.0));
        let a = 10f64.powf(r.random_range(-3.0..9.0));
        match (qerror(p, a), qerror(a, p)) {
            (Ok(x), Ok(y)) if x >= 1.0 && x == y => {}
            _ => violations += 1,
        }
    }
    outcome(
        8,
        name,
        graphs + predictions + orders + violations == 0,
        format!(
            "300 queries x 2 modes: {graphs} graph diffs, {predictions} prediction diffs, {orders} edge-order diffs; q-error violations on 10^4 pairs: {violations}"
        ),
    )
}

fn main() {
    let fast = std::env::var("ZSC_ACCEPTANCE").is_ok_and(|v| v == "fast");
    let mut outcomes = vec![criterion6(), criterion7(), criterion8()];
    if !fast {
        let t = Instant::now();
        let corpus = prepare_corpus(&spec_for(HOLDOUTS[0]));
        progress(&format!("corpus of {DATABASES} databases prepared in {:.0?}", t.elapsed()));
        match corpus.and_then(|c| run_holdouts(&c)) {
            Ok(reports) => {
                outcomes.push(criterion1(&reports, t.elapsed()));
                outcomes.push(criterion2(&reports));
                outcomes.push(criterion3(&reports));
                outcomes.push(criterion5(&reports));
                if let Some(r) = reports.first() {
                    if let Some(s) = r.stagnation.iter().map(|p| format!("{}:{:.3}", p.n_databases, p.val_median_q)).reduce(|a, b| a + " " + &b) {
                        progress(&format!("stagnation curve (databases:validation median) {s}"));
                    }
                }
                outcomes.push(criterion4());
                outcomes.push(criterion9(reports.last().expect("three holdouts")));
            }
            Err(e) => {
                for (id, name) in [(1, "zero-shot generalization"), (2, "transferability ablation"), (3, "scaled-cost baseline curve"), (4, "what-if index mode"), (5, "few-shot fine-tuning"), (9, "end-to-end determinism")] {
                    outcomes.push(failed(id, name, &e));
                }
            }
        }
    }
    outcomes.sort_by_key(|o| o.id);
    for o in &outcomes {
        println!("criterion {} {} {}: {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failures = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} of {} criteria passed", outcomes.len() - failures, outcomes.len());
    if failures > 0 && std::env::var("ZSC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

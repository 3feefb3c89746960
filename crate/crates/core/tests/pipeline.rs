use zsc_core::encoding::{encode, CardMode, QueryGraph};
use zsc_core::eval::{encode_samples, evaluate, prepare_database};
use zsc_core::executor::{annotate_actuals, execute, read_samples, write_samples, CostWeights, SampleFileHeader, SampleRecord, SAMPLE_FORMAT};
use zsc_core::model::{train, CostModel, ModelConfig};
use zsc_core::planner::{hypothetical_plan, plan, PhysicalPlan};
use zsc_core::relcore::{compute_statistics, generate_database, load_database, save_database, GenConfig, Range};
use zsc_core::workload::{generate_workload, read_workload, write_workload, WorkloadConfig};

fn small() -> GenConfig {
    GenConfig { table_count: Range::new(2, 4), rows: Range::new(200, 2_000), ..GenConfig::default() }
}

#[test]
fn artifacts_survive_the_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let db = generate_database("disk", &small(), 3).unwrap();
    save_database(&db, &dir.path().join("db")).unwrap();
    let back = load_database(&dir.path().join("db")).unwrap();
    assert_eq!(back, db);

    let cat = compute_statistics(&back, 16);
    let w = generate_workload(&back, &cat, &WorkloadConfig { query_count: 40, seed: 3, ..WorkloadConfig::default() }).unwrap();
    let wpath = dir.path().join("w.json");
    write_workload(&wpath, &w.queries).unwrap();
    let queries = read_workload(&wpath).unwrap();
    assert_eq!(queries, w.queries);

    let weights = CostWeights::default();
    let records: Vec<SampleRecord> = queries
        .iter()
        .map(|q| {
            let mut p = plan(q, &cat, &[]).unwrap();
            let r = execute(&p, &back, &weights).unwrap();
            annotate_actuals(&mut p, &r).unwrap();
            SampleRecord { query_id: q.id.to_string(), database: back.name.clone(), plan: p, cost_units: r.cost_units, values: r.values, wall_time_ms: None }
        })
        .collect();
    let header = SampleFileHeader { format: SAMPLE_FORMAT.into(), database: back.name.clone(), weights, catalog: cat.clone() };
    let spath = dir.path().join("s.jsonl");
    write_samples(&spath, &header, &records).unwrap();
    let (h, r) = read_samples(&spath).unwrap();
    assert_eq!(h, header);
    assert_eq!(r, records);

    // graphs and plans survive JSON as well
    for rec in &r {
        let g = encode(&rec.plan, &h.catalog, CardMode::Exact).unwrap();
        assert_eq!(QueryGraph::from_json(&g.to_json().unwrap()).unwrap(), g);
        assert_eq!(PhysicalPlan::from_json(&rec.plan.to_json().unwrap()).unwrap(), rec.plan);
    }
}

#[test]
fn model_trained_on_other_databases_predicts_a_new_one() {
    let weights = CostWeights::default();
    let wl = WorkloadConfig { max_join_size: 3, ..WorkloadConfig::default() };
    let dbs: Vec<_> = (0..3).map(|i| prepare_database(&format!("d{i}"), 100 + i, &small(), &wl, 300, 0, &weights, 32).unwrap()).collect();
    let train_set: Vec<_> = dbs[1..].iter().flat_map(|d| encode_samples(d, &d.queries, CardMode::Exact).unwrap()).collect();
    let test = encode_samples(&dbs[0], &dbs[0].queries, CardMode::Exact).unwrap();
    let cfg = ModelConfig { hidden: 16, epochs: 15, ..ModelConfig::default() };
    let (model, history) = train(&train_set, &[], &cfg).unwrap();
    assert_eq!(history.epochs.len(), 15);
    let first = history.epochs.first().unwrap().train_loss;
    let last = history.epochs.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
    let m = evaluate(&model, &test).unwrap();
    assert_eq!(m.count, 300);
    // a constant predictor at the mean label is far worse than this on skewed costs
    assert!(m.median < 3.0, "{m:?}");

    let bytes = model.to_bytes().unwrap();
    let back = CostModel::from_bytes(&bytes).unwrap();
    assert_eq!(evaluate(&back, &test).unwrap(), m);
}

#[test]
fn hypothetical_and_materialized_plans_agree() {
    let weights = CostWeights::default();
    let bare = generate_database("whatif", &small(), 9).unwrap();
    let mut db = bare.clone();
    let cat = compute_statistics(&db, 32);
    let w = generate_workload(&db, &cat, &WorkloadConfig { query_count: 80, seed: 9, ..WorkloadConfig::default() }).unwrap();
    let defs = zsc_core::workload::generate_index_set(&db, 3, 9).unwrap();
    for d in &defs {
        db.build_index(d).unwrap();
    }
    let mut flips = 0;
    for q in &w.queries {
        let real = plan(q, &cat, &defs).unwrap();
        let hypo = hypothetical_plan(q, &cat, &[], &defs).unwrap();
        assert!(hypo.same_structure(&real));
        if real.used_indexes().is_empty() {
            continue;
        }
        let refused = execute(&hypo, &bare, &weights).unwrap_err().to_string();
        assert!(refused.contains("hypothetical"), "{refused}");
        flips += 1;
        let truth = execute(&real, &db, &weights).unwrap();
        let mut annotated = hypo.clone();
        annotate_actuals(&mut annotated, &truth).unwrap();
        let mut real_annotated = real.clone();
        annotate_actuals(&mut real_annotated, &truth).unwrap();
        for mode in [CardMode::Exact, CardMode::Estimated] {
            assert_eq!(encode(&annotated, &cat, mode).unwrap(), encode(&real_annotated, &cat, mode).unwrap());
        }
    }
    assert!(flips > 0);
}

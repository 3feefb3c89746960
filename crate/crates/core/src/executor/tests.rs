use proptest::prelude::*;

use super::*;
use crate::planner::{hypothetical_plan, plan, PhysicalOp};
use crate::relcore::{compute_statistics, generate_database, table_page_count, GenConfig, IndexDef, Range};
use crate::testutil::*;
use crate::workload::{generate_workload, WorkloadConfig};

fn run(db: &Database, q: &crate::workload::QuerySpec, indexes: &[IndexDef]) -> ExecResult {
    let cat = toy_catalog(db);
    execute(&plan(q, &cat, indexes).unwrap(), db, &CostWeights::default()).unwrap()
}

#[test]
fn aggregates_over_toy_data() {
    let db = toy_db();
    let q = query(
        &["fact"],
        vec![],
        vec![
            count(),
            agg(AggFunc::Sum, "fact", "a"),
            agg(AggFunc::Min, "fact", "b"),
            agg(AggFunc::Max, "fact", "b"),
            agg(AggFunc::Avg, "fact", "a"),
        ],
    );
    let r = run(&db, &q, &[]);
    assert_eq!(r.values, [Some(200.0), Some(9900.0), Some(0.0), Some(7.0 / 64.0), Some(49.5)]);
}

#[test]
fn avg_skips_nulls() {
    let db = toy_db();
    let q = query(&["fact"], vec![], vec![agg(AggFunc::Avg, "fact", "b")]);
    let mut sum = 0.0;
    let mut n = 0.0;
    for i in 0..200 {
        if i % 7 != 0 {
            sum += (i % 8) as f64 / 64.0;
            n += 1.0;
        }
    }
    assert_eq!(run(&db, &q, &[]).values, [Some(sum / n)]);
}

#[test]
fn empty_input_gives_null_aggregates() {
    let db = toy_db();
    let q = query(
        &["fact"],
        vec![("fact", leaf("a", CompareOp::Gt, &[1000.0]))],
        vec![count(), agg(AggFunc::Sum, "fact", "a"), agg(AggFunc::Min, "fact", "a")],
    );
    assert_eq!(run(&db, &q, &[]).values, [Some(0.0), None, None]);
}

#[test]
fn seq_scan_counters_and_cost() {
    let db = toy_db();
    let q = query(&["fact"], vec![("fact", leaf("a", CompareOp::Lt, &[50.0]))], vec![count()]);
    let r = run(&db, &q, &[]);
    let scan = &r.ops[0];
    let pages = table_page_count(&db.tables[0]);
    assert_eq!(scan.counters.tuples_scanned, 200);
    assert_eq!(scan.counters.leaf_evals, 200);
    assert_eq!(scan.counters.pages, pages);
    assert_eq!(scan.actual_in, 200);
    assert_eq!(scan.actual_out, 100);
    assert_eq!(scan.selectivities, [0.5]);
    assert_eq!(scan.cost_units, 200.0 + 0.2 * 200.0 + 2.0 * pages as f64);
    let agg = &r.ops[1];
    assert_eq!(agg.counters.aggregate_updates, 100);
    assert_eq!(agg.cost_units, 50.0);
    assert_eq!(r.cost_units, scan.cost_units + agg.cost_units);
    assert_eq!(r.root_card(), 1);
}

#[test]
fn short_circuit_counts_only_evaluated_leaves() {
    let db = toy_db();
    // first conjunct holds on half the rows
    let pred = crate::workload::PredicateTree::And {
        children: vec![leaf("a", CompareOp::Lt, &[50.0]), leaf("a", CompareOp::Ge, &[10.0])],
    };
    let q = query(&["fact"], vec![("fact", pred)], vec![count()]);
    let r = run(&db, &q, &[]);
    assert_eq!(r.ops[0].counters.leaf_evals, 300);
    assert_eq!(r.ops[0].actual_out, 80);
    assert_eq!(r.ops[0].selectivities, [0.4, 0.5, 0.9]);
}

#[test]
fn join_counters() {
    let db = toy_db();
    let q = query(&["fact", "dim"], vec![("dim", leaf("cat", CompareOp::Eq, &[0.0]))], vec![count()]);
    let r = run(&db, &q, &[]);
    assert_eq!(r.values, [Some(40.0)]);
    let join = &r.ops[2];
    assert_eq!(join.counters.hash_inserts, 2);
    assert_eq!(join.counters.hash_probes, 200);
    assert_eq!(join.counters.matches, 40);
    assert_eq!(join.actual_in, 202);
    assert_eq!(join.actual_out, 40);
}

#[test]
fn index_scan_matches_seq_scan() {
    let mut db = toy_db();
    let idx = IndexDef::new("fact", "a");
    db.build_index(&idx).unwrap();
    let pred = crate::workload::PredicateTree::And {
        children: vec![leaf("a", CompareOp::Eq, &[5.0]), leaf("b", CompareOp::Ge, &[0.0])],
    };
    let q = query(&["fact", "dim"], vec![("fact", pred)], vec![count(), agg(AggFunc::Sum, "dim", "w")]);
    let seq = run(&db, &q, &[]);
    let ix = run(&db, &q, std::slice::from_ref(&idx));
    assert_eq!(seq.values, ix.values);
    let scan = ix.ops.iter().find(|o| o.counters.index_probes == 1).unwrap();
    assert_eq!(scan.counters.index_fetches, 2);
    assert_eq!(scan.counters.tuples_scanned, 0);
    assert!(ix.cost_units < seq.cost_units);
}

#[test]
fn hypothetical_plan_runs_only_once_materialized() {
    let db = toy_db();
    let cat = toy_catalog(&db);
    let idx = IndexDef::new("fact", "a");
    let q = query(&["fact"], vec![("fact", leaf("a", CompareOp::Eq, &[5.0]))], vec![count()]);
    let p = hypothetical_plan(&q, &cat, &[], std::slice::from_ref(&idx)).unwrap();
    let err = execute(&p, &db, &CostWeights::default()).unwrap_err();
    assert!(err.to_string().contains("hypothetical"), "{err}");
    let with = db.with_index(&idx).unwrap();
    assert_eq!(execute(&p, &with, &CostWeights::default()).unwrap().values, [Some(2.0)]);
}

#[test]
fn missing_index_is_refused() {
    let db = toy_db();
    let cat = toy_catalog(&db);
    let q = query(&["fact"], vec![("fact", leaf("a", CompareOp::Eq, &[5.0]))], vec![count()]);
    let p = plan(&q, &cat, &[IndexDef::new("fact", "a")]).unwrap();
    assert!(matches!(execute(&p, &db, &CostWeights::default()), Err(Error::Execution(_))));
}

#[test]
fn weights_validate() {
    CostWeights::default().validate().unwrap();
    let w = CostWeights { hash_probe: 0.0, ..CostWeights::default() };
    assert!(w.validate().is_err());
}

#[test]
fn annotate_actuals_copies_counts() {
    let db = toy_db();
    let cat = toy_catalog(&db);
    let q = query(&["fact", "dim", "sub"], vec![], vec![count()]);
    let mut p = plan(&q, &cat, &[]).unwrap();
    let r = execute(&p, &db, &CostWeights::default()).unwrap();
    annotate_actuals(&mut p, &r).unwrap();
    let outs: Vec<u64> = p.nodes.iter().map(|n| n.annotation.actual_out.unwrap()).collect();
    assert_eq!(outs, [4, 10, 10, 200, 200, 1]);
}

#[test]
fn oracle_on_toy_query() {
    let db = toy_db();
    let q = query(
        &["fact", "dim", "sub"],
        vec![("sub", leaf("x", CompareOp::Le, &[2.0]))],
        vec![count(), agg(AggFunc::Max, "dim", "w")],
    );
    let o = brute_force_oracle(&q, &db).unwrap();
    // sub ids 0,1 -> dims {0,1,4,5,8,9} -> 6 * 20 fact rows
    assert_eq!(o.values, [Some(120.0), Some(90.0)]);
    assert_eq!(o.card_of(&["sub".into()]), Some(2));
    assert_eq!(o.card_of(&["dim".into(), "sub".into()]), Some(6));
    assert_eq!(o.card_of(&["fact".into(), "sub".into()]), None);
    assert_eq!(run(&db, &q, &[]).values, o.values);
}

#[test]
fn oracle_refuses_large_products() {
    let db = toy_db();
    let mut big = db.clone();
    big.tables[0].row_count = 10_000_000;
    let q = query(&["fact", "dim"], vec![], vec![count()]);
    assert!(matches!(brute_force_oracle(&q, &big), Err(Error::OracleTooLarge(_))));
}

#[test]
fn sample_file_round_trip() {
    let db = toy_db();
    let cat = toy_catalog(&db);
    let q = query(&["fact", "dim"], vec![], vec![count()]);
    let mut p = plan(&q, &cat, &[]).unwrap();
    let r = execute(&p, &db, &CostWeights::default()).unwrap();
    annotate_actuals(&mut p, &r).unwrap();
    let header =
        SampleFileHeader { format: SAMPLE_FORMAT.into(), database: db.name.clone(), weights: CostWeights::default(), catalog: cat };
    let rec = SampleRecord {
        query_id: "1".into(),
        database: db.name.clone(),
        plan: p,
        cost_units: r.cost_units,
        values: r.values.clone(),
        wall_time_ms: None,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    write_samples(&path, &header, std::slice::from_ref(&rec)).unwrap();
    let (h, recs) = read_samples(&path).unwrap();
    assert_eq!(h, header);
    assert_eq!(recs, [rec]);

    std::fs::write(&path, "{\"format\":\"other\"}\n").unwrap();
    assert!(read_samples(&path).is_err());
}

fn small_config() -> GenConfig {
    GenConfig {
        table_count: Range::new(2, 4),
        rows: Range::new(5, 30),
        attribute_columns: Range::new(1, 3),
        ..GenConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn executor_agrees_with_oracle(seed in 0u64..10_000) {
        let db = generate_database("p", &small_config(), seed).unwrap();
        let cat = compute_statistics(&db, 8);
        let cfg = WorkloadConfig { query_count: 6, max_join_size: 3, seed, ..WorkloadConfig::default() };
        let w = generate_workload(&db, &cat, &cfg).unwrap();
        let indexes = crate::workload::generate_index_set(&db, 2, seed).unwrap();
        let mut idb = db.clone();
        for i in &indexes {
            idb.build_index(i).unwrap();
        }
        for q in &w.queries {
            let oracle = brute_force_oracle(q, &db).unwrap();
            for (d, ix) in [(&db, &[][..]), (&idb, &indexes[..])] {
                let p = plan(q, &cat, ix).unwrap();
                let r = execute(&p, d, &CostWeights::default()).unwrap();
                prop_assert_eq!(&r.values, &oracle.values);
                for (id, (node, op)) in p.nodes.iter().zip(&r.ops).enumerate() {
                    if let PhysicalOp::HashJoin { .. } = node.op {
                        let tables = p.subtree_tables(id);
                        prop_assert_eq!(Some(op.actual_out), oracle.card_of(&tables));
                    }
                }
                let again = execute(&p, d, &CostWeights::default()).unwrap();
                prop_assert_eq!(again.cost_units.to_bits(), r.cost_units.to_bits());
            }
        }
    }

    #[test]
    fn cost_is_monotone_in_weights(seed in 0u64..10_000, bump in 0usize..9) {
        let db = generate_database("p", &small_config(), seed).unwrap();
        let cat = compute_statistics(&db, 8);
        let cfg = WorkloadConfig { query_count: 3, max_join_size: 3, seed, ..WorkloadConfig::default() };
        let base = CostWeights::default();
        let mut v = serde_json::to_value(&base).unwrap();
        let key = v.as_object().unwrap().keys().nth(bump).unwrap().clone();
        let old = v[&key].as_f64().unwrap();
        v[&key] = serde_json::json!(old * 2.0);
        let heavier: CostWeights = serde_json::from_value(v).unwrap();
        for q in generate_workload(&db, &cat, &cfg).unwrap().queries {
            let p = plan(&q, &cat, &[]).unwrap();
            let a = execute(&p, &db, &base).unwrap();
            let b = execute(&p, &db, &heavier).unwrap();
            prop_assert!(b.cost_units >= a.cost_units);
            prop_assert_eq!(a.values, b.values);
        }
    }
}
